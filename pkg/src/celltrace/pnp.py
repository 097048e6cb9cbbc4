"""Pairwise position negotiation.

Raw GPS fixes are too coarse for proximity decisions, so nearby devices
refine them against the short-range channel: each device broadcasts its
current position estimate (as a cell anchor plus polar offset, never an
identifier), measures the radio distance to each neighbor, and pulls its
estimate along the line to the best-agreeing neighbor until the pair's
geometric distance equals the measured one.

Negotiating against a peer that is already locked moves only yourself, by
the full discrepancy. When everyone around is unlocked, the chosen pair
splits the correction evenly and both lock. Either way the pair ends at
exactly the radio-measured distance, which is what the back-end will see.

Locks go stale: a device unlocks once its raw fix drifts past ``move_limit``
from where it locked, or after ``lock_ttl`` seconds.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .geometry import (
    CELL_ID_BYTES,
    CellId,
    LatticeConfig,
    Point,
    PolarCoord,
    cell_id_from_bytes,
    cell_id_to_bytes,
    centroid,
    euclid,
    from_polar,
)

# little-endian layout, no alignment padding: 1 + 17 + 8 + 8
_BEACON_STRUCT = struct.Struct("<B17sdd")
BEACON_BYTES = _BEACON_STRUCT.size
_MIN_CHANNEL_DISTANCE = 0.05


@dataclass(frozen=True)
class Beacon:
    """One short-range broadcast: lock flag, anchor cell, polar offset.

    Carries no pseudonym and nothing stable across broadcasts beyond the
    sender's current cell, which any bystander at the same spot shares.
    """

    locked: bool
    anchor_cell: CellId
    coord: PolarCoord

    def to_bytes(self) -> bytes:
        return _BEACON_STRUCT.pack(
            1 if self.locked else 0,
            cell_id_to_bytes(self.anchor_cell),
            self.coord.rho,
            self.coord.theta,
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Beacon":
        if len(raw) < BEACON_BYTES:
            raise ValueError(f"beacon must be at least {BEACON_BYTES} bytes")
        flags, cell_raw, rho, theta = _BEACON_STRUCT.unpack(raw[:BEACON_BYTES])
        return cls(bool(flags & 1), cell_id_from_bytes(cell_raw), PolarCoord(rho, theta))

    def position(self, lattice: LatticeConfig) -> Point:
        """Absolute position the beacon describes."""
        return from_polar(self.coord, centroid(self.anchor_cell, lattice).position)


class PeerSample(NamedTuple):
    """A received beacon with the radio distance measured for its sender."""

    beacon: Beacon
    channel_distance: float


@dataclass(frozen=True)
class PnpState:
    locked: bool = False
    position: Optional[Point] = None
    locked_at: float = 0.0
    locked_raw: Optional[Point] = None


class NegotiationResult(NamedTuple):
    state: PnpState
    peer_index: Optional[int]  # chosen peer, None when nothing was eligible
    peer_position: Optional[Point]  # set only when the peer moved too (pairing)
    guard_drops: int


def measure_channel_distance(
    true_distance: float,
    obstacle: bool,
    rng,
    ble_range: float,
    sigma: float,
) -> Optional[float]:
    """Radio distance estimate, or None when no link forms.

    Walls kill the link outright; beyond radio range there is nothing to
    measure. Otherwise the estimate is log-normally distorted
    (d * exp(eps), eps ~ N(0, sigma^2)) and floored at 5 cm.
    """
    if obstacle or true_distance > ble_range:
        return None
    if sigma == 0.0:
        return max(true_distance, _MIN_CHANNEL_DISTANCE)
    eps = rng.normal(0.0, sigma)
    return max(true_distance * math.exp(eps), _MIN_CHANNEL_DISTANCE)


def _move_along(origin: Point, toward: Point, target_distance: float) -> Point:
    """Point at target_distance from ``toward`` on the ray toward -> origin.

    Coincident inputs fall back to the east axis so the result stays defined.
    """
    d = euclid(origin, toward)
    if d == 0.0:
        return Point(toward.x - target_distance, toward.y)
    scale = target_distance / d
    return Point(
        toward.x + (origin.x - toward.x) * scale,
        toward.y + (origin.y - toward.y) * scale,
    )


def negotiate(
    raw_position: Point,
    now: float,
    peers: Sequence[PeerSample],
    lattice: LatticeConfig,
    ble_range: float,
) -> NegotiationResult:
    """Refine an unlocked device's position against its radio neighbors.

    Peer selection is greedy on the smallest |geometric - radio| distance
    gap, locked peers first; ties break on the smallest beacon encoding so
    runs are reproducible. Beacons whose decoded position is implausibly far
    (beyond twice the radio range) are dropped before selection, which is
    what defuses amplified-beacon injection.
    """
    guard_drops = 0
    locked_peers: list[tuple[float, bytes, int, Point, float]] = []
    unlocked_peers: list[tuple[float, bytes, int, Point, float]] = []
    for idx, sample in enumerate(peers):
        peer_pos = sample.beacon.position(lattice)
        gps_distance = euclid(raw_position, peer_pos)
        if gps_distance > 2.0 * ble_range:
            guard_drops += 1
            continue
        gap = gps_distance - sample.channel_distance
        entry = (abs(gap), sample.beacon.to_bytes(), idx, peer_pos, sample.channel_distance)
        (locked_peers if sample.beacon.locked else unlocked_peers).append(entry)

    if locked_peers:
        _, _, idx, peer_pos, target = min(locked_peers)
        new_pos = _move_along(raw_position, peer_pos, target)
        state = PnpState(True, new_pos, now, raw_position)
        return NegotiationResult(state, idx, None, guard_drops)

    if unlocked_peers:
        _, _, idx, peer_pos, target = min(unlocked_peers)
        gps_distance = euclid(raw_position, peer_pos)
        if gps_distance == 0.0:
            # coincident raw fixes: split along the east axis
            mid = raw_position
            new_self = Point(mid.x - target / 2.0, mid.y)
            new_peer = Point(mid.x + target / 2.0, mid.y)
        else:
            half_gap = (gps_distance - target) / 2.0
            ux = (peer_pos.x - raw_position.x) / gps_distance
            uy = (peer_pos.y - raw_position.y) / gps_distance
            new_self = Point(raw_position.x + ux * half_gap, raw_position.y + uy * half_gap)
            new_peer = Point(peer_pos.x - ux * half_gap, peer_pos.y - uy * half_gap)
        state = PnpState(True, new_self, now, raw_position)
        return NegotiationResult(state, idx, new_peer, guard_drops)

    return NegotiationResult(PnpState(False, None, 0.0, None), None, None, guard_drops)


def lock_peer(raw_position: Point, adjusted: Point, now: float) -> PnpState:
    """Lock state for the passive side of an unlocked-pair negotiation."""
    return PnpState(True, adjusted, now, raw_position)


def maybe_unlock(
    state: PnpState,
    raw_now: Point,
    now: float,
    move_limit: float,
    lock_ttl: float,
) -> PnpState:
    """Drop a lock whose underlying fix moved or aged out."""
    if not state.locked:
        return state
    if euclid(raw_now, state.locked_raw) > move_limit or now - state.locked_at > lock_ttl:
        return PnpState(False, None, 0.0, None)
    return state
