"""Trusted third parties: the coverage-area salt service and the blind signer.

The salt service stands in for a telephone provider. It partitions the map
into square coverage areas and broadcasts, per area and rotation epoch, a
random salt that clients mix into their cell tags. The back-end never sees
a salt, so it cannot enumerate cells and invert tags; anyone inside the
area can, which is the intended trade-off.

The health facility holds the report-signing RSA key. It signs only
blinded values, only for devices registered as test-positive, and its audit
log therefore never contains anything linkable to the credential a client
later submits.
"""

from __future__ import annotations

import hashlib
import math
import struct
from typing import NamedTuple, Optional

from .crypto import SALT_BYTES, AreaSalt, SigningKeyPair, sign_blinded
from .geometry import CellId, Lattice, LatticeConfig, Point, cell_bounds, centroid


class QId(NamedTuple):
    """Coverage-area index on the provider's own square grid."""

    qi: int
    qj: int


class CoverageError(Exception):
    pass


class AuthorizationError(Exception):
    pass


_SALT_INFO = struct.Struct("<qqq")  # area i, area j, epoch


class TelephoneProvider:
    """Area partition plus per-(area, epoch) salt derivation.

    The area grid must sit on the primary lattice: pitch an integer multiple
    of the cell side, same origin. That keeps every primary-lattice cell
    inside a single area. Cells of the offset lattice straddle area borders
    whenever there is more than one area (they are displaced by half a cell
    side, so some of them always cross a border); their salt is taken from
    the area holding the cell centroid, which keeps the property that
    matters: everyone tagging the same cell uses the same salt.
    """

    def __init__(
        self,
        region: tuple[float, float, float, float],
        area_pitch: float,
        lattice: LatticeConfig,
        seed: int,
        salt_rotation_slots: int = 5,
        salt_bits: int = 8 * SALT_BYTES,
        coverage_margin: Optional[float] = None,
    ):
        xmin, ymin, xmax, ymax = region
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("region must have positive extent")
        cell_side = 2.0 * lattice.d
        multiple = area_pitch / cell_side
        if not (area_pitch > 0 and abs(multiple - round(multiple)) < 1e-9 and round(multiple) >= 1):
            raise ValueError(
                f"area pitch {area_pitch} must be a positive integer multiple of the cell side {cell_side}"
            )
        if salt_rotation_slots < 1:
            raise ValueError("salt rotation period must be at least one slot")
        if not 1 <= salt_bits <= 8 * SALT_BYTES:
            raise ValueError(f"salt entropy must be 1..{8 * SALT_BYTES} bits")
        self.region = region
        self.area_pitch = float(area_pitch)
        self.lattice = lattice
        self.salt_rotation_slots = int(salt_rotation_slots)
        self.salt_bits = int(salt_bits)
        if coverage_margin is None:
            coverage_margin = self.area_pitch
        self.coverage = (
            xmin - coverage_margin,
            ymin - coverage_margin,
            xmax + coverage_margin,
            ymax + coverage_margin,
        )
        self._seed_bytes = int(seed).to_bytes(8, "big", signed=False)

    def area_of(self, p: Point) -> QId:
        """Containing area, half-open on both axes. Raises outside coverage."""
        xmin, ymin, xmax, ymax = self.coverage
        if not (xmin <= p.x < xmax and ymin <= p.y < ymax):
            raise CoverageError(f"position {p} outside provider coverage")
        ox, oy = self.lattice.origin
        return QId(
            math.floor((p.x - ox) / self.area_pitch),
            math.floor((p.y - oy) / self.area_pitch),
        )

    def salt_epoch(self, slot: int) -> int:
        return slot // self.salt_rotation_slots

    def salt_value(self, q: QId, epoch: int) -> bytes:
        """Pure derivation so every query for one (area, epoch) agrees."""
        h = hashlib.sha256()
        h.update(b"celltrace area salt v1")
        h.update(self._seed_bytes)
        h.update(_SALT_INFO.pack(q.qi, q.qj, epoch))
        digest = h.digest()
        if self.salt_bits == 8 * SALT_BYTES:
            return digest[:SALT_BYTES]
        # deliberately weakened entropy for attack experiments
        reduced = int.from_bytes(digest[:SALT_BYTES], "big") % (1 << self.salt_bits)
        return reduced.to_bytes(SALT_BYTES, "big")

    def current_salt(self, q: QId, slot: int) -> AreaSalt:
        epoch = self.salt_epoch(slot)
        return AreaSalt(
            value=self.salt_value(q, epoch),
            area=(q.qi, q.qj),
            valid_from=epoch * self.salt_rotation_slots,
            valid_slots=self.salt_rotation_slots,
        )

    def salt_for_cell(self, cell: CellId, slot: int) -> AreaSalt:
        """Salt governing a cell: the one of the area holding its centroid."""
        pole = centroid(cell, self.lattice).position
        return self.current_salt(self.area_of(pole), slot)

    def validate_tiling(self) -> int:
        """Check primary-lattice cells sit inside single areas.

        Walks every primary cell overlapping the coverage rectangle and
        confirms its low and high corners land in the same area (high corner
        checked just inside, areas being half-open). Returns the number of
        cells checked; raises on any violation, which would mean the pitch
        or origin drifted off the lattice.
        """
        xmin, ymin, xmax, ymax = self.coverage
        side = 2.0 * self.lattice.d
        ox, oy = self.lattice.origin
        i_lo = math.floor((xmin - ox) / side)
        i_hi = math.floor((xmax - ox) / side)
        j_lo = math.floor((ymin - oy) / side)
        j_hi = math.floor((ymax - oy) / side)
        checked = 0
        for i in range(i_lo, i_hi + 1):
            for j in range(j_lo, j_hi + 1):
                lo_x, lo_y, hi_x, hi_y = cell_bounds(CellId(Lattice.A, i, j), self.lattice)
                try:
                    q_lo = self.area_of(Point(lo_x, lo_y))
                    q_hi = self.area_of(Point(hi_x - 1e-9, hi_y - 1e-9))
                except CoverageError:
                    continue
                if q_lo != q_hi:
                    raise ValueError(f"primary cell ({i},{j}) straddles areas {q_lo} and {q_hi}")
                checked += 1
        return checked


class SignEvent(NamedTuple):
    """One line of the signer's audit log. Only the blinded value appears."""

    requester: str
    blinded: int
    time: float


class HealthFacility:
    """Issues blind signatures over positive-test report credentials."""

    def __init__(self, keypair: SigningKeyPair, registry=()):
        self._keypair = keypair
        self.positive_registry: set[str] = set(registry)
        self.sign_log: list[SignEvent] = []

    @property
    def public(self):
        return self._keypair.public

    def register_positive(self, label: str):
        self.positive_registry.add(label)

    def hf_sign(self, blinded: int, requester: str, now: float = 0.0) -> int:
        if requester not in self.positive_registry:
            raise AuthorizationError(f"requester {requester!r} is not registered positive")
        self.sign_log.append(SignEvent(requester, blinded, now))
        return sign_blinded(blinded, self._keypair)
