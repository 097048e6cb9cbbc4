"""Back-end matching service.

The server sees only what the protocol leaks on purpose: salted cell tags
it cannot invert, rotating pseudonyms, and polar offsets that are
meaningless without knowing which cell the tag hides. From those it finds
same-slot co-location (identical tag), keeps per-pair contact bursts, and
on a verified positive report broadcasts the counterpart pseudonyms with
their accumulated risk.

Nothing in server state is ever an absolute position, a cell identity, or
an area salt; a structural scan in the test suite enforces that.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

from .client import AlertPair, report_from_bytes
from .crypto import (
    EnvelopeError,
    ReplayLedger,
    ReportCredential,
    VerifyResult,
    verify_report,
)
from .geometry import PolarCoord, polar_distance


def partial_risk_default(distances: Sequence[float], n: int, tau: float, d_risk: float = 2.0) -> float:
    """Per-pair risk: each slot contributes (1 - d/d_risk)^2, floored at 0.

    Grows with contact slots, falls with distance, zero at or beyond d_risk.
    tau is accepted so replacements can weight by exposure time; the default
    treats every slot the same.
    """
    total = 0.0
    for d in distances:
        closeness = max(0.0, 1.0 - d / d_risk)
        total += closeness * closeness
    return total


class SlottedReport(NamedTuple):
    tag: bytes
    pseudonym: bytes
    coord: PolarCoord
    slot: int


class ContactObservation(NamedTuple):
    """One matched pair in one slot; pseudonyms in bytewise order."""

    first: bytes
    second: bytes
    distance: float


@dataclass
class ContactBurst:
    n: int
    distances: list[float]
    partial_risk: float
    last_slot: int


class BroadcastBundle(NamedTuple):
    pairs: tuple[AlertPair, ...]
    epoch: int


_BUNDLE_HEADER = struct.Struct("<I")
_BUNDLE_PAIR = struct.Struct("<16sd")


def bundle_to_bytes(bundle: BroadcastBundle) -> bytes:
    chunks = [_BUNDLE_HEADER.pack(len(bundle.pairs))]
    for pair in bundle.pairs:
        chunks.append(_BUNDLE_PAIR.pack(pair.pseudonym, pair.partial_risk))
    return b"".join(chunks)


def bundle_from_bytes(raw: bytes, epoch: int = 0) -> BroadcastBundle:
    (count,) = _BUNDLE_HEADER.unpack_from(raw, 0)
    expected = _BUNDLE_HEADER.size + count * _BUNDLE_PAIR.size
    if len(raw) != expected:
        raise ValueError(f"bundle length {len(raw)} does not match count {count}")
    pairs = []
    for k in range(count):
        pseudonym, risk = _BUNDLE_PAIR.unpack_from(raw, _BUNDLE_HEADER.size + k * _BUNDLE_PAIR.size)
        pairs.append(AlertPair(pseudonym, risk))
    return BroadcastBundle(tuple(pairs), epoch)


@dataclass
class ServerConfig:
    tau: float = 60.0
    cell_d: float = 10.0
    d_risk: float = 2.0
    retention_slots: int = 14 * 24 * 60
    # f(distances, n, tau) -> float; None picks the default
    partial_risk: Optional[Callable[[Sequence[float], int, float], float]] = None


class BackendServer:
    def __init__(self, config: ServerConfig, envelope, private_key: bytes, signer_public: tuple[int, int]):
        self.config = config
        self.envelope = envelope
        self._private_key = private_key
        self.signer_public = signer_public
        self.ledger = ReplayLedger()
        self.reports: dict[int, list[SlottedReport]] = {}
        self.bursts: dict[tuple[bytes, bytes], ContactBurst] = {}
        self.received = 0
        self.dropped = 0
        self.drop_reasons: dict[str, int] = {}
        self.rejected_positives: list[str] = []

    def _partial_risk(self, distances: Sequence[float], n: int) -> float:
        f = self.config.partial_risk
        if f is None:
            return partial_risk_default(distances, n, self.config.tau, self.config.d_risk)
        return f(distances, n, self.config.tau)

    def slot_of(self, t_arrival: float) -> int:
        return int(t_arrival // self.config.tau)

    def ingest(self, sealed: bytes, t_arrival: float) -> Optional[SlottedReport]:
        """Unseal and shelve one report under its arrival slot.

        Anything that fails to open or parse is dropped and counted, never
        raised: the ingest path faces the network.
        """
        self.received += 1
        try:
            payload = self.envelope.open(sealed, self._private_key)
        except EnvelopeError:
            self._drop("unsealable")
            return None
        try:
            report = report_from_bytes(payload)
        except ValueError:
            self._drop("malformed")
            return None
        slotted = SlottedReport(report.tag, report.pseudonym, report.coord, self.slot_of(t_arrival))
        self.reports.setdefault(slotted.slot, []).append(slotted)
        return slotted

    def _drop(self, reason: str):
        self.dropped += 1
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + 1

    def match_slot(self, k: int) -> list[ContactObservation]:
        """Same-tag pairs within slot k, deduplicated, nearest reading kept.

        Same tag means same cell under the same salt, so the two coords share
        a pole and their polar-law distance is the true estimate separation.
        A pair standing in both shared cells matches twice; the minimum
        distance wins (both derive from the same estimates, so they differ
        only by floating-point noise). Pairs further apart than the cell
        parameter are discarded: co-tagging guarantees nothing out there.
        """
        groups: dict[bytes, list[SlottedReport]] = {}
        for report in self.reports.get(k, ()):
            groups.setdefault(report.tag, []).append(report)
        best: dict[tuple[bytes, bytes], float] = {}
        for members in groups.values():
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    x, y = members[i], members[j]
                    if x.pseudonym == y.pseudonym:
                        continue
                    d = polar_distance(x.coord, y.coord)
                    key = (min(x.pseudonym, y.pseudonym), max(x.pseudonym, y.pseudonym))
                    if key not in best or d < best[key]:
                        best[key] = d
        out = [
            ContactObservation(a, b, d)
            for (a, b), d in best.items()
            if d <= self.config.cell_d
        ]
        out.sort(key=lambda o: (o.first, o.second))
        return out

    def update_burst(self, obs: ContactObservation, k: int):
        key = (obs.first, obs.second)
        burst = self.bursts.get(key)
        if burst is None:
            burst = ContactBurst(0, [], 0.0, k)
            self.bursts[key] = burst
        burst.n += 1
        burst.distances.append(obs.distance)
        burst.partial_risk = self._partial_risk(burst.distances, burst.n)
        burst.last_slot = k

    def close_slot(self, k: int) -> list[ContactObservation]:
        observations = self.match_slot(k)
        for obs in observations:
            self.update_burst(obs, k)
        return observations

    def process_positive(self, cred: ReportCredential, pseudonyms: Sequence[bytes], epoch: int = 0) -> Optional[BroadcastBundle]:
        """Verify a positive-report credential and build the alert bundle.

        The bundle carries only counterparty pseudonyms. A submitted
        pseudonym never appears, including the degenerate case of a burst
        whose both sides were submitted.
        """
        verdict: VerifyResult = verify_report(cred, self.signer_public, self.ledger)
        if not verdict.accepted:
            self.rejected_positives.append(verdict.reason)
            return None
        submitted = set(pseudonyms)
        pairs = []
        for (a, b), burst in self.bursts.items():
            a_in, b_in = a in submitted, b in submitted
            if a_in and b_in:
                continue
            if a_in:
                pairs.append(AlertPair(b, burst.partial_risk))
            elif b_in:
                pairs.append(AlertPair(a, burst.partial_risk))
        return BroadcastBundle(tuple(pairs), epoch)

    def purge(self, current_slot: int):
        """Forget bursts and raw reports older than the retention window."""
        horizon = current_slot - self.config.retention_slots
        stale = [key for key, burst in self.bursts.items() if burst.last_slot < horizon]
        for key in stale:
            del self.bursts[key]
        old_slots = [k for k in self.reports if k < horizon]
        for k in old_slots:
            del self.reports[k]
