"""User-side protocol logic.

A device keeps a rotating 16-byte pseudonym, reports its position estimate
once per slot for each of the two cells it stands in, and, on a positive
test, submits its recent pseudonyms under a blind-signed credential. Alerts
come back as (pseudonym, risk) pairs; only the device knows which
pseudonyms were ever its own, so only it can tell whether it is affected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

from .crypto import (
    PSEUDONYM_BYTES,
    TAG_BYTES,
    ReportCredential,
    blind,
    cell_tag,
    gen_report_message,
    new_pseudonym,
    unblind,
)
from .geometry import (
    CellId,
    LatticeConfig,
    Point,
    PolarCoord,
    cells_of,
    centroid,
    to_polar,
)
from .pnp import PnpState


class LocationReport(NamedTuple):
    """Plaintext of one sealed report: salted cell tag, sender pseudonym,
    polar position relative to the tagged cell's centroid."""

    tag: bytes
    pseudonym: bytes
    coord: PolarCoord


_PAYLOAD_STRUCT = struct.Struct("<32s16sdd")
REPORT_PAYLOAD_BYTES = _PAYLOAD_STRUCT.size
assert REPORT_PAYLOAD_BYTES == TAG_BYTES + PSEUDONYM_BYTES + 16


def report_to_bytes(report: LocationReport) -> bytes:
    return _PAYLOAD_STRUCT.pack(
        report.tag, report.pseudonym, report.coord.rho, report.coord.theta
    )


def report_from_bytes(raw: bytes) -> LocationReport:
    if len(raw) != REPORT_PAYLOAD_BYTES:
        raise ValueError(f"report payload must be {REPORT_PAYLOAD_BYTES} bytes")
    tag, pseudonym, rho, theta = _PAYLOAD_STRUCT.unpack(raw)
    return LocationReport(tag, pseudonym, PolarCoord(rho, theta))


class AlertPair(NamedTuple):
    """Broadcast entry: a counterparty pseudonym and its contact risk."""

    pseudonym: bytes
    partial_risk: float


class PseudonymSpan(NamedTuple):
    value: bytes
    first_slot: int
    last_slot: int


def total_risk_sum(partials: Sequence[float]) -> float:
    return float(sum(partials))


@dataclass(frozen=True)
class ClientConfig:
    lattice: LatticeConfig
    rotation_slots: int = 15
    retention_slots: int = 14 * 24 * 60  # 14 days of 60 s slots
    risk_threshold: float = 0.5
    total_risk: Callable[[Sequence[float]], float] = total_risk_sum

    def __post_init__(self):
        if self.rotation_slots < 1 or self.retention_slots < 1:
            raise ValueError("rotation and retention must be at least one slot")


class UserAgent:
    """One device. The label is simulator bookkeeping and never leaves it."""

    def __init__(self, label: str, config: ClientConfig, rng):
        self.label = label
        self.config = config
        self.rng = rng
        self.current_pseudonym: Optional[bytes] = None
        self.current_since = 0
        self.pseudonym_history: list[PseudonymSpan] = []
        self.pnp = PnpState()
        self.total_risk = 0.0
        self.alerted = False

    def rotate_pseudonym(self, slot: int):
        """Draw a fresh pseudonym on rotation slots, archiving the old one.

        Slot 0 issues the first pseudonym. Archived entries fall off once
        their last slot leaves the retention window.
        """
        if slot % self.config.rotation_slots == 0:
            if self.current_pseudonym is not None:
                self.pseudonym_history.append(
                    PseudonymSpan(self.current_pseudonym, self.current_since, slot - 1)
                )
            self.current_pseudonym = new_pseudonym(self.rng)
            self.current_since = slot
        horizon = slot - self.config.retention_slots
        if self.pseudonym_history and self.pseudonym_history[0].last_slot < horizon:
            self.pseudonym_history = [
                s for s in self.pseudonym_history if s.last_slot >= horizon
            ]

    def known_pseudonyms(self) -> list[bytes]:
        """Every pseudonym still in the retention window, newest last."""
        values = [s.value for s in self.pseudonym_history]
        if self.current_pseudonym is not None:
            values.append(self.current_pseudonym)
        return values

    def position_estimate(self, raw_gps: Point) -> Point:
        return self.pnp.position if self.pnp.locked else raw_gps

    def build_reports(self, estimate: Point, salt_for_cell, slot: int) -> list[tuple[CellId, LocationReport]]:
        """One report per containing cell, or none when coverage is missing.

        salt_for_cell(cell, slot) returns the active salt or None. Both
        coordinates are derived from the same absolute estimate, just
        re-expressed against each cell's own centroid.
        """
        if self.current_pseudonym is None:
            raise RuntimeError("agent has no pseudonym yet; rotate first")
        cells = cells_of(estimate, self.config.lattice)
        salts = [salt_for_cell(c, slot) for c in cells]
        if any(s is None for s in salts):
            return []
        out = []
        for cell, salt in zip(cells, salts):
            pole = centroid(cell, self.config.lattice).position
            report = LocationReport(
                cell_tag(cell, salt), self.current_pseudonym, to_polar(estimate, pole)
            )
            out.append((cell, report))
        return out

    def emit_reports(self, estimate: Point, salt_for_cell, slot: int, envelope, server_key: bytes) -> list[tuple[CellId, LocationReport, bytes]]:
        """build_reports plus sealing to the back-end's public key."""
        sealed = []
        for cell, report in self.build_reports(estimate, salt_for_cell, slot):
            sealed.append((cell, report, envelope.seal(report_to_bytes(report), server_key)))
        return sealed

    def report_positive(self, hf, server, now: float = 0.0):
        """Full positive-report flow: credential, blind signature, submission.

        The signer only ever sees the blinded value; the server receives
        (m, sigma) it can verify against the signer's public key without
        learning who asked for the signature. Returns the server's broadcast
        bundle (None when the server rejects).
        """
        e, n = hf.public
        msg = gen_report_message(n)
        blinded, unblinder = blind(msg.m, hf.public)
        signed_blinded = hf.hf_sign(blinded, self.label, now)
        sigma = unblind(signed_blinded, unblinder, n)
        cred = ReportCredential(msg.m, sigma)
        return server.process_positive(cred, self.known_pseudonyms())

    def process_alerts(self, pairs: Sequence[AlertPair]) -> tuple[float, bool]:
        """Match broadcast pairs against own pseudonyms and fold the risks."""
        known = set(self.known_pseudonyms())
        matched = [p.partial_risk for p in pairs if p.pseudonym in known]
        total = self.config.total_risk(matched)
        alerted = total >= self.config.risk_threshold
        self.total_risk = total
        self.alerted = self.alerted or alerted
        return total, alerted
