"""Independent scenario replay for cross-checking the pipeline.

Starting from a finished scenario log, this module rebuilds everything the
back-end produced using only ground-truth inputs and the recorded noise
draws: raw GPS fixes, channel distance estimates, pseudonym values, and
injected frames. Matching is recomputed the naive way (shared containing
cell, straight euclidean distance between the absolute estimates) rather
than through the server's tag-grouping and polar arithmetic, so agreement
between the two paths is meaningful evidence, not a tautology.

The output is a list of human-readable differences; an empty list means
the log is self-consistent.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

from .client import total_risk_sum
from .crypto import cell_tag
from .geometry import (
    LatticeConfig,
    Point,
    cells_of,
    centroid,
    euclid,
    to_polar,
)
from .issuers import CoverageError, TelephoneProvider
from .pnp import Beacon, PeerSample, PnpState, lock_peer, maybe_unlock, negotiate
from .simnet import ScenarioLog


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


def _partial_risk(distances, d_risk: float) -> float:
    total = 0.0
    for d in distances:
        c = max(0.0, 1.0 - d / d_risk)
        total += c * c
    return total


class ReplayResult(NamedTuple):
    diffs: list[str]
    counts: dict

    @property
    def ok(self) -> bool:
        return not self.diffs


class _OracleBurst:
    __slots__ = ("n", "distances")

    def __init__(self):
        self.n = 0
        self.distances: list[float] = []


class _Replayer:
    def __init__(self, log: ScenarioLog, max_diffs: int):
        cfg = log.config
        self.cfg = cfg
        self.lattice = LatticeConfig(cfg["d"])
        self.provider = TelephoneProvider(
            tuple(cfg["region"]),
            cfg["area_pitch"],
            self.lattice,
            cfg["seed"],
            cfg["salt_rotation_slots"],
            cfg["salt_bits"],
        )
        self.labels = [a["label"] for a in cfg["agents"]]
        self.index_of = {label: i for i, label in enumerate(self.labels)}
        self.max_diffs = max_diffs
        self.diffs: list[str] = []
        self.states = [PnpState() for _ in self.labels]
        # per agent: pseudonym hex -> last slot seen, insertion-ordered by
        # first appearance so retention sets reproduce the client's ordering
        self.pseud_seen: list[dict[str, int]] = [dict() for _ in self.labels]
        self.bursts: dict[tuple[str, str], _OracleBurst] = {}
        self.counts = {
            "slots": 0,
            "reports": 0,
            "observations": 0,
            "positives": 0,
            "alerts": 0,
        }
        self.by_slot: dict[int, list[dict]] = {}
        for rec in log.events():
            if "k" in rec:
                self.by_slot.setdefault(rec["k"], []).append(rec)

    def diff(self, msg: str):
        if len(self.diffs) < self.max_diffs:
            self.diffs.append(msg)

    def run(self) -> ReplayResult:
        for k in sorted(self.by_slot):
            self.replay_slot(k, self.by_slot[k])
        self.counts["bursts"] = len(self.bursts)
        return ReplayResult(self.diffs, self.counts)

    # -- one slot ------------------------------------------------------

    def replay_slot(self, k: int, records: list[dict]):
        cfg = self.cfg
        labels = self.labels
        self.counts["slots"] += 1
        now = k * cfg["tau"]
        of_kind = lambda kind: [r for r in records if r["e"] == kind]

        agent_recs = {r["a"]: r for r in of_kind("agent")}
        if set(agent_recs) != set(labels):
            self.diff(f"slot {k}: agent records incomplete")
            return
        gps = {}
        for label in labels:
            rec = agent_recs[label]
            gps[label] = Point(*rec["gps"])
            self.pseud_seen[self.index_of[label]][rec["pseud"]] = k

        estimates = self.replay_pnp(k, now, gps, of_kind("dbl"), of_kind("inject"), agent_recs)
        reporting = self.replay_reports(k, now, estimates, agent_recs, of_kind("report"))
        observations = self.replay_matching(k, estimates, reporting, agent_recs, of_kind("obs"))
        for pa, pb, dist in observations:
            burst = self.bursts.setdefault((pa, pb), _OracleBurst())
            burst.n += 1
            burst.distances.append(dist)
        self.replay_positives(k, records)

    def replay_pnp(self, k, now, gps, dbl_recs, inject_recs, agent_recs):
        cfg = self.cfg
        labels = self.labels
        states = self.states
        for i, label in enumerate(labels):
            states[i] = maybe_unlock(
                states[i], gps[label], now, cfg["move_limit"], cfg["lock_ttl"]
            )
        neighbors: list[list[tuple[int, float]]] = [[] for _ in labels]
        for rec in dbl_recs:
            neighbors[rec["i"]].append((rec["j"], rec["d"]))
            neighbors[rec["j"]].append((rec["i"], rec["d"]))

        def live_estimate(i: int) -> Point:
            return states[i].position if states[i].locked else gps[labels[i]]

        def live_beacon_bytes(i: int) -> bytes:
            est = live_estimate(i)
            anchor = cells_of(est, self.lattice)[0]
            coord = to_polar(est, centroid(anchor, self.lattice).position)
            return Beacon(states[i].locked, anchor, coord).to_bytes()

        for i, label in enumerate(labels):
            if states[i].locked:
                continue
            samples: list[PeerSample] = []
            peer_idx: list[Optional[int]] = []
            for other, d_bl in neighbors[i]:
                samples.append(PeerSample(Beacon.from_bytes(live_beacon_bytes(other)), d_bl))
                peer_idx.append(other)
            for rec in inject_recs:
                if rec["target"] == label:
                    samples.append(
                        PeerSample(Beacon.from_bytes(bytes.fromhex(rec["bytes"])), rec["d"])
                    )
                    peer_idx.append(None)
            if not samples:
                continue
            result = negotiate(gps[label], now, samples, self.lattice, cfg["ble_range"])
            states[i] = result.state
            if result.peer_position is not None and result.peer_index is not None:
                chosen = peer_idx[result.peer_index]
                if chosen is not None:
                    states[chosen] = lock_peer(gps[labels[chosen]], result.peer_position, now)

        estimates = {}
        for i, label in enumerate(labels):
            est = live_estimate(i)
            estimates[label] = est
            logged = Point(*agent_recs[label]["est"])
            if not (_close(est.x, logged.x) and _close(est.y, logged.y)):
                self.diff(f"slot {k} agent {label}: estimate {est} != logged {logged}")
            if states[i].locked != agent_recs[label]["locked"]:
                self.diff(f"slot {k} agent {label}: lock state mismatch")
        return estimates

    def replay_reports(self, k, now, estimates, agent_recs, report_recs):
        logged_reports: dict[str, list[dict]] = {}
        for rec in report_recs:
            logged_reports.setdefault(rec["a"], []).append(rec)
        reporting: dict[str, list] = {}
        for label in self.labels:
            est = estimates[label]
            cells = cells_of(est, self.lattice)
            try:
                salts = [self.provider.salt_for_cell(c, k) for c in cells]
            except CoverageError:
                salts = None
            expected = []
            if salts is not None:
                for cell, salt in zip(cells, salts):
                    coord = to_polar(est, centroid(cell, self.lattice).position)
                    expected.append((cell, cell_tag(cell, salt).hex(), coord))
            reporting[label] = expected
            got = logged_reports.get(label, [])
            if len(got) != len(expected):
                self.diff(
                    f"slot {k} agent {label}: {len(got)} reports logged,"
                    f" {len(expected)} expected"
                )
                continue
            self.counts["reports"] += len(got)
            for rec, (cell, tag_hex, coord) in zip(got, expected):
                if rec["tag"] != tag_hex:
                    self.diff(f"slot {k} agent {label}: report tag mismatch")
                if rec["cell"] != [int(cell.lattice), cell.i, cell.j]:
                    self.diff(f"slot {k} agent {label}: report cell mismatch")
                if not (_close(rec["rho"], coord.rho) and _close(rec["theta"], coord.theta)):
                    self.diff(f"slot {k} agent {label}: report coordinates mismatch")
                if rec["pseud"] != agent_recs[label]["pseud"]:
                    self.diff(f"slot {k} agent {label}: report pseudonym mismatch")
                if not (now <= rec["arrival"] < now + self.cfg["tau"]):
                    self.diff(f"slot {k} agent {label}: arrival outside slot window")
        return reporting

    def replay_matching(self, k, estimates, reporting, agent_recs, obs_recs):
        labels = self.labels
        observations = []
        for i, la in enumerate(labels):
            if not reporting[la]:
                continue
            cells_a = {tuple(c[0]) for c in reporting[la]}
            for lb in labels[i + 1:]:
                if not reporting[lb]:
                    continue
                cells_b = {tuple(c[0]) for c in reporting[lb]}
                if cells_a & cells_b:
                    dist = euclid(estimates[la], estimates[lb])
                    if dist <= self.cfg["d"]:
                        pa = agent_recs[la]["pseud"]
                        pb = agent_recs[lb]["pseud"]
                        observations.append((min(pa, pb), max(pa, pb), dist))
        observations.sort(key=lambda o: (o[0], o[1]))
        if len(obs_recs) != len(observations):
            self.diff(
                f"slot {k}: {len(obs_recs)} observations logged,"
                f" {len(observations)} expected"
            )
        else:
            self.counts["observations"] += len(observations)
            for rec, (pa, pb, dist) in zip(obs_recs, observations):
                if (rec["p1"], rec["p2"]) != (pa, pb):
                    self.diff(f"slot {k}: observation pair mismatch")
                elif not _close(rec["d"], dist):
                    self.diff(f"slot {k}: observation distance mismatch for ({pa},{pb})")
        return observations

    def replay_positives(self, k: int, records: list[dict]):
        """Walk positive/bundle/alert records in log order.

        Each accepted positive is followed by its bundle record and one
        alert record per agent, in agent order; that grouping is replayed
        here rather than assumed.
        """
        labels = self.labels
        stream = [r for r in records if r["e"] in ("positive", "bundle", "alert")]
        pos = 0
        while pos < len(stream):
            rec = stream[pos]
            pos += 1
            if rec["e"] != "positive":
                self.diff(f"slot {k}: unexpected {rec['e']} record outside a positive block")
                continue
            self.counts["positives"] += 1
            label = rec["a"]
            horizon = k - self.cfg["retention_slots"]
            known = [
                p
                for p, last in self.pseud_seen[self.index_of[label]].items()
                if last >= horizon
            ]
            if known != rec["pseuds"]:
                self.diff(f"slot {k} positive {label}: retention pseudonym set mismatch")
            if not rec["accepted"]:
                continue
            known_set = set(known)
            pairs = []
            for (pa, pb), burst in self.bursts.items():
                a_in, b_in = pa in known_set, pb in known_set
                if a_in and b_in:
                    continue
                if a_in:
                    pairs.append((pb, _partial_risk(burst.distances, self.cfg["d_risk"])))
                elif b_in:
                    pairs.append((pa, _partial_risk(burst.distances, self.cfg["d_risk"])))
            if pos >= len(stream) or stream[pos]["e"] != "bundle":
                self.diff(f"slot {k} positive {label}: missing bundle record")
                continue
            bundle_rec = stream[pos]
            pos += 1
            logged_pairs = [(p, r) for p, r in bundle_rec["pairs"]]
            if len(logged_pairs) != len(pairs):
                self.diff(
                    f"slot {k} positive {label}: bundle size {len(logged_pairs)}"
                    f" != {len(pairs)}"
                )
            else:
                for (gp, gr), (ep, er) in zip(logged_pairs, pairs):
                    if gp != ep or not _close(gr, er):
                        self.diff(f"slot {k} positive {label}: bundle pair mismatch")
            for other in labels:
                if pos >= len(stream) or stream[pos]["e"] != "alert":
                    self.diff(f"slot {k}: missing alert record for {other}")
                    break
                alert_rec = stream[pos]
                pos += 1
                if alert_rec["a"] != other:
                    self.diff(f"slot {k}: alert order mismatch at {other}")
                    continue
                other_known = {
                    p
                    for p, last in self.pseud_seen[self.index_of[other]].items()
                    if last >= horizon
                }
                matched = [risk for p, risk in pairs if p in other_known]
                total = total_risk_sum(matched)
                alerted = total >= self.cfg["risk_threshold"]
                self.counts["alerts"] += 1
                if not _close(alert_rec["total"], total) or alert_rec["alerted"] != alerted:
                    self.diff(
                        f"slot {k} agent {other}: alert ({alert_rec['total']},"
                        f" {alert_rec['alerted']}) != ({total}, {alerted})"
                    )


def replay(log: ScenarioLog, max_diffs: int = 50) -> ReplayResult:
    return _Replayer(log, max_diffs).run()
