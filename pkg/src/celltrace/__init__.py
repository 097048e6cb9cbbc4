"""Privacy-preserving proximity tracing over salted location cells.

Clients report which lattice cell they occupy as a salted hash plus a
rotating pseudonym and a cell-relative polar offset. The back-end matches
reports that share a cell tag, accumulates contact bursts, and broadcasts
pseudonymous risk bundles after a blind-signed positive report. A
telephone-style provider distributes area salts; a health facility blind
signs positive-report credentials. A deterministic simulated network ties
the pieces together, and an independent replayer plus an attack suite
check the whole thing.
"""

from ._kernels import BACKEND
from .attacks import (
    ATTACK_ORDER,
    EXPECTED_OUTCOMES,
    AttackReport,
    render_table,
    run_all,
    run_attacks,
)
from .client import AlertPair, ClientConfig, LocationReport, UserAgent, report_from_bytes, report_to_bytes
from .config import ConfigError, load_config, parse_config
from .crypto import (
    PSEUDONYM_BYTES,
    SALT_BYTES,
    TAG_BYTES,
    AreaSalt,
    HybridEnvelope,
    ReplayLedger,
    ReportCredential,
    TransparentEnvelope,
    blind,
    cell_tag,
    generate_signing_keypair,
    new_pseudonym,
    sign_blinded,
    unblind,
    verify_report,
)
from .geometry import (
    CELL_ID_BYTES,
    CellId,
    Lattice,
    LatticeConfig,
    Point,
    PolarCoord,
    cell_of,
    cells_of,
    centroid,
    from_polar,
    polar_distance,
    shared_cells,
    to_polar,
)
from .issuers import AuthorizationError, CoverageError, HealthFacility, QId, TelephoneProvider
from .oracle import ReplayResult, replay
from .pnp import BEACON_BYTES, Beacon, PeerSample, PnpState, measure_channel_distance, negotiate
from .server import BackendServer, BroadcastBundle, ContactBurst, ContactObservation, ServerConfig
from .simnet import AgentSpec, MobilitySpec, ScenarioLog, World, WorldConfig

__version__ = "0.1.0"

__all__ = [
    "ATTACK_ORDER",
    "AgentSpec",
    "AlertPair",
    "AreaSalt",
    "AttackReport",
    "AuthorizationError",
    "BACKEND",
    "BEACON_BYTES",
    "BackendServer",
    "Beacon",
    "BroadcastBundle",
    "CELL_ID_BYTES",
    "CellId",
    "ClientConfig",
    "ConfigError",
    "ContactBurst",
    "ContactObservation",
    "CoverageError",
    "EXPECTED_OUTCOMES",
    "HealthFacility",
    "HybridEnvelope",
    "Lattice",
    "LatticeConfig",
    "LocationReport",
    "MobilitySpec",
    "PSEUDONYM_BYTES",
    "PeerSample",
    "PnpState",
    "Point",
    "PolarCoord",
    "QId",
    "ReplayLedger",
    "ReplayResult",
    "ReportCredential",
    "SALT_BYTES",
    "ScenarioLog",
    "ServerConfig",
    "TAG_BYTES",
    "TelephoneProvider",
    "TransparentEnvelope",
    "UserAgent",
    "World",
    "WorldConfig",
    "blind",
    "cell_of",
    "cell_tag",
    "cells_of",
    "centroid",
    "from_polar",
    "generate_signing_keypair",
    "load_config",
    "measure_channel_distance",
    "negotiate",
    "new_pseudonym",
    "parse_config",
    "polar_distance",
    "render_table",
    "replay",
    "report_from_bytes",
    "report_to_bytes",
    "run_all",
    "run_attacks",
    "shared_cells",
    "sign_blinded",
    "to_polar",
    "unblind",
    "verify_report",
    "__version__",
]
