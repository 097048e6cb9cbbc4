"""Microcell lattice geometry.

The tracing scheme covers the plane with two overlapping square lattices,
A and B, both of pitch ``2 * d`` where ``d`` is the proximity threshold in
meters. Lattice B is lattice A shifted by ``(d, d)``, so every point lies in
exactly one A-cell and one B-cell, and two points closer than ``d`` almost
always share at least one cell. Each cell has a centroid (the square's
center); clients report their position as polar coordinates relative to a
centroid, never as an absolute position.

All coordinates live in a flat local planar frame (meters east / north of a
scenario origin). Cells are tens of meters wide, so ignoring Earth curvature
is fine at this scale.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple


class Lattice(IntEnum):
    A = 0
    B = 1


class Point(NamedTuple):
    """Absolute position in meters (x east, y north)."""

    x: float
    y: float


class CellId(NamedTuple):
    """One square of side 2d in lattice A or B, addressed by column/row."""

    lattice: Lattice
    i: int
    j: int


class Centroid(NamedTuple):
    cell: CellId
    position: Point


class PolarCoord(NamedTuple):
    """Position relative to a pole: rho in meters >= 0, theta in (-pi, pi]."""

    rho: float
    theta: float


@dataclass(frozen=True)
class LatticeConfig:
    """Lattice parameters: d is the proximity threshold (half the cell side).

    Lattice A cells have corners at origin + (2d*i, 2d*j); lattice B is A
    translated by (d, d).
    """

    d: float
    origin: Point = Point(0.0, 0.0)

    def __post_init__(self):
        if not (self.d > 0 and math.isfinite(self.d)):
            raise ValueError(f"cell parameter d must be positive and finite, got {self.d}")


# Wire encoding of a CellId: lattice tag byte, then i and j as signed
# little-endian 64-bit integers. This is the exact byte string that gets
# salted and hashed into a cell tag, so it must never change.
_CELL_STRUCT = struct.Struct("<Bqq")
CELL_ID_BYTES = _CELL_STRUCT.size  # 17


def cell_id_to_bytes(cell: CellId) -> bytes:
    return _CELL_STRUCT.pack(int(cell.lattice), cell.i, cell.j)


def cell_id_from_bytes(raw: bytes) -> CellId:
    tag, i, j = _CELL_STRUCT.unpack(raw)
    if tag not in (0, 1):
        raise ValueError(f"bad lattice tag {tag}")
    return CellId(Lattice(tag), i, j)


def _lattice_offset(lattice: Lattice, cfg: LatticeConfig) -> tuple[float, float]:
    if lattice is Lattice.A:
        return cfg.origin.x, cfg.origin.y
    return cfg.origin.x + cfg.d, cfg.origin.y + cfg.d


def cell_of(p: Point, cfg: LatticeConfig, lattice: Lattice) -> CellId:
    """Cell of one lattice containing p, using half-open [low, high) squares."""
    ox, oy = _lattice_offset(lattice, cfg)
    pitch = 2.0 * cfg.d
    i = math.floor((p.x - ox) / pitch)
    j = math.floor((p.y - oy) / pitch)
    return CellId(lattice, i, j)


def cells_of(p: Point, cfg: LatticeConfig) -> tuple[CellId, CellId]:
    """The two cells containing p: always one A-cell and one B-cell."""
    return cell_of(p, cfg, Lattice.A), cell_of(p, cfg, Lattice.B)


def centroid(cell: CellId, cfg: LatticeConfig) -> Centroid:
    """Center point of a cell's square."""
    ox, oy = _lattice_offset(cell.lattice, cfg)
    pitch = 2.0 * cfg.d
    return Centroid(
        cell,
        Point(ox + pitch * cell.i + cfg.d, oy + pitch * cell.j + cfg.d),
    )


def cell_bounds(cell: CellId, cfg: LatticeConfig) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax) of the half-open square [xmin, xmax) x [ymin, ymax)."""
    ox, oy = _lattice_offset(cell.lattice, cfg)
    pitch = 2.0 * cfg.d
    x0 = ox + pitch * cell.i
    y0 = oy + pitch * cell.j
    return x0, y0, x0 + pitch, y0 + pitch


def to_polar(p: Point, pole: Point) -> PolarCoord:
    """Polar coordinates of p relative to pole.

    theta is measured counterclockwise from east in (-pi, pi]. The degenerate
    p == pole case gets theta = 0 so results stay deterministic.
    """
    dx = p.x - pole.x
    dy = p.y - pole.y
    rho = math.sqrt(dx * dx + dy * dy)
    if rho == 0.0:
        return PolarCoord(0.0, 0.0)
    theta = math.atan2(dy, dx)
    if theta <= -math.pi:
        theta = math.pi
    return PolarCoord(rho, theta)


def from_polar(coord: PolarCoord, pole: Point) -> Point:
    return Point(
        pole.x + coord.rho * math.cos(coord.theta),
        pole.y + coord.rho * math.sin(coord.theta),
    )


def polar_distance(a: PolarCoord, b: PolarCoord) -> float:
    """Distance between two positions given relative to the SAME pole.

    Law of cosines on the triangle (pole, a, b). Meaningless if the two
    coordinates use different poles; callers must guarantee a shared pole.
    """
    sq = a.rho * a.rho + b.rho * b.rho - 2.0 * a.rho * b.rho * math.cos(a.theta - b.theta)
    # rounding can push the square a hair below zero for near-identical points
    return math.sqrt(sq) if sq > 0.0 else 0.0


def euclid(u: Point, v: Point) -> float:
    dx = u.x - v.x
    dy = u.y - v.y
    return math.sqrt(dx * dx + dy * dy)


def shared_cells(u: Point, v: Point, cfg: LatticeConfig) -> set[CellId]:
    """Cells containing both u and v (size 0, 1 or 2)."""
    return set(cells_of(u, cfg)) & set(cells_of(v, cfg))
