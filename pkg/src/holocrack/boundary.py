"""Plate boundaries, boundary conditions and random training/collocation points."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptySegment


class BCKind(str, enum.Enum):
    TRACTION = "traction"
    DISPLACEMENT = "displacement"


@dataclass(frozen=True)
class Segment:
    """Straight boundary piece traversed anticlockwise around the body.

    ``target`` is the prescribed traction (or displacement) vector, constant
    along the segment.
    """

    start: complex
    end: complex
    kind: BCKind = BCKind.TRACTION
    target: tuple = (0.0, 0.0)

    @property
    def length(self) -> float:
        return abs(self.end - self.start)

    @property
    def normal(self) -> complex:
        """Outward unit normal (tangent turned clockwise)."""
        t = (self.end - self.start) / self.length
        return -1j * t


@dataclass(frozen=True)
class BoundaryPoint:
    z: complex
    normal: complex
    kind: BCKind
    target: tuple


@dataclass
class BoundarySet:
    """Struct-of-arrays collection of boundary points."""

    z: np.ndarray
    normal: np.ndarray
    is_traction: np.ndarray
    target: np.ndarray  # (N, 2)

    def __len__(self):
        return len(self.z)

    def __iter__(self) -> Iterator[BoundaryPoint]:
        for z, n, tr, t in zip(self.z, self.normal, self.is_traction, self.target):
            kind = BCKind.TRACTION if tr else BCKind.DISPLACEMENT
            yield BoundaryPoint(complex(z), complex(n), kind, (float(t[0]), float(t[1])))

    @property
    def n_traction(self) -> int:
        return int(np.count_nonzero(self.is_traction))

    @property
    def n_displacement(self) -> int:
        return len(self) - self.n_traction

    @classmethod
    def from_points(cls, points: Sequence[BoundaryPoint]) -> "BoundarySet":
        pts = list(points)
        return cls(
            z=np.array([p.z for p in pts], dtype=complex),
            normal=np.array([p.normal for p in pts], dtype=complex),
            is_traction=np.array([p.kind == BCKind.TRACTION for p in pts], dtype=bool),
            target=np.array([p.target for p in pts], dtype=float).reshape(-1, 2),
        )

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        return cls(
            z=np.concatenate([s.z for s in sets]),
            normal=np.concatenate([s.normal for s in sets]),
            is_traction=np.concatenate([s.is_traction for s in sets]),
            target=np.concatenate([s.target for s in sets]).reshape(-1, 2),
        )


def rectangle_boundary(half_width, half_height, tractions=None) -> list[Segment]:
    """Four traction segments of a centred rectangle, ordered bottom, right, top, left.

    ``tractions`` maps edge name to a traction vector; missing edges are free.
    """
    tractions = tractions or {}
    w, h = half_width, half_height
    corners = [complex(-w, -h), complex(w, -h), complex(w, h), complex(-w, h)]
    names = ["bottom", "right", "top", "left"]
    segs = []
    for i, name in enumerate(names):
        segs.append(
            Segment(corners[i], corners[(i + 1) % 4], BCKind.TRACTION, tuple(tractions.get(name, (0.0, 0.0))))
        )
    return segs


def uniaxial_plate_boundary(half_side: float, load: float) -> list[Segment]:
    """Square plate pulled by ``load`` on top and bottom, free on the sides."""
    return rectangle_boundary(half_side, half_side, {"top": (0.0, load), "bottom": (0.0, -load)})


def _sample_class(segments, count, rng):
    if count == 0:
        return None
    lengths = np.array([s.length for s in segments])
    total = lengths.sum() if len(segments) else 0.0
    if total <= 0:
        raise EmptySegment(f"{count} points requested on a boundary class of zero length")
    s = rng.uniform(0.0, total, size=count)
    edges = np.cumsum(lengths)
    idx = np.minimum(np.searchsorted(edges, s, side="right"), len(segments) - 1)
    offset = s - (edges[idx] - lengths[idx])
    starts = np.array([seg.start for seg in segments])[idx]
    ends = np.array([seg.end for seg in segments])[idx]
    frac = offset / lengths[idx]
    z = starts + frac * (ends - starts)
    normals = np.array([seg.normal for seg in segments])[idx]
    targets = np.array([seg.target for seg in segments], dtype=float)[idx]
    is_tr = np.array([seg.kind == BCKind.TRACTION for seg in segments])[idx]
    return BoundarySet(z, normals, is_tr, targets)


def boundary_sample(segments: Sequence[Segment], n_u: int, n_sigma: int, rng) -> BoundarySet:
    """Draw points uniformly by arc length on the traction and displacement parts."""
    tr = [s for s in segments if s.kind == BCKind.TRACTION]
    du = [s for s in segments if s.kind == BCKind.DISPLACEMENT]
    parts = [p for p in (_sample_class(tr, n_sigma, rng), _sample_class(du, n_u, rng)) if p is not None]
    if not parts:
        return BoundarySet(np.zeros(0, complex), np.zeros(0, complex), np.zeros(0, bool), np.zeros((0, 2)))
    return BoundarySet.concat(parts)


def boundary_uniform(segments: Sequence[Segment], count: int) -> BoundarySet:
    """Deterministic midpoint rule by arc length over all segments (collocation)."""
    lengths = np.array([s.length for s in segments])
    s = (np.arange(count) + 0.5) * lengths.sum() / count
    edges = np.cumsum(lengths)
    idx = np.minimum(np.searchsorted(edges, s, side="right"), len(segments) - 1)
    frac = (s - (edges[idx] - lengths[idx])) / lengths[idx]
    starts = np.array([seg.start for seg in segments])[idx]
    ends = np.array([seg.end for seg in segments])[idx]
    return BoundarySet(
        z=starts + frac * (ends - starts),
        normal=np.array([seg.normal for seg in segments])[idx],
        is_traction=np.array([seg.kind == BCKind.TRACTION for seg in segments])[idx],
        target=np.array([seg.target for seg in segments], dtype=float)[idx].reshape(-1, 2),
    )


def bc_values(state, points: BoundarySet) -> np.ndarray:
    """Quantity constrained at each point: traction on Γσ, displacement on Γu. Shape (N, 2)."""
    tx, ty = state.traction(points.normal)
    out = np.empty((len(points), 2))
    tr = points.is_traction
    out[:, 0] = np.where(tr, tx, state.ux)
    out[:, 1] = np.where(tr, ty, state.uy)
    return out
