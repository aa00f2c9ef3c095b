"""The Poisson space-time medium.

A realization of the medium is a finite point cloud in a bounded window
``(0, t_max] x [lo, hi]^d``.  Clouds are immutable, stored in a canonical
order (time ascending, ties broken by lexicographic coordinates) so that
every reduction over points is reproducible regardless of how the cloud was
assembled.

Paths interact with the medium through their tube: a point (s, x) is
collected when the path position at the slab containing s lies within r_d
of x.  The path is piecewise constant on slabs ``[k*dt, (k+1)*dt)`` (value
at the left grid point), which keeps the discretized tube volume exactly
``t`` and hence the tube count exactly Poisson(nu * t) for any fixed path.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleBoxError, InvalidParameterError
from .geometry import unit_ball_radius

__all__ = [
    "SpaceTimeBox",
    "PointCloud",
    "sample_poisson",
    "restrict",
    "count_in_tube",
    "batch_tube_counts",
    "add_palm_point",
    "superpose",
    "slab_indices",
    "cloud_to_csv",
]


@dataclass(frozen=True)
class SpaceTimeBox:
    """Bounded sampling window (0, t_max] x [lo, hi]^d."""

    t_max: float
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.t_max <= 0:
            raise InvalidParameterError(f"t_max must be positive, got {self.t_max}")
        if len(lo) != len(hi):
            raise InvalidParameterError("lo and hi must have the same dimension")
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidParameterError("box must satisfy hi > lo componentwise")

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def space_volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    @property
    def volume(self) -> float:
        return self.t_max * self.space_volume

    def contains(self, s: float, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (
            0.0 < s <= self.t_max
            and bool(np.all(x >= np.asarray(self.lo)))
            and bool(np.all(x <= np.asarray(self.hi)))
        )


def _canonical_order(times: np.ndarray, coords: np.ndarray) -> np.ndarray:
    # np.lexsort uses the last key as primary: time first, then x_1, ..., x_d
    keys = tuple(coords[:, j] for j in range(coords.shape[1] - 1, -1, -1)) + (times,)
    return np.lexsort(keys)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite realization of the medium inside a box, with its intensity."""

    times: np.ndarray
    coords: np.ndarray
    box: SpaceTimeBox
    nu: float

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        coords = np.asarray(self.coords, dtype=float).reshape(len(times), self.box.d)
        order = _canonical_order(times, coords)
        times, coords = times[order].copy(), coords[order].copy()
        if len(times) and (times.min() <= 0 or times.max() > self.box.t_max):
            raise InvalidParameterError("point times must lie in (0, t_max]")
        lo, hi = np.asarray(self.box.lo), np.asarray(self.box.hi)
        if len(times) and (np.any(coords < lo) or np.any(coords > hi)):
            raise InvalidParameterError("point coordinates must lie inside the box")
        times.setflags(write=False)
        coords.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "coords", coords)

    @property
    def n_points(self) -> int:
        return len(self.times)


def sample_poisson(box: SpaceTimeBox, nu: float, rng: np.random.Generator) -> PointCloud:
    """Homogeneous Poisson cloud of intensity nu on the box.

    Draw order is fixed (count, then times, then coordinates) so a given
    stream always produces bitwise-identical clouds.
    """
    if nu < 0:
        raise InvalidParameterError(f"intensity must be nonnegative, got {nu}")
    n = int(rng.poisson(nu * box.volume))
    # times in (0, t_max]: flip the half-open unit sample
    times = box.t_max * (1.0 - rng.random(n))
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    coords = lo + (hi - lo) * rng.random((n, box.d))
    return PointCloud(times=times, coords=coords, box=box, nu=float(nu))


def restrict(cloud: PointCloud, t: float) -> PointCloud:
    """Keep exactly the points with s <= t."""
    if not (0.0 < t <= cloud.box.t_max):
        raise InvalidParameterError(
            f"restriction time {t} outside (0, {cloud.box.t_max}]")
    keep = cloud.times <= t
    return PointCloud(times=cloud.times[keep], coords=cloud.coords[keep],
                      box=cloud.box, nu=cloud.nu)


def slab_indices(times: np.ndarray, t: float, n_steps: int) -> np.ndarray:
    """Map point times in (0, t] to their slab index in 0..n_steps-1."""
    dt = t / n_steps
    return np.minimum(np.floor(times / dt).astype(np.int64), n_steps - 1)


def count_in_tube(cloud: PointCloud, path) -> int:
    """Number of cloud points inside the path's tube (with multiplicity)."""
    counts = batch_tube_counts(cloud, path.positions[np.newaxis, :, :],
                               path.grid.t, path.grid.n_steps)
    return int(counts[0])


def batch_tube_counts(cloud: PointCloud, positions: np.ndarray,
                      t: float, n_steps: int) -> np.ndarray:
    """Tube counts for a stack of paths, shape (M, n_steps+1, d) -> (M,).

    Points beyond the path horizon t are ignored; points are grouped by
    slab so each group is a single vectorized ball test.
    """
    n_paths = positions.shape[0]
    counts = np.zeros(n_paths, dtype=np.int64)
    if cloud.n_points == 0:
        return counts
    live = cloud.times <= t
    if not np.any(live):
        return counts
    times, coords = cloud.times[live], cloud.coords[live]
    ks = slab_indices(times, t, n_steps)
    r2 = unit_ball_radius(positions.shape[2]) ** 2
    order = np.argsort(ks, kind="stable")
    ks, coords = ks[order], coords[order]
    slabs, starts = np.unique(ks, return_index=True)
    for k, chunk in zip(slabs, np.split(coords, starts[1:])):
        diff = positions[:, k, :, np.newaxis] - chunk.T[np.newaxis, :, :]
        counts += (np.einsum("mdp,mdp->mp", diff, diff) <= r2).sum(axis=1)
    return counts


def add_palm_point(cloud: PointCloud, s: float, x) -> PointCloud:
    """Cloud with one extra point at (s, x); duplicates keep multiplicity."""
    if not cloud.box.contains(s, x):
        raise InvalidParameterError(f"palm point ({s}, {x}) outside the box")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    times = np.concatenate([cloud.times, [float(s)]])
    coords = np.concatenate([cloud.coords, x[np.newaxis, :]])
    return PointCloud(times=times, coords=coords, box=cloud.box, nu=cloud.nu)


def superpose(cloud_a: PointCloud, cloud_b: PointCloud) -> PointCloud:
    """Multiset union of two clouds on the same box; intensities add."""
    if cloud_a.box != cloud_b.box:
        raise IncompatibleBoxError("clouds live on different boxes")
    return PointCloud(times=np.concatenate([cloud_a.times, cloud_b.times]),
                      coords=np.concatenate([cloud_a.coords, cloud_b.coords]),
                      box=cloud_a.box, nu=cloud_a.nu + cloud_b.nu)


def cloud_to_csv(cloud: PointCloud) -> str:
    """CSV dump: header ``s,x_1,...,x_d``, full double precision."""
    buf = io.StringIO()
    buf.write("s," + ",".join(f"x_{j + 1}" for j in range(cloud.box.d)) + "\n")
    for s, x in zip(cloud.times, cloud.coords):
        buf.write(format(s, ".17g") + ","
                  + ",".join(format(v, ".17g") for v in x) + "\n")
    return buf.getvalue()
