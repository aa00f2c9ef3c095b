"""Paths, Gibbs ensembles, occupancy fields, overlaps and localization sets.

The Gibbs measure over paths is approximated by importance sampling from the
Wiener measure: M sampled paths reweighted by exp(beta * H_i), where H_i is
the tube count of path i in one environment.  All weight arithmetic happens
in log space.  Two-replica quantities reuse the same ensemble with weight
products w_i * w_j, including i = j.

The occupancy field holds the Gibbs probability m(k, b) that the path sits
within r_d of bin center b during time slab k.  It is computed by exact ball
tests against every path, so the only discretization error relative to the
continuum is grid-max vs continuum-sup and cell sums vs integrals.  That is
what makes the grid two-to-one inequalities below exact (slack bounded by
roundoff), not merely asymptotic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .environment import PointCloud, batch_tube_counts
from .errors import InvalidParameterError, InvariantViolationError, WindowCoverageError
from .geometry import ball_overlap_volume, unit_ball_radius

__all__ = [
    "TimeGrid",
    "PolymerPath",
    "GibbsEnsemble",
    "OccupancyField",
    "FavouritePath",
    "DeltaSets",
    "TwoToOneReport",
    "sample_paths",
    "bounding_box_for",
    "build_ensemble",
    "occupancy_field",
    "replica_overlap",
    "replica_overlap_pairwise",
    "favourite_path",
    "favourite_overlap",
    "delta_sets",
    "two_to_one_report",
    "assert_two_to_one",
]

WINDOW_MARGIN = 0.5


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t]: times k * dt for k = 0..n_steps."""

    t: float
    n_steps: int

    def __post_init__(self):
        if self.t <= 0:
            raise InvalidParameterError(f"horizon must be positive, got {self.t}")
        if self.n_steps < 1 or int(self.n_steps) != self.n_steps:
            raise InvalidParameterError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class PolymerPath:
    """Discretized Brownian trajectory started at the origin."""

    grid: TimeGrid
    positions: np.ndarray  # (n_steps + 1, d)


def sample_paths(grid: TimeGrid, d: int, n_paths: int,
                 rng: np.random.Generator) -> list[PolymerPath]:
    """Independent Gaussian walks with step covariance dt * I, from the origin."""
    if n_paths < 1:
        raise InvalidParameterError(f"path count must be positive, got {n_paths}")
    if d < 1 or int(d) != d:
        raise InvalidParameterError(f"dimension must be a positive integer, got {d}")
    steps = rng.normal(0.0, np.sqrt(grid.dt), size=(n_paths, grid.n_steps, d))
    positions = np.zeros((n_paths, grid.n_steps + 1, d))
    np.cumsum(steps, axis=1, out=positions[:, 1:, :])
    return [PolymerPath(grid=grid, positions=positions[i]) for i in range(n_paths)]


def bounding_box_for(positions: np.ndarray, t: float,
                     margin: float = WINDOW_MARGIN) -> tuple:
    """Spatial window lo/hi covering a path stack inflated by r_d + margin."""
    r = unit_ball_radius(positions.shape[2])
    lo = positions.min(axis=(0, 1)) - (r + margin)
    hi = positions.max(axis=(0, 1)) + (r + margin)
    return tuple(lo), tuple(hi)


class GibbsEnsemble:
    """M weighted paths under one environment; Monte Carlo polymer measure."""

    def __init__(self, paths: list[PolymerPath], hamiltonians: np.ndarray,
                 beta: float, box):
        self.paths = paths
        self.grid = paths[0].grid
        self.positions = np.stack([p.positions for p in paths])
        self.hamiltonians = np.asarray(hamiltonians, dtype=np.int64)
        self.beta = float(beta)
        self.box = box
        self.log_weights = self.beta * self.hamiltonians.astype(float)
        shifted = np.exp(self.log_weights - self.log_weights.max())
        self.normalized_weights = shifted / shifted.sum()
        self.log_z_hat = float(logsumexp(self.log_weights) - np.log(self.n_paths))

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    @property
    def z_hat(self) -> float:
        return float(np.exp(self.log_z_hat))

    @property
    def ess(self) -> float:
        """Effective sample size 1 / sum w_i^2 of the normalized weights."""
        return float(1.0 / np.sum(self.normalized_weights ** 2))


def build_ensemble(paths: list[PolymerPath], cloud: PointCloud,
                   beta: float) -> GibbsEnsemble:
    """Weight a path batch by its tube counts in the given cloud.

    Fails loudly if the cloud window does not cover every tube: points
    outside the window cannot be collected, so a too-small window would
    silently bias the Hamiltonians.
    """
    grid = paths[0].grid
    positions = np.stack([p.positions for p in paths])
    r = unit_ball_radius(positions.shape[2])
    lo, hi = np.asarray(cloud.box.lo), np.asarray(cloud.box.hi)
    pmin = positions.min(axis=(0, 1))
    pmax = positions.max(axis=(0, 1))
    if np.any(pmin - r < lo) or np.any(pmax + r > hi) or cloud.box.t_max < grid.t:
        raise WindowCoverageError(
            "cloud window does not cover the path tubes: need "
            f"lo <= {pmin - r}, hi >= {pmax + r}, t_max >= {grid.t}; "
            f"box has lo={lo}, hi={hi}, t_max={cloud.box.t_max}")
    hamiltonians = batch_tube_counts(cloud, positions, grid.t, grid.n_steps)
    return GibbsEnsemble(paths, hamiltonians, beta, cloud.box)


@dataclass(frozen=True, eq=False)
class OccupancyField:
    """Grid estimate of the slab-wise ball occupancy probabilities.

    ``values[k, b]`` is the Gibbs probability that the path lies within r_d
    of bin center b during slab k; ``time_mass[k]`` its cell-volume-weighted
    total, which equals 1 exactly under continuum integration.
    """

    ensemble: GibbsEnsemble
    h: float
    centers: np.ndarray      # (B, d), lexicographically ordered
    values: np.ndarray       # (n_steps, B)
    time_mass: np.ndarray    # (n_steps,)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.ensemble.d

    def gap_mass(self) -> float:
        """Time-averaged cell sum of m (1 - m); the exact grid analogue of
        one minus the replica overlap when the per-slab mass is 1."""
        return float(np.mean(np.sum(self.values * (1.0 - self.values), axis=1))
                     * self.cell_volume)


def _bin_centers(box, h: float) -> np.ndarray:
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        n_bins = int(np.ceil((hi - lo) / h))
        axes.append(lo + (np.arange(n_bins) + 0.5) * h)
    if len(axes) == 1:
        return axes[0][:, np.newaxis]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def occupancy_field(ensemble: GibbsEnsemble, h: float) -> OccupancyField:
    """Exact ball tests of every path against every bin center, slab by slab."""
    if h <= 0:
        raise InvalidParameterError(f"bin width must be positive, got {h}")
    centers = _bin_centers(ensemble.box, h)
    r2 = unit_ball_radius(ensemble.d) ** 2
    n = ensemble.grid.n_steps
    w = ensemble.normalized_weights
    values = np.empty((n, centers.shape[0]))
    pos = ensemble.positions
    if ensemble.d == 1:
        c = centers[:, 0]
        for k in range(n):
            inside = np.abs(pos[:, k, 0][:, np.newaxis] - c[np.newaxis, :]) \
                <= np.sqrt(r2)
            values[k] = w @ inside
    else:
        for k in range(n):
            diff = pos[:, k, :, np.newaxis] - centers.T[np.newaxis, :, :]
            inside = np.einsum("mdb,mdb->mb", diff, diff) <= r2
            values[k] = w @ inside
    time_mass = values.sum(axis=1) * h ** ensemble.d
    return OccupancyField(ensemble=ensemble, h=h, centers=centers,
                          values=values, time_mass=time_mass)


def _check_field(ensemble: GibbsEnsemble, fld: OccupancyField):
    if fld.ensemble is not ensemble:
        raise InvalidParameterError("field was not built from this ensemble")


def replica_overlap(ensemble: GibbsEnsemble, fld: OccupancyField) -> float:
    """Grid two-replica overlap: time-averaged cell sum of m(k, b)^2."""
    _check_field(ensemble, fld)
    return float(np.mean(np.sum(fld.values ** 2, axis=1)) * fld.cell_volume)


def replica_overlap_pairwise(ensemble: GibbsEnsemble) -> float:
    """Exact two-replica overlap sum_{i,j} w_i w_j of time-averaged
    ball-intersection volumes; the continuum oracle for the grid form."""
    w = ensemble.normalized_weights
    pos = ensemble.positions[:, :-1, :]  # slab representatives 0..n-1
    m = ensemble.n_paths
    total = 0.0
    for i in range(m):
        diff = pos[i] - pos
        rho = np.sqrt(np.sum(diff * diff, axis=2))
        vols = ball_overlap_volume(ensemble.d, rho).mean(axis=1)
        total += w[i] * float(w @ vols)
    return total


@dataclass(frozen=True, eq=False)
class FavouritePath:
    """Per-slab argmax of the occupancy field, canonical under ties."""

    fld: OccupancyField
    centers: np.ndarray  # (n_steps, d)
    maxima: np.ndarray   # (n_steps,)


def favourite_path(fld: OccupancyField) -> FavouritePath:
    """Argmax bin center per slab, lexicographically smallest on ties.

    Bin centers are stored in lexicographic order, so the first maximal
    index is the canonical choice.
    """
    idx = np.argmax(fld.values, axis=1)
    return FavouritePath(fld=fld, centers=fld.centers[idx],
                         maxima=fld.values[np.arange(fld.values.shape[0]), idx])


def favourite_overlap(ensemble: GibbsEnsemble, fav: FavouritePath) -> float:
    """Gibbs-averaged fraction of slabs a path spends in the favourite ball."""
    _check_field(ensemble, fav.fld)
    r2 = unit_ball_radius(ensemble.d) ** 2
    pos = ensemble.positions[:, :-1, :]          # (M, n, d)
    diff = pos - fav.centers[np.newaxis, :, :]   # (M, n, d)
    inside = np.einsum("mkd,mkd->mk", diff, diff) <= r2
    per_path = inside.mean(axis=1)
    return float(ensemble.normalized_weights @ per_path)


@dataclass(frozen=True)
class DeltaSets:
    """Grid measures of the mixed, negligible-in-tube and predominant-out
    regions of the occupancy field."""

    middle_measure: float
    negligible_in_tube: float
    predominant_out_of_tube: float


def delta_sets(fld: OccupancyField, delta: float) -> DeltaSets:
    """The three localization set measures at threshold delta in (0, 1/2].

    middle: cell measure of {m in [delta, 1-delta]} per unit time;
    negligible_in_tube: Gibbs x cell measure of tube cells with m <= delta;
    predominant_out_of_tube: same with m >= 1-delta and the path outside.
    The last two collapse to field sums because the Gibbs-weighted tube
    indicator at a bin center *is* the field value there.
    """
    if not (0.0 < delta <= 0.5):
        raise InvalidParameterError(f"delta must lie in (0, 1/2], got {delta}")
    m = fld.values
    cell = fld.cell_volume
    middle = float(np.mean(np.sum((m >= delta) & (m <= 1.0 - delta), axis=1)) * cell)
    negligible = float(np.mean(np.sum(m * (m <= delta), axis=1)) * cell)
    predominant = float(np.mean(np.sum((1.0 - m) * (m >= 1.0 - delta), axis=1)) * cell)
    return DeltaSets(middle, negligible, predominant)


@dataclass(frozen=True)
class TwoToOneReport:
    """All sides of the exact grid two-to-one inequalities for one ensemble.

    Every ``slack_*`` is (bound - quantity) and must be >= -tol; the proofs
    are pointwise (Cauchy-Schwarz cell by cell), so they hold per
    configuration, not just on average.  ``slack_left_d1`` uses the d = 1
    covering constant 1/2 and is only populated in dimension one.
    """

    replica: float            # grid replica overlap
    favourite: float          # Gibbs mean of the per-slab maxima
    gap: float                # time-averaged cell sum of m (1 - m)
    mass_defect: float        # time-averaged |1 - per-slab mass|
    deltas: DeltaSets
    slack_right_mass: float   # sum_b m^2 h^d <= max_b m * slab mass
    slack_one_minus: float    # 1 - favourite <= 1 - replica + mass defect
    slack_middle: float
    slack_negligible: float
    slack_predominant: float
    slack_left_d1: float | None

    def min_slack(self) -> float:
        slacks = [self.slack_right_mass, self.slack_one_minus, self.slack_middle,
                  self.slack_negligible, self.slack_predominant]
        if self.slack_left_d1 is not None:
            slacks.append(self.slack_left_d1)
        return min(slacks)


def two_to_one_report(ensemble: GibbsEnsemble, fld: OccupancyField,
                      delta: float) -> TwoToOneReport:
    _check_field(ensemble, fld)
    m = fld.values
    cell = fld.cell_volume
    maxima = m.max(axis=1)
    r2 = float(np.mean(np.sum(m * m, axis=1)) * cell)
    r_star = float(np.mean(maxima))
    gap = fld.gap_mass()
    mass_defect = float(np.mean(np.abs(1.0 - fld.time_mass)))
    ds = delta_sets(fld, delta)
    slack_right = float(np.mean(maxima * fld.time_mass)) - r2
    slack_one_minus = (1.0 - r2 + mass_defect) - (1.0 - r_star)
    slack_middle = gap / (delta * (1.0 - delta)) - ds.middle_measure
    slack_neg = gap / (1.0 - delta) - ds.negligible_in_tube
    slack_pred = gap / (1.0 - delta) - ds.predominant_out_of_tube
    slack_left = r2 - 0.5 * r_star ** 2 if ensemble.d == 1 else None
    return TwoToOneReport(replica=r2, favourite=r_star, gap=gap,
                          mass_defect=mass_defect, deltas=ds,
                          slack_right_mass=slack_right,
                          slack_one_minus=slack_one_minus,
                          slack_middle=slack_middle,
                          slack_negligible=slack_neg,
                          slack_predominant=slack_pred,
                          slack_left_d1=slack_left)


def assert_two_to_one(ensemble: GibbsEnsemble, fld: OccupancyField, delta: float,
                      tol: float = 1e-9, seed: int | None = None,
                      replicate: int | None = None) -> TwoToOneReport:
    """Re-assert the exact grid inequalities; abort loudly on violation."""
    report = two_to_one_report(ensemble, fld, delta)
    if report.min_slack() < -tol:
        raise InvariantViolationError(
            f"grid two-to-one inequality violated: min slack {report.min_slack():.3e}",
            seed=seed, replicate=replicate)
    return report
