"""Brownian directed polymer in a Poissonian medium.

Simulation and analytics for a Brownian path in d spatial dimensions coupled
to a Poisson point field: quenched and annealed free energies, replica
overlaps, favourite-path localization, and the closed-form phase-diagram
bounds, with deterministic counter-based random streams throughout.
"""

__version__ = "0.1.0"

from .analytics import (
    BetaCriticalBounds,
    CriticalPoint,
    PhaseLabel,
    annealed_gap_integrand,
    annealed_rate,
    bessel_zero,
    classify_phase,
    critical_beta_bounds,
    critical_curve_exponent,
    critical_intensity_lower_bound,
    critical_intensity_ratio,
    curve_kernel,
    drift_gap_integrand,
    in_l2_region,
    poisson_rate_function,
)
from .environment import (
    PointCloud,
    SpaceTimeBox,
    add_palm_point,
    cloud_to_csv,
    count_in_tube,
    restrict,
    sample_poisson,
    superpose,
)
from .estimators import (
    EstimateWithError,
    ExperimentConfig,
    MonotonicitySlacks,
    ScanCell,
    annealed_free_energy,
    dp_dbeta,
    dp_dnu,
    dp_dnu_fd,
    localization_scan,
    nu_monotonicity,
    quenched_free_energy,
)
from .geometry import BallGeometry, ball_overlap_volume, tube_indicator, unit_ball_radius
from .polymer import (
    DeltaSets,
    FavouritePath,
    GibbsEnsemble,
    OccupancyField,
    PolymerPath,
    TimeGrid,
    TwoToOneReport,
    assert_two_to_one,
    build_ensemble,
    delta_sets,
    favourite_overlap,
    favourite_path,
    occupancy_field,
    replica_overlap,
    replica_overlap_pairwise,
    sample_paths,
    two_to_one_report,
)
from .streams import stream_key, substream

__all__ = [name for name in dir() if not name.startswith("_")]
