"""Open billiards of unit reflecting discs: trajectories, escape and code sums."""

from .escape import (
    DelayHistogram,
    SurvivalCurve,
    classical_delay_histogram,
    fit_escape_rate,
    histogram_tail_fit,
    monte_carlo_escape,
    semiclassical_s,
)
from .geometry import DiscConfiguration, equilateral_configuration, validate_configuration
from .trajectories import (
    Trajectory,
    amplitude,
    code_count,
    enumerate_codes,
    find_all_trajectories,
    find_trajectory,
    trajectory_length,
)
