"""Delay-time distributions of scattered wave packets.

Given an on-shell scattering matrix S, a dispersion relation and a
spectral envelope, ``delaykit`` computes the probability distribution of
the delay a packet suffers in the scattering region, its moments and
their monochromatic (Wigner-Smith) limit, and the semiclassical picture
for reflecting-disc billiards.
"""

__version__ = "0.1.0"

from .distribution import (  # noqa: E402
    DelayDistribution,
    all_channel_distributions,
    autocorrelation_distribution_em,
    autocorrelation_distribution_qm,
    autocorrelation_em,
    autocorrelation_energy,
    delay_distribution_em,
    delay_distribution_qm,
    dispersion_width,
    total_mass,
)
from .envelope import Envelope, bandwidth_ratio_check, evaluate_envelope, gaussian_envelope, tabulated_envelope  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .moments import (  # noqa: E402
    MomentReport,
    distribution_moments,
    moment_report,
    monochromatic_limit_check,
    second_moment_smallband,
    wigner_smith_element,
    wigner_smith_trace,
)
from .smatrix import (  # noqa: E402
    Dispersion,
    Resonance,
    SMatrixModel,
    blaschke_product,
    block_diagonal,
    evaluate_s,
    feshbach_pole_model,
    identity_model,
    kmatrix_cayley,
    pure_delay,
    unitarity_defect,
)
