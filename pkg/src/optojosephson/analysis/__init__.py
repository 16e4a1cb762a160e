"""Fixed points, Lyapunov exponents, regime labels and bifurcation scans."""
from .bifurcation import (BifurcationEvent, BifurcationScan, SectionPeriod, bifurcation_scan,
                          classify_branch_change, params_for, section_period)
from .fixed_points import (FixedPoint, classify_stability, closed_form_states, find_fixed_points,
                           fixed_points_closed_form, refine_fixed_point, stability_label)
from .lyapunov import (LyapunovResult, finite_time_max_lyapunov, lyapunov_spectrum,
                       max_lyapunov_two_trajectory)
from .regime import REGIMES, RegimeLabel, RegimeThresholds, classify_regime

__all__ = [
    "BifurcationEvent", "BifurcationScan", "SectionPeriod", "bifurcation_scan",
    "classify_branch_change", "params_for", "section_period",
    "FixedPoint", "classify_stability", "closed_form_states", "find_fixed_points",
    "fixed_points_closed_form", "refine_fixed_point", "stability_label",
    "LyapunovResult", "finite_time_max_lyapunov", "lyapunov_spectrum", "max_lyapunov_two_trajectory",
    "REGIMES", "RegimeLabel", "RegimeThresholds", "classify_regime",
]
