"""Full-duplex sum rates, capacity-region extension and OFDM power allocation."""

from .hsinr import hsinr_maximum_rate, hsinr_rate
from .model import (
    Allocation,
    FlatSic,
    LinkInstance,
    QuadraticSic,
    RateReport,
    StationParams,
    TabulatedSic,
    equal_allocation,
    sum_rate_multi,
    sum_rate_single,
    sum_rate_two_uni,
    xinr_ms,
)
from .multichannel import (
    SolveOptions,
    build_constraints,
    derivative_bound,
    dr_dc,
    maximum_rate,
    solve_fixed_c,
)
from .sic import calibrate_evaluation, fit_gm, load_trace, to_profile
from .single import (
    capacity_extension_p,
    check_condition1,
    single_channel_optimum,
    trace_capacity_boundary,
    two_uni_extension_map,
)

__version__ = "0.1.0"
