"""Numerical laboratory for quasi-periodic operators on the lattice.

Finite restrictions of H(x) = S + lambda v(x + n omega): Green's functions
and their decay, resolvent pasting with certified budgets, initial-scale
Neumann bounds, Schur-complement and small-minor estimates, and the scale
schedule bookkeeping that chains them into an induction.
"""

from .errors import (
    HypothesisError, InputError, InvariantFailureError, SingularityError,
)
from .lattice import (
    ElementaryRegion, RegionPair, adjust_region, enumerate_elementary_regions,
    find_window, verify_region_pair, verify_window,
)
from .model import (
    BlockStructure, Frequency, ModelConfig, Phase, ToeplitzKernel,
    TrigPotential, assemble_restricted, config_from_dict, load_config,
    shift_phase,
)
from .greens import GoodnessReport, compute_greens, goodness, operator_norm
from .gluing import (
    MLReport, PasteBound, ml_condition, paste_norm, propagate_decay,
    resolvent_residual,
)
from .initial_scale import (
    MeasureEstimate, NeumannReport, SublevelSpec, measure_bad_set,
    neumann_bound_check,
)
from .cartan import (
    AnalyticMatrixFamily, PivotData, cartan_bad_measure, det_inverse_bound,
    sandwich_check, schur_complement,
)
from .multiscale import (
    LogScale, PropertyPLedger, ScaleConstants, ScheduleExponents,
    initial_lambda, omega_budget, rho_sequence, scale_step, toy_msa_run,
)

__version__ = "0.1.0"
