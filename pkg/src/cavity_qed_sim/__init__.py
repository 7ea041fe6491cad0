"""Steady-state photon statistics of a driven four-level quantum dot in a bimodal cavity."""

from .fockspace import (
    G,
    X,
    XX,
    Y,
    HilbertSpace,
    Operator,
    add_scaled,
    adjoint,
    annihilation_single_mode,
    compose,
    embed,
    identity,
    qd_transition,
)
from .model import CollapseChannel, SystemParams, collapse_channels, hamiltonian
from .liouville import Superoperator, build_liouvillian, evolve, steady_state
from .observables import (
    emission_intensity,
    expectation,
    g2_superposition,
    g2_zero,
    mandel_q,
)
from .experiments import (
    SweepResult,
    SweepSpec,
    convergence_audit,
    preset_fig2,
    preset_fig3,
    preset_fig4,
    preset_fig5,
    preset_ref31,
    run_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "G",
    "X",
    "Y",
    "XX",
    "HilbertSpace",
    "Operator",
    "annihilation_single_mode",
    "qd_transition",
    "embed",
    "identity",
    "adjoint",
    "compose",
    "add_scaled",
    "SystemParams",
    "CollapseChannel",
    "hamiltonian",
    "collapse_channels",
    "Superoperator",
    "build_liouvillian",
    "steady_state",
    "evolve",
    "expectation",
    "g2_zero",
    "mandel_q",
    "g2_superposition",
    "emission_intensity",
    "SweepSpec",
    "SweepResult",
    "preset_fig2",
    "preset_fig3",
    "preset_fig4",
    "preset_fig5",
    "preset_ref31",
    "run_sweep",
    "convergence_audit",
    "__version__",
]
