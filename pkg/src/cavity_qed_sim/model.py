"""System parameters, Hamiltonian, and collapse channels.

Levels: ground G, two orthogonally polarized excitons X and Y, biexciton XX.
Mode a couples the X branch (G-X and X-XX), mode b couples the Y branch.
Both transitions of a branch share one coupling constant g; the biexciton
binding energy chi shifts the XX level down.  Energies are measured in ueV
with hbar = 1, in the frame rotating at the drive frequency.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import scipy.sparse as sp

from .fockspace import (
    G,
    X,
    XX,
    Y,
    HilbertSpace,
    Operator,
    annihilation_single_mode,
    embed,
    qd_transition,
)


@dataclass(frozen=True)
class SystemParams:
    """All model constants plus Fock cutoffs.

    delta is the exciton-laser detuning; delta_a and delta_b are the cavity
    mode detunings from the exciton.  delta_b defaults to -chi/2, placing
    mode b halfway to the two-photon resonance.
    """

    g: float = 20.0
    kappa: float = 20.0
    gamma: float = 0.2
    chi: float = 400.0
    e_a: float = 1.0
    e_b: float = 1.0
    delta: float = 0.0
    delta_a: float = 0.0
    delta_b: float | None = None
    n_a_max: int = 6
    n_b_max: int = 6

    def __post_init__(self) -> None:
        for name in ("g", "kappa", "gamma", "chi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.kappa == 0 and self.gamma == 0:
            raise ValueError("at least one dissipation rate must be positive")
        if self.n_a_max < 1 or self.n_b_max < 1:
            raise ValueError("Fock cutoffs must be >= 1")

    @property
    def delta_b_value(self) -> float:
        return -0.5 * self.chi if self.delta_b is None else self.delta_b

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.n_a_max, self.n_b_max)

    def with_cutoffs(self, n_a_max: int, n_b_max: int) -> "SystemParams":
        return replace(self, n_a_max=n_a_max, n_b_max=n_b_max)


@dataclass(frozen=True)
class CollapseChannel:
    """One Lindblad channel: rate and jump operator."""

    rate: float
    op: Operator
    label: str = field(default="", compare=False)


def mode_operators(space: HilbertSpace) -> tuple[Operator, Operator]:
    """Annihilation operators of modes a and b on the composite space."""
    a = embed(annihilation_single_mode(space.n_a_max), "mode_a", space)
    b = embed(annihilation_single_mode(space.n_b_max), "mode_b", space)
    return a, b


def hamiltonian(p: SystemParams) -> Operator:
    """Rotating-frame Hamiltonian with cavity driving on both modes."""
    space = p.space
    a, b = mode_operators(space)
    sig = {(i, j): embed(qd_transition(i, j), "qd", space) for i in range(4) for j in range(4)}

    delta_b = p.delta_b_value
    h = (2.0 * p.delta - p.chi) * sig[XX, XX].mat
    h = h + p.delta * (sig[X, X].mat + sig[Y, Y].mat)
    h = h + (p.delta + p.delta_a) * (a.mat.getH() @ a.mat)
    h = h + (p.delta + delta_b) * (b.mat.getH() @ b.mat)

    # Branch couplings: each lowering transition emits into its branch mode.
    couple = p.g * (
        (sig[G, X].mat + sig[X, XX].mat) @ a.mat.getH()
        + (sig[G, Y].mat + sig[Y, XX].mat) @ b.mat.getH()
    )
    h = h + couple + couple.getH()

    drive = p.e_a * a.mat + p.e_b * b.mat
    h = h + drive + drive.getH()
    return Operator(space, h)


def collapse_channels(p: SystemParams) -> list[CollapseChannel]:
    """Six channels: two cavity decays, four radiative QD transitions."""
    space = p.space
    a, b = mode_operators(space)
    chans = [
        CollapseChannel(p.kappa, a, "kappa_a"),
        CollapseChannel(p.kappa, b, "kappa_b"),
    ]
    for (i, j), label in (
        ((G, X), "gamma_gx"),
        ((G, Y), "gamma_gy"),
        ((X, XX), "gamma_xxx"),
        ((Y, XX), "gamma_yxx"),
    ):
        chans.append(CollapseChannel(p.gamma, embed(qd_transition(i, j), "qd", space), label))
    return chans
