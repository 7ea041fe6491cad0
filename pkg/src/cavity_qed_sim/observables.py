"""Steady-state observables: occupations, photon statistics, emission rates."""
from __future__ import annotations

import numpy as np

from .fockspace import Operator
from .model import SystemParams, collapse_channels, mode_operators

# Below this mean occupation the normalized correlators are numerically undefined.
OCCUPATION_FLOOR = 1e-14


def expectation(rho: np.ndarray, op: Operator) -> complex:
    """tr(rho A); the sparse product keeps this O(nnz * dim)."""
    return complex((op.mat @ rho).trace())


def _second_order_moments(rho: np.ndarray, op: Operator) -> tuple[float, float]:
    """Returns (<n>, <a^dag a^dag a a>) for annihilation-like op."""
    mat = op.mat
    n_op = mat.getH() @ mat
    sq = mat @ mat
    n_val = float(np.real((n_op @ rho).trace()))
    pair = float(np.real(((sq.getH() @ sq) @ rho).trace()))
    return n_val, pair


def g2_zero(rho: np.ndarray, op: Operator) -> float | None:
    """Equal-time second-order correlation <a+a+aa>/<a+a>^2; None below the floor."""
    n_val, pair = _second_order_moments(rho, op)
    if n_val <= OCCUPATION_FLOOR:
        return None
    return pair / (n_val * n_val)


def mandel_q(rho: np.ndarray, op: Operator, *, form: str = "variance") -> float | None:
    """Mandel Q parameter; the two forms are algebraically identical.

    form="variance": (<n^2> - <n>^2)/<n> - 1 with n = a^dag a.
    form="g2":       <n> (g2 - 1).
    """
    n_val, pair = _second_order_moments(rho, op)
    if n_val <= OCCUPATION_FLOOR:
        return None
    if form == "variance":
        # <n^2> = <a+a+aa> + <n> by normal ordering.
        n2 = pair + n_val
        return (n2 - n_val * n_val) / n_val - 1.0
    if form == "g2":
        return n_val * (pair / (n_val * n_val) - 1.0)
    raise ValueError(f"unknown form {form!r}")


def g2_superposition(
    rho: np.ndarray, op_a: Operator, op_b: Operator, phase: float = 0.0
) -> float | None:
    """g2(0) of the balanced superposition mode c = (a + e^{i phase} b)/sqrt(2)."""
    op_a._check(op_b)
    mat = (op_a.mat + np.exp(1j * phase) * op_b.mat) / np.sqrt(2.0)
    return g2_zero(rho, Operator(op_a.space, mat))


def emission_intensity(rho: np.ndarray, params: SystemParams) -> float:
    """Cavity output rate kappa (<n_a> + <n_b>), un-normalized.

    Deliberately counts only the mode decay; the much slower radiative channel
    is available separately through spontaneous_flux.
    """
    a_op, b_op = mode_operators(params.space)
    n_a = float(np.real(((a_op.mat.getH() @ a_op.mat) @ rho).trace()))
    n_b = float(np.real(((b_op.mat.getH() @ b_op.mat) @ rho).trace()))
    return params.kappa * (n_a + n_b)


def spontaneous_flux(rho: np.ndarray, params: SystemParams) -> float:
    """Radiative flux gamma * sum of the four transition populations.

    Diagnostic companion to emission_intensity for testing whether a detected
    signal includes the emitter's direct spontaneous emission.
    """
    total = 0.0
    for ch in collapse_channels(params):
        if ch.label.startswith("kappa"):
            continue
        mat = ch.op.mat
        total += ch.rate * float(np.real(((mat.getH() @ mat) @ rho).trace()))
    return total
