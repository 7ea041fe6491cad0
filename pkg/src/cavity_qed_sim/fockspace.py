"""Operators on the composite space (4 QD levels) x (mode-a Fock) x (mode-b Fock).

Basis ordering is qd (slowest) then mode a then mode b, so the state |l, m, n>
sits at index l*(n_a_max+1)*(n_b_max+1) + m*(n_b_max+1) + n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# QD level labels, fixed ordering.
G, X, Y, XX = 0, 1, 2, 3
QD_LEVELS = (G, X, Y, XX)
N_QD = 4

_SLOTS = ("qd", "mode_a", "mode_b")


@dataclass(frozen=True)
class HilbertSpace:
    """Composite-space signature; cutoffs are inclusive photon numbers."""

    n_a_max: int
    n_b_max: int

    def __post_init__(self) -> None:
        if self.n_a_max < 1 or self.n_b_max < 1:
            raise ValueError("Fock cutoffs must be >= 1")

    @property
    def dim_a(self) -> int:
        return self.n_a_max + 1

    @property
    def dim_b(self) -> int:
        return self.n_b_max + 1

    @property
    def dim(self) -> int:
        return N_QD * self.dim_a * self.dim_b

    def index(self, l: int, m: int, n: int) -> int:
        if l not in QD_LEVELS:
            raise ValueError(f"invalid QD level {l}")
        if not (0 <= m <= self.n_a_max and 0 <= n <= self.n_b_max):
            raise ValueError(f"photon numbers ({m}, {n}) outside cutoffs")
        return (l * self.dim_a + m) * self.dim_b + n

    def unindex(self, idx: int) -> tuple[int, int, int]:
        if not (0 <= idx < self.dim):
            raise ValueError(f"basis index {idx} outside dimension {self.dim}")
        idx, n = divmod(idx, self.dim_b)
        l, m = divmod(idx, self.dim_a)
        return l, m, n

    def slot_dim(self, slot: str) -> int:
        if slot == "qd":
            return N_QD
        if slot == "mode_a":
            return self.dim_a
        if slot == "mode_b":
            return self.dim_b
        raise ValueError(f"unknown slot {slot!r}")


class Operator:
    """Sparse matrix tagged with its space; binary ops require matching spaces."""

    __slots__ = ("space", "mat")

    def __init__(self, space: HilbertSpace, mat: sp.spmatrix):
        if mat.shape != (space.dim, space.dim):
            raise ValueError(f"matrix shape {mat.shape} does not match space dim {space.dim}")
        m = sp.csr_matrix(mat, dtype=complex)
        m.eliminate_zeros()
        self.space = space
        self.mat = m

    def _check(self, other: "Operator") -> None:
        if self.space != other.space:
            raise ValueError("operator space signatures do not match")

    @property
    def nnz(self) -> int:
        return self.mat.nnz


def annihilation_single_mode(n_max: int) -> sp.csr_matrix:
    """Single-mode annihilation operator: entry (m-1, m) = sqrt(m)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    vals = np.sqrt(np.arange(1, n_max + 1, dtype=float))
    return sp.diags(vals, offsets=1, shape=(n_max + 1, n_max + 1), dtype=complex).tocsr()


def qd_transition(i: int, j: int) -> sp.csr_matrix:
    """|i><j| on the four-level system."""
    if i not in QD_LEVELS or j not in QD_LEVELS:
        raise ValueError(f"QD levels must be in {QD_LEVELS}, got ({i}, {j})")
    m = sp.dok_matrix((N_QD, N_QD), dtype=complex)
    m[i, j] = 1.0
    return m.tocsr()


def embed(op: sp.spmatrix, slot: str, space: HilbertSpace) -> Operator:
    """Kronecker-lift a single-subsystem matrix onto the composite space."""
    if slot not in _SLOTS:
        raise ValueError(f"unknown slot {slot!r}")
    d = space.slot_dim(slot)
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match slot {slot!r} dimension {d}")
    factors = {
        "qd": sp.identity(N_QD, dtype=complex, format="csr"),
        "mode_a": sp.identity(space.dim_a, dtype=complex, format="csr"),
        "mode_b": sp.identity(space.dim_b, dtype=complex, format="csr"),
    }
    factors[slot] = sp.csr_matrix(op, dtype=complex)
    lifted = sp.kron(sp.kron(factors["qd"], factors["mode_a"]), factors["mode_b"], format="csr")
    return Operator(space, lifted)


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, sp.identity(space.dim, dtype=complex, format="csr"))


def adjoint(op: Operator) -> Operator:
    return Operator(op.space, op.mat.getH())


def compose(x: Operator, y: Operator) -> Operator:
    x._check(y)
    return Operator(x.space, x.mat @ y.mat)


def add_scaled(x: Operator, c: complex, y: Operator) -> Operator:
    x._check(y)
    return Operator(x.space, x.mat + c * y.mat)


def dump_triplets(op: Operator) -> str:
    """Debug dump: one "row col re im" line per entry, rows then columns ascending."""
    coo = op.mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{coo.row[k]} {coo.col[k]} {coo.data[k].real:.17g} {coo.data[k].imag:.17g}"
        for k in order
    ]
    return "\n".join(lines)
