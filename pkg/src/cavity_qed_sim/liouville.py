"""Liouvillian construction, steady state, and time evolution.

Density matrices are vectorized by column stacking, vec(A X B) = (B^T kron A) vec(X),
which is numpy reshape order='F'.  The production steady-state path never forms the
D^2 x D^2 matrix: it runs GMRES on the matrix-space residual map with a Sylvester
preconditioner built from the non-Hermitian drift A = -iH - (1/2) sum_k r_k phi_k^dag phi_k.
The explicit superoperator form is kept for small problems and cross-checks; its LU
factorization is not viable at production size (6D-lattice fill-in).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fockspace import HilbertSpace, Operator
from .model import CollapseChannel

# GMRES stops on the preconditioned shifted system; the true check is RESIDUAL_MAX
# on max|L(rho)| after hermitization and renormalization.
GMRES_TOL = 1e-12
RESIDUAL_MAX = 1e-10
_DENOM_FLOOR = 1e-8



def vec(mat: np.ndarray) -> np.ndarray:
    return np.asarray(mat).reshape(-1, order="F")


def unvec(x: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(x).reshape(dim, dim, order="F")


@dataclass(frozen=True)
class Superoperator:
    """Explicit column-stacking superoperator matrix."""

    space: HilbertSpace
    mat: sp.csr_matrix

    def __post_init__(self) -> None:
        d2 = self.space.dim**2
        if self.mat.shape != (d2, d2):
            raise ValueError(f"superoperator shape {self.mat.shape}, expected {(d2, d2)}")

    def norm_inf(self) -> float:
        return float(abs(self.mat).sum(axis=1).max())


def build_liouvillian(h: Operator, channels: list[CollapseChannel]) -> Superoperator:
    """-i[H, .] plus (r/2)(2 phi . phi^dag - phi^dag phi . - . phi^dag phi) per channel."""
    space = h.space
    for ch in channels:
        if ch.op.space != space:
            raise ValueError("collapse channel space does not match Hamiltonian space")
    dim = space.dim
    eye = sp.identity(dim, dtype=complex, format="csr")
    hm = h.mat
    lio = -1j * (sp.kron(eye, hm, format="csr") - sp.kron(hm.T, eye, format="csr"))
    for ch in channels:
        phi = ch.op.mat
        phd_phi = phi.getH() @ phi
        lio = lio + (ch.rate / 2.0) * (
            2.0 * sp.kron(phi.conj(), phi, format="csr")
            - sp.kron(eye, phd_phi, format="csr")
            - sp.kron(phd_phi.T, eye, format="csr")
        )
    lio = sp.csr_matrix(lio)
    lio.eliminate_zeros()
    return Superoperator(space, lio)


@dataclass
class SteadyStateResult:
    rho: np.ndarray
    residual: float
    iterations: int
    method: str
    x_vec: np.ndarray | None = None


def _finalize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


class SteadyStateSolver:
    """Warm-startable steady-state solver for a fixed set of collapse channels.

    The preconditioner eigendecomposition depends on H, which drifts along a sweep.
    Between full refreshes the eigenvalues are tracked to first order in the drift
    change (exact for diagonal perturbations to leading order), which keeps the
    Sylvester denominators current while the eigenvectors stay fixed; a full
    refresh happens only when the iteration count degrades.
    """

    def __init__(
        self,
        channels: list[CollapseChannel],
        *,
        tol: float = GMRES_TOL,
        maxiter: int = 600,
        restart: int = 40,
        refresh_every: int = 512,
    ):
        if not channels:
            raise ValueError("at least one collapse channel is required")
        self.space = channels[0].op.space
        for ch in channels:
            if ch.op.space != self.space:
                raise ValueError("collapse channels live on different spaces")
        self.dim = self.space.dim
        self.phis = [(ch.rate, ch.op.mat, ch.op.mat.getH()) for ch in channels]
        msum = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for rate, phi, phd in self.phis:
            msum = msum + rate * (phd @ phi)
        self.msum = sp.csr_matrix(msum)
        # Jump part as a superoperator on column-stacked vectors: it does not
        # depend on H, so one sparse matvec replaces six triple products.
        jump = sum(
            rate * sp.kron(phi.conj(), phi, format="csr") for rate, phi, _ in self.phis
        )
        self._jump_super = sp.csr_matrix(jump)
        self.trace_shift = max(ch.rate for ch in channels)
        self.tol = tol
        self.maxiter = maxiter
        self.restart = restart
        self.refresh_every = refresh_every
        self._v: np.ndarray | None = None
        self._vinv: np.ndarray | None = None
        self._vh: np.ndarray | None = None
        self._vinvh: np.ndarray | None = None
        self._lam: np.ndarray | None = None
        self._denom: np.ndarray | None = None
        self._drift_ref: sp.csr_matrix | None = None
        self._solves_since_refresh = 0
        self._last_iters: int | None = None

    def _drift(self, h: Operator) -> sp.csr_matrix:
        return sp.csr_matrix(-1j * h.mat - 0.5 * self.msum)

    def refresh(self, h: Operator) -> None:
        """Rebuild the Sylvester preconditioner from the drift at this H."""
        drift = self._drift(h)
        lam, v = sla.eig(drift.toarray())
        self._v = v
        self._vinv = sla.inv(v)
        self._vh = v.conj().T.copy()
        self._vinvh = self._vinv.conj().T.copy()
        self._lam = lam
        self._denom = self._make_denom(lam)
        self._drift_ref = drift
        self._solves_since_refresh = 0

    @staticmethod
    def _make_denom(lam: np.ndarray) -> np.ndarray:
        denom = lam[:, None] + lam.conj()[None, :]
        denom[np.abs(denom) < _DENOM_FLOOR] = _DENOM_FLOOR
        return denom

    def _track(self, h: Operator) -> None:
        """First-order eigenvalue update for the current drift; eigenvectors fixed."""
        pert = self._drift(h) - self._drift_ref
        if pert.nnz == 0:
            self._denom = self._make_denom(self._lam)
            return
        # dlam_i = (V^-1 E V)_ii, computed without forming the full product.
        c = pert @ self._v
        dlam = np.einsum("ik,ki->i", self._vinv, c)
        self._denom = self._make_denom(self._lam + dlam)

    def l_apply(self, h: Operator, rho: np.ndarray) -> np.ndarray:
        # A rho + rho A^dag + sum_k r_k phi_k rho phi_k^dag with A = -iH - Msum/2.
        a = self._drift(h)
        out = a @ rho
        out += (a.conj() @ rho.T).T
        for rate, phi, phd in self.phis:
            out += rate * (phi @ (rho @ phd))
        return out

    def _l_apply_cached(self, a: sp.csr_matrix, ac: sp.csr_matrix, rho: np.ndarray) -> np.ndarray:
        out = a @ rho
        out += (ac @ rho.T).T
        for rate, phi, phd in self.phis:
            out += rate * (phi @ (rho @ phd))
        return out

    def _p_inv(self, y: np.ndarray) -> np.ndarray:
        t = self._vinv @ y @ self._vinvh
        t /= self._denom
        return self._v @ t @ self._vh

    def _needs_refresh(self) -> bool:
        if self._v is None:
            return True
        if self._solves_since_refresh >= self.refresh_every:
            return True
        # Absolute trigger with an anti-thrash guard: in a region where even a
        # fresh decomposition needs many iterations, refresh at most every third
        # point instead of every point.
        if self._last_iters is not None and self._last_iters >= 15:
            return self._solves_since_refresh >= 3
        return False

    def _gmres(
        self, drift_pair: tuple[sp.csr_matrix, sp.csr_matrix], x0: np.ndarray | None
    ) -> tuple[np.ndarray, int, int]:
        """Right-preconditioned restarted GMRES on the trace-pinned residual map.

        Hand-rolled: the per-iteration work here is a few milliseconds, where a
        generic sparse-solver wrapper spends comparable time on bookkeeping.
        Right preconditioning keeps the Arnoldi recurrence on the true residual,
        so the stopping test is immune to the preconditioner's conditioning.
        """
        dim = self.dim
        d2 = dim * dim
        shift = self.trace_shift
        a, ac = drift_pair

        jump = self._jump_super

        def matvec(x: np.ndarray) -> np.ndarray:
            r = unvec(x, dim)
            s = a @ r
            s += (ac @ r.T).T
            y = s.ravel(order="F")
            y += jump @ x
            y[0] += shift * x[:: dim + 1].sum()
            return y

        def precond(x: np.ndarray) -> np.ndarray:
            return vec(self._p_inv(unvec(x, dim)))

        b = np.zeros(d2, dtype=complex)
        b[0] = shift
        target = self.tol * shift  # ||b|| = shift

        x = np.zeros(d2, dtype=complex) if x0 is None else np.asarray(x0, dtype=complex).copy()
        iters = 0
        m = self.restart
        while True:
            z = b - matvec(x) if x.any() else b.copy()
            beta = np.linalg.norm(z)
            if beta <= target or beta == 0.0:
                return x, 0, iters
            basis = np.empty((m + 1, d2), dtype=complex)
            basis[0] = z / beta
            rmat = np.zeros((m, m), dtype=complex)
            cs = np.zeros(m, dtype=float)
            sn = np.zeros(m, dtype=complex)
            g = np.zeros(m + 1, dtype=complex)
            g[0] = beta
            j = 0
            converged = False
            while j < m and iters < self.maxiter:
                w = matvec(precond(basis[j]))
                # <basis_i, w> without conjugate-copying the basis block.
                hcol = (basis[: j + 1] @ w.conj()).conj()
                w -= hcol @ basis[: j + 1]
                hj1 = np.linalg.norm(w)
                # Givens sweep: rotate the new Hessenberg column into R.
                for i in range(j):
                    t = cs[i] * hcol[i] + sn[i] * hcol[i + 1]
                    hcol[i + 1] = -np.conj(sn[i]) * hcol[i] + cs[i] * hcol[i + 1]
                    hcol[i] = t
                f = hcol[j]
                af = abs(f)
                norm_fg = np.hypot(af, hj1)
                if norm_fg == 0.0:
                    cs[j], sn[j] = 1.0, 0.0
                elif af == 0.0:
                    cs[j], sn[j] = 0.0, 1.0
                else:
                    cs[j] = af / norm_fg
                    sn[j] = (f / af) * (hj1 / norm_fg)
                rmat[: j + 1, j] = hcol[: j + 1]
                rmat[j, j] = cs[j] * f + sn[j] * hj1
                g[j + 1] = -np.conj(sn[j]) * g[j]
                g[j] = cs[j] * g[j]
                iters += 1
                if abs(g[j + 1]) <= target or hj1 == 0.0:
                    j += 1
                    converged = True
                    break
                basis[j + 1] = w / hj1
                j += 1
            if j > 0:
                y = sla.solve_triangular(rmat[:j, :j], g[:j], lower=False)
                # Map the Krylov correction back through the preconditioner.
                x += precond(y @ basis[:j])
            if converged:
                return x, 0, iters
            if iters >= self.maxiter:
                return x, 1, iters

    def residual(self, h: Operator, rho: np.ndarray) -> float:
        return float(np.abs(self.l_apply(h, rho)).max())

    def _residual_cached(self, a: sp.csr_matrix, ac: sp.csr_matrix, rho: np.ndarray) -> float:
        return float(np.abs(self._l_apply_cached(a, ac, rho)).max())

    def solve(self, h: Operator, x0: np.ndarray | None = None) -> SteadyStateResult:
        if h.space != self.space:
            raise ValueError("Hamiltonian space does not match solver space")
        if self._needs_refresh():
            self.refresh(h)
        else:
            self._track(h)
        a = self._drift(h)
        pair = (a, sp.csr_matrix(a.conj()))
        x, info, iters = self._gmres(pair, x0)
        rho = _finalize(unvec(x, self.dim))
        res = self._residual_cached(*pair, rho)
        if info != 0 or res > RESIDUAL_MAX:
            # Retry ladder: fresh preconditioner warm, then cold.
            self.refresh(h)
            x, info, it2 = self._gmres(pair, x)
            iters += it2
            rho = _finalize(unvec(x, self.dim))
            res = self._residual_cached(*pair, rho)
            if info != 0 or res > RESIDUAL_MAX:
                x, info, it3 = self._gmres(pair, None)
                iters += it3
                rho = _finalize(unvec(x, self.dim))
                res = self._residual_cached(*pair, rho)
        self._solves_since_refresh += 1
        self._last_iters = iters
        return SteadyStateResult(rho, res, iters, "gmres-sylvester", vec(rho))


def _steady_state_direct(lio: Superoperator) -> SteadyStateResult:
    """Trace-row replacement plus sparse LU.  Only viable at small dimension."""
    dim = lio.space.dim
    d2 = dim * dim
    lhs = sp.lil_matrix(lio.mat, dtype=complex)
    lhs[0, :] = 0.0
    for k in range(dim):
        lhs[0, k * (dim + 1)] = 1.0
    b = np.zeros(d2, dtype=complex)
    b[0] = 1.0
    x = spla.splu(lhs.tocsc()).solve(b)
    rho = _finalize(unvec(x, dim))
    res = float(np.abs(lio.mat @ vec(rho)).max())
    return SteadyStateResult(rho, res, 0, "direct-lu")


def steady_state(
    arg: Operator | Superoperator,
    channels: list[CollapseChannel] | None = None,
    *,
    x0: np.ndarray | None = None,
    solver: SteadyStateSolver | None = None,
    method: str = "auto",
) -> SteadyStateResult:
    """Unique steady state of the dissipative dynamics.

    Accepts either an explicit Superoperator (solved by trace-row replacement and
    sparse LU; small problems only) or a Hamiltonian plus collapse channels
    (preconditioned matrix-space GMRES; production path at full cutoffs).
    """
    if isinstance(arg, Superoperator):
        if channels is not None:
            raise ValueError("channels are implicit in an explicit superoperator")
        return _steady_state_direct(arg)
    if channels is None:
        raise ValueError("collapse channels are required with a Hamiltonian argument")
    if method == "direct":
        return _steady_state_direct(build_liouvillian(arg, channels))
    if method not in ("auto", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    if solver is None:
        solver = SteadyStateSolver(channels)
    return solver.solve(arg, x0=x0)


@dataclass
class EvolveResult:
    rho: np.ndarray
    steps: int
    dt: float
    trace_drift: float


# One RK4 step of x' = Lx is exactly x -> (I + hL + h^2L^2/2 + h^3L^3/6 + h^4L^4/24)x,
# so for a time-independent L the whole trajectory is a power of that matrix; binary
# powering replaces millions of step loops when the dense propagator fits in memory.
_DENSE_PROPAGATOR_MAX_D2 = 4200


def evolve(
    rho0: np.ndarray,
    h: Operator,
    channels: list[CollapseChannel],
    t: float,
    *,
    dt: float | None = None,
) -> EvolveResult:
    """Fixed-step RK4 integration of the master equation from rho0 over time t.

    The step is capped at 0.1/||L||_inf; an explicit dt above the cap is rejected.
    Trace drift beyond 1e-6 is reported as a warning; the result is renormalized.
    """
    dim = h.space.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (dim, dim):
        raise ValueError(f"rho0 shape {rho0.shape} does not match dimension {dim}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return EvolveResult(rho0.copy(), 0, 0.0, 0.0)

    lio = build_liouvillian(h, channels)
    dt_cap = 0.1 / lio.norm_inf()
    if dt is None:
        dt = dt_cap
    elif dt > dt_cap:
        raise ValueError(f"dt {dt:g} exceeds stability cap {dt_cap:g}")
    steps = max(1, int(np.ceil(t / dt)))
    step = t / steps

    x = vec(rho0).astype(complex)
    d2 = dim * dim
    if d2 <= _DENSE_PROPAGATOR_MAX_D2:
        lm = lio.mat.toarray()
        prop = np.eye(d2, dtype=complex)
        term = np.eye(d2, dtype=complex)
        for k in (1, 2, 3, 4):
            term = (step / k) * (lm @ term)
            prop += term
        e = steps
        base = prop
        while e:
            if e & 1:
                x = base @ x
            e >>= 1
            if e:
                base = base @ base
    else:
        lm = lio.mat
        half = 0.5 * step
        for _ in range(steps):
            k1 = lm @ x
            k2 = lm @ (x + half * k1)
            k3 = lm @ (x + half * k2)
            k4 = lm @ (x + step * k3)
            x += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    rho = unvec(x, dim)
    drift = abs(np.trace(rho).real - np.trace(rho0).real)
    if drift > 1e-6:
        warnings.warn(f"trace drift {drift:.3e} after {steps} steps", stacklevel=2)
    return EvolveResult(_finalize(rho), steps, step, float(drift))
