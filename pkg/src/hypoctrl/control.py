"""Observability Gramians and minimal-norm null controls on Hermite truncations.

Controlled system on the truncation (coefficients in the Hermite basis)::

    f'(t) = -A f(t) + G phi(t),    f(0) = f0,

where ``G`` is the Gram matrix of the observation set: the control
``u = 1_omega * sum_a phi_a psi_a`` projects to ``G phi`` and has
``||u||^2 = <G phi, phi>``. The adjoint (observed) semigroup is
``S(t) = exp(-t A^*)`` and the Gramian is ``W = int_0^T S(t)^* G S(t) dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .hermite import GramMatrix, RegionSpec, TruncatedOperator, hermite_eval, omega_gram
from .lr_cost import CostReport


class UnobservableTruncation(RuntimeError):
    pass


@dataclass
class ControlProblem:
    operator: TruncatedOperator
    region: RegionSpec
    T: float
    nt: int = 256
    f0: np.ndarray | None = None
    gram: GramMatrix | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.nt < 16:
            raise ValueError("nt must be at least 16")
        if self.f0 is not None:
            self.f0 = np.asarray(self.f0, dtype=complex)
            if self.f0.shape != (self.operator.D,):
                raise ValueError("f0 has the wrong length")
        if self.gram is None:
            self.gram = omega_gram(self.operator.trunc, self.region)

    @property
    def G(self) -> np.ndarray:
        return self.gram.G

    @property
    def thickness_witness(self):
        return self.region.thickness_witness

    def time_grid(self) -> tuple[np.ndarray, np.ndarray]:
        t = np.linspace(0.0, self.T, self.nt + 1)
        w = np.full(self.nt + 1, self.T / self.nt)
        w[0] = w[-1] = 0.5 * self.T / self.nt
        return t, w


@dataclass
class GramianReport:
    G_T: np.ndarray
    lambda_min: float
    observability_cost_hat: float  # exact max of ||S(T) g||^2 / <G_T g, g>
    observability_cost_random: float  # same ratio maximised over random probes
    S_T: np.ndarray
    nt: int
    T: float
    worst_direction: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "C_hat": self.observability_cost_hat,
            "C_hat_random": self.observability_cost_random,
            "nt": self.nt,
            "T": self.T,
            "trace": float(np.trace(self.G_T).real),
        }


def observability_gramian(cp: ControlProblem, *, n_random: int = 64, seed: int = 0, threshold: float = 1e-13) -> GramianReport:
    A = cp.operator.A
    D = A.shape[0]
    t, w = cp.time_grid()
    h = cp.T / cp.nt
    step = sla.expm(-h * A.conj().T)  # S(h)
    S = np.eye(D, dtype=complex)
    W = np.zeros((D, D), dtype=complex)
    G = cp.G
    for j in range(cp.nt + 1):
        W += w[j] * (S.conj().T @ G @ S)
        if j < cp.nt:
            S = step @ S
    W = 0.5 * (W + W.conj().T)
    ev = np.linalg.eigvalsh(W)
    lam = float(ev[0])
    if lam < threshold:
        raise UnobservableTruncation(f"lambda_min(G_T) = {lam:.3e} below {threshold:.0e}")
    K = S.conj().T @ S
    K = 0.5 * (K + K.conj().T)
    vals, vecs = sla.eigh(K, W)
    C_hat = float(vals[-1])
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((D, n_random)) + 1j * rng.standard_normal((D, n_random))
    num = np.sum(np.abs(S @ g) ** 2, axis=0)
    den = np.real(np.sum(g.conj() * (W @ g), axis=0))
    C_rand = float(np.max(num / den))
    return GramianReport(W, lam, C_hat, C_rand, S, cp.nt, cp.T, vecs[:, -1])


@dataclass
class ControlResult:
    times: np.ndarray
    phi: np.ndarray  # (nt+1, D) adjoint coefficients; the control is 1_omega * psi^T phi
    control_coefficients: np.ndarray  # G phi, the projection of u onto the truncation
    terminal_residual: float
    control_energy: float
    duality_energy: float
    eps: float
    state_norms: np.ndarray
    control_norms: np.ndarray
    solve_residual: float
    quadrature_residual: float

    def control_on_points(self, trunc, region: RegionSpec, points: np.ndarray, j: int) -> np.ndarray:
        """Values of ``u(t_j)`` at physical points; exactly zero off omega."""
        mask = region.indicator(points)
        vals = hermite_eval(trunc, points) @ self.phi[j]
        return np.where(mask, vals, 0.0)

    def rows(self):
        for t, f, u in zip(self.times, self.state_norms, self.control_norms):
            yield [float(t), float(f), float(u)]

    header = ["t", "state_norm", "control_norm_omega"]

    def to_dict(self) -> dict:
        return {
            "terminal_residual": self.terminal_residual,
            "control_energy": self.control_energy,
            "duality_energy": self.duality_energy,
            "eps": self.eps,
            "solve_residual": self.solve_residual,
            "quadrature_residual": self.quadrature_residual,
        }


def hum_control(cp: ControlProblem, eps: float | None = None, report: GramianReport | None = None) -> ControlResult:
    """Regularized minimal-norm null control.

    ``lam = -(G_T + eps)^{-1} S(T)^* f0`` and ``phi(s) = S(T - s) lam``. The
    state is then integrated exactly for the piecewise-linear interpolant of
    ``phi`` between time nodes, so ``terminal_residual`` includes both the
    Tikhonov floor and the time discretization error.
    """
    if cp.f0 is None:
        raise ValueError("ControlProblem.f0 is required")
    rep = report if report is not None else observability_gramian(cp)
    A = cp.operator.A
    G = cp.G
    D = A.shape[0]
    f0 = cp.f0
    nf0 = float(np.linalg.norm(f0))
    t, w = cp.time_grid()
    if eps is None:
        eps = 1e-8 * float(np.trace(rep.G_T).real) / D
    if nf0 == 0:
        z = np.zeros((cp.nt + 1, D), dtype=complex)
        zn = np.zeros(cp.nt + 1)
        return ControlResult(t, z, z.copy(), 0.0, 0.0, 0.0, eps, zn, zn.copy(), 0.0, 0.0)
    r = rep.S_T.conj().T @ f0  # e^{-TA} f0
    Mreg = rep.G_T + eps * np.eye(D)
    lam = -np.linalg.solve(Mreg, r)
    solve_res = float(np.linalg.norm(Mreg @ lam + r) / max(np.linalg.norm(r), 1e-300))
    if solve_res > 1e-8:
        import warnings

        warnings.warn(f"hum_control: ill-conditioned solve, residual {solve_res:.2e}", RuntimeWarning)
    h = cp.T / cp.nt
    step = sla.expm(-h * A.conj().T)
    phi = np.empty((cp.nt + 1, D), dtype=complex)
    v = lam.copy()
    for i in range(cp.nt + 1):
        phi[cp.nt - i] = v
        v = step @ v
    Gphi = phi @ G.T
    unorm2 = np.real(np.sum(phi.conj() * Gphi, axis=1))
    energy = float(np.sum(w * unorm2))
    dual = float(np.real(lam.conj() @ rep.G_T @ lam))
    # exact propagation for piecewise-linear phi
    Z = np.zeros((3 * D, 3 * D), dtype=complex)
    Z[:D, :D] = -h * A
    Z[:D, D : 2 * D] = h * G
    Z[D : 2 * D, 2 * D :] = np.eye(D)
    Ex = sla.expm(Z)
    f = f0.copy()
    norms = np.empty(cp.nt + 1)
    norms[0] = nf0
    for j in range(cp.nt):
        z = np.concatenate([f, phi[j], phi[j + 1] - phi[j]])
        f = Ex[:D] @ z
        norms[j + 1] = np.linalg.norm(f)
    quad_state = r + rep.G_T @ lam
    return ControlResult(
        t,
        phi,
        Gphi,
        float(np.linalg.norm(f) / nf0),
        energy,
        dual,
        float(eps),
        norms,
        np.sqrt(np.maximum(unorm2, 0.0)),
        solve_res,
        float(np.linalg.norm(quad_state) / nf0),
    )


@dataclass
class ObservabilityComparison:
    T: float
    C_hat: float
    cost_T: float
    log_C_hat: float
    log_cost_T: float
    holds: bool
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_observability(cp: ControlProblem, report: GramianReport, cost: CostReport) -> ObservabilityComparison:
    """Compare the measured constant with the theoretical cost; a miss is data."""
    lc = math.log(report.observability_cost_hat)
    lt = cost.log_cost(cp.T)
    holds = lc <= lt
    note = "" if holds else "measured constant exceeds the instantiated bound (check the measured hypothesis constants)"
    return ObservabilityComparison(cp.T, report.observability_cost_hat, cost.cost(cp.T), lc, lt, holds, note)


def instantiate_params(spectral, gs, k0: int):
    """LR parameters from measured profiles (a = 1/2, b = 1, m = 2 k0 + 1).

    ``c1`` is the smallest constant with ``c_hat(k) <= c1 sqrt(k)`` on the
    measured range; ``c2`` combines the smoothing constant and the fitted
    Hermite-tail rates; ``t0`` is the empirical plateau edge.
    """
    from .lr_cost import LRParams

    m = 2 * k0 + 1
    ks = [k for k, c in zip(spectral.k, spectral.c_hat) if k > 0 and np.isfinite(c)]
    cs = [c for k, c in zip(spectral.k, spectral.c_hat) if k > 0 and np.isfinite(c)]
    c1 = max(max(c / math.sqrt(k) for k, c in zip(ks, cs)), 1e-6)
    rates = [d / t**m for d, t in zip(gs.delta_hat, gs.times) if np.isfinite(d) and d > 0]
    c2 = min([1.0 / gs.C0_grid[0]] + rates)
    return LRParams(c1, min(c2, 1.0), 0.5, 1.0, float(m), max(min(gs.t0_hat, 1.0), 1e-3))
