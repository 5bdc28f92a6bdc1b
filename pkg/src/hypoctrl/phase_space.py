"""Linear algebra of complex quadratic symbols on phase space.

Conventions
-----------
Phase-space points are ``X = (x, xi)`` in R^{2n}, x-block first. A quadratic
symbol is ``q(X) = X^T M X`` with ``M`` complex symmetric. The symplectic form
is ``sigma((x, xi), (y, eta)) = xi . y - x . eta``, i.e. ``sigma(X, Y) = X^T J Y``
with ``J = [[0, -I], [I, 0]]``. The Hamilton map is the unique ``F`` with
``q(X, Y) = sigma(X, F Y)``, which gives ``F = J^{-1} M``, blockwise

    F = [[ M_xi,x ,  M_xi,xi ],
         [ -M_x,x , -M_x,xi  ]].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

DEFAULT_RANK_TOL = 1e-10
ACCRETIVE_TOL = 1e-12


def _symplectic_j(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


@dataclass(frozen=True)
class QuadraticSymbol:
    """Complex quadratic form ``q(X) = X^T M X`` on R^{2n}.

    ``M`` is symmetrized on construction. ``accretive`` is an optional declared
    flag; when it is True the real part is checked to be positive semidefinite.
    """

    n: int
    M: np.ndarray
    accretive: bool | None = None
    label: str = ""

    def __post_init__(self):
        M = np.asarray(self.M, dtype=complex)
        if M.shape != (2 * self.n, 2 * self.n):
            raise ValueError(f"M must be {2 * self.n}x{2 * self.n}, got {M.shape}")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "M", M)
        if self.accretive and not self.is_accretive():
            raise ValueError("symbol declared accretive but Re M is not PSD")

    # evaluation -------------------------------------------------------------
    def __call__(self, X: np.ndarray) -> complex:
        X = np.asarray(X)
        return X @ self.M @ X

    def polar(self, X: np.ndarray, Y: np.ndarray) -> complex:
        """Polarized form ``q(X, Y) = X^T M Y``."""
        return np.asarray(X) @ self.M @ np.asarray(Y)

    @property
    def re(self) -> np.ndarray:
        return self.M.real

    @property
    def im(self) -> np.ndarray:
        return self.M.imag

    def min_real_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.re)[0])

    def is_accretive(self, tol: float = ACCRETIVE_TOL) -> bool:
        scale = max(1.0, float(np.abs(self.M).max(initial=0.0)))
        return self.min_real_eig() >= -tol * scale

    def conj(self) -> "QuadraticSymbol":
        return QuadraticSymbol(self.n, self.M.conj(), self.accretive, self.label + "*")

    def __add__(self, other: "QuadraticSymbol") -> "QuadraticSymbol":
        if self.n != other.n:
            raise ValueError("dimension mismatch")
        return QuadraticSymbol(self.n, self.M + other.M)

    def scaled(self, c: complex) -> "QuadraticSymbol":
        return QuadraticSymbol(self.n, c * self.M)

    def transformed(self, P: np.ndarray) -> "QuadraticSymbol":
        """Symbol ``X -> q(P X)``."""
        return QuadraticSymbol(self.n, P.T @ self.M @ P, self.accretive, self.label)

    # I/O ---------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"n": self.n, "M_re": self.M.real.tolist(), "M_im": self.M.imag.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticSymbol":
        M = np.asarray(d["M_re"], dtype=float) + 1j * np.asarray(d.get("M_im", 0.0), dtype=float)
        return cls(int(d["n"]), M)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QuadraticSymbol":
        return cls.from_dict(json.loads(text))


def symbol_from_terms(n: int, terms: Sequence[tuple[complex, dict, dict]], **kw) -> QuadraticSymbol:
    """Build a symbol from products of linear forms.

    Each term ``(c, u, v)`` contributes ``c * (u . X)(v . X)``; ``u`` and ``v``
    map variable indices (0..2n-1) to coefficients.
    """
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    for c, u, v in terms:
        uu = np.zeros(2 * n)
        vv = np.zeros(2 * n)
        for k, val in u.items():
            uu[k] += val
        for k, val in v.items():
            vv[k] += val
        M += c * 0.5 * (np.outer(uu, vv) + np.outer(vv, uu))
    return QuadraticSymbol(n, M, **kw)


@dataclass(frozen=True)
class HamiltonMap:
    F: np.ndarray
    ReF: np.ndarray
    ImF: np.ndarray

    @property
    def n(self) -> int:
        return self.F.shape[0] // 2

    def sigma(self, X: np.ndarray, Y: np.ndarray) -> complex:
        return np.asarray(X) @ _symplectic_j(self.n) @ np.asarray(Y)


def hamilton_map(q: QuadraticSymbol, n_probe: int = 100, seed: int = 0) -> HamiltonMap:
    n = q.n
    M = q.M
    Mxx, Mxk = M[:n, :n], M[:n, n:]
    Mkx, Mkk = M[n:, :n], M[n:, n:]
    F = np.block([[Mkx, Mkk], [-Mxx, -Mxk]])
    hm = HamiltonMap(F, F.real.copy(), F.imag.copy())
    # defining identity on random probes
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_probe, 2 * n))
    Y = rng.standard_normal((n_probe, 2 * n))
    J = _symplectic_j(n)
    lhs = np.einsum("pi,ij,pj->p", X, M, Y)
    rhs = np.einsum("pi,ij,pj->p", X, J @ F, Y)
    scale = max(np.abs(M).max(initial=0.0), 1.0) * np.linalg.norm(X, axis=1) * np.linalg.norm(Y, axis=1)
    if np.any(np.abs(lhs - rhs) > 1e-12 * scale):
        raise AssertionError("Hamilton map fails the defining identity")
    return hm


@dataclass(frozen=True)
class SingularSpaceReport:
    chain_dims: list[int]
    S_basis: np.ndarray  # shape (dim S, 2n), orthonormal rows
    k0: int | None
    delta_loss: Fraction | None
    ill_conditioned: bool = False
    min_gap_ratio: float = float("inf")

    @property
    def trivial(self) -> bool:
        return self.k0 is not None

    def to_dict(self) -> dict:
        return {
            "chain_dims": list(self.chain_dims),
            "k0": self.k0 if self.k0 is not None else "none",
            "delta_loss": (
                {"num": self.delta_loss.numerator, "den": self.delta_loss.denominator, "value": float(self.delta_loss)}
                if self.delta_loss is not None
                else None
            ),
            "S_basis": self.S_basis.tolist(),
            "ill_conditioned": self.ill_conditioned,
        }


def _null_space(A: np.ndarray, tol: float) -> tuple[np.ndarray, bool, float]:
    """Real null space with relative SVD cutoff; also flags near-threshold values."""
    if A.size == 0:
        return np.eye(A.shape[1]), False, float("inf")
    _, s, Vt = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return np.eye(A.shape[1]), False, float("inf")
    thr = tol * smax
    rank = int(np.sum(s > thr))
    # distance (as a ratio) of the closest singular value to the threshold
    nz = s[s > 0]
    ratios = np.maximum(nz / thr, thr / nz) if nz.size else np.array([np.inf])
    gap = float(ratios.min())
    return Vt[rank:].T, gap < 10.0, gap


def singular_space(F: HamiltonMap, tol: float = DEFAULT_RANK_TOL) -> SingularSpaceReport:
    """Kernel chain of ``Re F (Im F)^j`` intersected with R^{2n}."""
    dim = F.F.shape[0]
    ReF, ImF = F.ReF, F.ImF
    blocks = []
    P = np.eye(dim)
    chain = []
    ill = False
    gap_min = float("inf")
    basis = np.eye(dim)
    for _ in range(dim):
        B = ReF @ P
        nb = np.linalg.norm(B)
        if nb > 0:
            blocks.append(B / nb)
        stack = np.vstack(blocks) if blocks else np.zeros((0, dim))
        if stack.shape[0]:
            basis, flag, gap = _null_space(stack, tol)
            ill |= flag
            gap_min = min(gap_min, gap)
        else:
            basis = np.eye(dim)
        chain.append(int(basis.shape[1]))
        P = P @ ImF
    k0 = next((p for p, d in enumerate(chain) if d == 0), None)
    delta = Fraction(2 * k0, 2 * k0 + 1) if k0 is not None else None
    if ill:
        warnings.warn("singular_space: a singular value lies within 10x of the rank threshold", RuntimeWarning)
    return SingularSpaceReport(chain, basis.T.copy(), k0, delta, ill, gap_min)


def partially_elliptic_on_S(q: QuadraticSymbol, report: SingularSpaceReport, tol: float = 1e-10) -> bool:
    """Check ``q(X) = 0, X in S => X = 0``.

    Re q vanishes identically on S for accretive symbols, so the test reduces
    to definiteness of ``Im M`` restricted to S.
    """
    S = report.S_basis
    if S.shape[0] == 0:
        return True
    R = S @ q.im @ S.T
    ev = np.linalg.eigvalsh(0.5 * (R + R.T))
    scale = max(np.abs(q.M).max(), 1.0)
    return bool(ev[0] > tol * scale or ev[-1] < -tol * scale)


def averaged_real_part(q: QuadraticSymbol, T: float, nodes: int = 64, check_tol: float = 1e-8) -> np.ndarray:
    """Coefficient matrix of ``(1/2T) int_{-T}^{T} Re q(exp(2t Im F) X) dt``."""
    if T <= 0:
        raise ValueError("T must be positive")
    ImF = hamilton_map(q).ImF
    ReM = q.re

    def quad(m: int) -> np.ndarray:
        z, w = np.polynomial.legendre.leggauss(m)
        acc = np.zeros_like(ReM)
        for zi, wi in zip(z, w):
            Phi = sla.expm(2.0 * T * zi * ImF)
            acc += wi * (Phi.T @ ReM @ Phi)
        return 0.5 * acc  # (1/2T) * T * sum w_i f(T z_i)

    A = quad(nodes)
    if np.abs(A - quad(2 * nodes)).max() > check_tol * max(1.0, np.abs(A).max()):
        warnings.warn("averaged_real_part: quadrature not converged at this T", RuntimeWarning)
    return 0.5 * (A + A.T)


# ----------------------------------------------------------------------------
# Ornstein-Uhlenbeck systems


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    # same relative cutoff as the rank tests, applied before sqrt lifts 1e-16 to 1e-8
    w = np.where(w > DEFAULT_RANK_TOL * max(w.max(initial=0.0), 0.0), w, 0.0)
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class OUSystem:
    """Drift/diffusion pair of ``P = 1/2 Tr(Q grad^2) + <Bx, grad>``."""

    Q: np.ndarray
    B: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if Q.shape != B.shape or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q and B must be square of equal size")
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        if np.linalg.eigvalsh(Q)[0] < -self.tol * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        Q.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def stable_flag(self) -> bool:
        return bool(np.linalg.eigvals(self.B).real.max() < -self.tol)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "OUSystem":
        return cls(np.asarray(d["Q"], dtype=float), np.asarray(d["B"], dtype=float))


def build_ou_symbol(sys: OUSystem) -> QuadraticSymbol:
    """``q(x, xi) = 1/2 <Q xi, xi> - i <B x, xi>``."""
    n = sys.n
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[n:, n:] = 0.5 * sys.Q
    M[n:, :n] = -0.5j * sys.B
    M[:n, n:] = -0.5j * sys.B.T
    return QuadraticSymbol(n, M, accretive=True, label="ou")


class KalmanResult(NamedTuple):
    rank: int
    kalman_k0: int | None


def kalman_analysis(sys: OUSystem, tol: float = DEFAULT_RANK_TOL) -> KalmanResult:
    n = sys.n
    R = _psd_sqrt(sys.Q)
    blocks = []
    Bp = np.eye(n)
    ranks = []
    # common scale: largest singular value of the full Kalman matrix
    for _ in range(n):
        blocks.append(Bp @ R)
        Bp = Bp @ sys.B
    full = np.hstack(blocks)
    smax = np.linalg.norm(full, 2)
    if smax == 0:
        return KalmanResult(0, None)
    for p in range(n):
        s = np.linalg.svd(np.hstack(blocks[: p + 1]), compute_uv=False)
        ranks.append(int(np.sum(s > tol * smax)))
    k0 = next((p for p, r in enumerate(ranks) if r == n), None)
    return KalmanResult(ranks[-1], k0)


def lyapunov_solve(B: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``B X + X B^T = -Q`` by a dense Kronecker solve."""
    n = B.shape[0]
    I = np.eye(n)
    K = np.kron(I, B) + np.kron(B, I)
    x = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


@dataclass(frozen=True)
class RhoParams:
    """Invariant Gaussian density ``rho(x) = norm * exp(-1/2 <Q_inf^{-1} x, x>)``."""

    Q_inf: np.ndarray
    normalization: float

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        Qi = np.linalg.inv(self.Q_inf)
        return self.normalization * np.exp(-0.5 * np.einsum("pi,ij,pj->p", x, Qi, x))


class ConjugationResult(NamedTuple):
    L_symbol: QuadraticSymbol
    Lfrak_symbol: QuadraticSymbol
    Q_inf: np.ndarray
    rho_params: RhoParams


def weighted_conjugation_symbols(sys: OUSystem) -> ConjugationResult:
    """Symbols of the operators obtained by conjugating P with sqrt(rho)."""
    if not sys.stable_flag:
        raise ValueError("unstable drift: spectrum of B is not in the open left half-plane")
    if kalman_analysis(sys).rank < sys.n:
        raise ValueError("hypoellipticity fails: Kalman rank < n")
    n = sys.n
    Qinf = lyapunov_solve(sys.B, sys.Q)
    Qi = np.linalg.inv(Qinf)
    C = 0.5 * sys.Q @ Qi + sys.B
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[:n, :n] = 0.125 * Qi @ sys.Q @ Qi
    M[n:, n:] = 0.5 * sys.Q
    M[n:, :n] = -0.5j * C
    M[:n, n:] = -0.5j * C.T
    L = QuadraticSymbol(n, M, accretive=True, label="L")
    Lf = QuadraticSymbol(n, M.conj(), accretive=True, label="Lfrak")
    norm = (2 * np.pi) ** (-n / 2) / np.sqrt(np.linalg.det(Qinf))
    return ConjugationResult(L, Lf, Qinf, RhoParams(Qinf, float(norm)))


# ----------------------------------------------------------------------------
# presets


def heat_symbol(n: int = 1) -> QuadraticSymbol:
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[n:, n:] = np.eye(n)
    return QuadraticSymbol(n, M, accretive=True, label="heat")


def harmonic_symbol(n: int = 1) -> QuadraticSymbol:
    return QuadraticSymbol(n, np.eye(2 * n, dtype=complex), accretive=True, label="harmonic")


def kfp_symbol(a: float = 1.0) -> QuadraticSymbol:
    """``eta^2 + v^2/4 + i(v xi - a x eta)`` in variables (x, v, xi, eta)."""
    # indices: x=0, v=1, xi=2, eta=3
    terms = [
        (1.0, {3: 1}, {3: 1}),
        (0.25, {1: 1}, {1: 1}),
        (1j, {1: 1}, {2: 1}),
        (-1j * a, {0: 1}, {3: 1}),
    ]
    return symbol_from_terms(2, terms, accretive=True, label=f"kfp(a={a})")


def kolmogorov_system() -> OUSystem:
    return OUSystem(np.diag([0.0, 2.0]), np.array([[0.0, -1.0], [0.0, 0.0]]))


def heat_system(n: int = 1) -> OUSystem:
    return OUSystem(2.0 * np.eye(n), np.zeros((n, n)))


def catalogue_symbol(k0: int, n: int | None = None) -> QuadraticSymbol:
    """Symbol with prescribed kernel-chain index k0 (0 <= k0 <= 2n-1)."""
    if k0 < 0:
        raise ValueError("k0 must be nonnegative")
    if n is None:
        n = max(1, (k0 + 2) // 2) if k0 != 1 else 2
    if k0 > 2 * n - 1:
        raise ValueError(f"k0={k0} needs n >= {(k0 + 2) // 2}")
    xi = lambda j: n + j  # noqa: E731  (0-based coordinate index of xi_{j+1})
    terms: list = []

    def osc(j):
        return [(1.0, {j: 1}, {j: 1}), (1.0, {xi(j): 1}, {xi(j): 1})]

    if k0 == 0:
        for j in range(n):
            terms += osc(j)
    elif k0 == 1:
        if n < 2:
            raise ValueError("k0=1 catalogue entry needs n >= 2")
        terms += osc(1)
        terms += [(1j, {1: 1}, {xi(0): 1}), (-1j, {0: 1}, {xi(1): 1})]
        for j in range(2, n):
            terms += osc(j)
    else:
        p = k0 // 2
        if k0 % 2 == 0:
            terms += osc(0)
        else:
            terms += [(1.0, {0: 1}, {0: 1})]
        for j in range(p + 1):
            terms.append((1j, {xi(j): 1}, {xi(j): 1}))
        for j in range(p):
            terms.append((2j, {j + 1: 1}, {xi(j): 1}))
        for j in range(p + 1, n):
            terms += osc(j)
    return symbol_from_terms(n, terms, accretive=True, label=f"catalogue(k0={k0},n={n})")


@dataclass(frozen=True)
class ChainPreset:
    symbol: QuadraticSymbol
    accretive_flag: bool
    beta: tuple[float, float]
    delta: tuple[float, float]
    nondegeneracy: float = field(default=0.0)


def chain_preset(a: float, b: float, c: float, alpha: float, alpha1: float, alpha2: float) -> ChainPreset:
    """Two-oscillator chain coupled to heat baths; variables (x, y, z, xi, eta, zeta)."""
    if min(alpha, alpha1, alpha2) <= 0:
        raise ValueError("alpha, alpha1, alpha2 must be positive")
    beta = tuple(aj / alpha * (2.0 / aj - 1.0 / alpha) for aj in (alpha1, alpha2))
    delta = tuple(aj / alpha - 1.0 for aj in (alpha1, alpha2))
    x1, x2, y1, y2, z1, z2 = range(6)
    k1, k2, e1, e2, s1, s2 = range(6, 12)  # xi, eta, zeta
    terms = [
        (alpha1, {s1: 1}, {s1: 1}),
        (alpha2, {s2: 1}, {s2: 1}),
        (beta[0], {z1: 1, x1: -1}, {z1: 1, x1: -1}),
        (beta[1], {z2: 1, x2: -1}, {z2: 1, x2: -1}),
        (2j * delta[0], {s1: 1}, {z1: 1, x1: -1}),
        (2j * delta[1], {s2: 1}, {z2: 1, x2: -1}),
        (1j, {y1: 1}, {k1: 1}),
        (1j, {y2: 1}, {k2: 1}),
        (-1j, {e1: 1}, {x1: a + c, x2: -c, z1: -1}),
        (-1j, {e2: 1}, {x1: -c, x2: b + c, z2: -1}),
    ]
    flag = bool(alpha > 0.5 * max(alpha1, alpha2))
    sym = symbol_from_terms(6, terms, accretive=flag, label="chain")
    nondeg = (a + c - 1) * (b + c - 1) - c * c
    return ChainPreset(sym, flag, beta, delta, nondeg)
