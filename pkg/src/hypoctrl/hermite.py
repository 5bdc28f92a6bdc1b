"""Hermite-basis Galerkin machinery for quadratic operators.

The basis is the tensor product of normalized Hermite functions
``psi_k(x) = (2^k k! sqrt(pi))^{-1/2} H_k(x) exp(-x^2/2)``, eigenfunctions of
``-d^2/dx^2 + x^2`` with eigenvalue ``2k + 1``. Multi-indices are enumerated in
graded-lexicographic order, so every energy shell ``|alpha| = k`` is a
contiguous block.
"""

from __future__ import annotations

import csv
import itertools
import threading
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .phase_space import QuadraticSymbol

DENSE_LIMIT = 2000


class UnderResolvedRegion(RuntimeError):
    pass


class TruncationWarning(RuntimeWarning):
    pass


# ----------------------------------------------------------------------------
# index sets


def _shell(n: int, d: int) -> list[tuple[int, ...]]:
    """Multi-indices of total degree d, lexicographically decreasing."""
    if n == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        out.extend((first,) + rest for rest in _shell(n - 1, d - first))
    return out


@dataclass(frozen=True)
class HermiteTruncation:
    n: int
    N: int

    def __post_init__(self):
        if self.n < 1 or self.N < 0:
            raise ValueError("need n >= 1 and N >= 0")

    @cached_property
    def indices(self) -> list[tuple[int, ...]]:
        return [a for d in range(self.N + 1) for a in _shell(self.n, d)]

    @cached_property
    def index_map(self) -> dict[tuple[int, ...], int]:
        return {a: i for i, a in enumerate(self.indices)}

    @property
    def D(self) -> int:
        return comb(self.N + self.n, self.n)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([sum(a) for a in self.indices])

    def level_slice(self, k: int) -> slice:
        """Contiguous index range of the shell ``|alpha| = k``."""
        start = comb(k - 1 + self.n, self.n) if k > 0 else 0
        return slice(start, comb(k + self.n, self.n))

    def upto(self, k: int) -> int:
        """Number of basis functions of degree <= k."""
        return comb(k + self.n, self.n) if k >= 0 else 0

    @cached_property
    def energies(self) -> np.ndarray:
        """Diagonal of the harmonic oscillator ``-Lap + |x|^2``."""
        return 2.0 * self.degrees + self.n


# ----------------------------------------------------------------------------
# evaluation


def hermite_functions_1d(N: int, x: np.ndarray) -> np.ndarray:
    """Rows ``psi_0..psi_N`` at points ``x`` (shape (N+1, len(x))).

    The three-term recurrence runs on the polynomial part with a running
    log-scale, so the Gaussian factor never underflows before it is applied.
    """
    x = np.asarray(x, dtype=float).ravel()
    out = np.empty((N + 1, x.size))
    logs = -0.5 * x * x - 0.25 * np.log(np.pi)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    out[0] = np.exp(logs)
    for k in range(N):
        nxt = np.sqrt(2.0 / (k + 1)) * x * cur - np.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e100
        if np.any(big):
            s = np.where(big, np.abs(cur), 1.0)
            cur = cur / s
            prev = prev / s
            logs = logs + np.log(s)
        with np.errstate(under="ignore", divide="ignore"):
            out[k + 1] = np.sign(cur) * np.exp(logs + np.log(np.abs(cur)))
    return out


def hermite_eval(trunc: HermiteTruncation, points: np.ndarray) -> np.ndarray:
    """Matrix ``P[i, alpha] = psi_alpha(points[i])``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != trunc.n:
        pts = pts.T
    per_axis = [hermite_functions_1d(trunc.N, pts[:, d]) for d in range(trunc.n)]
    idx = np.array(trunc.indices)
    P = np.ones((pts.shape[0], trunc.D))
    for d in range(trunc.n):
        P *= per_axis[d][idx[:, d]].T
    return P


# ----------------------------------------------------------------------------
# operators


def _ladder(trunc: HermiteTruncation) -> list[sp.csr_matrix]:
    """Annihilation operators ``a_j psi_alpha = sqrt(alpha_j) psi_{alpha - e_j}``."""
    pos = trunc.index_map
    D = trunc.D
    out = []
    for j in range(trunc.n):
        rows, cols, vals = [], [], []
        for i, a in enumerate(trunc.indices):
            if a[j] > 0:
                b = list(a)
                b[j] -= 1
                rows.append(pos[tuple(b)])
                cols.append(i)
                vals.append(np.sqrt(a[j]))
        out.append(sp.csr_matrix((vals, (rows, cols)), shape=(D, D)))
    return out


@dataclass
class TruncatedOperator:
    """Galerkin compression ``pi_N q^w pi_N`` in the Hermite basis."""

    trunc: HermiteTruncation
    A: np.ndarray
    accretive_flag: bool
    symbol: QuadraticSymbol | None = None
    truncated_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def D(self) -> int:
        return self.A.shape[0]

    def adjoint(self) -> "TruncatedOperator":
        sym = self.symbol.conj() if self.symbol is not None else None
        return TruncatedOperator(self.trunc, self.A.conj().T.copy(), self.accretive_flag, sym, self.truncated_rows)

    def numerical_range_bottom(self) -> float:
        """Smallest eigenvalue of the Hermitian part."""
        H = 0.5 * (self.A + self.A.conj().T)
        return float(np.linalg.eigvalsh(H)[0])

    def propagator(self, t: float) -> np.ndarray:
        """Dense ``e^{-tA}``, cached per t."""
        key = float(t)
        E = self._cache.get(key)
        if E is None:
            with self._lock:
                E = self._cache.get(key)
                if E is None:
                    E = sla.expm(-key * self.A) if key else np.eye(self.D, dtype=complex)
                    self._cache[key] = E
        return E

    def propagate(self, v: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        v = np.asarray(v, dtype=complex)
        if t == 0:
            return v.copy()
        if self.D > DENSE_LIMIT:
            out = expm_multiply(-t * sp.csr_matrix(self.A), v)
        else:
            out = self.propagator(t) @ v
        if self.accretive_flag:
            nv = np.linalg.norm(v, axis=0)
            no = np.linalg.norm(out, axis=0)
            if np.any(no > nv * (1 + 1e-10) + 1e-300):
                warnings.warn("propagate: contraction violated beyond 1e-10", RuntimeWarning)
        return out


def assemble_weyl(q: QuadraticSymbol, trunc: HermiteTruncation) -> TruncatedOperator:
    """Compress ``q^w`` onto degrees <= N in normal-ordered ladder form.

    With ``b = (a, a^*)`` one has ``w = (x, D) = T b / sqrt 2`` where ``T`` has
    entries in {0, 1, -i, i}; the symmetrised products become
    ``q^w = sum K_pq sym(b_p b_q)``, ``K = T^T M T / 2``, and
    ``sym(a_l a_m^*) = a_m^* a_l + delta_lm / 2``. Every term moves the degree
    by -2, 0 or +2 through exact compositions inside the truncation; the
    number operators ``a_l^* a_l`` are inserted as exact integer diagonals.
    """
    if q.n != trunc.n:
        raise ValueError("dimension mismatch")
    n = trunc.n
    a = _ladder(trunc)
    ad = [x.T.tocsr() for x in a]
    T = np.zeros((2 * n, 2 * n), dtype=complex)
    for j in range(n):
        T[j, j] = T[j, n + j] = 1.0
        T[n + j, j], T[n + j, n + j] = -1j, 1j
    K = 0.5 * (T.T @ q.M @ T)
    idx = np.array(trunc.indices)
    D = trunc.D
    Op = sp.csr_matrix((D, D), dtype=complex)
    const = 0.0 + 0.0j
    for l in range(n):
        for m in range(n):
            if K[l, m] != 0:
                Op = Op + K[l, m] * (a[l] @ a[m])
            if K[n + l, n + m] != 0:
                Op = Op + K[n + l, n + m] * (ad[l] @ ad[m])
            c = K[l, n + m] + K[n + m, l]  # both orderings of the mixed pair
            if c != 0:
                num = sp.diags(idx[:, l].astype(float)) if l == m else ad[m] @ a[l]
                Op = Op + c * num
        const += K[l, n + l]
    A = Op.toarray() + const * np.eye(D)
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    H = 0.5 * (A + A.conj().T)
    flag = bool(np.linalg.eigvalsh(H)[0] >= -1e-10 * scale)
    rows = np.nonzero(trunc.degrees >= trunc.N - 1)[0]
    return TruncatedOperator(trunc, A, flag, q, rows)


def project_energy(trunc: HermiteTruncation, v: np.ndarray, k: int, mode: str = "up_to_level") -> np.ndarray:
    """``P_k v`` (mode 'at_level') or ``pi_k v`` (mode 'up_to_level')."""
    if k > trunc.N:
        raise ValueError("k exceeds truncation degree")
    deg = trunc.degrees
    if mode == "at_level":
        keep = deg == k
    elif mode == "up_to_level":
        keep = deg <= k
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = np.array(v, dtype=complex, copy=True)
    out[~keep] = 0
    return out


# ----------------------------------------------------------------------------
# regions and Gram matrices


@dataclass(frozen=True)
class RegionSpec:
    """Observation set in R^n.

    kinds: ``complement_of_ball`` (center, R); ``union_of_balls`` (balls: list
    of (center, r)); ``half_space`` {x : normal.x > offset};
    ``ball_lattice`` (spacing, r): union of B(spacing*m, r), m in Z^n.
    """

    kind: str
    n: int
    params: dict

    KINDS = ("complement_of_ball", "union_of_balls", "half_space", "ball_lattice")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        p = self.params
        if self.kind == "complement_of_ball":
            c = np.asarray(p.get("center", np.zeros(self.n)), dtype=float)
            if c.shape != (self.n,) or p.get("R", 0) < 0:
                raise ValueError("bad complement_of_ball parameters")
        elif self.kind == "union_of_balls":
            for c, r in p["balls"]:
                if len(c) != self.n or r <= 0:
                    raise ValueError("bad ball")
        elif self.kind == "half_space":
            if len(p["normal"]) != self.n or np.linalg.norm(p["normal"]) == 0:
                raise ValueError("bad half-space normal")
        elif self.kind == "ball_lattice":
            if p["spacing"] <= 0 or p["r"] <= 0:
                raise ValueError("bad lattice parameters")

    # constructors
    @classmethod
    def complement_of_ball(cls, n: int, R: float, center=None) -> "RegionSpec":
        c = list(np.zeros(n) if center is None else center)
        return cls("complement_of_ball", n, {"center": c, "R": float(R)})

    @classmethod
    def whole_space(cls, n: int) -> "RegionSpec":
        return cls.complement_of_ball(n, 0.0)

    @classmethod
    def union_of_balls(cls, n: int, balls) -> "RegionSpec":
        return cls("union_of_balls", n, {"balls": [(list(np.atleast_1d(c).astype(float)), float(r)) for c, r in balls]})

    @classmethod
    def half_space(cls, n: int, normal, offset: float) -> "RegionSpec":
        return cls("half_space", n, {"normal": list(map(float, np.atleast_1d(normal))), "offset": float(offset)})

    @classmethod
    def ball_lattice(cls, n: int, spacing: float, r: float) -> "RegionSpec":
        return cls("ball_lattice", n, {"spacing": float(spacing), "r": float(r)})

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, **self.params}

    def indicator(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        p = self.params
        if self.kind == "complement_of_ball":
            return np.linalg.norm(pts - np.asarray(p["center"]), axis=1) > p["R"]
        if self.kind == "union_of_balls":
            ind = np.zeros(pts.shape[0], dtype=bool)
            for c, r in p["balls"]:
                ind |= np.linalg.norm(pts - np.asarray(c), axis=1) < r
            return ind
        if self.kind == "half_space":
            nrm = np.asarray(p["normal"])
            return pts @ nrm > p["offset"]
        s, r = p["spacing"], p["r"]
        nearest = s * np.round(pts / s)
        return np.linalg.norm(pts - nearest, axis=1) < r

    @property
    def thickness_witness(self) -> tuple[float, float] | None:
        """(delta, r) with: every y has some B(y', r) in omega and |y - y'| < delta."""
        p = self.params
        if self.kind == "complement_of_ball":
            return (p["R"] + 2.0, 1.0)
        if self.kind == "ball_lattice":
            # every point is within s*sqrt(n)/2 of a lattice centre
            return (p["spacing"] * np.sqrt(self.n) / 2.0 + 1e-9, p["r"])
        # bounded sets and half-spaces leave arbitrarily large uncovered regions
        return None


@dataclass
class GramMatrix:
    trunc: HermiteTruncation
    region: RegionSpec
    G: np.ndarray
    meta: dict

    def save(self, path: str | Path) -> None:
        from .io import save_matrix

        save_matrix(path, self.G, {"kind": "gram", "region": self.region.to_dict(), "N": self.trunc.N, "n": self.trunc.n, **self.meta})


def quadrature_box(N: int) -> float:
    return float(np.sqrt(4 * N + 6) + 2.0)


def _panels(a: float, b: float, width: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    if b <= a:
        return np.zeros(0), np.zeros(0)
    m = max(1, int(np.ceil((b - a) / width)))
    z, w = np.polynomial.legendre.leggauss(q)
    e = np.linspace(a, b, m + 1)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    x = (mid[:, None] + half[:, None] * z[None, :]).ravel()
    ww = (half[:, None] * w[None, :]).ravel()
    return x, ww


def _intervals_1d(region: RegionSpec, L: float) -> list[tuple[float, float]]:
    p = region.params
    if region.kind == "complement_of_ball":
        c, R = p["center"][0], p["R"]
        if R == 0:
            return [(-L, L)]
        return [(-L, min(c - R, L)), (max(c + R, -L), L)]
    if region.kind == "union_of_balls":
        iv = sorted((c[0] - r, c[0] + r) for c, r in p["balls"])
        merged: list[list[float]] = []
        for a, b in iv:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return [(max(a, -L), min(b, L)) for a, b in merged]
    if region.kind == "half_space":
        nv, off = p["normal"][0], p["offset"]
        cut = off / nv
        return [(max(cut, -L), L)] if nv > 0 else [(-L, min(cut, L))]
    s, r = p["spacing"], p["r"]
    kmax = int(np.ceil(L / s)) + 1
    iv = []
    for k in range(-kmax, kmax + 1):
        a, b = k * s - r, k * s + r
        if b > -L and a < L:
            iv.append((max(a, -L), min(b, L)))
    merged = []
    for a, b in iv:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _disk_nodes(center: np.ndarray, R: float, N: int, refine: int) -> tuple[np.ndarray, np.ndarray]:
    """Polar Gauss-Legendre x trapezoid nodes on a disk."""
    rr, wr = _panels(0.0, R, 0.5 / refine, 24)
    off = np.linalg.norm(center)
    nth = refine * (2 * N + 8 + int(np.ceil(6 * off * R)))
    th = 2 * np.pi * np.arange(nth) / nth
    R_, T_ = np.meshgrid(rr, th, indexing="ij")
    W = (wr[:, None] * R_ * (2 * np.pi / nth)).ravel()
    pts = np.stack([R_.ravel() * np.cos(T_.ravel()), R_.ravel() * np.sin(T_.ravel())], axis=1) + center
    return pts, W


def _gram_from_nodes(trunc: HermiteTruncation, pts: np.ndarray, w: np.ndarray, chunk: int = 20000) -> np.ndarray:
    G = np.zeros((trunc.D, trunc.D))
    for s in range(0, pts.shape[0], chunk):
        P = hermite_eval(trunc, pts[s : s + chunk])
        G += (P * w[s : s + chunk, None]).T @ P
    return G


def _gram_once(trunc: HermiteTruncation, region: RegionSpec, refine: int) -> tuple[np.ndarray, str]:
    n, N = trunc.n, trunc.N
    L = quadrature_box(N)
    p = region.params
    if n == 1:
        G = np.zeros((trunc.D, trunc.D))
        for a, b in _intervals_1d(region, L):
            x, w = _panels(a, b, 0.5 / refine, 32)
            if x.size:
                P = hermite_functions_1d(N, x)
                G += (P * w) @ P.T
        return G, "interval panels"
    if n == 2 and region.kind == "complement_of_ball":
        if p["R"] == 0:
            return np.eye(trunc.D), "exact"
        pts, w = _disk_nodes(np.asarray(p["center"], float), p["R"], N, refine)
        return np.eye(trunc.D) - _gram_from_nodes(trunc, pts, w), "identity minus disk (polar)"
    if n == 2 and region.kind in ("union_of_balls", "ball_lattice"):
        if region.kind == "union_of_balls":
            balls = [(np.asarray(c, float), r) for c, r in p["balls"]]
        else:
            s, r = p["spacing"], p["r"]
            if 2 * r > s:
                return _tensor_fallback(trunc, region, refine), "tensor fallback (overlapping lattice)"
            km = int(np.ceil((L + r) / s))
            balls = [
                (np.array([i * s, j * s]), r)
                for i in range(-km, km + 1)
                for j in range(-km, km + 1)
                if np.hypot(i * s, j * s) < L + 2 * r
            ]
        for i in range(len(balls)):
            for j in range(i):
                if np.linalg.norm(balls[i][0] - balls[j][0]) < balls[i][1] + balls[j][1]:
                    return _tensor_fallback(trunc, region, refine), "tensor fallback (overlapping balls)"
        G = np.zeros((trunc.D, trunc.D))
        for c, r in balls:
            pts, w = _disk_nodes(c, r, N, refine)
            G += _gram_from_nodes(trunc, pts, w)
        return G, "sum of disks (polar)"
    if n == 2 and region.kind == "half_space":
        nv = np.asarray(p["normal"], float)
        nn = np.linalg.norm(nv)
        u = nv / nn
        perp = np.array([-u[1], u[0]])
        cut = p["offset"] / nn
        Lr = L * np.sqrt(2)
        xu, wu = _panels(max(cut, -Lr), Lr, 0.5 / refine, 24)
        xv, wv = _panels(-Lr, Lr, 0.5 / refine, 24)
        U, V = np.meshgrid(xu, xv, indexing="ij")
        pts = U.ravel()[:, None] * u + V.ravel()[:, None] * perp
        w = (wu[:, None] * wv[None, :]).ravel()
        return _gram_from_nodes(trunc, pts, w), "rotated tensor panels"
    return _tensor_fallback(trunc, region, refine), "tensor fallback"


def _tensor_fallback(trunc: HermiteTruncation, region: RegionSpec, refine: int) -> np.ndarray:
    L = quadrature_box(trunc.N)
    x, w = _panels(-L, L, 0.5 / refine, 16)
    grids = np.meshgrid(*([x] * trunc.n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    W = np.ones(pts.shape[0])
    for d, g in enumerate(np.meshgrid(*([w] * trunc.n), indexing="ij")):
        W *= g.ravel()
    mask = region.indicator(pts)
    return _gram_from_nodes(trunc, pts[mask], W[mask])


def omega_gram(trunc: HermiteTruncation, region: RegionSpec, *, check: bool = True, tol: float = 1e-7) -> GramMatrix:
    """``G[a, b] = int_omega psi_a psi_b`` by region-adapted quadrature."""
    if region.n != trunc.n:
        raise ValueError("dimension mismatch")
    G, method = _gram_once(trunc, region, 1)
    change = 0.0
    if check:
        G2, _ = _gram_once(trunc, region, 2)
        change = float(np.abs(G2 - G).max())
        if change > tol:
            raise UnderResolvedRegion(f"refinement changed Gram entries by {change:.2e} ({method})")
        G = G2
    G = 0.5 * (G + G.T)
    return GramMatrix(trunc, region, G, {"method": method, "refine_change": change, "box": quadrature_box(trunc.N)})


@dataclass
class SpectralProfile:
    k: list[int]
    lambda_min: list[float]
    c_hat: list[float]
    exponent: float
    fit_range: tuple[int, int]
    vacuous: list[int]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "lambda_min", "c_hat"])
            for k, lam, c in zip(self.k, self.lambda_min, self.c_hat):
                w.writerow([k, repr(float(lam)), repr(float(c))])


def fit_power(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Slope and intercept of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    s, c = np.polyfit(lx, ly, 1)
    return float(s), float(c)


def spectral_constant_profile(
    trunc: HermiteTruncation, region: RegionSpec | GramMatrix, k_list: Iterable[int], *, floor: float = 1e-14
) -> SpectralProfile:
    """Optimal constants of ``||pi_k g|| <= C ||pi_k g||_omega`` per degree k."""
    gm = region if isinstance(region, GramMatrix) else omega_gram(trunc, region)
    ks = sorted(set(int(k) for k in k_list))
    if ks and (ks[0] < 0 or ks[-1] > trunc.N):
        raise ValueError("k_list outside 0..N")
    lam, ch, vac = [], [], []
    for k in ks:
        m = trunc.upto(k)
        l0 = float(np.linalg.eigvalsh(gm.G[:m, :m])[0])
        lam.append(l0)
        ch.append(-0.5 * np.log(l0) if l0 > 0 else float("inf"))
        if l0 < floor:
            vac.append(k)
    ok = [(k, c) for k, c, l in zip(ks, ch, lam) if l >= floor and k > 0 and c > 0]
    if len(ok) >= 2:
        p, _ = fit_power([k for k, _ in ok], [c for _, c in ok])
        rng = (ok[0][0], ok[-1][0])
    else:
        p, rng = float("nan"), (0, 0)
    if vac:
        warnings.warn(f"spectral inequality numerically vacuous for k in {vac}", RuntimeWarning)
    return SpectralProfile(ks, lam, ch, p, rng, vac)


# ----------------------------------------------------------------------------
# Gelfand-Shilov smoothing


@dataclass
class GelfandShilovProfile:
    times: list[float]
    C0_grid: list[float]
    mu_raw: np.ndarray  # (len(C0), len(times)) largest mu for e^{-tA}
    mu_shifted: np.ndarray  # same for e^{-t(A - r)}, minus its t=0 value
    shift: float
    exponent: float  # fitted from mu_shifted at C0_grid[0]
    exponent_raw: float
    exponents_by_C0: list[float]
    C0_hat: float
    t0_hat: float
    delta_hat: list[float]
    k0: int
    truncation_warning: bool

    def rows(self):
        for j, t in enumerate(self.times):
            yield {"t": t, "mu": self.mu_shifted[0, j], "mu_raw": self.mu_raw[0, j], "delta_hat": self.delta_hat[j]}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["t", "mu", "mu_raw", "delta_hat"])
            w.writeheader()
            for r in self.rows():
                w.writerow({k: repr(float(v)) for k, v in r.items()})


def _weighted_norm2(E: np.ndarray, h: np.ndarray, mu: float) -> float:
    """``||e^{mu H} E||^2`` with H diagonal."""
    W = np.exp(mu * (h - h.max()))[:, None] * E  # rescaled to avoid overflow
    G = W.conj().T @ W
    top = sla.eigvalsh(G, subset_by_index=[G.shape[0] - 1, G.shape[0] - 1])[0]
    return float(top) * np.exp(2 * mu * h.max())


def _largest_mu(E: np.ndarray, h: np.ndarray, C0: float, hi: float, iters: int = 50) -> float:
    lo = 0.0
    if _weighted_norm2(E, h, 0.0) > C0 * C0:
        return 0.0
    while _weighted_norm2(E, h, hi) <= C0 * C0:
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            return float("inf")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _weighted_norm2(E, h, mid) <= C0 * C0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-10 * max(hi, 1e-12):
            break
    return lo


def gelfand_shilov_profile(
    op: TruncatedOperator,
    times: Sequence[float],
    k0: int,
    *,
    C0_grid: Sequence[float] = (1.05, 1.2, 1.5, 2.0),
    exclude_shells: int = 2,
    shift: float | None = None,
) -> GelfandShilovProfile:
    """Largest ``mu(t)`` with ``||e^{mu H} e^{-tA}|| <= C0`` on the truncation.

    Two estimators are reported. ``mu_raw`` uses ``e^{-tA}`` as is. The
    headline ``mu_shifted`` replaces ``A`` by ``A - r`` with ``r`` the bottom of
    the numerical range of Re A (a factor ``e^{rt}`` that only changes the
    constant for bounded t) and subtracts the t=0 floor ``log(C0)/max H``
    caused by the finite truncation. The top ``exclude_shells`` energy shells
    are dropped from rows and columns before the norm is taken.
    """
    trunc = op.trunc
    keep = trunc.degrees <= trunc.N - exclude_shells
    h = trunc.energies[keep]
    r = op.numerical_range_bottom() if shift is None else float(shift)
    times = [float(t) for t in times]
    mu_raw = np.zeros((len(C0_grid), len(times)))
    mu_sh = np.zeros_like(mu_raw)
    delta = []
    for j, t in enumerate(times):
        E = op.propagator(t)[np.ix_(keep, keep)]
        Es = np.exp(r * t) * E
        for i, C0 in enumerate(C0_grid):
            guess = max(t, 1e-3)
            mu_raw[i, j] = _largest_mu(E, h, C0, guess)
            mu_sh[i, j] = _largest_mu(Es, h, C0, guess)
        # Hermite tail decay: ||(1 - pi_k) e^{-tA}|| ~ e^{-delta k}
        degs = trunc.degrees[keep]
        kmax = int(degs.max())
        tails = []
        for k in range(kmax):
            s = np.linalg.norm(E[degs > k], 2)
            tails.append(s)
        tails = np.array(tails)
        good = tails > 1e-300
        if good.sum() >= 2:
            slope = np.polyfit(np.arange(kmax)[good], np.log(tails[good]), 1)[0]
            delta.append(float(-slope))
        else:
            delta.append(float("nan"))
    floor = np.log(np.asarray(C0_grid))[:, None] / h.max()
    mu_sh = mu_sh - floor
    exps = []
    for i in range(len(C0_grid)):
        ok = mu_sh[i] > 0
        exps.append(fit_power(np.asarray(times)[ok], mu_sh[i][ok])[0] if ok.sum() >= 2 else float("nan"))
    okr = mu_raw[0] > 0
    e_raw = fit_power(np.asarray(times)[okr], mu_raw[0][okr])[0] if okr.sum() >= 2 else float("nan")
    # empirical constants: mu_shifted ~ t^{2k0+1}/C0_hat, plateau edge t0_hat
    ratios = mu_sh[0] / np.asarray(times) ** (2 * k0 + 1)
    C0_hat = float(1.0 / ratios.max()) if np.any(ratios > 0) else float("inf")
    t0 = times[0]
    for t, rt in zip(times, ratios):
        if rt < 0.5 * ratios[0]:
            break
        t0 = t
    # the weighted norm at the largest t must not be dominated by the top kept shell
    E_last = op.propagator(times[-1])[np.ix_(keep, keep)]
    top = trunc.degrees[keep] == trunc.degrees[keep].max()
    dom = np.linalg.norm(E_last[top], 2) / max(np.linalg.norm(E_last, 2), 1e-300)
    warn = bool(dom > 0.1)
    if warn:
        warnings.warn("gelfand_shilov_profile: top shell carries more than 10% of the norm", TruncationWarning)
    return GelfandShilovProfile(
        times, list(C0_grid), mu_raw, mu_sh, r, exps[0], e_raw, exps, C0_hat, float(t0), delta, k0, warn
    )


# ----------------------------------------------------------------------------
# transfers between grids and coefficient vectors


def coefficients_from_grid(trunc: HermiteTruncation, axes: Sequence[np.ndarray], values: np.ndarray) -> np.ndarray:
    """``c_alpha = int f psi_alpha`` by the midpoint rule on a uniform tensor grid."""
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    cell = float(np.prod([a[1] - a[0] for a in axes]))
    P = hermite_eval(trunc, pts)
    return cell * (P.T @ np.asarray(values).ravel())


def grid_from_coefficients(trunc: HermiteTruncation, axes: Sequence[np.ndarray], coef: np.ndarray) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return (hermite_eval(trunc, pts) @ coef).reshape(grids[0].shape)
