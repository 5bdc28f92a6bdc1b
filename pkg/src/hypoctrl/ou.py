"""Ornstein-Uhlenbeck semigroups on tensor grids.

The generator is ``P = 1/2 Tr(Q grad^2) + <Bx, grad>``; ``P~ = P + 1/2 Tr(B)``.
Two independent propagators are provided: the Gaussian convolution formula in
physical space and the transport-plus-damping formula on the Fourier side.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import ndimage

from .phase_space import OUSystem, kalman_analysis, lyapunov_solve


class DomainEscapeError(RuntimeError):
    """Transported stencil leaves the sampled box where the data is not negligible."""


class AliasingWarning(RuntimeWarning):
    pass


# ----------------------------------------------------------------------------
# covariances


@dataclass(frozen=True)
class CovarianceQt:
    t: float
    Qt: np.ndarray
    detQt: float


def covariance_qt(sys: OUSystem, t: float) -> CovarianceQt:
    """``Q_t = int_0^t e^{sB} Q e^{sB^T} ds`` via one block exponential.

    ``expm(t [[B, Q], [0, -B^T]]) = [[e^{tB}, G], [0, e^{-tB^T}]]`` with
    ``G = int_0^t e^{(t-s)B} Q e^{-sB^T} ds``, hence ``Q_t = G e^{tB^T}``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = sys.n
    if t == 0:
        Z = np.zeros((n, n))
        return CovarianceQt(0.0, Z, 0.0)
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = sys.B
    H[:n, n:] = sys.Q
    H[n:, n:] = -sys.B.T
    E = sla.expm(t * H)
    Qt = E[:n, n:] @ E[:n, :n].T
    Qt = 0.5 * (Qt + Qt.T)
    return CovarianceQt(float(t), Qt, float(np.linalg.det(Qt)))


def reversed_system(sys: OUSystem) -> OUSystem:
    return OUSystem(sys.Q, -sys.B)


def q_infinity(sys: OUSystem) -> np.ndarray:
    """Stationary covariance: ``B X + X B^T = -Q``."""
    if not sys.stable_flag:
        raise ValueError("unstable drift: spectrum of B is not in the open left half-plane")
    X = lyapunov_solve(sys.B, sys.Q)
    res = np.abs(sys.B @ X + X @ sys.B.T + sys.Q).max()
    if res > 1e-10 * max(1.0, np.abs(sys.Q).max()):
        raise RuntimeError(f"Lyapunov residual {res:.3e} too large")
    return X


# ----------------------------------------------------------------------------
# grids


@dataclass
class GridFunction:
    """Complex samples on a cell-centred tensor grid symmetric about 0."""

    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("values shape does not match axes")
        for a in self.axes:
            if not np.allclose(a, -a[::-1], atol=1e-12 * max(1.0, abs(a[-1]))):
                raise ValueError("grid axes must be symmetric about 0")
            if len(a) > 1 and not np.allclose(np.diff(a), a[1] - a[0]):
                raise ValueError("grid axes must be uniform")

    @classmethod
    def uniform(cls, n: int, L: float, m: int, fn=None) -> "GridFunction":
        h = 2.0 * L / m
        ax = (np.arange(m) - (m - 1) / 2.0) * h
        axes = tuple(ax.copy() for _ in range(n))
        g = cls(axes, np.zeros((m,) * n, dtype=complex))
        if fn is not None:
            g.values = np.asarray(fn(*g.mesh()), dtype=complex)
        return g

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def norm(self) -> float:
        return float(np.sqrt(self.cell * np.sum(np.abs(self.values) ** 2)))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.axes, values)

    # binary I/O: little-endian float64 interleaved re/im plus JSON sidecar
    def save(self, path: str | Path) -> None:
        path = Path(path)
        inter = np.empty(self.values.size * 2, dtype="<f8")
        inter[0::2] = self.values.real.ravel()
        inter[1::2] = self.values.imag.ravel()
        path.write_bytes(inter.tobytes())
        side = {
            "shape": list(self.values.shape),
            "axes": [{"n": len(a), "h": float(a[1] - a[0]) if len(a) > 1 else 0.0, "first": float(a[0])} for a in self.axes],
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "GridFunction":
        path = Path(path)
        side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        raw = np.frombuffer(path.read_bytes(), dtype="<f8")
        vals = (raw[0::2] + 1j * raw[1::2]).reshape(side["shape"])
        axes = tuple(ax["first"] + ax["h"] * np.arange(ax["n"]) for ax in side["axes"])
        return cls(axes, vals)


def _interp(values: np.ndarray, axes: Sequence[np.ndarray], pts: np.ndarray, order: int) -> np.ndarray:
    """Spline interpolation of complex grid data at physical points (zero outside)."""
    coords = np.stack([(pts[:, d] - axes[d][0]) / (axes[d][1] - axes[d][0]) for d in range(len(axes))])
    out = np.empty(pts.shape[0], dtype=complex)
    for part, sl in ((values.real, "real"), (values.imag, "imag")):
        if not np.any(part):
            r = np.zeros(pts.shape[0])
        else:
            coef = ndimage.spline_filter(part, order=order, mode="grid-constant") if order > 1 else part
            r = ndimage.map_coordinates(coef, coords, order=order, mode="grid-constant", cval=0.0, prefilter=False)
        if sl == "real":
            out.real = r
        else:
            out.imag = r
    return out


# ----------------------------------------------------------------------------
# physical-space propagator


def _bandwidth(vals: np.ndarray, h: np.ndarray, v: np.ndarray, rel: float = 1e-9) -> float:
    """Largest ``|xi . v|`` over DFT modes with magnitude above ``rel`` of the peak."""
    F = np.abs(np.fft.fftn(vals))
    keep = F > rel * F.max()
    ks = np.meshgrid(*[_freq_axes(s, hd) for s, hd in zip(vals.shape, h)], indexing="ij")
    proj = np.abs(sum(k * vd for k, vd in zip(ks, v)))
    return float(proj[keep].max()) if np.any(keep) else 0.0


def _gaussian_nodes(a: float, width: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for ``E[g(Z)]``, ``Z ~ N(0, 1)``, with ``g`` band-limited to ``a``.

    Gauss-Hermite resolves ``e^{i a z}`` once ``sqrt(2 m) > a`` or so;
    Gauss-Legendre on ``[-width, width]`` needs about ``width * a`` nodes.
    Whichever is cheaper is used.
    """
    m_leg = int(min(600, 32 + np.ceil(1.2 * width * a)))
    m_her = int(np.ceil(0.35 * a * a + 16))
    if m_her < m_leg:
        z, wz = np.polynomial.hermite_e.hermegauss(m_her)
    else:
        z, wz = np.polynomial.legendre.leggauss(m_leg)
        z = width * z
        wz = width * wz * np.exp(-0.5 * z * z)
    return z, wz / wz.sum()  # exact mass for constants


def kolmogorov_apply(
    sys: OUSystem,
    f: GridFunction,
    t: float,
    *,
    width: float = 8.0,
    order: int = 5,
    margin: float = 0.05,
    boundary_tol: float = 1e-10,
) -> GridFunction:
    """``(e^{tP} f)(x) = E[f(e^{tB} x - Y)]`` with ``Y ~ N(0, Q_t)``.

    The Gaussian average is factored through the eigen-decomposition of
    ``Q_t`` into 1-D smoothings, each done with Gauss-Legendre nodes on
    ``[-width, width]`` standard deviations. Off-grid values use order-``order``
    splines with zero extension.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    n = f.n
    if n != sys.n:
        raise ValueError("dimension mismatch")
    cov = covariance_qt(sys, t)
    w, V = np.linalg.eigh(cov.Qt)
    pts = f.points()
    L = np.array([a[-1] + 0.5 * (a[1] - a[0]) for a in f.axes])
    vals = f.values

    # zero extension is only harmless when f is negligible near the boundary
    band = max(1, int(round(margin * f.values.shape[0])))
    edge = 0.0
    for d in range(n):
        sl_lo = [slice(None)] * n
        sl_hi = [slice(None)] * n
        sl_lo[d] = slice(0, band)
        sl_hi[d] = slice(-band, None)
        edge = max(edge, np.abs(vals[tuple(sl_lo)]).max(), np.abs(vals[tuple(sl_hi)]).max())
    scale = max(np.abs(vals).max(), 1e-300)
    edge_small = edge <= boundary_tol * scale

    wmax = max(w.max(), 0.0)
    for lam, v in zip(w, V.T):
        if lam <= 1e-15 * max(wmax, 1e-300):
            continue
        sigma = np.sqrt(lam)
        z, wz = _gaussian_nodes(sigma * _bandwidth(vals, f.spacing, v), width)
        coef_re = ndimage.spline_filter(vals.real, order=order, mode="grid-constant")
        coef_im = ndimage.spline_filter(vals.imag, order=order, mode="grid-constant") if np.any(vals.imag) else None
        acc = np.zeros(pts.shape[0], dtype=complex)
        dirv = sigma * v
        for zi, wi in zip(z, wz):
            q = pts - zi * dirv
            coords = np.stack([(q[:, d] - f.axes[d][0]) / (f.axes[d][1] - f.axes[d][0]) for d in range(n)])
            r = ndimage.map_coordinates(coef_re, coords, order=order, mode="grid-constant", prefilter=False)
            if coef_im is not None:
                r = r + 1j * ndimage.map_coordinates(coef_im, coords, order=order, mode="grid-constant", prefilter=False)
            acc += wi * r
        vals = acc.reshape(f.values.shape)
        if sigma * width > margin * L.min() and not edge_small:
            raise DomainEscapeError("Gaussian stencil leaves the grid where the data is not negligible")

    E = sla.expm(t * sys.B)
    moved = pts @ E.T
    over = np.max(np.abs(moved) / L[None, :]) - 1.0
    if over > margin and not edge_small:
        raise DomainEscapeError(f"e^(tB) maps the box {over:.2%} outside the sampled domain")
    out = _interp(vals, f.axes, moved, order).reshape(f.values.shape)
    return f.with_values(out)


# ----------------------------------------------------------------------------
# Fourier-side propagator


def _freq_axes(m: int, h: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(m, d=h)


def fourier_apply(
    sys: OUSystem,
    f: GridFunction,
    t: float,
    with_half_trace: bool = True,
    *,
    pad: int = 2,
    order: int = 5,
    tail_tol: float = 1e-8,
) -> GridFunction:
    """Transport ``g^(e^{-tB^T} xi)`` times Gaussian damping on the Fourier side.

    ``with_half_trace=True`` multiplies by ``e^{-t Tr(B)/2}`` (semigroup of P~);
    ``False`` multiplies by ``e^{-t Tr(B)}`` (semigroup of P).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = f.n
    m0 = f.values.shape
    h = f.spacing
    # symmetric zero padding keeps the grid symmetric about 0
    padw = [((pad - 1) * s // 2, (pad - 1) * s - (pad - 1) * s // 2) for s in m0]
    big = np.pad(f.values, padw)
    shape = big.shape
    x0 = np.array([f.axes[d][0] - padw[d][0] * h[d] for d in range(n)])
    ks = [_freq_axes(shape[d], h[d]) for d in range(n)]

    Fhat = np.fft.fftn(big) * np.prod(h)
    phase = np.ones(shape, dtype=complex)
    for d in range(n):
        sh = [1] * n
        sh[d] = shape[d]
        phase = phase * np.exp(-1j * ks[d] * x0[d]).reshape(sh)
    Fhat = Fhat * phase

    # spectral tail check on the outer quarter of each frequency axis
    total = np.sum(np.abs(Fhat) ** 2)
    kmax = [np.abs(k).max() for k in ks]
    mask = np.zeros(shape, dtype=bool)
    for d in range(n):
        sh = [1] * n
        sh[d] = shape[d]
        mask |= (np.abs(ks[d]) > 0.75 * kmax[d]).reshape(sh)
    if total > 0 and np.sum(np.abs(Fhat[mask]) ** 2) > tail_tol * total:
        warnings.warn("fourier_apply: spectral tail above tolerance, result may alias", AliasingWarning)

    KK = np.meshgrid(*ks, indexing="ij")
    xi = np.stack([k.ravel() for k in KK], axis=1)
    Et = sla.expm(-t * sys.B.T)
    src = xi @ Et.T
    shifted = np.fft.fftshift(Fhat)
    kaxes = [np.fft.fftshift(k) for k in ks]
    g0 = _interp(shifted, kaxes, src, order)
    Qp = covariance_qt(reversed_system(sys), t).Qt if t > 0 else np.zeros((n, n))
    damp = np.exp(-0.5 * np.einsum("pi,ij,pj->p", xi, Qp, xi))
    tr = np.trace(sys.B)
    factor = np.exp(-0.5 * t * tr) if with_half_trace else np.exp(-t * tr)
    G = (factor * g0 * damp).reshape(shape)

    G = G / phase
    out = np.fft.ifftn(G) / np.prod(h)
    crop = tuple(slice(padw[d][0], padw[d][0] + m0[d]) for d in range(n))
    return f.with_values(out[crop])


def fourier_multiplier_norm(sys: OUSystem, t: float, xi: np.ndarray) -> np.ndarray:
    """Pointwise damping ``exp(-1/2 <Q'_t xi, xi>)`` of the P~ semigroup."""
    Qp = covariance_qt(reversed_system(sys), t).Qt
    return np.exp(-0.5 * np.einsum("pi,ij,pj->p", xi, Qp, xi))


# ----------------------------------------------------------------------------
# measured constants


class HypoIndex(NamedTuple):
    c_hat: float
    t0_hat: float


def _sphere_samples(n: int, count: int, seed: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((count, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def hypoellipticity_index(
    sys: OUSystem, t_max: float = 1.0, n_sphere: int = 200, *, levels: int = 20, seed: int = 0
) -> HypoIndex:
    """Empirical constants in ``int_0^t |Q^{1/2} e^{sB^T} X|^2 ds >= c t^{2k0+1} |X|^2``."""
    if n_sphere < 100:
        raise ValueError("n_sphere must be at least 100")
    k0 = kalman_analysis(sys).kalman_k0
    if k0 is None:
        raise ValueError("Kalman condition fails")
    X = _sphere_samples(sys.n, n_sphere, seed)
    times = t_max * 2.0 ** (-np.arange(levels))
    ratios = []
    for t in times:
        Qt = covariance_qt(sys, t).Qt
        w, V = np.linalg.eigh(Qt)
        Xa = np.vstack([X, V[:, 0]])
        fx = np.einsum("pi,ij,pj->p", Xa, Qt, Xa)
        if np.any(fx <= 0):
            raise RuntimeError("nonpositive f_X(t): quadrature failure")
        ratios.append(fx.min() / t ** (2 * k0 + 1))
    ratios = np.array(ratios)
    c_hat = float(ratios.min())
    small = ratios[-1]
    t0 = 0.0
    for t, r in zip(times[::-1], ratios[::-1]):
        if t > min(1.0, t_max):
            break
        if r < 0.5 * small:
            break
        t0 = t
    return HypoIndex(c_hat, float(t0))


@dataclass
class DissipationProfile:
    times: list[float]
    cutoffs: list[float]
    r: np.ndarray  # operator-norm bound r(t, k), shape (len(times), len(cutoffs))
    r_empirical: np.ndarray  # ratio for the supplied g0
    fitted_delta: list[float]
    exponent_fit: float
    fit_residual: float
    fit_ok: bool
    constants: dict = field(default_factory=dict)

    def rows(self):
        for i, t in enumerate(self.times):
            for j, k in enumerate(self.cutoffs):
                yield {"t": t, "k": k, "r": self.r[i, j], "r_empirical": self.r_empirical[i, j], "delta_hat": self.fitted_delta[i]}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["t", "k", "r", "r_empirical", "delta_hat"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(float(v)) for k, v in row.items()})


def _power_fit(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least squares in log-log; returns slope, intercept, max |residual| in log10."""
    lt, ly = np.log(t), np.log(y)
    A = np.vstack([lt, np.ones_like(lt)]).T
    (s, c), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = np.abs(ly - (s * lt + c)).max() / np.log(10)
    return float(s), float(c), float(res)


def frequency_dissipation_profile(
    sys: OUSystem, g0: GridFunction, times: Sequence[float], cutoffs: Sequence[float]
) -> DissipationProfile:
    """Decay of high Fourier modes under the P~ semigroup.

    ``r(t, k)`` is the operator norm of ``(1 - pi_k) e^{tP~}`` on L^2(R^n),
    i.e. the largest damping factor over ``|xi| > k``; it is the worst case
    over initial data that the dissipation estimate quantifies.
    ``r_empirical`` is the same ratio for the given ``g0`` and never exceeds it.
    """
    times = [float(t) for t in times]
    cutoffs = sorted(float(k) for k in cutoffs)
    n = g0.n
    nrm0 = g0.norm()
    if nrm0 == 0:
        raise ValueError("g0 must be nonzero")
    h = g0.spacing
    shape = g0.values.shape
    ks = [_freq_axes(shape[d], h[d]) for d in range(n)]
    KK = np.meshgrid(*ks, indexing="ij")
    xi = np.stack([k.ravel() for k in KK], axis=1)
    rad = np.linalg.norm(xi, axis=1)
    r = np.zeros((len(times), len(cutoffs)))
    re = np.zeros_like(r)
    for i, t in enumerate(times):
        # sup of exp(-1/2 <Q'_t xi, xi>) over |xi| > k is attained along the
        # lowest eigenvector of Q'_t, so the norm has a closed form
        lam = max(float(np.linalg.eigvalsh(covariance_qt(reversed_system(sys), t).Qt)[0]), 0.0)
        g = fourier_apply(sys, g0, t, with_half_trace=True)
        Gh = np.fft.fftn(g.values).ravel()
        # Parseval for the DFT: ||g||^2 = cell/size * sum |G|^2
        scale = g0.cell / Gh.size
        for j, k in enumerate(cutoffs):
            out = rad > k
            r[i, j] = np.exp(-0.5 * lam * k * k)
            re[i, j] = np.sqrt(scale * np.sum(np.abs(Gh[out]) ** 2)) / nrm0
    with np.errstate(divide="ignore"):
        dk = -np.log(r) / np.array(cutoffs)[None, :] ** 2
    delta = dk.min(axis=1)
    ok = delta > 0
    if ok.sum() >= 2:
        slope, _, res = _power_fit(np.array(times)[ok], delta[ok])
    else:
        slope, res = float("nan"), float("inf")
    return DissipationProfile(times, cutoffs, r, re, delta.tolist(), slope, res, res <= 0.1)
