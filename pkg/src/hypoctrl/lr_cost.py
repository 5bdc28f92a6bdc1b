"""Explicit constants of the adapted Lebeau-Robbiano observability argument.

Hypotheses (for ``k >= 1``, ``0 < t < t0``):

* spectral inequality   ``||pi_k g|| <= e^{c1 k^a} ||pi_k g||_omega``
* dissipation           ``||(1 - pi_k) e^{tA} g|| <= (1/c2) e^{-c2 t^m k^b} ||g||``

Conclusion: ``||e^{TA} g||^2 <= C exp(C / T^e) int_0^T ||e^{tA} g||_omega^2 dt``
with ``e = a m / (b - a)``. Magnitudes are double exponential, so every
constant is also carried as a logarithm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq


class NoAdmissibleTau(ValueError):
    pass


@dataclass(frozen=True)
class LRParams:
    c1: float
    c2: float
    a: float
    b: float
    m: float
    t0: float

    def __post_init__(self):
        for k in ("c1", "c2", "a", "b", "m", "t0"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if not self.a < self.b:
            raise ValueError("need a < b")

    @property
    def exponent(self) -> float:
        return self.a * self.m / (self.b - self.a)

    def exponent_fraction(self):
        """Exact ``am/(b-a)`` when the inputs are dyadic/integer floats."""
        from fractions import Fraction

        a, b, m = (Fraction(x).limit_denominator(10**6) for x in (self.a, self.b, self.m))
        return a * m / (b - a)

    def to_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "a": self.a, "b": self.b, "m": self.m, "t0": self.t0}


def log_gamma(p: LRParams, q: float) -> float:
    e = p.exponent
    return (math.log(3 * p.c1) + (p.a + p.m) * math.log(2) - math.log(p.c2) - e * math.log(q)) / (p.b - p.a)


def gamma_and_M(p: LRParams, q: float = 0.5) -> tuple[float, float]:
    """``gamma(q)`` and ``M(q) = 3 c1 (2 gamma)^a``; inf when out of float range."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    lg = log_gamma(p, q)
    lM = math.log(3 * p.c1) + p.a * (math.log(2) + lg)
    g = math.exp(lg) if lg < 709 else math.inf
    M = math.exp(lM) if lM < 709 else math.inf
    res = relation_gamma_residual(p, q)
    if res > 1e-10:
        raise AssertionError(f"gamma relation residual {res:.2e}")
    return g, M


def relation_gamma_residual(p: LRParams, q: float) -> float:
    """Relative gap in ``c2 gamma^b 2^{-m} = 3 c1 (2 gamma)^a q^{-e}`` (log form)."""
    lg = log_gamma(p, q)
    lhs = math.log(p.c2) + p.b * lg - p.m * math.log(2)
    rhs = math.log(3 * p.c1) + p.a * (math.log(2) + lg) - p.exponent * math.log(q)
    return abs(math.expm1(lhs - rhs))


def k_of_tau(p: LRParams, gamma: float, tau: float) -> int:
    """Smallest admissible integer ``k > gamma tau^{-m/(b-a)}``."""
    x = gamma * tau ** (-p.m / (p.b - p.a))
    k = math.floor(x) + 1
    if k > 2 * x:
        raise AssertionError("k(q, tau) exceeds 2 gamma tau^{-m/(b-a)}")
    return k


# three admissibility conditions on tau, written as "value >= 0 means holds"
def _conditions(p: LRParams, lg: float) -> list[tuple[str, Callable[[float], float]]]:
    e = p.exponent
    r = p.m / (p.b - p.a)
    lK2 = math.log(p.c1) + p.a * (math.log(2) + lg)  # log of c1 (2 gamma)^a
    lK3 = math.log(p.c2) + p.b * lg - p.m * math.log(2)  # log of c2 gamma^b 2^-m

    def c1(lt):  # gamma tau^{-r} > 1
        return lg - r * lt

    def c2(lt):  # log(tau/4) + K2 tau^{-e} >= 0
        return lt - math.log(4) + math.exp(min(lK2 - e * lt, 700.0))

    def c3(lt):  # K3 tau^{-e} - log(tau / c2^2) >= 0
        return math.exp(min(lK3 - e * lt, 700.0)) - (lt - 2 * math.log(p.c2))

    return [("gamma_tau", c1), ("spectral_side", c2), ("dissipation_side", c3)]


@dataclass(frozen=True)
class TauReport:
    tau0_prime: float
    thresholds: dict
    binding: str
    capped: bool


def tau0_prime(p: LRParams, q: float = 0.5, gamma: float | None = None, M: float | None = None) -> TauReport:
    """Largest tau'0 <= t0 with all three conditions holding on (0, tau'0)."""
    lg = log_gamma(p, q) if gamma is None else math.log(gamma)
    e = p.exponent
    lt0 = math.log(p.t0)
    lo = lt0 - 800.0  # tau ~ e^-800 t0: every condition holds there
    out = {}
    for name, fn in _conditions(p, lg):
        if fn(lo) < 0:
            raise NoAdmissibleTau(f"condition {name} fails for arbitrarily small tau")
        hi = lt0
        if name == "spectral_side":
            # log(tau/4) + K tau^{-e} decreases until tau* = (e K)^{1/e}
            lK2 = math.log(p.c1) + p.a * (math.log(2) + lg)
            lstar = (math.log(e) + lK2) / e
            hi = min(hi, lstar)
        # sampled monotonicity guard on the bracket
        grid = np.linspace(lo, hi, 257)
        vals = np.array([fn(x) for x in grid])
        if np.any(np.diff(vals) > 1e-9 * (1 + np.abs(vals[:-1]))):
            raise AssertionError(f"condition {name} not monotone on its bracket")
        if fn(hi) >= 0:
            # holds on the whole bracket (for the spectral side: at its minimum)
            out[name] = math.inf
            continue
        out[name] = math.exp(brentq(fn, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500))
    best = min(out.values())
    capped = best >= p.t0
    tau = p.t0 if capped else best
    binding = "t0" if capped else min(out, key=out.get)
    if not tau > 0:
        raise NoAdmissibleTau("bracket collapsed")
    return TauReport(tau, out, binding, capped)


@dataclass(frozen=True)
class CostReport:
    params: LRParams
    q: float
    exponent: float
    gamma_half: float
    M_half: float
    tau0_prime: float
    T_tilde0: float
    C1: float
    log_C2: float
    tau_report: TauReport
    log_gamma_half: float = 0.0

    @property
    def C2(self) -> float:
        return math.exp(self.log_C2) if self.log_C2 < 709 else math.inf

    @property
    def log_C(self) -> float:
        return max(math.log(self.C1), self.log_C2)

    @property
    def C(self) -> float:
        return max(self.C1, self.C2)

    def log_cost(self, T: float) -> float:
        lC = self.log_C
        z = lC - self.exponent * math.log(T)
        return lC + math.exp(z) if z < 709.0 else math.inf

    def cost(self, T: float) -> float:
        lc = self.log_cost(T)
        return math.exp(lc) if lc < 709 else math.inf

    def f(self, s: float) -> float:
        """``f(s) = exp(-M / s^e)``."""
        return math.exp(-self.M_half / s**self.exponent)

    def log_f(self, s: float) -> float:
        return -self.M_half / s**self.exponent

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "q": self.q,
            "exponent": self.exponent,
            "gamma": self.gamma_half,
            "log_gamma": self.log_gamma_half,
            "M": self.M_half,
            "tau0_prime": self.tau0_prime,
            "tau_thresholds": self.tau_report.thresholds,
            "tau_binding": self.tau_report.binding,
            "T_tilde0": self.T_tilde0,
            "C1": self.C1,
            "log_C2": self.log_C2,
            "C2": self.C2,
            "log_C": self.log_C,
            "C": self.C,
        }


def observability_cost(p: LRParams, q: float = 0.5) -> CostReport:
    """Constants of the telescoping construction; an upper bound, not optimized."""
    g, M = gamma_and_M(p, q)
    tr = tau0_prime(p, q, g, M)
    e = p.exponent
    C1 = M * 2**e
    Tt = 2 * tr.tau0_prime
    log_C2 = 2**e * C1 / Tt**e
    return CostReport(p, q, e, g, M, tr.tau0_prime, Tt, C1, log_C2, tr, log_gamma(p, q))


# ----------------------------------------------------------------------------
# synthetic model and telescoping trace


@dataclass(frozen=True)
class DiagonalSemigroupModel:
    """Diagonal contraction semigroup meeting both hypotheses with given constants.

    Modes ``j = 1..D`` decay like ``exp(-lam_j t)`` with
    ``lam_j = c2 j^b t0^{m-1}``; the observation weight of mode j is
    ``r_j = exp(-2 c1 j^a)``; ``pi_k`` keeps modes ``j <= k``. For
    ``m >= 1``, ``c2 <= 1`` and ``t <= t0`` this makes the spectral inequality
    an equality at ``j = k`` and gives the dissipation bound with room to spare.
    """

    lam: np.ndarray
    r: np.ndarray

    @classmethod
    def exact(cls, p: LRParams, D: int = 1024) -> "DiagonalSemigroupModel":
        if p.m < 1 or p.c2 > 1:
            raise ValueError("construction needs m >= 1 and c2 <= 1")
        j = np.arange(1, D + 1, dtype=float)
        return cls(p.c2 * j**p.b * p.t0 ** (p.m - 1), np.exp(-2 * p.c1 * j**p.a))

    @property
    def D(self) -> int:
        return self.lam.size

    def observed_energy(self, g: np.ndarray, t1: float, t2: float) -> np.ndarray:
        """``int_{t1}^{t2} ||Obs e^{tA} g||^2 dt`` in closed form (g: (..., D))."""
        two = 2 * self.lam
        per = self.r * (np.exp(-two * t1) - np.exp(-two * t2)) / two
        return np.abs(g) ** 2 @ per

    def energy(self, g: np.ndarray, t: float) -> np.ndarray:
        return np.abs(g) ** 2 @ np.exp(-2 * self.lam * t)


@dataclass
class TraceStep:
    k: int
    T_k: float
    tau_k: float
    mode_k: int
    residual: float  # worst (lhs - rhs) of the one-step inequality, over modes
    si_residual: float  # spectral inequality at mode_k (<= 0 means holds)
    dissip_residual: float  # dissipation at mode_k on [tau/2, tau] (<= 0 means holds)

    @property
    def ok(self) -> bool:
        return self.residual <= 0 and self.si_residual <= 0 and self.dissip_residual <= 0


@dataclass
class TelescopingResult:
    steps: list[TraceStep]
    passed: bool
    first_failure: tuple[int, str] | None
    final_checks: int
    final_passes: int
    worst_final_log_ratio: float
    cost: CostReport
    notes: list[str] = field(default_factory=list)

    def rows(self):
        for s in self.steps:
            yield [s.k, s.T_k, s.tau_k, s.mode_k, s.residual, s.si_residual, s.dissip_residual]

    header = ["k", "T_k", "tau_k", "mode_k", "residual", "si_residual", "dissip_residual"]


def telescoping_trace(
    p: LRParams,
    T: float,
    model: DiagonalSemigroupModel,
    *,
    q: float = 0.5,
    n_random: int = 50,
    seed: int = 0,
    max_steps: int = 200,
    rtol: float = 1e-12,
) -> TelescopingResult:
    """Run the dyadic time splitting on ``model`` and check every inequality.

    For a diagonal model with diagonal observation every quadratic form splits
    over modes, so the worst case over initial data is the worst mode.
    """
    cost = observability_cost(p, q)
    e = cost.exponent
    g_half = cost.gamma_half
    steps: list[TraceStep] = []
    first: tuple[int, str] | None = None
    notes = []
    if T >= cost.T_tilde0:
        notes.append("T >= T~0: one-step bounds are outside their proven range")
    Tk = T
    for k in range(max_steps):
        tau = T / 2 ** (k + 1)
        Tn = Tk - tau
        lf0, lf1 = cost.log_f(tau), cost.log_f(tau / 2)
        # one-step inequality per mode j: f(tau) e^{-2 lam Tk} - f(tau/2) e^{-2 lam Tn} <= obs_j
        lhs = np.exp(lf0 - 2 * model.lam * Tk) - np.exp(lf1 - 2 * model.lam * Tn)
        two = 2 * model.lam
        rhs = model.r * (np.exp(-two * Tn) - np.exp(-two * Tk)) / two
        res = float(np.max((lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)))
        res = res if res > rtol else min(res, 0.0)
        kk = k_of_tau(p, g_half, tau) if g_half < math.inf else model.D + 1
        # hypotheses at the mode chosen by the step
        if kk <= model.D:
            si = float(np.exp(-2 * p.c1 * kk**p.a) - model.r[:kk].min())
            ts = np.linspace(tau / 2, tau, 33)
            tail = model.lam[kk:]
            if tail.size:
                worst = np.exp(-np.outer(ts, tail)).max(axis=1)
                bound = np.exp(-p.c2 * ts**p.m * kk**p.b) / p.c2
                dr = float(np.max((worst - bound) / bound))
            else:
                dr = -1.0
        else:
            si, dr = 0.0, -1.0
        si = si if si > rtol else min(si, 0.0)
        dr = dr if dr > rtol else min(dr, 0.0)
        st = TraceStep(k, Tk, tau, kk, res, si, dr)
        steps.append(st)
        if first is None and not st.ok:
            which = "one_step" if res > 0 else ("spectral_inequality" if si > 0 else "dissipation")
            first = (k, which)
        Tk = Tn
        if lf0 < -745:  # f(tau_k) underflows: every later step is trivial
            break
    # final bound on random states
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_random, model.D)) + 1j * rng.standard_normal((n_random, model.D))
    lhs = np.log(model.energy(G, T))
    obs = np.log(model.observed_energy(G, 0.0, T))
    lc = cost.log_cost(T)
    ratio = lhs - (lc + obs)
    passes = int(np.sum(ratio <= 1e-12))
    ok = first is None and passes == n_random
    return TelescopingResult(steps, ok, first, n_random, passes, float(ratio.max()), cost, notes)
