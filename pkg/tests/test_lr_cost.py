import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypoctrl.lr_cost import (
    DiagonalSemigroupModel,
    LRParams,
    NoAdmissibleTau,
    gamma_and_M,
    k_of_tau,
    observability_cost,
    relation_gamma_residual,
    tau0_prime,
    telescoping_trace,
)

WORKED = LRParams(1, 1, 0.5, 1, 1, 1)

pos = st.floats(0.05, 5.0)


@st.composite
def params(draw):
    a = draw(st.floats(0.1, 2.0))
    b = a + draw(st.floats(0.1, 2.0))
    return LRParams(draw(pos), draw(st.floats(0.05, 1.0)), a, b, draw(st.floats(0.2, 5.0)), draw(st.floats(0.01, 1.0)))


def gamma_oracle(p, q):
    """Oracle: the closed form evaluated directly, no logarithms."""
    e = p.a * p.m / (p.b - p.a)
    return (3 * p.c1 * 2 ** (p.a + p.m) / (p.c2 * q**e)) ** (1 / (p.b - p.a))


def conditions_oracle(p, gamma, tau):
    """All three admissibility conditions in plain arithmetic, vectorised over tau."""
    e = p.a * p.m / (p.b - p.a)
    r = p.m / (p.b - p.a)
    with np.errstate(over="ignore", divide="ignore"):
        one = gamma * tau ** (-r) > 1
        two = tau / 4 >= np.exp(-p.c1 * (2 * gamma) ** p.a / tau**e)
        K3 = p.c2 * gamma**p.b * 2.0 ** (-p.m)
        three = np.exp(-K3 / tau**e) <= p.c2**2 / tau
    return one & two & three


# -- gamma and M ----------------------------------------------------------------


def test_worked_example_values():
    g, M = gamma_and_M(WORKED, 0.5)
    assert g == pytest.approx(288, rel=1e-12, abs=0)
    assert M == pytest.approx(72, rel=1e-12, abs=0)
    assert WORKED.exponent_fraction() == 1


@settings(max_examples=100, deadline=None)
@given(params(), st.floats(0.05, 0.95))
def test_gamma_relation_residual(p, q):
    assert relation_gamma_residual(p, q) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(params(), st.floats(0.05, 0.95))
def test_gamma_matches_closed_form(p, q):
    g, M = gamma_and_M(p, q)
    ref = gamma_oracle(p, q)
    if math.isfinite(ref) and ref < 1e300:
        assert g == pytest.approx(ref, rel=1e-10)
        assert M == pytest.approx(3 * p.c1 * (2 * ref) ** p.a, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(params())
def test_gamma_decreasing_in_q(p):
    qs = np.linspace(0.05, 0.95, 19)
    gs = [gamma_and_M(p, q)[0] for q in qs]
    assert all(x > y for x, y in zip(gs, gs[1:]))


def test_q_out_of_range():
    with pytest.raises(ValueError):
        gamma_and_M(WORKED, 1.0)


@pytest.mark.parametrize("k0", range(8))
def test_exponent_instantiations(k0):
    # quadratic operators and OU systems both land on 2 k0 + 1
    assert LRParams(1, 1, 0.5, 1, 2 * k0 + 1, 1).exponent_fraction() == 2 * k0 + 1
    assert LRParams(1, 1, 1, 2, 2 * k0 + 1, 1).exponent_fraction() == 2 * k0 + 1
    assert isinstance(LRParams(1, 1, 1, 2, 2 * k0 + 1, 1).exponent_fraction(), Fraction)


def test_params_validation():
    with pytest.raises(ValueError):
        LRParams(1, 1, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        LRParams(1, 0, 0.5, 1, 1, 1)


# -- tau'0 --------------------------------------------------------------------------


def test_tau_worked_example_grid_scan():
    g, M = gamma_and_M(WORKED)
    tau = np.arange(1, 1_000_000) * 1e-6
    ok = conditions_oracle(WORKED, g, tau)
    # first failure on the grid (or the full interval) is the oracle's tau'0
    ref = tau[np.argmin(ok)] if not ok.all() else 1.0
    assert tau0_prime(WORKED).tau0_prime == pytest.approx(ref, abs=2e-6)


@pytest.mark.parametrize(
    "p,binding",
    [
        (LRParams(1, 1, 0.5, 1, 1, 1e9), "gamma_tau"),
        (LRParams(1, 0.05, 0.5, 1, 1, 1e9), "dissipation_side"),
        (LRParams(0.01, 1, 0.5, 1, 1, 1e12), "spectral_side"),
        (LRParams(0.01, 0.9, 1, 2, 1, 1e12), "spectral_side"),
    ],
)
def test_tau_uncapped_log_grid_scan(p, binding):
    rep = tau0_prime(p)
    assert rep.binding == binding and not rep.capped
    g, _ = gamma_and_M(p)
    lo = rep.tau0_prime * 1e-8
    tau = np.geomspace(lo, rep.tau0_prime * 4, 400_001)
    ok = conditions_oracle(p, g, tau)
    first_bad = tau[np.argmin(ok)]
    assert ok[0] and not ok.all()
    assert first_bad == pytest.approx(rep.tau0_prime, rel=1e-4)


@pytest.mark.parametrize("p", [LRParams(1, 1, 0.5, 1, 1, 1e9), LRParams(1, 0.05, 0.5, 1, 1, 1e9), LRParams(0.01, 1, 0.5, 1, 1, 1e12)])
def test_tau_boundary(p):
    rep = tau0_prime(p)
    g, _ = gamma_and_M(p)
    t = rep.tau0_prime
    assert conditions_oracle(p, g, np.array([t * (1 - 1e-6)]))[0]
    assert not conditions_oracle(p, g, np.array([t * (1 + 1e-6)]))[0]


def test_k_interval_nonempty():
    for p in (WORKED, LRParams(0.3, 0.4, 1, 2, 3, 0.5), LRParams(2, 0.9, 0.5, 1, 5, 0.1)):
        g, _ = gamma_and_M(p)
        tau = tau0_prime(p).tau0_prime / 2
        x = g * tau ** (-p.m / (p.b - p.a))
        k = k_of_tau(p, g, tau)
        assert x < k <= 2 * x


def test_no_admissible_tau_is_typed():
    assert issubclass(NoAdmissibleTau, ValueError)


# -- cost -----------------------------------------------------------------------


def test_cost_report_invariants():
    c = observability_cost(WORKED)
    assert c.T_tilde0 == 2 * c.tau0_prime
    assert c.C1 == pytest.approx(72 * 2)
    assert c.log_C >= math.log(c.C1) and c.log_C >= c.log_C2
    Ts = np.geomspace(0.05, 1e6, 200)
    lc = [c.log_cost(T) for T in Ts]
    assert all(x >= y for x, y in zip(lc, lc[1:]))
    # cost(T) -> C as T -> infinity; C ~ e^144 here, so T must dwarf C^(1/e)
    T_big = math.exp((c.log_C + 40) / c.exponent)
    assert c.log_cost(T_big) == pytest.approx(c.log_C, rel=1e-12)


def test_cost_overflow_is_inf():
    c = observability_cost(WORKED)
    assert c.log_cost(1e-310) == math.inf
    assert c.cost(0.01) == math.inf


def test_f_monotone_and_bounded():
    c = observability_cost(WORKED)
    s = np.geomspace(1e-2, 1e6, 300)
    f = np.array([c.f(x) for x in s])
    assert np.all(np.diff(f) >= 0) and np.all(f <= 1)


# -- synthetic model and telescoping --------------------------------------------

SMALL = LRParams(1, 1, 0.5, 1, 1, 1)


def test_model_meets_hypotheses():
    p = SMALL
    m = DiagonalSemigroupModel.exact(p, D=512)
    for k in (1, 5, 50, 300):
        # spectral inequality: worst ratio ||pi_k g||^2 / ||pi_k g||^2_omega over modes
        assert 1 / m.r[:k].min() <= math.exp(2 * p.c1 * k**p.a) * (1 + 1e-12)
        for t in (1e-3, 0.1, 0.5, 1.0):
            tail = np.exp(-m.lam[k:] * t).max() if k < m.D else 0.0
            assert tail <= math.exp(-p.c2 * t**p.m * k**p.b) / p.c2 * (1 + 1e-12)


def test_model_rejects_unsupported_params():
    with pytest.raises(ValueError):
        DiagonalSemigroupModel.exact(LRParams(1, 2, 0.5, 1, 1, 1))


def test_observed_energy_vs_quadrature():
    from scipy.integrate import quad

    m = DiagonalSemigroupModel.exact(SMALL, D=8)
    g = np.random.default_rng(0).standard_normal(8)
    ref = quad(lambda t: float(np.sum(m.r * g**2 * np.exp(-2 * m.lam * t))), 0.1, 0.7, epsabs=0, epsrel=1e-12)[0]
    assert m.observed_energy(g, 0.1, 0.7) == pytest.approx(ref, rel=1e-10)


def test_telescoping_passes_on_exact_model():
    p = SMALL
    cost = observability_cost(p)
    T = cost.T_tilde0 / 2
    res = telescoping_trace(p, T, DiagonalSemigroupModel.exact(p, D=2048), n_random=50, seed=0)
    assert res.passed and res.first_failure is None
    assert res.final_passes == 50
    taus = np.array([s.tau_k for s in res.steps])
    assert np.all(taus == T / 2.0 ** (np.arange(len(taus)) + 1))
    # the geometric series sums to T
    assert taus.sum() + res.steps[-1].T_k - taus[-1] == pytest.approx(T, rel=1e-12)


def test_telescoping_detects_inflated_c2():
    p = SMALL
    model = DiagonalSemigroupModel.exact(p, D=2048)
    bad = LRParams(p.c1, 2 * p.c2, p.a, p.b, p.m, p.t0)
    res = telescoping_trace(bad, observability_cost(bad).T_tilde0 / 2, model, n_random=50, seed=0)
    assert not res.passed
    assert res.first_failure is not None
    k, which = res.first_failure
    assert which == "dissipation" and not res.steps[k].ok
