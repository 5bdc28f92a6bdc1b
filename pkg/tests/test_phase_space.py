from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypoctrl.phase_space import (
    OUSystem,
    QuadraticSymbol,
    averaged_real_part,
    build_ou_symbol,
    catalogue_symbol,
    chain_preset,
    hamilton_map,
    harmonic_symbol,
    heat_symbol,
    kalman_analysis,
    kfp_symbol,
    kolmogorov_system,
    partially_elliptic_on_S,
    singular_space,
    weighted_conjugation_symbols,
)

from systems import random_stable_hypoelliptic

J2 = lambda n: np.block([[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]])


def random_symbol(rng, n):
    A = rng.standard_normal((2 * n, 2 * n))
    R = A @ A.T
    S = rng.standard_normal((2 * n, 2 * n))
    return QuadraticSymbol(n, R + 1j * (S + S.T), accretive=True)


# -- symbols and Hamilton maps ------------------------------------------------


def test_ou_symbol_heat_single_entry():
    q = build_ou_symbol(OUSystem([[2.0]], [[0.0]]))
    assert np.array_equal(q.M, np.array([[0, 0], [0, 1]], dtype=complex))


def test_ou_symbol_kolmogorov_values():
    q = build_ou_symbol(kolmogorov_system())
    rng = np.random.default_rng(1)
    for _ in range(10):
        x1, x2, k1, k2 = rng.standard_normal(4)
        assert q(np.array([x1, x2, k1, k2])) == pytest.approx(k2**2 + 1j * x2 * k1, abs=1e-13)


def test_ou_symbol_rejects_indefinite_Q():
    with pytest.raises(ValueError):
        OUSystem([[1.0, 0], [0, -1.0]], np.zeros((2, 2)))


def test_symbol_symmetrized_and_accretivity_checked():
    M = np.array([[1, 2], [0, 1]], dtype=complex)
    q = QuadraticSymbol(1, M)
    assert np.array_equal(q.M, q.M.T)
    with pytest.raises(ValueError):
        QuadraticSymbol(1, np.diag([1.0, -1.0]), accretive=True)


def test_hamilton_map_kfp_matches_displayed_matrix():
    F = hamilton_map(kfp_symbol(1.0)).F
    expected = np.array(
        [[0, 0.5j, 0, 0], [-0.5j, 0, 0, 1], [0, 0, 0, 0.5j], [0, -0.25, -0.5j, 0]],
        dtype=complex,
    )
    assert np.abs(F - expected).max() <= 1e-12


@pytest.mark.parametrize(
    "q,F",
    [
        (harmonic_symbol(1), [[0, 1], [-1, 0]]),
        (heat_symbol(1), [[0, 1], [0, 0]]),
    ],
)
def test_hamilton_map_small_cases(q, F):
    assert np.abs(hamilton_map(q).F - np.array(F)).max() <= 1e-14


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_defining_identity_random(n, seed):
    # oracle: the defining pairing evaluated from M directly, with J written out
    rng = np.random.default_rng(seed)
    q = random_symbol(rng, n)
    F = hamilton_map(q).F
    for _ in range(5):
        X, Y = rng.standard_normal((2, 2 * n))
        lhs = X @ q.M @ Y
        rhs = X @ J2(n) @ F @ Y
        assert abs(lhs - rhs) <= 1e-10 * np.abs(q.M).max() * np.linalg.norm(X) * np.linalg.norm(Y)


# -- singular space -----------------------------------------------------------


def test_kfp_singular_space():
    rep = singular_space(hamilton_map(kfp_symbol(1.0)))
    assert rep.k0 == 1 and rep.chain_dims[:2] == [2, 0]
    assert rep.S_basis.shape[0] == 0
    assert rep.delta_loss == Fraction(2, 3)


def test_harmonic_k0_zero():
    rep = singular_space(hamilton_map(harmonic_symbol(2)))
    assert rep.k0 == 0 and rep.delta_loss == 0


def test_kolmogorov_singular_space_is_x_plane():
    rep = singular_space(hamilton_map(build_ou_symbol(kolmogorov_system())))
    assert rep.k0 is None
    assert rep.chain_dims[-1] == 2
    B = rep.S_basis
    # basis spans {(x, 0)}
    assert np.abs(B[:, 2:]).max() < 1e-12
    assert np.linalg.matrix_rank(B[:, :2]) == 2


def test_catalogue_k1_n2_explicit():
    q = catalogue_symbol(1, 2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x1, x2, k1, k2 = rng.standard_normal(4)
        expect = k2**2 + x2**2 + 1j * (x2 * k1 - x1 * k2)
        assert q(np.array([x1, x2, k1, k2])) == pytest.approx(expect, abs=1e-12)
    assert singular_space(hamilton_map(q)).k0 == 1


@pytest.mark.parametrize("k0", range(0, 6))
def test_catalogue_k0(k0):
    rep = singular_space(hamilton_map(catalogue_symbol(k0)))
    assert rep.k0 == k0
    assert rep.delta_loss == Fraction(2 * k0, 2 * k0 + 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_chain_dims_invariant_under_rotation(k0, seed):
    q = catalogue_symbol(k0)
    n = q.n
    rng = np.random.default_rng(seed)
    O, _ = np.linalg.qr(rng.standard_normal((n, n)))
    P = np.block([[O, np.zeros((n, n))], [np.zeros((n, n)), O]])
    r1 = singular_space(hamilton_map(q))
    r2 = singular_space(hamilton_map(q.transformed(P)))
    assert r1.chain_dims == r2.chain_dims
    assert all(a >= b for a, b in zip(r1.chain_dims, r1.chain_dims[1:]))


# -- Kalman -------------------------------------------------------------------


def test_kalman_examples():
    assert kalman_analysis(OUSystem(2 * np.eye(3), np.zeros((3, 3)))) == (3, 0)
    assert kalman_analysis(kolmogorov_system()) == (2, 1)
    assert kalman_analysis(OUSystem(np.diag([1.0, 0.0]), np.zeros((2, 2)))) == (1, None)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_kalman_k0_equals_conjugated_k0(n, seed):
    sys = random_stable_hypoelliptic(np.random.default_rng(seed), n)
    L = weighted_conjugation_symbols(sys).L_symbol
    assert singular_space(hamilton_map(L)).k0 == kalman_analysis(sys).kalman_k0


# -- averaged real part, conjugation ----------------------------------------


def test_averaged_real_part_cases():
    q = harmonic_symbol(1)
    assert np.abs(averaged_real_part(q, 0.7) - q.M.real).max() < 1e-12
    A = averaged_real_part(kfp_symbol(1.0), 1.0)
    assert np.linalg.eigvalsh(A)[0] > 0
    qk = build_ou_symbol(kolmogorov_system())
    Ak = averaged_real_part(qk, 1.0)
    w, V = np.linalg.eigh(Ak)
    assert abs(w[0]) < 1e-10 and abs(w[1]) < 1e-10 and w[2] > 0
    S = singular_space(hamilton_map(qk)).S_basis
    assert np.abs(Ak @ S.T).max() < 1e-10


@pytest.mark.parametrize("k0", range(0, 4))
def test_averaged_positive_iff_trivial_S(k0):
    A = averaged_real_part(catalogue_symbol(k0), 1.0)
    assert np.linalg.eigvalsh(A)[0] > 1e-8


def test_weighted_conjugation_scalar():
    c = weighted_conjugation_symbols(OUSystem([[2.0]], [[-1.0]]))
    assert np.allclose(c.Q_inf, [[1.0]])
    assert np.allclose(c.L_symbol.M, np.diag([0.25, 1.0]))
    assert c.rho_params.normalization == pytest.approx((2 * np.pi) ** -0.5)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_lfrak_is_conjugate(n, seed):
    sys = random_stable_hypoelliptic(np.random.default_rng(seed), n)
    c = weighted_conjugation_symbols(sys)
    assert np.array_equal(c.Lfrak_symbol.M, c.L_symbol.M.conj())
    # rho is invariant: Lyapunov residual
    assert np.abs(sys.B @ c.Q_inf + c.Q_inf @ sys.B.T + sys.Q).max() < 1e-9 * max(1, np.abs(c.Q_inf).max())


def test_weighted_conjugation_errors():
    with pytest.raises(ValueError, match="unstable"):
        weighted_conjugation_symbols(OUSystem([[2.0]], [[0.0]]))
    with pytest.raises(ValueError, match="hypoellipticity"):
        weighted_conjugation_symbols(OUSystem(np.diag([1.0, 0.0]), -np.eye(2)))


def test_kolmogorov_like_conjugated_k0():
    sys = OUSystem(np.diag([0.0, 2.0]), [[-1.0, -1.0], [0.0, -1.0]])
    L = weighted_conjugation_symbols(sys).L_symbol
    assert singular_space(hamilton_map(L)).k0 == kalman_analysis(sys).kalman_k0 == 1


# -- chain preset -------------------------------------------------------------


def test_chain_generic():
    ch = chain_preset(2, 2, 1, 1, 1, 1)
    assert ch.accretive_flag
    assert ch.nondegeneracy == 3
    rep = singular_space(hamilton_map(ch.symbol))
    assert rep.chain_dims[:3] == [8, 4, 0] and rep.k0 == 2
    assert partially_elliptic_on_S(ch.symbol, rep)


def test_chain_degenerate():
    ch = chain_preset(1, 1, 0.7, 1, 1, 1)
    assert abs(ch.nondegeneracy) < 1e-15
    rep = singular_space(hamilton_map(ch.symbol))
    assert rep.k0 is None and rep.S_basis.shape[0] > 0


def test_chain_accretivity_threshold():
    assert not chain_preset(2, 2, 1, 0.25, 1, 1).accretive_flag
    assert not chain_preset(2, 2, 1, 0.5, 1, 0.4).accretive_flag
    assert chain_preset(2, 2, 1, 0.5 + 1e-9, 1, 0.4).accretive_flag


def test_symbol_json_round_trip():
    q = kfp_symbol(0.5)
    q2 = QuadraticSymbol.from_json(q.to_json())
    assert np.array_equal(q.M, q2.M)
