import numpy as np
import pytest

from btq.geometry import FourierSymbol
from btq.toeplitz import (
    commutator,
    compose,
    fit_slope,
    frobenius,
    op_norm,
    slope_report,
    toeplitz,
    trace,
    verify_norm_limit,
    verify_product_c0,
)


def test_identity_symbol_gives_identity(clusters):
    c = clusters(4, 16)
    T = toeplitz(c, FourierSymbol.constant(1.0))
    assert np.allclose(T.matrix, np.eye(c.d_p), atol=1e-12)
    assert T.p == 4 and T.d_p == 4


def test_linearity_and_adjoint(clusters):
    c = clusters(4, 16)
    f = FourierSymbol.cos((1, 0))
    g = FourierSymbol.plane_wave((1, 1), 0.3 + 0.2j)
    Tf, Tg = toeplitz(c, f).matrix, toeplitz(c, g).matrix
    assert np.allclose(toeplitz(c, 2.0 * f + g).matrix, 2.0 * Tf + Tg, atol=1e-12)
    assert np.allclose(toeplitz(c, g.adjoint()).matrix, Tg.conj().T, atol=1e-12)
    assert toeplitz(c, f).hermitian_defect() == 0.0


@pytest.mark.parametrize("k", [(1, 0), (0, 1), (1, 1), (2, -1)])
def test_plane_wave_is_scaled_magnetic_translation(k, clusters):
    # on the lowest Landau level T_{e^{2 pi i k.x}} = exp(-pi |k|^2 / 2p) W_k with W_k unitary
    p = 8
    c = clusters(p, 32)
    T = toeplitz(c, FourierSymbol.plane_wave(k)).matrix
    s = np.linalg.svd(T, compute_uv=False)
    assert s.max() - s.min() < 1e-10
    expected = np.exp(-np.pi * (k[0] ** 2 + k[1] ** 2) / (2 * p))
    assert s[0] == pytest.approx(expected, rel=3e-3)


def test_trace_is_integral_times_dimension(clusters):
    # tr T_f = h^2 sum_x f(x) P(x,x) and P(x,x) = p for the flat torus (p >= 12 to 1e-6)
    c = clusters(12, 32)
    f = FourierSymbol.constant(0.4) + FourierSymbol.cos((1, 2))
    assert trace(toeplitz(c, f)) == pytest.approx(0.4 * c.d_p, abs=1e-5)


def test_positivity(clusters):
    c = clusters(6, 24)
    f = FourierSymbol.constant(1.0) + FourierSymbol.cos((1, 0))  # f >= 0
    w = np.linalg.eigvalsh(toeplitz(c, f).matrix)
    assert w.min() > -1e-12
    assert w.max() <= 2.0 + 1e-12


def test_algebra_helpers(clusters):
    c = clusters(3, 16)
    A = toeplitz(c, FourierSymbol.cos((1, 0)))
    B = toeplitz(c, FourierSymbol.sin((0, 1)))
    assert np.allclose(compose(A, B), A.matrix @ B.matrix)
    assert np.allclose(A @ B, A.matrix @ B.matrix)
    assert np.allclose(commutator(A, B), -commutator(B, A))
    assert frobenius(A) == pytest.approx(np.linalg.norm(A.matrix))
    assert op_norm(A) <= 1.0 + 1e-12
    with pytest.raises(ValueError):
        compose(A, np.eye(c.d_p + 1))


def test_mismatched_symbols_rejected(clusters):
    c = clusters(3, 16)
    with pytest.raises(ValueError):
        toeplitz(c, FourierSymbol({(0, 0): np.eye(2)}, rank=2))
    with pytest.raises(ValueError):
        toeplitz(c, FourierSymbol.cos((1, 0, 0, 0), n=2))


def test_fit_slope_recovers_power_law():
    ps = [4, 6, 8, 12]
    slope, icpt = fit_slope(ps, [3.0 * p**-1.5 for p in ps])
    assert slope == pytest.approx(-1.5)
    assert np.exp(icpt) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        fit_slope([4], [1.0])


def test_slope_report_windows_and_exact_mode():
    rows = [(p, p, 2.0 / p) for p in (4, 6, 8, 12)]
    rep = slope_report("x", rows, -1.0, (-1.4, -0.7))
    assert rep.passed and rep.slope == pytest.approx(-1.0)
    rep = slope_report("x", rows, -2.0, (-2.5, -1.6))
    assert not rep.passed and "FAIL" in rep.summary()
    exact = slope_report("x", [(p, p, 0.0) for p in (4, 6, 8, 12)], -1.0, (-1.4, -0.7))
    assert exact.exact and exact.passed
    with pytest.raises(ValueError):
        slope_report("x", rows[:3], -1.0, (-1.4, -0.7))


def test_commuting_symbols_give_exact_report(clusters):
    # T_1 T_g = T_g exactly
    cs = [clusters(p, 16) for p in (1, 2, 3, 4)]
    rep = verify_product_c0(FourierSymbol.constant(1.0), FourierSymbol.cos((1, 0)), cs)
    assert rep.exact and rep.passed


def test_norm_limit_of_constant_is_exact(clusters):
    cs = [clusters(p, 16) for p in (2, 3, 4)]
    rep = verify_norm_limit(FourierSymbol.constant(0.5), cs)
    assert rep.passed
    assert max(rep.deviations) < 1e-12
    with pytest.raises(ValueError):
        verify_norm_limit(FourierSymbol.plane_wave((1, 0)), cs)


def _clock_shift_product_error(p):
    # lowest level as the p-dim Heisenberg rep: T_{e_k} = e^{-pi|k|^2/2p} W_k, W_{(s,t)} = w^{st/2} X^s Z^t
    w = np.exp(2j * np.pi / p)
    X, Z = np.roll(np.eye(p), 1, 0), np.diag(w ** np.arange(p))
    Xs = {1: X, -1: X.conj().T}
    Zs = {1: Z, -1: Z.conj().T}
    AB = (X + Xs[-1]) @ (Z + Zs[-1]) / 4
    sym = sum(np.exp(1j * np.pi * s * t / p) * Xs[s] @ Zs[t] for s in (1, -1) for t in (1, -1)) / 4
    return np.exp(-np.pi / p) * np.linalg.norm(AB - sym, 2)


@pytest.mark.parametrize("p", [4, 6, 8, 12])
def test_product_error_matches_heisenberg_oracle(p, clusters):
    # the order-0 product error for cos 2pi x, cos 2pi y is fixed by the finite Heisenberg group
    rep = verify_product_c0(FourierSymbol.cos((1, 0)), FourierSymbol.cos((0, 1)), [clusters(q, 32) for q in (4, 6, 8, 12)])
    assert rep.errors[(4, 6, 8, 12).index(p)] == pytest.approx(_clock_shift_product_error(p), rel=2e-3)
