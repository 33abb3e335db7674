import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btq.geometry import (
    BundleSpec,
    FourierSymbol,
    Jet,
    SymbolFormatError,
    format_jet,
    format_symbol,
    jet_at,
    make_torus,
    multi_indices,
    parse_jet,
    parse_symbol,
    poisson_bracket,
    sup_norm,
)

TWO_PI = 2 * np.pi


@pytest.mark.parametrize("n", [1, 2, 3])
def test_curvature_constants(n):
    geom = make_torus(n)
    assert np.allclose(geom.curvature_eigenvalues, TWO_PI)
    assert geom.mu0 == pytest.approx(TWO_PI)
    assert geom.tau == pytest.approx(TWO_PI * n)
    # g = omega(., J .) is the Euclidean metric, J is a complex structure
    assert np.allclose(geom.metric, np.eye(2 * n))
    assert np.allclose(geom.J @ geom.J, -np.eye(2 * n))
    assert geom.flux(5) == [5] * n


def test_make_torus_rejects_bad_dimension():
    with pytest.raises(ValueError):
        make_torus(0)


def test_holomorphic_frame_is_J_eigenbasis():
    geom = make_torus(2)
    W = geom.holomorphic_frame()
    # T^(1,0) is the +i eigenspace of J
    assert np.allclose(geom.J @ W, 1j * W)
    assert np.allclose(W.conj().T @ W, np.eye(2))


def test_symbol_evaluation_matches_closed_form():
    f = FourierSymbol.cos((1, 0)) + 0.3 * FourierSymbol.sin((1, 2))
    pts = np.random.default_rng(1).random((20, 2))
    expected = np.cos(TWO_PI * pts[:, 0]) + 0.3 * np.sin(TWO_PI * (pts[:, 0] + 2 * pts[:, 1]))
    assert np.allclose(f.evaluate(pts)[:, 0, 0], expected)
    assert f.hermitian


def test_hermitian_flag_and_validation():
    w = FourierSymbol.plane_wave((1, 0))
    assert not w.hermitian
    assert (w + w.adjoint()).hermitian
    with pytest.raises(ValueError):
        FourierSymbol({(1, 0): 1.0}, hermitian=True)


def test_product_is_pointwise():
    f = FourierSymbol.cos((1, 1))
    g = FourierSymbol.sin((0, 2), amplitude=2.0) + 0.5
    pts = np.random.default_rng(2).random((30, 2))
    assert np.allclose((f * g).evaluate(pts), f.evaluate(pts) @ g.evaluate(pts))


def test_matrix_symbols_multiply_in_order():
    A = np.array([[0, 1], [0, 0]], dtype=complex)
    B = np.array([[0, 0], [1, 0]], dtype=complex)
    f = FourierSymbol({(1, 0): A}, rank=2)
    g = FourierSymbol({(0, 1): B}, rank=2)
    pts = np.random.default_rng(3).random((5, 2))
    assert np.allclose((f * g).evaluate(pts), np.einsum("mab,mbc->mac", f.evaluate(pts), g.evaluate(pts)))
    assert not np.allclose((f * g).evaluate(pts), (g * f).evaluate(pts))


def test_derivative_of_plane_wave():
    f = FourierSymbol.plane_wave((2, -1))
    dfx = f.derivative((1, 0))
    assert np.allclose(dfx.coefficient((2, -1)), 2j * np.pi * 2)
    assert np.allclose(f.derivative((0, 2)).coefficient((2, -1)), (2j * np.pi * -1) ** 2)


def test_poisson_bracket_closed_form():
    f, g = FourierSymbol.cos((1, 0)), FourierSymbol.cos((0, 1))
    pts = np.random.default_rng(4).random((25, 2))
    x, y = pts[:, 0], pts[:, 1]
    # f_y g_x - f_x g_y = -(2 pi)^2 sin(2 pi x) sin(2 pi y)
    expected = -TWO_PI * np.sin(TWO_PI * x) * np.sin(TWO_PI * y)
    assert np.allclose(poisson_bracket(f, g).evaluate(pts)[:, 0, 0], expected)
    assert poisson_bracket(f, g).allclose(-poisson_bracket(g, f))
    assert poisson_bracket(f, f).allclose(FourierSymbol.zero())


def test_poisson_bracket_rejects_matrix_symbols():
    f = FourierSymbol({(0, 0): np.eye(2)}, rank=2)
    with pytest.raises(ValueError):
        poisson_bracket(f, f)


def test_sup_norm():
    assert sup_norm(FourierSymbol.cos((1, 0), amplitude=3.0)) == pytest.approx(3.0)
    assert sup_norm(FourierSymbol.zero()) == 0.0


def test_bundle_spec_validation():
    assert BundleSpec(p=4, degree_E=2).total_flux == 6
    with pytest.raises(ValueError):
        BundleSpec(p=4, rank_E=2, degree_E=1)
    with pytest.raises(ValueError):
        BundleSpec(p=4, Phi=FourierSymbol.plane_wave((1, 0)))
    with pytest.raises(ValueError):
        BundleSpec(p=4, rank_E=2, Phi=FourierSymbol.cos((1, 0)))
    with pytest.raises(ValueError):
        BundleSpec(p=-1)


def test_symbol_text_roundtrip():
    f = FourierSymbol({(1, 0): np.array([[1, 2j], [0, 0.5]]), (0, -3): np.eye(2) * 0.25}, rank=2)
    g = parse_symbol(format_symbol(f))
    assert g.allclose(f)
    assert g.digest() == f.digest()


def test_symbol_parse_errors_name_the_line():
    text = "# header\n1 0 0.5 0.0\n-1 0 zero 0.0\n"
    with pytest.raises(SymbolFormatError) as exc:
        parse_symbol(text, source="f.sym")
    assert exc.value.lineno == 3
    assert "f.sym:3" in str(exc.value)
    with pytest.raises(SymbolFormatError) as exc:
        parse_symbol("1 0 0.5\n")
    assert exc.value.lineno == 1


def test_digest_sees_tiny_perturbations():
    f = FourierSymbol.cos((1, 0), amplitude=0.5)
    g = FourierSymbol.cos((1, 0), amplitude=0.5 + 1e-9)
    assert f.digest() != g.digest()
    assert f.digest() == FourierSymbol.cos((1, 0), amplitude=0.5).digest()


def test_multi_indices_counts():
    assert len(multi_indices(2, 2)) == 6
    assert len(multi_indices(4, 2, 2)) == 10
    assert all(sum(a) == 3 for a in multi_indices(2, 3, 3))


def test_jet_of_symbol_matches_taylor_series():
    f = FourierSymbol.cos((1, 0)) * FourierSymbol.sin((0, 1)) + 0.2 * FourierSymbol.cos((1, 1))
    x0 = np.array([0.13, 0.71])
    jet = jet_at(f, x0, 6)
    Y = np.array([1e-3, -2e-3])
    approx = sum(c[0, 0] * Y[0] ** a[0] * Y[1] ** a[1] for a, c in jet.coeffs.items())
    exact = f.evaluate((x0 + Y)[None, :])[0, 0, 0]
    assert abs(approx - exact) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(-2, 2), st.integers(-2, 2))
def test_jet_product_is_jet_of_product(x, y, k1, k2):
    f = FourierSymbol.cos((k1, 1)) + 0.5
    g = FourierSymbol.sin((1, k2))
    x0 = (x, y)
    lhs = jet_at(f, x0, 4) * jet_at(g, x0, 4)
    rhs = jet_at(f * g, x0, 4)
    assert (lhs - rhs).max_abs() < 1e-8 * max(1.0, rhs.max_abs())


def test_jet_derivative_and_gradient():
    jet = Jet.from_polynomial({(1, 0): 2.0, (0, 1): 3.0, (2, 1): 1.0}, order=3)
    dz, dzb = jet.complex_gradient()
    assert np.allclose(dz[0], (2.0 - 3.0j) / 2)
    assert np.allclose(dzb[0], (2.0 + 3.0j) / 2)
    d = jet.diff((2, 0))
    assert d.order == 1
    assert np.allclose(d.coefficient((0, 1)), 2.0)
    with pytest.raises(ValueError):
        jet.diff((2, 2))


def test_jet_text_roundtrip():
    jet = Jet.from_polynomial({(0, 0): 1.0, (1, 2): 0.5 - 2j}, order=3)
    back = parse_jet(format_jet(jet), order=3)
    assert (back - jet).max_abs() == 0.0
    with pytest.raises(SymbolFormatError):
        parse_jet("-1 0 1.0 0.0\n")
