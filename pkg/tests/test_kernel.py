import csv

import numpy as np
import pytest

from btq.geometry import FourierSymbol
from btq.kernel import (
    MODEL_DECAY,
    KernelSlice,
    OffGridError,
    bergman_slice,
    decay_sweep,
    diagonal_profile,
    disk_offsets,
    gaussian_fit,
    offdiagonal_decay,
    toeplitz_kernel_check,
    write_slice_csv,
)


def test_trace_of_projector_is_dimension(clusters):
    c = clusters(6, 24, phi="half_cos_x")
    rep = diagonal_profile(c)
    assert rep.trace_defect < 1e-10


def test_diagonal_is_flat_for_large_p(clusters):
    assert diagonal_profile(clusters(16, 32)).deviation < 1e-6


def test_kernel_is_hermitian(clusters):
    c = clusters(4, 16)
    x, y = np.array([0.25, 0.5]), np.array([0.0625, 0.875])
    a = bergman_slice(c, x, [y - x]).values[0]
    b = bergman_slice(c, y, [x - y]).values[0]
    assert np.allclose(a, b.conj().T)


def test_reproducing_property(clusters):
    c = clusters(4, 16)
    V = c.site_values()[:, 0, :]
    P = V @ V.conj().T
    assert np.allclose(c.weight * P @ P, P, atol=1e-10)


def test_off_grid_point_rejected(clusters):
    c = clusters(4, 16)
    with pytest.raises(OffGridError):
        bergman_slice(c, (0.01, 0.0), [(0.0, 0.0)])
    with pytest.raises(ValueError):
        bergman_slice(c, (0.0, 0.0, 0.0), [(0.0, 0.0)])


def test_disk_offsets_sorted_and_bounded(clusters):
    c = clusters(16, 32)
    Z = disk_offsets(c)
    d = np.linalg.norm(Z, axis=1)
    assert d[0] == 0.0 and np.all(np.diff(d) >= 0)
    assert d.max() <= 4 / np.sqrt(16) + 1e-12


def test_gaussian_fit_on_exact_profile():
    rng = np.random.default_rng(0)
    Z = rng.uniform(-0.3, 0.3, (40, 2))
    p = 7
    vals = 3.0 * np.exp(-MODEL_DECAY * p * np.sum(Z**2, axis=1))[:, None, None]
    fit = gaussian_fit(KernelSlice(np.zeros(2), Z, vals, p, 64))
    assert fit.ratio == pytest.approx(1.0)
    assert fit.intercept == pytest.approx(np.log(3.0))
    with pytest.raises(ValueError):
        gaussian_fit(KernelSlice(np.zeros(2), Z[:5], vals[:5], p, 64))


def test_gaussian_profile_of_lattice_kernel(clusters):
    c = clusters(16, 32)
    fit = gaussian_fit(bergman_slice(c, (0.5, 0.25), disk_offsets(c)))
    assert 0.95 <= fit.ratio <= 1.05


def test_toeplitz_kernel_is_P_f_P(clusters):
    c = clusters(4, 16)
    chk = toeplitz_kernel_check(c, FourierSymbol.cos((1, 1)) + 0.3 * FourierSymbol.sin((0, 1)))
    assert chk.passed, chk.max_deviation
    c2 = clusters(2, 16, rank_E=2)
    f = FourierSymbol({(1, 0): np.array([[0.5, 0.1], [0.0, 0.2]]), (0, 0): np.eye(2)}, rank=2)
    assert toeplitz_kernel_check(c2, f, max_rows=64).passed


def test_offdiagonal_decay_bounds(clusters):
    c = clusters(8, 32)
    rep = offdiagonal_decay(c, 0.25, f=FourierSymbol.cos((1, 0)))
    near = offdiagonal_decay(c, 0.0)
    # the sup over all pairs is attained on the diagonal
    diag = np.einsum("sad,sad->s", c.site_values(), c.site_values().conj()).real
    assert near.sup_bergman == pytest.approx(diag.max(), rel=1e-12)
    assert near.sup_bergman == pytest.approx(8.0, rel=1e-3)
    assert rep.sup_bergman < near.sup_bergman
    assert rep.sup_toeplitz <= rep.sup_bergman * 2


def test_decay_sweep_doubling(clusters):
    sweep = decay_sweep([clusters(p, 32) for p in (4, 8, 16)], delta=0.5)
    assert [p for p, _, _ in sweep.doubling_ratios] == [4, 8]
    assert sweep.passed_doubling
    assert sweep.slope < -2


def test_slice_csv(tmp_path, clusters):
    c = clusters(4, 16)
    slc = bergman_slice(c, (0.0, 0.0), disk_offsets(c, 0.2))
    path = tmp_path / "s.csv"
    write_slice_csv(slc, path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == len(slc.offsets)
    v = complex(float(rows[0]["re_00"]), float(rows[0]["im_00"]))
    assert v == slc.values[0, 0, 0]
