"""Toeplitz matrices ``T_{f,p} = P f P`` in the cluster eigenbasis and the
asymptotic checks built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import FourierSymbol, poisson_bracket, sup_norm
from .lattice import grid_points
from .spectral import SpectralCluster

__all__ = [
    "ToeplitzMatrix",
    "SlopeReport",
    "NormLimitReport",
    "toeplitz",
    "op_norm",
    "compose",
    "commutator",
    "frobenius",
    "trace",
    "fit_slope",
    "slope_report",
    "verify_product_c0",
    "verify_product_c1",
    "verify_correspondence",
    "verify_norm_limit",
    "DEFAULT_BOUNDS",
]

# acceptance windows for the fitted log-log slopes
DEFAULT_BOUNDS = {
    "product_c0": (-1.4, -0.7),
    "product_c1": (-2.5, -1.6),
    "correspondence": (-1.5, -0.7),
}
ZERO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ToeplitzMatrix:
    matrix: np.ndarray
    symbol_id: str = ""
    p: int = 0
    grid_id: str = ""

    @property
    def d_p(self) -> int:
        return self.matrix.shape[0]

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def __matmul__(self, other):
        return compose(self, other)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def _mat(T) -> np.ndarray:
    return T.matrix if isinstance(T, ToeplitzMatrix) else np.asarray(T)


def _symbol_samples(cluster: SpectralCluster, f: FourierSymbol) -> np.ndarray:
    if f.n != cluster.n:
        raise ValueError(f"symbol lives on T^{2 * f.n}, cluster on T^{2 * cluster.n}")
    if f.rank != cluster.rank_E:
        raise ValueError(f"symbol rank {f.rank} does not match rank_E={cluster.rank_E}")
    return f.evaluate(grid_points(cluster.n, cluster.N))


def toeplitz(cluster: SpectralCluster, f: FourierSymbol) -> ToeplitzMatrix:
    """``h^{2n} V^* M_f V`` with ``M_f`` pointwise multiplication on the grid."""
    vals = _symbol_samples(cluster, f)
    V = cluster.site_values()  # (sites, r, d)
    MV = np.einsum("sab,sbd->sad", vals, V)
    T = cluster.weight * np.einsum("sae,sad->ed", V.conj(), MV)
    if f.hermitian:
        T = 0.5 * (T + T.conj().T)
    return ToeplitzMatrix(T, symbol_id=f.digest()[:12], p=cluster.p, grid_id=cluster.grid.grid_id)


def _check_dims(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")


def op_norm(T) -> float:
    M = _mat(T)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def compose(T1, T2) -> np.ndarray:
    A, B = _mat(T1), _mat(T2)
    _check_dims(A, B)
    return A @ B


def commutator(T1, T2) -> np.ndarray:
    A, B = _mat(T1), _mat(T2)
    _check_dims(A, B)
    return A @ B - B @ A


def frobenius(T) -> float:
    return float(np.linalg.norm(_mat(T), "fro"))


def trace(T) -> complex:
    return complex(np.trace(_mat(T)))


def fit_slope(ps: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit ``log e = slope * log p + intercept``."""
    ps = np.asarray(ps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(ps) < 2:
        raise ValueError("need at least two points to fit a slope")
    if np.any(errors <= 0):
        raise ValueError("slope fit requires positive errors")
    slope, intercept = np.polyfit(np.log(ps), np.log(errors), 1)
    return float(slope), float(intercept)


@dataclass
class SlopeReport:
    """Errors ``e(p)`` with a log-log slope fit and its acceptance window.

    ``exact`` marks a sweep where every error vanished to ``ZERO_TOL``; no
    slope is fitted then and the report passes.
    """

    name: str
    rows: list[tuple[int, int, float]]  # (p, d_p, error)
    slope: float
    intercept: float
    target: float
    bounds: tuple[float, float]
    exact: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def ps(self) -> list[int]:
        return [r[0] for r in self.rows]

    @property
    def errors(self) -> list[float]:
        return [r[2] for r in self.rows]

    @property
    def passed(self) -> bool:
        if self.exact:
            return True
        lo, hi = self.bounds
        return lo <= self.slope <= hi

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def summary(self) -> str:
        if self.exact:
            return f"{self.name}: errors vanish identically (max {max(self.errors):.2e}) {self.status}"
        lo, hi = self.bounds
        return (
            f"{self.name}: slope {self.slope:+.3f} (target {self.target:+.1f}, window [{lo:+.2f}, {hi:+.2f}]) "
            f"{self.status}"
        )


def slope_report(name: str, rows, target: float, bounds, min_points: int = 4, notes=None) -> SlopeReport:
    rows = sorted(rows)
    if len(rows) < min_points:
        raise ValueError(f"{name}: need at least {min_points} values of p, got {len(rows)}")
    errs = np.array([r[2] for r in rows])
    if np.all(errs <= ZERO_TOL):
        return SlopeReport(name, rows, math.nan, math.nan, target, tuple(bounds), exact=True, notes=notes or {})
    slope, icpt = fit_slope([r[0] for r in rows], np.maximum(errs, 1e-300))
    return SlopeReport(name, rows, slope, icpt, target, tuple(bounds), notes=notes or {})


def _sweep(clusters: Iterable[SpectralCluster], error: Callable[[SpectralCluster], float]):
    return [(c.p, c.d_p, float(error(c))) for c in clusters]


def verify_product_c0(f: FourierSymbol, g: FourierSymbol, clusters: Sequence[SpectralCluster],
                      bounds=None) -> SlopeReport:
    """``e(p) = ||T_f T_g - T_{fg}||`` should decay like ``1/p``."""
    fg = f * g

    def err(c):
        return op_norm(compose(toeplitz(c, f), toeplitz(c, g)) - toeplitz(c, fg).matrix)

    return slope_report("product_c0", _sweep(clusters, err), -1.0, bounds or DEFAULT_BOUNDS["product_c0"])


def verify_product_c1(f: FourierSymbol, g: FourierSymbol, C1: FourierSymbol,
                      clusters: Sequence[SpectralCluster], bounds=None) -> SlopeReport:
    """``e(p) = ||T_f T_g - T_{fg} - p^{-1} T_{C_1}||`` should decay like ``p^{-2}``."""
    fg = f * g

    def err(c):
        D = compose(toeplitz(c, f), toeplitz(c, g)) - toeplitz(c, fg).matrix
        return op_norm(D - toeplitz(c, C1).matrix / c.p)

    return slope_report("product_c1", _sweep(clusters, err), -2.0, bounds or DEFAULT_BOUNDS["product_c1"])


def verify_correspondence(f: FourierSymbol, g: FourierSymbol, clusters: Sequence[SpectralCluster],
                          bounds=None) -> SlopeReport:
    """``e(p) = ||p [T_f, T_g] - i T_{{f,g}}||``."""
    bracket = poisson_bracket(f, g)

    def err(c):
        C = commutator(toeplitz(c, f), toeplitz(c, g))
        return op_norm(c.p * C - 1j * toeplitz(c, bracket).matrix)

    return slope_report("correspondence", _sweep(clusters, err), -1.0, bounds or DEFAULT_BOUNDS["correspondence"])


@dataclass
class NormLimitReport:
    rows: list[tuple[int, int, float, float]]  # (p, d_p, ||T_f||, deviation)
    sup: float
    final_bound: float

    @property
    def deviations(self) -> list[float]:
        return [r[3] for r in self.rows]

    @property
    def monotone(self) -> bool:
        dev = self.deviations
        if max(dev) <= ZERO_TOL:
            return True
        return all(b < a for a, b in zip(dev, dev[1:]))

    @property
    def passed(self) -> bool:
        return self.monotone and self.deviations[-1] <= self.final_bound

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def summary(self) -> str:
        return (
            f"norm_limit: ||f||_inf={self.sup:.6f}, final deviation {self.deviations[-1]:.4g} "
            f"(bound {self.final_bound:.4g}), monotone={self.monotone} {self.status}"
        )


def verify_norm_limit(f: FourierSymbol, clusters: Sequence[SpectralCluster], final_factor: float = 3.0) -> NormLimitReport:
    """``| ||T_{f,p}|| - ||f||_inf |`` must decrease in ``p`` and end below ``final_factor / p_max``."""
    if not f.hermitian:
        raise ValueError("norm limit check expects a Hermitian symbol")
    s = sup_norm(f)
    rows = []
    for c in sorted(clusters, key=lambda c: c.p):
        nrm = op_norm(toeplitz(c, f))
        rows.append((c.p, c.d_p, nrm, abs(nrm - s)))
    return NormLimitReport(rows, s, final_factor / rows[-1][0])
