"""Generalized Bergman kernel ``P(x, x') = sum_i psi_i(x) psi_i(x')^*`` of the cluster.

Kernels are taken with respect to the quadrature measure, so ``P(x, x) ~ p^n``.
On the flat torus the volume distortion is trivial (``kappa = 1``) and the
model kernel has ``a_j = 2 pi``, giving ``|P(x, x+Z)| ~ p^n exp(-(pi/2) p |Z|^2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import FourierSymbol
from .lattice import grid_points
from .spectral import SpectralCluster
from .toeplitz import SlopeReport, fit_slope, slope_report, toeplitz

__all__ = [
    "KernelSlice",
    "DiagonalReport",
    "GaussianFit",
    "DecayReport",
    "DecaySweep",
    "KernelCheck",
    "KAPPA",
    "MODEL_DECAY",
    "bergman_slice",
    "disk_offsets",
    "diagonal_profile",
    "diagonal_sweep",
    "gaussian_fit",
    "offdiagonal_decay",
    "decay_sweep",
    "toeplitz_kernel_check",
    "write_slice_csv",
]

KAPPA = 1.0  # volume distortion of the flat torus
MODEL_DECAY = np.pi / 2  # |P(sqrt p Z, 0)| = exp(-(a/4) p |Z|^2) with a = 2 pi


class OffGridError(ValueError):
    pass


def _site_of(cluster: SpectralCluster, point) -> int:
    pt = np.asarray(point, dtype=float).reshape(-1)
    if pt.size != 2 * cluster.n:
        raise ValueError(f"point has {pt.size} coordinates, expected {2 * cluster.n}")
    scaled = pt * cluster.N
    idx = np.rint(scaled)
    if np.max(np.abs(scaled - idx)) > 1e-9:
        raise OffGridError(f"point {pt.tolist()} is not on the N={cluster.N} grid")
    idx = idx.astype(int) % cluster.N
    return int(idx @ (cluster.N ** np.arange(2 * cluster.n)))


def _min_image(delta: np.ndarray) -> np.ndarray:
    return delta - np.round(delta)


@dataclass
class KernelSlice:
    base: np.ndarray
    offsets: np.ndarray  # (M, 2n)
    values: np.ndarray  # (M, rank, rank)
    p: int
    N: int
    n: int = 1

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.offsets, axis=1)

    @property
    def moduli(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=(1, 2))


def bergman_slice(cluster: SpectralCluster, x, offsets) -> KernelSlice:
    """``P(x, x + Z')`` for each on-grid offset ``Z'``."""
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    V = cluster.site_values()
    s0 = _site_of(cluster, x)
    targets = [_site_of(cluster, np.asarray(x, dtype=float) + z) for z in offsets]
    A = V[s0]  # (r, d)
    B = V[targets]  # (M, r, d)
    vals = np.einsum("ad,mbd->mab", A, B.conj())
    return KernelSlice(np.asarray(x, dtype=float), offsets, vals, cluster.p, cluster.N, cluster.n)


def disk_offsets(cluster: SpectralCluster, radius: float | None = None) -> np.ndarray:
    """Grid displacements (minimum image) with ``|Z| <= radius``; default ``min(4/sqrt p, 1/2)``."""
    if radius is None:
        radius = min(4.0 / math.sqrt(cluster.p), 0.5)
    Z = _min_image(grid_points(cluster.n, cluster.N))
    d = np.linalg.norm(Z, axis=1)
    keep = d <= radius + 1e-12
    Z, d = Z[keep], d[keep]
    return Z[np.argsort(d, kind="stable")]


def _diagonal(cluster: SpectralCluster) -> np.ndarray:
    V = cluster.site_values()
    return np.einsum("sad,sad->s", V, V.conj()).real  # tr P(x, x)


@dataclass
class DiagonalReport:
    p: int
    d_p: int
    deviation: float  # max_x |p^{-n} tr P(x,x) / rank - 1|
    trace: float  # h^{2n} sum_x tr P(x,x)

    @property
    def trace_defect(self) -> float:
        return abs(self.trace - self.d_p)


def diagonal_profile(cluster: SpectralCluster) -> DiagonalReport:
    diag = _diagonal(cluster)
    dev = float(np.max(np.abs(diag / (cluster.p**cluster.n * cluster.rank_E * KAPPA) - 1.0)))
    return DiagonalReport(cluster.p, cluster.d_p, dev, float(cluster.weight * diag.sum()))


def diagonal_sweep(clusters: Sequence[SpectralCluster], bounds=(-1.4, -0.6)) -> SlopeReport:
    rows = []
    for c in clusters:
        rep = diagonal_profile(c)
        rows.append((c.p, c.d_p, rep.deviation))
    return slope_report("bergman_diagonal", rows, -1.0, bounds)


@dataclass
class GaussianFit:
    p: int
    c: float
    intercept: float
    points: int

    @property
    def ratio(self) -> float:
        return self.c / MODEL_DECAY

    @property
    def passed(self) -> bool:
        return 0.9 <= self.ratio <= 1.1


def gaussian_fit(slc: KernelSlice) -> GaussianFit:
    """Fit ``log |P(x, x+Z)| = b - c p |Z|^2`` by least squares."""
    if len(slc.offsets) < 6:
        raise ValueError(f"need at least 6 offsets for the Gaussian fit, got {len(slc.offsets)}")
    mod = slc.moduli
    keep = mod > 0
    u = slc.p * slc.distances[keep] ** 2
    slope, icpt = np.polyfit(u, np.log(mod[keep]), 1)
    return GaussianFit(slc.p, float(-slope), float(icpt), int(keep.sum()))


def _kernel_rows(V: np.ndarray, rows: np.ndarray, middle: np.ndarray | None = None) -> np.ndarray:
    """Kernel blocks ``K(x, y)`` for ``x`` in ``rows`` and all ``y``: ``(b, sites, r, r)``."""
    A = V[rows]  # (b, r, d)
    if middle is not None:
        A = np.einsum("bad,de->bae", A, middle)
    return np.einsum("bad,sed->bsae", A, V.conj())


@dataclass
class DecayReport:
    p: int
    delta: float
    sup_bergman: float
    sup_toeplitz: float
    n: int = 1

    @property
    def scaled_bergman(self) -> float:
        return self.sup_bergman / self.p**self.n

    @property
    def scaled_toeplitz(self) -> float:
        return self.sup_toeplitz / self.p**self.n


def offdiagonal_decay(cluster: SpectralCluster, delta: float, f: FourierSymbol | None = None,
                      block: int = 256) -> DecayReport:
    """Sup of ``|P(x, x')|`` and ``|T_{f,p}(x, x')|`` over pairs at torus distance ``>= delta``."""
    V = cluster.site_values()
    pts = grid_points(cluster.n, cluster.N)
    sites = pts.shape[0]
    middle = toeplitz(cluster, f).matrix if f is not None else None
    supP = supT = 0.0
    for start in range(0, sites, block):
        rows = np.arange(start, min(start + block, sites))
        dist = np.linalg.norm(_min_image(pts[None, :, :] - pts[rows, None, :]), axis=2)
        far = dist >= delta - 1e-12
        if not far.any():
            continue
        P = np.linalg.norm(_kernel_rows(V, rows), axis=(2, 3))
        supP = max(supP, float(P[far].max()))
        if middle is not None:
            T = np.linalg.norm(_kernel_rows(V, rows, middle), axis=(2, 3))
            supT = max(supT, float(T[far].max()))
    return DecayReport(cluster.p, delta, supP, supT if f is not None else supP, cluster.n)


@dataclass
class DecaySweep:
    reports: list[DecayReport]
    slope: float
    doubling_ratios: list[tuple[int, int, float]]
    min_ratio: float = 4.0
    max_slope: float = -2.0

    @property
    def passed_slope(self) -> bool:
        return self.slope < self.max_slope

    @property
    def passed_doubling(self) -> bool:
        return bool(self.doubling_ratios) and all(r >= self.min_ratio for _, _, r in self.doubling_ratios)

    @property
    def passed(self) -> bool:
        return self.passed_slope and self.passed_doubling


def decay_sweep(clusters: Sequence[SpectralCluster], delta: float = 0.5, f: FourierSymbol | None = None) -> DecaySweep:
    reports = [offdiagonal_decay(c, delta, f) for c in sorted(clusters, key=lambda c: c.p)]
    ps = [r.p for r in reports]
    s = [r.scaled_bergman for r in reports]
    slope, _ = fit_slope(ps, s)
    by_p = {r.p: r.scaled_bergman for r in reports}
    ratios = [(p, 2 * p, by_p[p] / by_p[2 * p]) for p in ps if 2 * p in by_p]
    return DecaySweep(reports, slope, ratios)


@dataclass
class KernelCheck:
    p: int
    max_deviation: float
    rows_checked: int
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def toeplitz_kernel_check(cluster: SpectralCluster, f: FourierSymbol, max_rows: int = 256) -> KernelCheck:
    """Compare ``h^{2n} sum_y P(x,y) f(y) P(y,z)`` with ``V T_{f,p} V^*`` on sampled rows ``x``."""
    V = cluster.site_values()
    sites, r, d = V.shape
    stride = max(1, sites // max_rows)
    rows = np.arange(0, sites, stride)
    Vf = V.reshape(sites * r, d)
    Pfull = Vf @ Vf.conj().T  # (sites*r, sites*r)
    fvals = f.evaluate(grid_points(cluster.n, cluster.N))
    Fblock = np.zeros((sites * r, sites * r), dtype=complex) if r > 1 else None
    row_idx = (rows[:, None] * r + np.arange(r)[None, :]).ravel()
    if r == 1:
        direct = cluster.weight * (Pfull[row_idx] * fvals[:, 0, 0][None, :]) @ Pfull
    else:
        for s in range(sites):
            Fblock[s * r : (s + 1) * r, s * r : (s + 1) * r] = fvals[s]
        direct = cluster.weight * Pfull[row_idx] @ Fblock @ Pfull
    T = toeplitz(cluster, f).matrix
    via_basis = Vf[row_idx] @ T @ Vf.conj().T
    scale = max(1.0, float(np.max(np.abs(via_basis))))
    dev = float(np.max(np.abs(direct - via_basis))) / scale
    return KernelCheck(cluster.p, dev, len(rows))


def write_slice_csv(slc: KernelSlice, path) -> None:
    r = slc.values.shape[1]
    dim = slc.offsets.shape[1]
    head = [f"x{i}" for i in range(dim)] + [f"Z{i}" for i in range(dim)]
    for a in range(r):
        for b in range(r):
            head += [f"re_{a}{b}", f"im_{a}{b}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for z, val in zip(slc.offsets, slc.values):
            row = [repr(float(v)) for v in slc.base] + [repr(float(v)) for v in z]
            for a in range(r):
                for b in range(r):
                    row += [repr(float(val[a, b].real)), repr(float(val[a, b].imag))]
            w.writerow(row)
