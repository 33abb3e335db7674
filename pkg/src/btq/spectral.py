"""Bound-state cluster of ``Delta_{p,Phi}`` and its certification."""

from __future__ import annotations

import math
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .geometry import BundleSpec, FourierSymbol, make_torus
from .lattice import GridSpec, MagneticOperator, assemble, auto_grid

__all__ = [
    "SpectralCluster",
    "GapCertificate",
    "DimensionReport",
    "NoGapFound",
    "NotConverged",
    "BasisFormatError",
    "solve_cluster",
    "select_cluster",
    "default_count",
    "riemann_roch",
    "dimension_report",
    "save_basis",
    "load_basis",
    "cluster_for",
    "solve_sweep",
]

GAP_RATIO_MIN = 10.0
DENSE_LIMIT = 4096


class NoGapFound(RuntimeError):
    pass


class NotConverged(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


class BasisFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GapCertificate:
    max_cluster: float  # largest |eigenvalue| inside the cluster
    min_excited: float
    gap_ratio: float  # min_excited / (2 mu0 p)
    effective_CL: float

    def as_dict(self) -> dict:
        return {
            "max_cluster": self.max_cluster,
            "min_excited": self.min_excited,
            "gap_ratio": self.gap_ratio,
            "effective_CL": self.effective_CL,
        }


@dataclass(frozen=True, eq=False)
class SpectralCluster:
    """Eigenpairs spanning ``H_p``.

    ``eigenvectors`` columns are orthonormal for ``<u, v> = h^{2n} sum_x <u(x), v(x)>``.
    """

    eigenvalues: np.ndarray  # ascending: cluster then the computed excited values
    d_p: int
    eigenvectors: np.ndarray = field(repr=False)
    n: int
    N: int
    p: int
    rank_E: int = 1
    degree_E: int = 0
    seed: int | None = None
    method: str = "dense"
    gap: GapCertificate | None = None

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.N)

    @property
    def weight(self) -> float:
        return self.grid.weight

    @property
    def dimension(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def cluster_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[: self.d_p]

    @property
    def excited_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[self.d_p :]

    @property
    def width(self) -> float:
        """Largest distance of a cluster eigenvalue from 0."""
        return float(np.max(np.abs(self.cluster_eigenvalues)))

    def gram(self) -> np.ndarray:
        V = self.eigenvectors
        return self.weight * (V.conj().T @ V)

    def site_values(self) -> np.ndarray:
        """Eigenvectors as ``(sites, rank_E, d_p)``."""
        return self.eigenvectors.reshape(self.grid.sites, self.rank_E, self.d_p)

    def rotated(self, U: np.ndarray) -> "SpectralCluster":
        """Same span, basis multiplied by the unitary ``U``."""
        return replace(self, eigenvectors=self.eigenvectors @ U)


def default_count(bundle: BundleSpec, n: int) -> int:
    return bundle.rank_E * max(bundle.p + abs(bundle.degree_E), 0) ** n + 4


def _fix_phases(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    ph = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(ph) / ph)[None, :]


def select_cluster(eigenvalues: np.ndarray, mu0p: float, min_ratio: float = GAP_RATIO_MIN) -> int:
    """Cluster size at the largest ratio ``lam[k+1] / max(lam[k], 1)`` with ``lam[k] < mu0 p``."""
    lam = np.asarray(eigenvalues)
    best, best_ratio = -1, -np.inf
    for k in range(len(lam) - 1):
        if lam[k] >= mu0p:
            break
        ratio = lam[k + 1] / max(lam[k], 1.0)
        if ratio > best_ratio:
            best, best_ratio = k, ratio
    if best < 0 or best_ratio <= min_ratio:
        raise NoGapFound(
            f"no eigenvalue ratio above {min_ratio} below mu0*p={mu0p:.4g} "
            f"(best {best_ratio:.3g}; computed {len(lam)} eigenvalues, max {lam[-1]:.4g})"
        )
    return best + 1


def _lanczos(op: MagneticOperator, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    D = op.dimension
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    ncv = min(D, max(2 * k + 1, k + 32))
    w, V = spla.eigsh(op.matrix, k=k, which="SA", v0=v0, ncv=ncv, tol=1e-12, maxiter=20 * D)
    # Rayleigh-Ritz on the returned span cleans up near-degenerate clusters
    Q, _ = np.linalg.qr(V)
    H = Q.conj().T @ (op.matrix @ Q)
    w, S = np.linalg.eigh(0.5 * (H + H.conj().T))
    return w, Q @ S


def solve_cluster(
    op: MagneticOperator,
    count_hint: int | None = None,
    *,
    seed: int = 0,
    method: str = "auto",
    residual_tol: float = 1e-8,
) -> SpectralCluster:
    """Lowest ``count_hint`` eigenpairs and the bound-state cluster among them."""
    D = op.dimension
    k = count_hint if count_hint is not None else default_count(op.bundle, op.n)
    if method == "auto":
        method = "dense" if D <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        k = min(k, D)
        w, V = sla.eigh(op.matrix.toarray(), subset_by_index=[0, k - 1], driver="evr")
    elif method == "lanczos":
        k = min(k, D - 2)
        w, V = _lanczos(op, k, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    scale = op.norm_bound()
    res = np.linalg.norm(op.matrix @ V - V * w[None, :], axis=0)
    if np.any(res > residual_tol * scale):
        raise NotConverged(f"residuals up to {res.max():.3g} exceed {residual_tol:g} * ||A|| = {residual_tol * scale:.3g}", res)
    mu0 = op.geometry.mu0
    d_p = select_cluster(w, mu0 * op.p)
    Vc = _fix_phases(V[:, :d_p]) / math.sqrt(op.grid.weight)
    cert = _certificate(w, d_p, mu0 * op.p)
    return SpectralCluster(
        eigenvalues=w.copy(),
        d_p=d_p,
        eigenvectors=Vc,
        n=op.n,
        N=op.N,
        p=op.p,
        rank_E=op.rank,
        degree_E=op.degree,
        seed=seed,
        method=method,
        gap=cert,
    )


def _certificate(w: np.ndarray, d_p: int, mu0p: float) -> GapCertificate:
    max_cluster = float(np.max(np.abs(w[:d_p])))
    min_excited = float(w[d_p]) if len(w) > d_p else math.inf
    ratio = min_excited / (2 * mu0p) if mu0p > 0 else math.inf
    cl = max(max_cluster, 2 * mu0p - min_excited)
    return GapCertificate(max_cluster, min_excited, ratio, cl)


def riemann_roch(n: int, p: int, rank_E: int = 1, degree_E: int = 0) -> int:
    """``dim H_p`` on the flat torus: ``rank_E p^n`` (trivial E) or ``(p + q)^n``."""
    if degree_E != 0:
        return (p + degree_E) ** n
    return rank_E * p**n


@dataclass(frozen=True)
class DimensionReport:
    p: int
    d_p: int
    expected: int
    rank_E: int
    degree_E: int

    @property
    def passed(self) -> bool:
        return self.d_p == self.expected

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


def dimension_report(cluster: SpectralCluster, bundle: BundleSpec | None = None) -> DimensionReport:
    rank = bundle.rank_E if bundle is not None else cluster.rank_E
    q = bundle.degree_E if bundle is not None else cluster.degree_E
    expected = riemann_roch(cluster.n, cluster.p, rank, q)
    return DimensionReport(cluster.p, cluster.d_p, expected, rank, q)


# --- eigenbasis cache -------------------------------------------------------

MAGIC = b"BTQ1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIiII")


def save_basis(cluster: SpectralCluster, path) -> None:
    """Write the little-endian ``BTQ1`` eigenbasis file (atomic rename)."""
    extra = len(cluster.eigenvalues) - cluster.d_p
    header = _HEADER.pack(
        MAGIC, VERSION, cluster.n, cluster.N, cluster.p, cluster.rank_E, cluster.degree_E, cluster.d_p, extra
    )
    vals = np.ascontiguousarray(cluster.eigenvalues, dtype="<f8").tobytes()
    vecs = np.asfortranarray(cluster.eigenvectors).astype("<c16", order="F").tobytes(order="F")
    payload = header + vals + vecs
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload + crc)
    tmp.replace(path)


def load_basis(path, *, method: str = "cache") -> SpectralCluster:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 4:
        raise BasisFormatError("file truncated before header end")
    magic, version, n, N, p, rank, degree, d_p, extra = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BasisFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BasisFormatError(f"unsupported version {version}")
    D = rank * N ** (2 * n)
    nvals = d_p + extra
    expected = _HEADER.size + 8 * nvals + 16 * D * d_p + 4
    if len(data) != expected:
        raise BasisFormatError(f"file has {len(data)} bytes, header implies {expected}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise BasisFormatError("checksum mismatch")
    off = _HEADER.size
    vals = np.frombuffer(data, dtype="<f8", count=nvals, offset=off).astype(float)
    off += 8 * nvals
    vecs = np.frombuffer(data, dtype="<c16", count=D * d_p, offset=off).reshape((D, d_p), order="F").astype(complex)
    geom = make_torus(n)
    cert = _certificate(vals, d_p, geom.mu0 * p)
    return SpectralCluster(
        eigenvalues=vals, d_p=d_p, eigenvectors=vecs, n=n, N=N, p=p, rank_E=rank, degree_E=degree,
        seed=None, method=method, gap=cert,
    )


# --- p-sweeps ---------------------------------------------------------------


def cluster_for(
    p: int,
    *,
    n: int = 1,
    N: int | None = None,
    rank_E: int = 1,
    degree_E: int = 0,
    Phi: FourierSymbol | None = None,
    seed: int = 0,
    method: str = "auto",
    count_hint: int | None = None,
) -> SpectralCluster:
    """Assemble and solve one point of a sweep."""
    geom = make_torus(n)
    bundle = BundleSpec(p=p, rank_E=rank_E, degree_E=degree_E, Phi=Phi)
    grid = GridSpec(n, N if N is not None else auto_grid(p))
    op = assemble(geom, bundle, grid)
    return solve_cluster(op, count_hint, seed=seed, method=method)


def _cluster_task(args):
    p, kwargs = args
    return cluster_for(p, **kwargs)


def solve_sweep(p_list: Sequence[int], *, jobs: int = 1, **kwargs) -> list[SpectralCluster]:
    """Solve every ``p`` independently; results are ordered like ``p_list``."""
    tasks = [(p, kwargs) for p in p_list]
    if jobs <= 1 or len(tasks) <= 1:
        return [_cluster_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cluster_task, tasks))
