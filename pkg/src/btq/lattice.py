"""Gauge-link lattice discretization of the renormalized Bochner Laplacian.

Sites of ``T^{2n}`` are ``i / N`` with ``x_1`` the fastest index, then ``y_1``,
``x_2``, ...  A state vector stores the ``rank_E`` fibre components of a site
contiguously (``index = site * rank_E + a``).

Links use the Landau gauge: ``U_x(s) = exp(+2 pi i F iy / N^2)`` and ``U_y`` is
trivial except on the wrap row ``iy = N - 1`` where ``U_y = exp(-2 pi i F ix / N)``,
with ``F = p + degree_E``.  Every counterclockwise plaquette then carries the
phase ``exp(-2 pi i F / N^2)``, matching ``R^L = -2 pi i omega``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import BundleSpec, TorusGeometry

__all__ = [
    "GridSpec",
    "MagneticOperator",
    "GaugeError",
    "ResolutionError",
    "resolution_floor",
    "auto_grid",
    "grid_points",
    "assemble",
    "total_flux",
    "apply",
    "gauge_transform",
    "lattice_symmetry",
]


class GaugeError(RuntimeError):
    """Plaquette phases do not close to an integer flux."""


class ResolutionError(ValueError):
    """Grid is below the resolution floor for the requested flux."""


def resolution_floor(p: int) -> int:
    """Minimum points per axis: ``8 * ceil(sqrt(p))`` (flux per plaquette <= 2 pi / 64)."""
    return 8 * math.ceil(math.sqrt(max(p, 0)))


def auto_grid(p_max: int) -> int:
    return max(resolution_floor(p_max), 8)


@dataclass(frozen=True)
class GridSpec:
    n: int
    N: int

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("need at least 3 points per axis")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def sites(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def weight(self) -> float:
        """Quadrature weight ``h^{2n}``."""
        return self.h ** (2 * self.n)

    @property
    def grid_id(self) -> str:
        return f"n{self.n}N{self.N}"

    def check_floor(self, p: int) -> None:
        floor = resolution_floor(p)
        if self.N < floor:
            raise ResolutionError(
                f"N={self.N} is below the resolution floor 8*ceil(sqrt({p}))={floor}; "
                f"flux per plaquette would be 2pi*{p}/{self.N ** 2}"
            )


def grid_indices(n: int, N: int) -> np.ndarray:
    """Integer coordinates of every site, shape ``(N^{2n}, 2n)``, x_1 fastest."""
    dim = 2 * n
    sites = np.arange(N**dim)
    return np.stack([(sites // N**a) % N for a in range(dim)], axis=1)


def grid_points(n: int, N: int) -> np.ndarray:
    return grid_indices(n, N) / N


@dataclass(frozen=True, eq=False)
class MagneticOperator:
    """Sparse Hermitian matrix of ``Delta_{p,Phi}`` plus its link data."""

    matrix: sp.csr_matrix = field(repr=False)
    links: dict = field(repr=False)  # (plane, "x"|"y") -> complex array over sites
    geometry: TorusGeometry = field(repr=False)
    bundle: BundleSpec = field(repr=False)
    grid: GridSpec
    orientation: int = 1

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def p(self) -> int:
        return self.bundle.p

    @property
    def rank(self) -> int:
        return self.bundle.rank_E

    @property
    def degree(self) -> int:
        return self.bundle.degree_E

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return apply(self, v)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm_bound(self) -> float:
        """Max absolute row sum, an upper bound for the spectral norm."""
        return float(np.max(np.asarray(abs(self.matrix).sum(axis=1)).ravel()))

    def neighbor(self, plane: int, axis: str, step: int = 1) -> np.ndarray:
        """Site index of ``s + step * e_axis`` for every site ``s``."""
        return _shift(self.n, self.N, 2 * plane + (0 if axis == "x" else 1), step)

    def plaquette_phases(self, plane: int) -> np.ndarray:
        """Counterclockwise product of the four link phases at every site."""
        Ux, Uy = self.links[(plane, "x")], self.links[(plane, "y")]
        sx = self.neighbor(plane, "x")
        sy = self.neighbor(plane, "y")
        return Ux * Uy[sx] * np.conj(Ux[sy]) * np.conj(Uy)

    def total_flux(self) -> list[int]:
        return total_flux(self)


def _shift(n: int, N: int, axis: int, step: int) -> np.ndarray:
    idx = grid_indices(n, N)
    idx[:, axis] = (idx[:, axis] + step) % N
    return idx @ (N ** np.arange(2 * n))


def _landau_links(n: int, N: int, flux: int, orientation: int) -> dict:
    idx = grid_indices(n, N)
    links = {}
    for j in range(n):
        ix, iy = idx[:, 2 * j], idx[:, 2 * j + 1]
        Ux = np.exp(orientation * 2j * np.pi * flux * iy / N**2)
        Uy = np.where(iy == N - 1, np.exp(-orientation * 2j * np.pi * flux * ix / N), 1.0 + 0j)
        links[(j, "x")] = Ux
        links[(j, "y")] = Uy
    return links


def _build_matrix(n: int, N: int, rank: int, links: dict, diag_blocks: np.ndarray) -> sp.csr_matrix:
    h2 = (1.0 / N) ** 2
    sites = N ** (2 * n)
    rows, cols, vals = [], [], []
    for j in range(n):
        for a, axis in enumerate("xy"):
            nb = _shift(n, N, 2 * j + a, 1)
            U = links[(j, axis)]
            for e in range(rank):
                rows.append(np.arange(sites) * rank + e)
                cols.append(nb * rank + e)
                vals.append(-U / h2)
    forward = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(sites * rank,) * 2
    ).tocsr()
    # block diagonal from per-site rank x rank blocks
    r_idx = (np.arange(sites)[:, None, None] * rank + np.arange(rank)[None, :, None]).repeat(rank, axis=2)
    c_idx = (np.arange(sites)[:, None, None] * rank + np.arange(rank)[None, None, :]).repeat(rank, axis=1)
    diag = sp.coo_matrix((diag_blocks.ravel(), (r_idx.ravel(), c_idx.ravel())), shape=(sites * rank,) * 2).tocsr()
    A = forward + forward.conj().T + diag
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble(
    geom: TorusGeometry,
    bundle: BundleSpec,
    grid: GridSpec,
    *,
    check_floor: bool = True,
    orientation: int = 1,
) -> MagneticOperator:
    """Five-point magnetic stencil (per 2-plane) for ``Delta_{p,Phi}``.

    ``(A psi)(x) = sum_mu [2 psi(x) - U_mu(x) psi(x+mu) - U_mu(x-mu)^* psi(x-mu)] / h^2
    - tau p psi(x) + Phi(x) psi(x)``.
    """
    if grid.n != geom.n:
        raise ValueError(f"grid has n={grid.n}, geometry has n={geom.n}")
    for name, val in (("p", bundle.p), ("degree_E", bundle.degree_E)):
        if int(val) != val:
            raise ValueError(f"{name} must be an integer flux, got {val!r}")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    flux = bundle.p + bundle.degree_E
    if check_floor:
        grid.check_floor(max(bundle.p, abs(flux)))
    n, N, rank = grid.n, grid.N, bundle.rank_E
    links = _landau_links(n, N, flux, orientation)
    h2 = grid.h**2
    phi = bundle.potential(n).evaluate(grid_points(n, N))
    phi = 0.5 * (phi + np.conj(np.swapaxes(phi, 1, 2)))
    shift = 4 * n / h2 - geom.tau * bundle.p
    blocks = phi + shift * np.eye(rank)[None, :, :]
    A = _build_matrix(n, N, rank, links, blocks)
    return MagneticOperator(matrix=A, links=links, geometry=geom, bundle=bundle, grid=grid, orientation=orientation)


def total_flux(op: MagneticOperator, tol: float = 1e-9) -> list[int]:
    """Integer flux per ``(x_j, y_j)`` plane from the summed plaquette angles."""
    out = []
    for j in range(op.n):
        angles = np.angle(op.plaquette_phases(j))
        # counterclockwise circulation -2 pi F / N^2 per plaquette
        total = -op.orientation * float(np.sum(angles)) / (2 * np.pi)
        per_plane_sum = total / op.N ** (2 * (op.n - 1))
        k = round(per_plane_sum)
        if abs(per_plane_sum - k) > tol:
            raise GaugeError(f"plane {j}: plaquette angles sum to non-integer flux {per_plane_sum!r}")
        out.append(int(k))
    return out


def apply(op: MagneticOperator, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != op.dimension:
        raise ValueError(f"vector has length {v.shape[0]}, operator dimension is {op.dimension}")
    return op.matrix @ v


def gauge_transform(op: MagneticOperator, theta: np.ndarray) -> MagneticOperator:
    """Operator in the trivialization multiplied by ``exp(i theta(x))``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (op.grid.sites,):
        raise ValueError("theta must have one entry per site")
    g = np.exp(1j * theta)
    links = {}
    for (j, axis), U in op.links.items():
        nb = op.neighbor(j, axis)
        links[(j, axis)] = g * U * np.conj(g[nb])
    G = sp.diags(np.repeat(g, op.rank))
    A = (G @ op.matrix @ G.conj().T).tocsr()
    A = 0.5 * (A + A.conj().T)
    return MagneticOperator(matrix=A.tocsr(), links=links, geometry=op.geometry, bundle=op.bundle,
                            grid=op.grid, orientation=op.orientation)


def lattice_symmetry(op: MagneticOperator, axis: int, steps: int, tol: float = 1e-10) -> sp.csr_matrix:
    """Magnetic translation by ``steps`` sites along real ``axis`` as a sparse unitary.

    The translation is dressed with the site phase that makes it commute with
    the hopping terms; raises ``ValueError`` if no such phase exists.
    Rank-1 bundles only.
    """
    if op.rank != 1:
        raise ValueError("lattice_symmetry supports rank_E = 1")
    A = op.matrix.tocoo()
    sigma = _shift(op.n, op.N, axis, steps)
    Acsr = op.matrix.tocsr()
    sites = op.grid.sites
    # diagonal must be translation invariant
    d = Acsr.diagonal()
    if np.max(np.abs(d - d[sigma])) > tol * max(1.0, np.max(np.abs(d))):
        raise ValueError("diagonal is not translation invariant")
    off = A.row != A.col
    r, c, v = A.row[off], A.col[off], A.data[off]
    shifted = np.asarray(Acsr[sigma[r], sigma[c]]).ravel()
    if np.any(np.abs(shifted) < tol):
        raise ValueError("translation does not preserve the stencil")
    ratio = v / shifted  # required exp(i (chi(r) - chi(c)))
    adj: list[list[tuple[int, complex]]] = [[] for _ in range(sites)]
    for a, b, w in zip(r, c, ratio):
        adj[a].append((b, w))
    phase = np.full(sites, np.nan + 0j)
    phase[0] = 1.0
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b, w in adj[a]:
            # phase[a] * conj(phase[b]) = w
            want = np.conj(w) * phase[a]
            if np.isnan(phase[b]):
                phase[b] = want
                queue.append(b)
            elif abs(phase[b] - want) > 1e-8:
                raise ValueError("no gauge phase makes this translation a symmetry")
    S = sp.coo_matrix((phase, (np.arange(sites), sigma)), shape=(sites, sites)).tocsr()
    return S
