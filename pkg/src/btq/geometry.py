"""Quantized flat torus, bundle data and the Fourier observable algebra.

Observables are finite Fourier series ``f(x) = sum_k c_k exp(2 pi i k.x)`` with
matrix coefficients, so derivatives, brackets and Taylor jets are exact.
Real coordinates are ordered ``(x_1, y_1, x_2, y_2, ...)`` throughout and the
complex structure is ``z_j = x_j + i y_j``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

TWO_PI = 2.0 * np.pi

__all__ = [
    "TorusGeometry",
    "BundleSpec",
    "FourierSymbol",
    "Jet",
    "SymbolFormatError",
    "make_torus",
    "poisson_bracket",
    "sup_norm",
    "jet_at",
    "multi_indices",
    "parse_symbol",
    "load_symbol",
    "format_symbol",
    "parse_jet",
    "load_jet",
    "format_jet",
]


class SymbolFormatError(ValueError):
    """Malformed symbol or jet file; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where += f"{source}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.lineno = lineno
        self.source = source


def multi_indices(dim: int, max_order: int, min_order: int = 0) -> list[tuple[int, ...]]:
    """All multi-indices of length ``dim`` with ``min_order <= |alpha| <= max_order``,
    graded by total order then lexicographically."""
    out = []
    for order in range(min_order, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(dim), order):
            alpha = [0] * dim
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    # combinations_with_replacement yields ascending axis tuples; reverse-lex reads nicer
    return sorted(out, key=lambda a: (sum(a), tuple(-v for v in a)))


def _factorial(alpha: tuple[int, ...]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


@dataclass(frozen=True)
class TorusGeometry:
    """The standard quantized torus ``R^{2n} / Z^{2n}`` with ``omega = sum dx_j ^ dy_j``.

    ``curvature_eigenvalues`` are the eigenvalues ``a_j`` of the Hermitian
    matrix representing ``R^L = -2 pi i omega`` on ``T^{(1,0)}X``.
    """

    n: int
    omega: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    metric: np.ndarray = field(repr=False)
    curvature_eigenvalues: np.ndarray = field(repr=False)
    volume: float = 1.0

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def mu0(self) -> float:
        return float(np.min(self.curvature_eigenvalues))

    @property
    def tau(self) -> float:
        return float(np.sum(self.curvature_eigenvalues))

    def holomorphic_frame(self) -> np.ndarray:
        """Columns ``w_j = (e_{x_j} - i e_{y_j}) / sqrt 2`` spanning ``T^{(1,0)}``."""
        W = np.zeros((self.dim, self.n), dtype=complex)
        for j in range(self.n):
            W[2 * j, j] = 1.0 / np.sqrt(2.0)
            W[2 * j + 1, j] = -1j / np.sqrt(2.0)
        return W

    def flux(self, p: int) -> list[int]:
        """Flux of ``p * omega`` through each coordinate 2-torus."""
        return [int(round(p * self.omega[2 * j, 2 * j + 1])) for j in range(self.n)]


def make_torus(n: int = 1) -> TorusGeometry:
    if int(n) != n or n < 1:
        raise ValueError(f"complex dimension must be a positive integer, got {n!r}")
    n = int(n)
    dim = 2 * n
    omega = np.zeros((dim, dim))
    J = np.zeros((dim, dim))
    for j in range(n):
        x, y = 2 * j, 2 * j + 1
        omega[x, y], omega[y, x] = 1.0, -1.0
        # J e_x = e_y, J e_y = -e_x
        J[y, x], J[x, y] = 1.0, -1.0
    # g(u, v) = omega(u, J v)
    metric = omega @ J
    # R^L(W, Y) for W, Y in T^{(1,0)}: Rdot_{jk} = R^L(w_j, conj w_k)
    W = np.zeros((dim, n), dtype=complex)
    for j in range(n):
        W[2 * j, j] = 1.0 / np.sqrt(2.0)
        W[2 * j + 1, j] = -1j / np.sqrt(2.0)
    R = -2j * np.pi * omega
    Rdot = W.T @ R @ W.conj()
    a = np.linalg.eigvalsh(0.5 * (Rdot + Rdot.conj().T))
    return TorusGeometry(n=n, omega=omega, J=J, metric=metric, curvature_eigenvalues=a)


def _as_key(k: Iterable[int], dim: int) -> tuple[int, ...]:
    key = tuple(int(v) for v in k)
    if len(key) != dim:
        raise ValueError(f"wave vector {key} has length {len(key)}, expected {dim}")
    return key


class FourierSymbol:
    """Matrix-valued trigonometric polynomial on ``T^{2n}``.

    ``terms`` maps integer wave vectors (length ``2n``) to ``rank x rank``
    coefficient matrices (scalars are accepted for rank 1).  Instances are
    immutable; arithmetic returns new symbols.
    """

    __slots__ = ("_terms", "n", "rank", "_hermitian")

    def __init__(
        self,
        terms: Mapping[Iterable[int], object],
        n: int = 1,
        rank: int | None = None,
        hermitian: bool | None = None,
        tol: float = 0.0,
    ):
        dim = 2 * n
        clean: dict[tuple[int, ...], np.ndarray] = {}
        for k, c in terms.items():
            arr = np.atleast_2d(np.asarray(c, dtype=complex))
            if rank is None:
                rank = arr.shape[0]
            if arr.shape != (rank, rank):
                raise ValueError(f"coefficient for {tuple(k)} has shape {arr.shape}, expected {(rank, rank)}")
            key = _as_key(k, dim)
            if key in clean:
                arr = clean[key] + arr
            clean[key] = arr
        if rank is None:
            rank = 1
        clean = {k: v for k, v in clean.items() if np.max(np.abs(v)) > tol}
        for v in clean.values():
            v.setflags(write=False)
        self._terms = clean
        self.n = n
        self.rank = rank
        self._hermitian = self._check_hermitian()
        if hermitian and not self._hermitian:
            raise ValueError("symbol is not Hermitian: c_{-k} != c_k^*")

    # construction helpers
    @classmethod
    def constant(cls, value, n: int = 1, rank: int | None = None) -> "FourierSymbol":
        arr = np.asarray(value, dtype=complex)
        if arr.ndim == 0:
            arr = arr * np.eye(rank or 1)
        return cls({(0,) * (2 * n): arr}, n=n)

    @classmethod
    def zero(cls, n: int = 1, rank: int = 1) -> "FourierSymbol":
        return cls({}, n=n, rank=rank)

    @classmethod
    def cos(cls, k: Iterable[int], amplitude: float = 1.0, n: int = 1) -> "FourierSymbol":
        """``amplitude * cos(2 pi k.x)``."""
        k = _as_key(k, 2 * n)
        mk = tuple(-v for v in k)
        return cls({k: amplitude / 2, mk: amplitude / 2}, n=n)

    @classmethod
    def sin(cls, k: Iterable[int], amplitude: float = 1.0, n: int = 1) -> "FourierSymbol":
        k = _as_key(k, 2 * n)
        mk = tuple(-v for v in k)
        return cls({k: amplitude / 2j, mk: -amplitude / 2j}, n=n)

    @classmethod
    def plane_wave(cls, k: Iterable[int], coeff=1.0, n: int = 1) -> "FourierSymbol":
        return cls({_as_key(k, 2 * n): coeff}, n=n)

    # basic accessors
    @property
    def terms(self) -> dict[tuple[int, ...], np.ndarray]:
        return dict(self._terms)

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def hermitian(self) -> bool:
        return self._hermitian

    def support(self) -> set[tuple[int, ...]]:
        return set(self._terms)

    def max_frequency(self) -> int:
        return max((max(abs(v) for v in k) for k in self._terms), default=0)

    def coefficient(self, k: Iterable[int]) -> np.ndarray:
        key = _as_key(k, self.dim)
        if key in self._terms:
            return self._terms[key]
        return np.zeros((self.rank, self.rank), dtype=complex)

    def _check_hermitian(self) -> bool:
        for k, c in self._terms.items():
            mk = tuple(-v for v in k)
            other = self._terms.get(mk)
            if other is None:
                return False
            scale = max(1.0, float(np.max(np.abs(c))))
            if np.max(np.abs(other - c.conj().T)) > 1e-14 * scale:
                return False
        return True

    def is_constant(self) -> bool:
        return all(not any(k) for k in self._terms)

    # evaluation
    def evaluate(self, points) -> np.ndarray:
        """Values at ``points`` of shape ``(M, 2n)`` as an ``(M, rank, rank)`` array."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            raise ValueError(f"points have {pts.shape[-1]} coordinates, expected {self.dim}")
        out = np.zeros((pts.shape[0], self.rank, self.rank), dtype=complex)
        if not self._terms:
            return out
        keys = np.array(list(self._terms), dtype=float)
        coeffs = np.stack(list(self._terms.values()))
        phases = np.exp(1j * TWO_PI * (pts @ keys.T))
        return np.einsum("mk,kab->mab", phases, coeffs)

    def __call__(self, *coords) -> np.ndarray:
        """Evaluate at one point given as separate coordinates; rank-1 returns a scalar."""
        val = self.evaluate(np.array(coords, dtype=float).reshape(1, -1))[0]
        return val[0, 0] if self.rank == 1 else val

    def on_grid(self, N: int) -> np.ndarray:
        """Samples at the lattice sites ``i/N`` in site order (x_1 fastest)."""
        from .lattice import grid_points

        return self.evaluate(grid_points(self.n, N))

    # algebra
    def _check_compatible(self, other: "FourierSymbol") -> None:
        if other.n != self.n or other.rank != self.rank:
            raise ValueError(
                f"incompatible symbols: (n={self.n}, rank={self.rank}) vs (n={other.n}, rank={other.rank})"
            )

    def __add__(self, other):
        if not isinstance(other, FourierSymbol):
            other = FourierSymbol.constant(other, n=self.n, rank=self.rank)
        self._check_compatible(other)
        terms = {k: v.copy() for k, v in self._terms.items()}
        for k, v in other._terms.items():
            terms[k] = terms[k] + v if k in terms else v.copy()
        return FourierSymbol(terms, n=self.n, rank=self.rank)

    __radd__ = __add__

    def __neg__(self):
        return FourierSymbol({k: -v for k, v in self._terms.items()}, n=self.n, rank=self.rank)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierSymbol):
            self._check_compatible(other)
            terms: dict[tuple[int, ...], np.ndarray] = {}
            for k1, c1 in self._terms.items():
                for k2, c2 in other._terms.items():
                    k = tuple(a + b for a, b in zip(k1, k2))
                    prod = c1 @ c2
                    terms[k] = terms[k] + prod if k in terms else prod
            return FourierSymbol(terms, n=self.n, rank=self.rank)
        scal = np.asarray(other, dtype=complex)
        if scal.ndim == 0:
            return FourierSymbol({k: v * scal for k, v in self._terms.items()}, n=self.n, rank=self.rank)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, FourierSymbol):
            return other.__mul__(self)
        return self.__mul__(other)

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def matmul_const(self, left=None, right=None) -> "FourierSymbol":
        """``left @ f @ right`` with constant matrices."""
        L = np.eye(self.rank) if left is None else np.asarray(left)
        R = np.eye(self.rank) if right is None else np.asarray(right)
        return FourierSymbol({k: L @ v @ R for k, v in self._terms.items()}, n=self.n, rank=self.rank)

    def adjoint(self) -> "FourierSymbol":
        """Pointwise Hermitian adjoint ``f(x)^*``."""
        return FourierSymbol(
            {tuple(-v for v in k): c.conj().T for k, c in self._terms.items()}, n=self.n, rank=self.rank
        )

    def derivative(self, alpha: Iterable[int]) -> "FourierSymbol":
        """Exact ``d^alpha f`` in the real coordinates."""
        alpha = _as_key(alpha, self.dim)
        terms = {}
        for k, c in self._terms.items():
            factor = np.prod([(1j * TWO_PI * kk) ** a for kk, a in zip(k, alpha)])
            if factor != 0:
                terms[k] = c * factor
        return FourierSymbol(terms, n=self.n, rank=self.rank)

    def d(self, axis: int, order: int = 1) -> "FourierSymbol":
        alpha = [0] * self.dim
        alpha[axis] = order
        return self.derivative(alpha)

    def allclose(self, other: "FourierSymbol", atol: float = 1e-12) -> bool:
        diff = self - other
        return all(np.max(np.abs(v)) <= atol for v in diff._terms.values())

    def digest(self) -> str:
        """SHA-256 over the exact coefficient bytes (order independent)."""
        h = hashlib.sha256()
        h.update(f"n={self.n};rank={self.rank};".encode())
        for k in sorted(self._terms):
            h.update(np.asarray(k, dtype="<i8").tobytes())
            h.update(np.ascontiguousarray(self._terms[k], dtype="<c16").tobytes())
        return h.hexdigest()

    def __repr__(self) -> str:
        return f"FourierSymbol(n={self.n}, rank={self.rank}, terms={len(self._terms)}, hermitian={self._hermitian})"


@dataclass(frozen=True)
class BundleSpec:
    """Data of ``L^p (x) E``: tensor power, rank and degree of ``E``, potential ``Phi``."""

    p: int
    rank_E: int = 1
    degree_E: int = 0
    Phi: FourierSymbol | None = None

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise ValueError(f"p must be a non-negative integer, got {self.p!r}")
        if self.rank_E < 1:
            raise ValueError("rank_E must be positive")
        if self.degree_E != 0 and self.rank_E > 1:
            raise ValueError("degree_E must be 0 when rank_E > 1 (only line bundles are twisted)")
        if self.Phi is not None:
            if self.Phi.rank != self.rank_E:
                raise ValueError(f"Phi has rank {self.Phi.rank}, bundle has rank {self.rank_E}")
            if not self.Phi.hermitian:
                raise ValueError("Phi must be a Hermitian symbol")

    @property
    def total_flux(self) -> int:
        return self.p + self.degree_E

    def potential(self, n: int) -> FourierSymbol:
        return self.Phi if self.Phi is not None else FourierSymbol.zero(n=n, rank=self.rank_E)


def poisson_bracket(f: FourierSymbol, g: FourierSymbol) -> FourierSymbol:
    """Exact ``{f, g}`` for the symplectic form ``2 pi omega``.

    ``{f, g} = (1/2pi) sum_j (df/dy_j dg/dx_j - df/dx_j dg/dy_j)``.
    """
    if f.rank != 1 or g.rank != 1:
        raise ValueError("poisson_bracket is defined for scalar symbols only")
    if f.n != g.n:
        raise ValueError("symbols live on different tori")
    out = FourierSymbol.zero(n=f.n)
    for j in range(f.n):
        x, y = 2 * j, 2 * j + 1
        out = out + f.d(y) * g.d(x) - f.d(x) * g.d(y)
    return out / TWO_PI


def sup_norm(f: FourierSymbol, samples: int | None = None) -> float:
    """Max over a uniform sample grid of the largest singular value of ``f(x)``.

    This is a lower bound for the true sup norm that converges under grid
    refinement; the default grid resolves the highest frequency 16 times.
    """
    if not f.terms:
        return 0.0
    if f.is_constant():
        return float(np.linalg.norm(f.coefficient((0,) * f.dim), 2))
    if samples is None:
        samples = max(64, 16 * f.max_frequency())
        # cap total evaluation count in higher dimensions
        samples = min(samples, int(round(2.0e6 ** (1.0 / f.dim))))
    axes = [np.arange(samples) / samples] * f.dim
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, f.dim)
    best = 0.0
    for start in range(0, mesh.shape[0], 65536):
        vals = f.evaluate(mesh[start : start + 65536])
        if f.rank == 1:
            best = max(best, float(np.max(np.abs(vals[:, 0, 0]))))
        else:
            best = max(best, float(np.max(np.linalg.norm(vals, ord=2, axis=(1, 2)))))
    return best


@dataclass(frozen=True)
class Jet:
    """Truncated Taylor expansion ``f(x0 + Y) ~ sum_alpha c_alpha Y^alpha``.

    ``coeffs[alpha] = d^alpha f(x0) / alpha!`` as ``rank x rank`` matrices, with
    ``Y`` in the real coordinates ``(x_1, y_1, ...)``.
    """

    base: tuple[float, ...]
    order: int
    coeffs: Mapping[tuple[int, ...], np.ndarray]
    rank: int = 1

    @property
    def dim(self) -> int:
        return len(self.base)

    @property
    def n(self) -> int:
        return self.dim // 2

    @classmethod
    def from_polynomial(cls, coeffs: Mapping[Iterable[int], object], order: int | None = None,
                        base=None, dim: int = 2, rank: int | None = None) -> "Jet":
        clean = {}
        for alpha, c in coeffs.items():
            arr = np.atleast_2d(np.asarray(c, dtype=complex))
            key = _as_key(alpha, dim)
            clean[key] = clean[key] + arr if key in clean else arr
        if rank is None:
            rank = next(iter(clean.values())).shape[0] if clean else 1
        if order is None:
            order = max((sum(a) for a in clean), default=0)
        clean = {a: c for a, c in clean.items() if sum(a) <= order}
        base = tuple(float(v) for v in (base if base is not None else (0.0,) * dim))
        return cls(base=base, order=order, coeffs=clean, rank=rank)

    @classmethod
    def constant(cls, value, dim: int = 2, order: int = 0, rank: int | None = None) -> "Jet":
        arr = np.asarray(value, dtype=complex)
        if arr.ndim == 0:
            arr = arr * np.eye(rank or 1)
        return cls.from_polynomial({(0,) * dim: arr}, order=order, dim=dim)

    def coefficient(self, alpha: Iterable[int]) -> np.ndarray:
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ValueError(f"jet of order {self.order} has no coefficient for {alpha}")
        c = self.coeffs.get(alpha)
        return c if c is not None else np.zeros((self.rank, self.rank), dtype=complex)

    def derivative_value(self, alpha: Iterable[int]) -> np.ndarray:
        """``d^alpha f(x0)``."""
        alpha = tuple(alpha)
        return self.coefficient(alpha) * _factorial(alpha)

    def value(self) -> np.ndarray:
        return self.coefficient((0,) * self.dim)

    def complex_gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """``(d/dz_j f(x0), d/dzbar_j f(x0))`` stacked over ``j``."""
        dz, dzb = [], []
        for j in range(self.n):
            ex = [0] * self.dim
            ey = [0] * self.dim
            ex[2 * j] = 1
            ey[2 * j + 1] = 1
            fx, fy = self.derivative_value(ex), self.derivative_value(ey)
            dz.append((fx - 1j * fy) / 2)
            dzb.append((fx + 1j * fy) / 2)
        return np.array(dz), np.array(dzb)

    # polynomial arithmetic on jets (truncated at the smaller order)
    def truncate(self, order: int) -> "Jet":
        return Jet(self.base, min(order, self.order), {a: c for a, c in self.coeffs.items() if sum(a) <= order}, self.rank)

    def __add__(self, other: "Jet") -> "Jet":
        order = min(self.order, other.order)
        out = {a: c for a, c in self.coeffs.items() if sum(a) <= order}
        for a, c in other.coeffs.items():
            if sum(a) <= order:
                out[a] = out[a] + c if a in out else c
        return Jet(self.base, order, out, self.rank)

    def __sub__(self, other: "Jet") -> "Jet":
        return self + other.scale(-1.0)

    def scale(self, s) -> "Jet":
        return Jet(self.base, self.order, {a: c * s for a, c in self.coeffs.items()}, self.rank)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.scale(other)
        order = min(self.order, other.order)
        out: dict[tuple[int, ...], np.ndarray] = {}
        for a, ca in self.coeffs.items():
            for b, cb in other.coeffs.items():
                k = tuple(x + y for x, y in zip(a, b))
                if sum(k) > order:
                    continue
                prod = ca @ cb
                out[k] = out[k] + prod if k in out else prod
        return Jet(self.base, order, out, self.rank)

    def diff(self, alpha: Iterable[int]) -> "Jet":
        """Jet of ``d^alpha f`` (order drops by ``|alpha|``)."""
        alpha = tuple(alpha)
        k = sum(alpha)
        if k > self.order:
            raise ValueError("differentiation order exceeds jet order")
        out = {}
        for a, c in self.coeffs.items():
            if all(x >= y for x, y in zip(a, alpha)):
                b = tuple(x - y for x, y in zip(a, alpha))
                factor = _factorial(a) // _factorial(b)
                out[b] = c * factor
        return Jet(self.base, self.order - k, out, self.rank)

    def adjoint(self) -> "Jet":
        return Jet(self.base, self.order, {a: c.conj().T for a, c in self.coeffs.items()}, self.rank)

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(c))) for c in self.coeffs.values()), default=0.0)


def jet_at(f: FourierSymbol, x0, m: int) -> Jet:
    """Exact order-``m`` Taylor jet of ``f`` at ``x0`` by term-wise differentiation."""
    if m < 0:
        raise ValueError("jet order must be non-negative")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != f.dim:
        raise ValueError(f"base point has {x0.size} coordinates, expected {f.dim}")
    coeffs = {}
    keys = list(f.terms.items())
    for alpha in multi_indices(f.dim, m):
        acc = np.zeros((f.rank, f.rank), dtype=complex)
        for k, c in keys:
            factor = np.prod([(1j * TWO_PI * kk) ** a for kk, a in zip(k, alpha)])
            if factor != 0:
                acc = acc + c * (factor * np.exp(1j * TWO_PI * np.dot(k, x0)))
        coeffs[alpha] = acc / _factorial(alpha)
    return Jet(tuple(x0.tolist()), m, coeffs, f.rank)


# --- text formats -----------------------------------------------------------


def _split_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_int(tok: str, lineno: int, source, what: str) -> int:
    try:
        val = int(tok)
    except ValueError:
        raise SymbolFormatError(f"{what} must be an integer, got {tok!r}", lineno, source) from None
    return val


def _parse_float(tok: str, lineno: int, source, what: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise SymbolFormatError(f"{what} must be a number, got {tok!r}", lineno, source) from None
    if not math.isfinite(val):
        raise SymbolFormatError(f"{what} is not finite", lineno, source)
    return val


def _parse_entries(text: str, key_len: int, source, key_name: str, rank: int | None):
    entries = []
    for lineno, line in _split_lines(text):
        toks = line.split()
        if len(toks) == key_len + 2:
            row = col = 0
        elif len(toks) == key_len + 4:
            row = _parse_int(toks[-2], lineno, source, "row")
            col = _parse_int(toks[-1], lineno, source, "col")
            if row < 0 or col < 0:
                raise SymbolFormatError("matrix indices must be non-negative", lineno, source)
        else:
            raise SymbolFormatError(
                f"expected {key_len + 2} or {key_len + 4} fields ({key_name} re im [row col]), got {len(toks)}",
                lineno,
                source,
            )
        key = tuple(_parse_int(t, lineno, source, key_name) for t in toks[:key_len])
        re = _parse_float(toks[key_len], lineno, source, "re")
        im = _parse_float(toks[key_len + 1], lineno, source, "im")
        entries.append((lineno, key, row, col, complex(re, im)))
    inferred = max((max(r, c) + 1 for _, _, r, c, _ in entries), default=1)
    if rank is None:
        rank = inferred
    elif inferred > rank:
        bad = next(ln for ln, _, r, c, _ in entries if max(r, c) >= rank)
        raise SymbolFormatError(f"matrix index out of range for rank {rank}", bad, source)
    return entries, rank


def parse_symbol(text: str, n: int = 1, rank: int | None = None, source: str | None = None) -> FourierSymbol:
    """Parse lines ``k_1 ... k_{2n} re im [row col]``; repeated keys accumulate."""
    entries, rank = _parse_entries(text, 2 * n, source, "wave-vector component", rank)
    terms: dict[tuple[int, ...], np.ndarray] = {}
    for _, key, row, col, val in entries:
        mat = terms.setdefault(key, np.zeros((rank, rank), dtype=complex))
        mat[row, col] += val
    if not terms:
        return FourierSymbol.zero(n=n, rank=rank)
    return FourierSymbol(terms, n=n, rank=rank)


def load_symbol(path, n: int = 1, rank: int | None = None) -> FourierSymbol:
    path = Path(path)
    return parse_symbol(path.read_text(), n=n, rank=rank, source=str(path))


def format_symbol(f: FourierSymbol) -> str:
    lines = [f"# Fourier symbol: n={f.n} rank={f.rank}", "# " + " ".join(f"k{i}" for i in range(f.dim)) + " re im row col"]
    for k in sorted(f.terms):
        c = f.terms[k]
        for r in range(f.rank):
            for s in range(f.rank):
                if c[r, s] != 0:
                    ks = " ".join(str(v) for v in k)
                    lines.append(f"{ks} {float(c[r, s].real)!r} {float(c[r, s].imag)!r} {r} {s}")
    return "\n".join(lines) + "\n"


def parse_jet(text: str, n: int = 1, rank: int | None = None, order: int | None = None,
              base=None, source: str | None = None) -> Jet:
    """Parse lines ``alpha_1 ... alpha_{2n} re im [row col]`` giving ``d^alpha f(x0)/alpha!``."""
    entries, rank = _parse_entries(text, 2 * n, source, "multi-index component", rank)
    coeffs: dict[tuple[int, ...], np.ndarray] = {}
    for lineno, key, row, col, val in entries:
        if min(key) < 0:
            raise SymbolFormatError("multi-index components must be non-negative", lineno, source)
        mat = coeffs.setdefault(key, np.zeros((rank, rank), dtype=complex))
        mat[row, col] += val
    return Jet.from_polynomial(coeffs, order=order, base=base, dim=2 * n, rank=rank)


def load_jet(path, n: int = 1, rank: int | None = None, order: int | None = None) -> Jet:
    path = Path(path)
    return parse_jet(path.read_text(), n=n, rank=rank, order=order, source=str(path))


def format_jet(jet: Jet) -> str:
    lines = [f"# jet at {jet.base}: order={jet.order} rank={jet.rank}"]
    for a in sorted(jet.coeffs, key=lambda a: (sum(a), a)):
        c = jet.coeffs[a]
        for r in range(jet.rank):
            for s in range(jet.rank):
                if c[r, s] != 0:
                    lines.append(" ".join(str(v) for v in a) + f" {float(c[r, s].real)!r} {float(c[r, s].imag)!r} {r} {s}")
    return "\n".join(lines) + "\n"
