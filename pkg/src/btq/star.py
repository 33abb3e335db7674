"""Exact calculus of polynomial x Gaussian model kernels and the star product.

A kernel ``F(Z, Z') P(Z, Z')`` is stored through its polynomial part ``F`` in the
complex variables ``(z, zbar, z', zbar')`` of each plane; ``P`` is the model
projection kernel

    P(Z, Z') = prod_j (a_j / 2 pi) exp(-(a_j / 4)(|z_j|^2 + |z'_j|^2 - 2 z_j zbar'_j)),

normalized so that ``P o P = P``.  Composition reduces to Gaussian moments:
with ``alpha = a/2`` the inner variable contracts by Wick's rule
``w -> z``, ``wbar -> zbar'`` and ``<w wbar> = 1 / alpha``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .geometry import FourierSymbol, Jet, _factorial, multi_indices

__all__ = [
    "Poly",
    "PolyGaussKernel",
    "ModelData",
    "QExpansion",
    "StarSeries",
    "ModelDataError",
    "kappa",
    "q_coeff",
    "q_pair",
    "extract_c",
    "bidifferential",
    "apply_bidifferential",
    "apply_bidifferential_jet",
    "c_symbol",
    "star_product",
    "star_compose",
    "associator",
]

# variable slots of a monomial key: blocks of n exponents each
Z, ZB, ZP, ZBP = 0, 1, 2, 3


class ModelDataError(ValueError):
    """Odd-order residuals or parity violations in caller-supplied model data."""


def _key(n: int, exps: Mapping[tuple[int, int], int]) -> tuple[int, ...]:
    key = [0] * (4 * n)
    for (slot, j), e in exps.items():
        key[slot * n + j] += e
    return tuple(key)


class Poly:
    """Matrix-valued polynomial in ``(z, zbar, z', zbar')`` of ``n`` planes."""

    __slots__ = ("n", "rank", "terms")

    def __init__(self, terms: Mapping[tuple[int, ...], object] | None = None, n: int = 1, rank: int = 1):
        self.n = n
        self.rank = rank
        clean: dict[tuple[int, ...], np.ndarray] = {}
        for k, c in (terms or {}).items():
            arr = np.asarray(c, dtype=complex)
            if arr.ndim == 0:
                arr = arr * np.eye(rank)
            if arr.shape != (rank, rank):
                raise ValueError(f"coefficient shape {arr.shape} does not match rank {rank}")
            k = tuple(int(v) for v in k)
            if len(k) != 4 * n:
                raise ValueError(f"monomial key {k} has length {len(k)}, expected {4 * n}")
            clean[k] = clean[k] + arr if k in clean else arr
        self.terms = {k: v for k, v in clean.items() if np.any(v != 0)}

    # constructors
    @classmethod
    def one(cls, n: int = 1, rank: int = 1) -> "Poly":
        return cls({(0,) * (4 * n): np.eye(rank)}, n, rank)

    @classmethod
    def zero(cls, n: int = 1, rank: int = 1) -> "Poly":
        return cls({}, n, rank)

    @classmethod
    def constant(cls, c, n: int = 1, rank: int | None = None) -> "Poly":
        arr = np.asarray(c, dtype=complex)
        if arr.ndim == 0:
            rank = rank or 1
            arr = arr * np.eye(rank)
        return cls({(0,) * (4 * n): arr}, n, arr.shape[0])

    @classmethod
    def monomial(cls, n: int = 1, rank: int = 1, coeff=1.0, **exps) -> "Poly":
        """``Poly.monomial(z=(1,), zbp=(2,))``: exponent tuples per plane for z, zb, zp, zbp."""
        names = {"z": Z, "zb": ZB, "zp": ZP, "zbp": ZBP}
        e = {}
        for name, vals in exps.items():
            vals = (vals,) if isinstance(vals, int) else vals
            for j, v in enumerate(vals):
                e[(names[name], j)] = v
        return cls({_key(n, e): coeff}, n, rank)

    @classmethod
    def real_monomial(cls, alpha: Sequence[int], side: str = "left", rank: int = 1) -> "Poly":
        """``Z^alpha`` in the real coordinates of one side, expanded with
        ``Z_{2j-1} = (z_j + zbar_j)/2`` and ``Z_{2j} = (z_j - zbar_j)/(2i)``."""
        alpha = tuple(alpha)
        n = len(alpha) // 2
        hol, anti = (Z, ZB) if side == "left" else (ZP, ZBP)
        out = cls.one(n, rank)
        for j in range(n):
            ax, ay = alpha[2 * j], alpha[2 * j + 1]
            x = cls({_key(n, {(hol, j): 1}): 0.5, _key(n, {(anti, j): 1}): 0.5}, n, rank)
            y = cls({_key(n, {(hol, j): 1}): -0.5j, _key(n, {(anti, j): 1}): 0.5j}, n, rank)
            for _ in range(ax):
                out = out * x
            for _ in range(ay):
                out = out * y
        return out

    # algebra
    def _compat(self, other: "Poly") -> None:
        if other.n != self.n or other.rank != self.rank:
            raise ValueError("polynomials have different n or rank")

    def __add__(self, other: "Poly") -> "Poly":
        self._compat(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Poly(terms, self.n, self.rank)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scale(-1.0)

    def __neg__(self) -> "Poly":
        return self.scale(-1.0)

    def scale(self, s) -> "Poly":
        return Poly({k: v * s for k, v in self.terms.items()}, self.n, self.rank)

    def left_mul(self, M) -> "Poly":
        M = np.asarray(M, dtype=complex)
        return Poly({k: M @ v for k, v in self.terms.items()}, self.n, self.rank)

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return self.scale(other)
        self._compat(other)
        out: dict[tuple[int, ...], np.ndarray] = {}
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                prod = c1 @ c2
                out[k] = out[k] + prod if k in out else prod
        return Poly(out, self.n, self.rank)

    __rmul__ = scale

    # inspection
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=-1)

    def has_parity(self, r: int, tol: float = 0.0) -> bool:
        return all(sum(k) % 2 == r % 2 for k, v in self.terms.items() if np.max(np.abs(v)) > tol)

    def constant_term(self) -> np.ndarray:
        return self.terms.get((0,) * (4 * self.n), np.zeros((self.rank, self.rank), dtype=complex))

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.terms.values()), default=0.0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def allclose(self, other: "Poly", tol: float = 1e-12) -> bool:
        return (self - other).is_zero(tol)

    def adjoint(self) -> "Poly":
        """Polynomial of the adjoint kernel ``K^*(Z, Z') = K(Z', Z)^*``."""
        n = self.n
        out = {}
        for k, c in self.terms.items():
            z, zb, zp, zbp = (k[s * n : (s + 1) * n] for s in range(4))
            out[zbp + zp + zb + z] = c.conj().T
        return Poly(out, n, self.rank)

    def evaluate(self, Zl, Zr) -> np.ndarray:
        """Value at real points ``Z, Z'`` (length ``2n`` each)."""
        Zl = np.asarray(Zl, dtype=float)
        Zr = np.asarray(Zr, dtype=float)
        z = Zl[0::2] + 1j * Zl[1::2]
        zp = Zr[0::2] + 1j * Zr[1::2]
        vars_ = np.concatenate([z, z.conj(), zp, zp.conj()])
        out = np.zeros((self.rank, self.rank), dtype=complex)
        for k, c in self.terms.items():
            out = out + c * np.prod(vars_ ** np.asarray(k))
        return out

    def __repr__(self) -> str:
        return f"Poly(n={self.n}, rank={self.rank}, terms={len(self.terms)}, degree={self.degree()})"


@dataclass(frozen=True)
class PolyGaussKernel:
    """``F(Z, Z') P(Z, Z')`` with explicit Gaussian parameters."""

    poly: Poly
    a: tuple[float, ...] = (2 * np.pi,)

    @property
    def prefactor(self) -> float:
        return float(np.prod([aj / (2 * np.pi) for aj in self.a]))

    def gaussian(self, Zl, Zr) -> complex:
        Zl = np.asarray(Zl, dtype=float)
        Zr = np.asarray(Zr, dtype=float)
        z = Zl[0::2] + 1j * Zl[1::2]
        zp = Zr[0::2] + 1j * Zr[1::2]
        a = np.asarray(self.a)
        expo = -0.25 * np.sum(a * (np.abs(z) ** 2 + np.abs(zp) ** 2 - 2 * z * zp.conj()))
        return self.prefactor * np.exp(expo)

    def evaluate(self, Zl, Zr) -> np.ndarray:
        return self.poly.evaluate(Zl, Zr) * self.gaussian(Zl, Zr)


def _contract(j: int, k: int, alpha: float) -> list[tuple[int, int, float]]:
    """Normalized moment of ``w^j wbar^k``: terms ``(pow z, pow zbar', coeff)``."""
    out = []
    for m in range(min(j, k) + 1):
        c = math.comb(k, m) * math.perm(j, m) * alpha ** (-m)
        out.append((j - m, k - m, c))
    return out


def kappa(F: Poly, G: Poly, a: Sequence[float] | None = None) -> Poly:
    """Polynomial ``K[F, G]`` with ``(F P) o (G P) = K[F, G] P``."""
    if F.n != G.n or F.rank != G.rank:
        raise ValueError("kappa: polynomials have different n or rank")
    n = F.n
    a = tuple(a) if a is not None else (2 * np.pi,) * n
    if len(a) != n or min(a) <= 0:
        raise ValueError(f"need {n} positive Gaussian parameters, got {a}")
    alphas = [aj / 2 for aj in a]
    out: dict[tuple[int, ...], np.ndarray] = {}
    cache: dict[tuple[int, int, int], list] = {}
    for kf, cf in F.terms.items():
        for kg, cg in G.terms.items():
            coeff = cf @ cg
            per_plane = []
            for j in range(n):
                w = kf[ZP * n + j] + kg[Z * n + j]
                wb = kf[ZBP * n + j] + kg[ZB * n + j]
                key = (j, w, wb)
                if key not in cache:
                    cache[key] = _contract(w, wb, alphas[j])
                per_plane.append(cache[key])
            for choice in itertools.product(*per_plane):
                k = [0] * (4 * n)
                scal = 1.0
                for j, (pz, pzbp, c) in enumerate(choice):
                    k[Z * n + j] = kf[Z * n + j] + pz
                    k[ZB * n + j] = kf[ZB * n + j]
                    k[ZP * n + j] = kg[ZP * n + j]
                    k[ZBP * n + j] = kg[ZBP * n + j] + pzbp
                    scal *= c
                k = tuple(k)
                term = coeff * scal
                out[k] = out[k] + term if k in out else term
    return Poly(out, n, F.rank)


@dataclass(frozen=True)
class ModelData:
    """Model polynomials ``J_r`` (default: flat torus, ``J_0 = Id``, ``J_r = 0`` for ``r >= 1``)."""

    n: int = 1
    rank: int = 1
    a: tuple[float, ...] | None = None
    J: Mapping[int, Poly] | None = None
    name: str = "flat"

    @property
    def gaussian(self) -> tuple[float, ...]:
        return self.a if self.a is not None else (2 * np.pi,) * self.n

    def j(self, r: int) -> Poly:
        if self.J is not None and r in self.J:
            return self.J[r]
        return Poly.one(self.n, self.rank) if r == 0 else Poly.zero(self.n, self.rank)

    def is_flat(self) -> bool:
        return self.J is None and self.a is None

    def scalar(self) -> bool:
        if self.J is None:
            return True
        for P in self.J.values():
            for c in P.terms.values():
                if np.max(np.abs(c - c[0, 0] * np.eye(self.rank))) > 0:
                    return False
        return True


@dataclass
class QExpansion:
    base: tuple[float, ...]
    Q: list[Poly]
    provenance: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return len(self.Q) - 1


def q_coeff(fjet: Jet, model: ModelData | None = None, m: int = 2) -> QExpansion:
    """``Q_r(f) = sum_{r1 + r2 + |alpha| = r} K[J_{r1}, (d^alpha f(x0)/alpha!) Z^alpha J_{r2}]``."""
    if fjet.order < m:
        raise ValueError(f"jet order {fjet.order} is too low for Q up to order {m}")
    n = fjet.n
    model = model or ModelData(n=n, rank=fjet.rank)
    if model.n != n or model.rank != fjet.rank:
        raise ValueError("model data and jet disagree on n or rank")
    a = model.gaussian
    Q = []
    for r in range(m + 1):
        acc = Poly.zero(n, fjet.rank)
        for order in range(r + 1):
            for alpha in multi_indices(2 * n, order, order):
                c = fjet.coefficient(alpha)
                if not np.any(c):
                    continue
                Za = Poly.real_monomial(alpha, "left", fjet.rank).left_mul(c)
                for r1 in range(r - order + 1):
                    r2 = r - order - r1
                    J1, J2 = model.j(r1), model.j(r2)
                    if J1.is_zero() or J2.is_zero():
                        continue
                    acc = acc + kappa(J1, Za * J2, a)
        Q.append(acc)
    return QExpansion(fjet.base, Q, {"jet_order": fjet.order, "model": model.name})


def q_pair(fexp: QExpansion, gexp: QExpansion, m: int | None = None, a: Sequence[float] | None = None) -> QExpansion:
    """``Q_r(f, g) = sum_{r1 + r2 = r} K[Q_{r1}(f), Q_{r2}(g)]``."""
    if not np.allclose(fexp.base, gexp.base):
        raise ValueError(f"base points differ: {fexp.base} vs {gexp.base}")
    m = min(fexp.order, gexp.order) if m is None else m
    if m > min(fexp.order, gexp.order):
        raise ValueError("requested order exceeds the supplied expansions")
    Q = []
    for r in range(m + 1):
        acc = Poly.zero(fexp.Q[0].n, fexp.Q[0].rank)
        for r1 in range(r + 1):
            acc = acc + kappa(fexp.Q[r1], gexp.Q[r - r1], a)
        Q.append(acc)
    return QExpansion(fexp.base, Q, {"pair": (fexp.provenance, gexp.provenance)})


def _q_origin(jet: Jet, r: int, model: ModelData) -> np.ndarray:
    return q_coeff(jet, model, r).Q[r].constant_term()


# --- bidifferential tables ----------------------------------------------------


def _monomial_jet(alpha: tuple[int, ...], order: int) -> Jet:
    return Jet.from_polynomial({alpha: 1.0}, order=order, dim=len(alpha))


def _table_for(level: int, n: int, model: ModelData) -> dict[tuple[tuple[int, ...], tuple[int, ...]], complex]:
    if level == 0:
        zero = (0,) * (2 * n)
        return {(zero, zero): 1.0 + 0j}
    order = 2 * level
    table = {}
    for alpha in multi_indices(2 * n, order):
        for beta in multi_indices(2 * n, order - sum(alpha)):
            f, g = _monomial_jet(alpha, order), _monomial_jet(beta, order)
            val = _extract_level(f, g, level, model)[0, 0]
            c = val / (_factorial(alpha) * _factorial(beta))
            if abs(c) > 1e-14:
                table[(alpha, beta)] = complex(c)
    return table


@lru_cache(maxsize=None)
def _flat_table(level: int, n: int, a: tuple[float, ...]):
    return _table_for(level, n, ModelData(n=n, a=a if a != (2 * np.pi,) * n else None))


def bidifferential(level: int, n: int = 1, model: ModelData | None = None) -> dict:
    """Coefficients ``c`` with ``C_level(f, g) = sum c[alpha, beta] d^alpha f d^beta g``.

    Constant coefficients hold for translation-invariant scalar model data
    (the flat torus); the table is derived from the kernel calculus itself.
    """
    if model is None or (model.J is None):
        a = model.gaussian if model is not None else (2 * np.pi,) * n
        return _flat_table(level, n, tuple(a))
    if not model.scalar():
        raise ModelDataError("bidifferential tables need scalar (End(E)-central) model data")
    return _table_for(level, n, ModelData(n=n, a=model.a, J=model.J, name=model.name))


def apply_bidifferential_jet(table: Mapping, f: Jet, g: Jet) -> Jet:
    out = None
    for (alpha, beta), c in table.items():
        term = (f.diff(alpha) * g.diff(beta)).scale(c)
        out = term if out is None else out + term
    if out is None:
        order = min(f.order, g.order)
        return Jet(f.base, order, {}, f.rank)
    return out


def apply_bidifferential(table: Mapping, f: FourierSymbol, g: FourierSymbol) -> FourierSymbol:
    out = FourierSymbol.zero(n=f.n, rank=f.rank)
    for (alpha, beta), c in table.items():
        out = out + (f.derivative(alpha) * g.derivative(beta)) * c
    return out


def c_symbol(f: FourierSymbol, g: FourierSymbol, level: int = 1, model: ModelData | None = None) -> FourierSymbol:
    """``C_level(f, g)`` as an exact Fourier symbol."""
    model = model or ModelData(n=f.n, rank=f.rank)
    return apply_bidifferential(bidifferential(level, f.n, model), f, g)


# --- coefficient extraction ---------------------------------------------------


def _lower_jet(level: int, f: Jet, g: Jet, model: ModelData) -> Jet:
    if level == 0:
        return f * g
    table = bidifferential(level, f.n, ModelData(n=f.n, a=model.a, J=model.J, name=model.name))
    return apply_bidifferential_jet(table, f, g)


def _extract_level(f: Jet, g: Jet, level: int, model: ModelData, odd_tol: float = 1e-10) -> np.ndarray:
    n, rank = f.n, f.rank
    m = 2 * level
    mod = ModelData(n=n, rank=rank, a=model.a, J=model.J, name=model.name)
    qf, qg = q_coeff(f, mod, m), q_coeff(g, mod, m)
    pair = q_pair(qf, qg, m, mod.gaussian)
    val = pair.Q[m].constant_term()
    for j in range(level):
        Cj = _lower_jet(j, f, g, mod)
        val = val - _q_origin(Cj, m - 2 * j, mod)
    # odd orders must vanish at the origin
    odd = pair.Q[m - 1].constant_term()
    if np.max(np.abs(odd), initial=0.0) > odd_tol * max(1.0, pair.Q[m].max_abs()):
        raise ModelDataError(f"odd residual {np.max(np.abs(odd)):.3g} at order {m - 1}")
    return val


def extract_c(f: Jet, g: Jet, m: int = 1, model: ModelData | None = None) -> list[np.ndarray]:
    """``C_0(f,g)(x0), ..., C_m(f,g)(x0)`` from
    ``Q_{2l}(f, g)(0,0) = sum_{j <= l} Q_{2(l-j)}(C_j(f,g))(0,0)``."""
    if f.base != g.base:
        raise ValueError("jets have different base points")
    if f.rank != g.rank or f.dim != g.dim:
        raise ValueError("jets have different rank or dimension")
    if min(f.order, g.order) < 2 * m:
        raise ValueError(f"jets of order >= {2 * m} are needed for C_{m}")
    model = model or ModelData(n=f.n, rank=f.rank)
    out = [(f * g).value()]
    for level in range(1, m + 1):
        out.append(_extract_level(f, g, level, model))
    return out


# --- star product ---------------------------------------------------------------


@dataclass
class StarSeries:
    """Truncated ``f * g = sum_k C_k(f, g) hbar^k`` as jets at one base point."""

    terms: list[Jet]

    @property
    def order(self) -> int:
        return len(self.terms) - 1

    def values(self) -> list[np.ndarray]:
        return [t.value() for t in self.terms]

    def coefficient(self, k: int) -> Jet:
        return self.terms[k]


def _as_series(x) -> StarSeries:
    return x if isinstance(x, StarSeries) else StarSeries([x])


def star_compose(A, B, m: int, n: int | None = None, model: ModelData | None = None) -> StarSeries:
    """Star product of two series (jets are series of order 0) mod ``hbar^{m+1}``."""
    A, B = _as_series(A), _as_series(B)
    n = n or A.terms[0].n
    out = []
    for k in range(m + 1):
        acc = None
        for i in range(min(k, A.order) + 1):
            for j in range(min(k - i, B.order) + 1):
                level = k - i - j
                table = bidifferential(level, n, model)
                term = apply_bidifferential_jet(table, A.terms[i], B.terms[j])
                acc = term if acc is None else acc + term
        out.append(acc)
    return StarSeries(out)


def star_product(f: Jet, g: Jet, m: int, model: ModelData | None = None) -> StarSeries:
    if min(f.order, g.order) < 2 * m:
        raise ValueError(f"jets of order >= {2 * m} are needed for the order-{m} star product")
    return star_compose(f, g, m, f.n, model)


def associator(f: Jet, g: Jet, h: Jet, m: int, model: ModelData | None = None) -> float:
    """Max coefficient of ``(f*g)*h - f*(g*h)`` at the base point, through ``hbar^m``."""
    left = star_compose(star_compose(f, g, m, model=model), h, m, model=model)
    right = star_compose(f, star_compose(g, h, m, model=model), m, model=model)
    return max(float(np.max(np.abs(a.value() - b.value()))) for a, b in zip(left.terms, right.terms))
