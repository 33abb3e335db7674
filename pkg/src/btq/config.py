"""Flat ``key = value`` run configuration.

Grammar (one entry per line, ``#`` starts a comment, blank lines ignored)::

    experiment = toeplitz            # spectrum|bergman|toeplitz|correspondence|norm|star|all
    n = 1
    p = 4, 6, 8, 12                  # strictly increasing
    p.bergman = 4, 8, 9, 16          # per-experiment override (used by "all")
    N = auto                         # or an integer; auto = 8 ceil(sqrt(max(p)))
    rank_E = 1
    degree_E = 0
    f = symbols/f.sym                # paths relative to the config file
    g = symbols/g.sym
    phi = symbols/phi.sym
    h = symbols/h.sym                # third symbol for the associativity check
    x0 = 0.0, 0.0                    # base point of the star experiment
    order = 1                        # star product order m
    delta = 0.5
    seed = 0
    cache = reuse                    # or rebuild
    cache_dir = cache                # default <out>/cache
    out = results
    threshold.toeplitz.c1_hi = -1.6  # overrides one acceptance threshold
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import FourierSymbol, SymbolFormatError, load_symbol
from .lattice import auto_grid

__all__ = ["ConfigError", "RunConfig", "EXPERIMENTS", "DEFAULT_P", "DEFAULT_THRESHOLDS", "parse_config", "load_config", "lift"]

EXPERIMENTS = ("spectrum", "bergman", "toeplitz", "correspondence", "norm", "star")

DEFAULT_P = {
    "spectrum": (2, 4, 6, 8),
    "bergman": (4, 8, 9, 16),
    "toeplitz": (4, 6, 8, 12),
    "correspondence": (4, 6, 8, 12),
    "norm": tuple(range(4, 17)),
    "star": (),
}

MIN_P = {"spectrum": 1, "bergman": 4, "toeplitz": 4, "correspondence": 4, "norm": 2, "star": 0}

DEFAULT_THRESHOLDS = {
    "spectrum.width": 0.05,
    "spectrum.excited_lo": 0.8,
    "spectrum.excited_hi": 1.1,
    "bergman.diag_lo": -1.4,
    "bergman.diag_hi": -0.6,
    "bergman.diag_exact": 1e-6,
    "bergman.gauss_lo": 0.9,
    "bergman.gauss_hi": 1.1,
    "bergman.decay_factor": 4.0,
    "toeplitz.c0_lo": -1.4,
    "toeplitz.c0_hi": -0.7,
    "toeplitz.c1_lo": -2.5,
    "toeplitz.c1_hi": -1.6,
    "correspondence.lo": -1.5,
    "correspondence.hi": -0.7,
    "norm.final_factor": 3.0,
    "star.assoc": 1e-10,
    "star.antisym": 1e-12,
}


class ConfigError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        self.lineno = lineno
        self.source = source
        where = f"{source or '<config>'}" + (f":{lineno}" if lineno is not None else "")
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "all"
    n: int = 1
    p: tuple[int, ...] | None = None
    p_overrides: dict = field(default_factory=dict)
    N: int | None = None  # None means auto
    rank_E: int = 1
    degree_E: int = 0
    f: FourierSymbol | None = None
    g: FourierSymbol | None = None
    h: FourierSymbol | None = None
    phi: FourierSymbol | None = None
    x0: tuple[float, ...] | None = None
    order: int = 1
    delta: float = 0.5
    seed: int = 0
    cache: str = "reuse"
    cache_dir: Path | None = None
    out: Path = Path("results")
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    source: str | None = None

    def p_list(self, experiment: str) -> tuple[int, ...]:
        if experiment in self.p_overrides:
            return self.p_overrides[experiment]
        if self.p is not None:
            return self.p
        return DEFAULT_P[experiment]

    def grid_size(self, experiment: str) -> int:
        if self.N is not None:
            return self.N
        ps = self.p_list(experiment)
        return auto_grid(max(max(ps), max(p + self.degree_E for p in ps))) if ps else 0

    def threshold(self, name: str) -> float:
        return self.thresholds[name]

    @property
    def symbol_f(self) -> FourierSymbol:
        f = self.f if self.f is not None else FourierSymbol.cos((1, 0) + (0,) * (2 * self.n - 2), n=self.n)
        return lift(f, self.rank_E)

    @property
    def symbol_g(self) -> FourierSymbol:
        g = self.g if self.g is not None else FourierSymbol.cos((0, 1) + (0,) * (2 * self.n - 2), n=self.n)
        return lift(g, self.rank_E)

    @property
    def symbol_h(self) -> FourierSymbol:
        if self.h is not None:
            return self.h
        return lift(FourierSymbol.sin((1, 1) + (0,) * (2 * self.n - 2), n=self.n), self.rank_E)

    @property
    def base_point(self) -> tuple[float, ...]:
        return self.x0 if self.x0 is not None else (0.0,) * (2 * self.n)

    def with_out(self, out) -> "RunConfig":
        return replace(self, out=Path(out))

    def with_experiment(self, experiment: str) -> "RunConfig":
        if experiment not in EXPERIMENTS + ("all",):
            raise ConfigError(f"unknown experiment {experiment!r}", source=self.source)
        cfg = replace(self, experiment=experiment)
        _validate(cfg)
        return cfg

    @property
    def cache_path(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.out / "cache"

    def experiments(self) -> tuple[str, ...]:
        return EXPERIMENTS if self.experiment == "all" else (self.experiment,)


def lift(f: FourierSymbol, rank: int) -> FourierSymbol:
    """Scalar symbol times the identity of ``End(E)``."""
    if f.rank == rank:
        return f
    if f.rank != 1:
        raise ValueError(f"symbol rank {f.rank} cannot be used with rank_E={rank}")
    return FourierSymbol({k: c[0, 0] * np.eye(rank) for k, c in f.terms.items()}, n=f.n, rank=rank)


def _int(value: str, key: str, lineno: int, source, lo: int | None = None) -> int:
    try:
        v = int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}", lineno, source) from None
    if lo is not None and v < lo:
        raise ConfigError(f"{key} must be >= {lo}, got {v}", lineno, source)
    return v


def _float(value: str, key: str, lineno: int, source) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}", lineno, source) from None
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite", lineno, source)
    return v


def _p_list(value: str, key: str, lineno: int, source) -> tuple[int, ...]:
    items = [t for t in value.replace(",", " ").split()]
    if not items:
        raise ConfigError(f"{key} is empty", lineno, source)
    ps = tuple(_int(t, key, lineno, source, lo=1) for t in items)
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ConfigError(f"{key} must be strictly increasing, got {list(ps)}", lineno, source)
    return ps


def _symbol(value: str, key: str, lineno: int, source, base: Path, n: int, rank: int | None) -> FourierSymbol:
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    try:
        return load_symbol(path, n=n, rank=rank)
    except SymbolFormatError as exc:
        raise ConfigError(f"{key}: {exc}", lineno, source) from None
    except OSError as exc:
        raise ConfigError(f"{key}: cannot read {path}: {exc.strerror}", lineno, source) from None


def parse_config(text: str, source: str | None = None, base: Path | None = None) -> RunConfig:
    base = base or Path(".")
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", lineno, source)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        raw[key] = (value, lineno)

    kw: dict = {"source": source}
    thresholds = dict(DEFAULT_THRESHOLDS)
    overrides = {}
    n = 1
    if "n" in raw:
        value, lineno = raw["n"]
        n = _int(value, "n", lineno, source, lo=1)
    kw["n"] = n
    rank = 1
    if "rank_E" in raw:
        value, lineno = raw["rank_E"]
        rank = _int(value, "rank_E", lineno, source, lo=1)
    kw["rank_E"] = rank

    symbols = {}
    for key, (value, lineno) in raw.items():
        if key in ("n", "rank_E"):
            continue
        if key == "experiment":
            if value not in EXPERIMENTS + ("all",):
                raise ConfigError(f"unknown experiment {value!r}", lineno, source)
            kw["experiment"] = value
        elif key == "p":
            kw["p"] = _p_list(value, key, lineno, source)
        elif key.startswith("p."):
            exp = key[2:]
            if exp not in EXPERIMENTS:
                raise ConfigError(f"unknown experiment in {key!r}", lineno, source)
            overrides[exp] = _p_list(value, key, lineno, source)
        elif key == "N":
            kw["N"] = None if value == "auto" else _int(value, key, lineno, source, lo=2)
        elif key == "degree_E":
            kw["degree_E"] = _int(value, key, lineno, source)
        elif key in ("f", "g", "h", "phi"):
            symbols[key] = (value, lineno)
        elif key == "x0":
            kw["x0"] = tuple(_float(t, key, lineno, source) for t in value.replace(",", " ").split())
            if len(kw["x0"]) != 2 * n:
                raise ConfigError(f"x0 needs {2 * n} coordinates", lineno, source)
        elif key == "order":
            kw["order"] = _int(value, key, lineno, source, lo=0)
        elif key == "delta":
            kw["delta"] = _float(value, key, lineno, source)
        elif key == "seed":
            kw["seed"] = _int(value, key, lineno, source, lo=0)
        elif key == "cache":
            if value not in ("reuse", "rebuild"):
                raise ConfigError(f"cache must be 'reuse' or 'rebuild', got {value!r}", lineno, source)
            kw["cache"] = value
        elif key == "cache_dir":
            kw["cache_dir"] = Path(value) if Path(value).is_absolute() else (base / value).resolve()
        elif key == "out":
            kw["out"] = Path(value) if Path(value).is_absolute() else (base / value).resolve()
        elif key.startswith("threshold."):
            name = key[len("threshold."):]
            if name not in DEFAULT_THRESHOLDS:
                raise ConfigError(f"unknown threshold {name!r}", lineno, source)
            thresholds[name] = _float(value, key, lineno, source)
        else:
            raise ConfigError(f"unknown key {key!r}", lineno, source)

    for key, (value, lineno) in symbols.items():
        sym = _symbol(value, key, lineno, source, base, n, None)
        if sym.rank not in (1, rank):
            raise ConfigError(f"{key}: symbol rank {sym.rank} does not match rank_E={rank}", lineno, source)
        kw[key] = lift(sym, rank)
    kw["thresholds"] = thresholds
    kw["p_overrides"] = overrides
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.degree_E != 0 and cfg.rank_E != 1:
        raise ConfigError("a degree twist needs rank_E = 1", source=cfg.source)
    if cfg.phi is not None and not cfg.phi.hermitian:
        raise ConfigError("phi must be a Hermitian symbol", source=cfg.source)
    for exp in cfg.experiments():
        ps = cfg.p_list(exp)
        if len(ps) < MIN_P[exp]:
            raise ConfigError(f"experiment {exp!r} needs at least {MIN_P[exp]} values of p, got {len(ps)}",
                              source=cfg.source)
        if ps and min(ps) + cfg.degree_E < 1:
            raise ConfigError(f"p + degree_E must be positive for {exp!r}", source=cfg.source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, source=str(path), base=path.parent)
