"""Experiment orchestration: p-sweeps, cached eigenbases, CSV/JSON-lines/figure reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla

from . import __version__, plotting
from .cache import EigenCache, cache_key
from .config import RunConfig, lift
from .geometry import BundleSpec, FourierSymbol, jet_at, make_torus, poisson_bracket
from .kernel import bergman_slice, decay_sweep, diagonal_profile, disk_offsets, gaussian_fit, write_slice_csv
from .lattice import GridSpec, assemble
from .spectral import SpectralCluster, cluster_for, dimension_report
from .star import associator, bidifferential, c_symbol, extract_c, star_product
from .toeplitz import slope_report, verify_correspondence, verify_norm_limit, verify_product_c0, verify_product_c1

__all__ = ["Check", "RunResult", "run", "RUNNERS"]

log = logging.getLogger(__name__)


@dataclass
class Check:
    experiment: str
    name: str
    passed: bool
    detail: str = ""

    @property
    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.experiment}: {self.name}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class RunResult:
    checks: list[Check] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Reporter:
    """Collects files, checks and manifest records for one run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.result = RunResult()
        self.records: list[dict] = []

    def record(self, **kw) -> None:
        self.records.append(kw)

    def check(self, experiment: str, name: str, passed: bool, detail: str = "") -> None:
        c = Check(experiment, name, bool(passed), detail)
        self.result.checks.append(c)
        self.record(event="check", experiment=experiment, name=name, status="PASS" if passed else "FAIL", detail=detail)
        log.info(c.line)

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header + ["seed"])
        for row in rows:
            w.writerow([_fmt(v) for v in row] + [self.cfg.seed])
        return self._file(name, buf.getvalue().encode())

    def _file(self, name: str, data: bytes) -> Path:
        path = self.out / name
        _atomic_write(path, data)
        self.result.files.append(path)
        self.record(event="file", path=name, sha256=hashlib.sha256(data).hexdigest())
        return path

    def figure(self, name: str, fn: Callable, *args, **kw) -> None:
        path = self.out / name
        try:
            fn(*args, path=path, **kw)
        except Exception as exc:  # figures never decide a run
            log.warning("figure %s failed: %s", name, exc)
            return
        self.result.files.append(path)
        self.record(event="figure", path=name)

    def finish(self) -> None:
        lines = [c.line for c in self.result.checks]
        n_fail = sum(not c.passed for c in self.result.checks)
        lines.append(f"{'PASS' if self.result.passed else 'FAIL'}: {len(lines) - n_fail}/{len(lines)} checks passed")
        self._file("summary.txt", ("\n".join(lines) + "\n").encode())
        body = "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)
        _atomic_write(self.out / "manifest.jsonl", body.encode())
        self.result.files.append(self.out / "manifest.jsonl")


# --- eigenbases -------------------------------------------------------------------


def _solve_task(args):
    p, kwargs = args
    try:
        return p, cluster_for(p, **kwargs), None
    except Exception as exc:
        return p, None, f"{type(exc).__name__}: {exc}"


def _clusters(cfg: RunConfig, rep: Reporter, experiment: str, ps, jobs: int, phi=None) -> dict[int, SpectralCluster]:
    N = cfg.grid_size(experiment)
    cache = EigenCache(cfg.cache_path, cfg.cache)
    kwargs = dict(n=cfg.n, N=N, rank_E=cfg.rank_E, degree_E=cfg.degree_E, Phi=phi, seed=cfg.seed)
    found: dict[int, SpectralCluster] = {}
    todo, keys = [], {}
    for p in ps:
        key = cache_key(cfg.n, N, p, cfg.rank_E, cfg.degree_E, phi, cfg.seed)
        keys[p] = key
        hit = cache.get(key, seed=cfg.seed)
        if hit is not None:
            found[p] = hit
            rep.record(event="cluster", experiment=experiment, p=p, N=N, key=key, cache="hit", d_p=hit.d_p)
        else:
            todo.append((p, kwargs))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(todo))) as pool:
            results = list(pool.map(_solve_task, todo))
    else:
        results = [_solve_task(t) for t in todo]
    for p, cluster, err in results:
        if err is not None:
            rep.record(event="cluster", experiment=experiment, p=p, N=N, key=keys[p], cache="error", message=err)
            rep.check(experiment, f"solve p={p}", False, err)
            continue
        cache.put(keys[p], cluster)
        found[p] = cluster
        rep.record(event="cluster", experiment=experiment, p=p, N=N, key=keys[p], cache="miss", d_p=cluster.d_p)
    return {p: found[p] for p in ps if p in found}


# --- experiments ------------------------------------------------------------------


def run_spectrum(cfg: RunConfig, rep: Reporter, jobs: int) -> None:
    ps = cfg.p_list("spectrum")
    clusters = _clusters(cfg, rep, "spectrum", ps, jobs, cfg.phi)
    rows = []
    wmax, lo, hi = (cfg.threshold(k) for k in ("spectrum.width", "spectrum.excited_lo", "spectrum.excited_hi"))
    for p, c in clusters.items():
        scale = 4 * np.pi * p
        dim = dimension_report(c)
        onset = float(c.excited_eigenvalues[0]) if len(c.excited_eigenvalues) else math.nan
        width = c.width
        ok = dim.passed and width <= wmax * scale and lo <= onset / scale <= hi
        rows.append([p, c.d_p, dim.expected, width, width / scale, onset, onset / scale, ok])
        rep.check("spectrum", f"p={p} dimension", dim.passed, f"d_p={c.d_p}, expected {dim.expected}")
        rep.check("spectrum", f"p={p} width", width <= wmax * scale, f"width/4pi p={width / scale:.4g}")
        rep.check("spectrum", f"p={p} gap onset", lo <= onset / scale <= hi, f"first excited/4pi p={onset / scale:.4f}")
    rep.write_csv("spectrum.csv", ["p", "d_p", "expected_d_p", "width", "width_ratio", "gap_onset", "onset_ratio",
                                   "status"], rows)
    if clusters:
        # independent full diagonalization at the smallest p
        p0 = min(clusters)
        geom = make_torus(cfg.n)
        bundle = BundleSpec(p=p0, rank_E=cfg.rank_E, degree_E=cfg.degree_E, Phi=cfg.phi)
        op = assemble(geom, bundle, GridSpec(cfg.n, cfg.grid_size("spectrum")))
        full = sla.eigvalsh(op.dense())
        c = clusters[p0]
        k = len(c.eigenvalues)
        dev = float(np.max(np.abs(full[:k] - c.eigenvalues)))
        rep.check("spectrum", f"p={p0} dense oracle", dev <= 1e-8 * op.norm_bound(), f"max eigenvalue deviation {dev:.2e}")
        rep.figure("spectrum.png", plotting.plot_spectrum, list(clusters.values()))


def run_bergman(cfg: RunConfig, rep: Reporter, jobs: int) -> None:
    ps = cfg.p_list("bergman")
    phi = cfg.phi
    clusters = _clusters(cfg, rep, "bergman", ps, jobs, phi)
    if not clusters:
        return
    diag_rows = []
    for p, c in clusters.items():
        d = diagonal_profile(c)
        diag_rows.append([p, c.d_p, d.deviation, d.trace])
    rep.write_csv("bergman_diagonal.csv", ["p", "d_p", "deviation", "trace"], diag_rows)
    flat = phi is None or all(not np.any(v) for k, v in phi.terms.items() if any(k))
    if flat:
        tol = cfg.threshold("bergman.diag_exact")
        for p, _, dev, _ in diag_rows:
            rep.check("bergman", f"p={p} diagonal constant", dev <= tol, f"deviation {dev:.3e}, tolerance {tol:g}")
    else:
        try:
            srep = slope_report("bergman_diagonal", [(r[0], r[1], r[2]) for r in diag_rows], -1.0,
                                (cfg.threshold("bergman.diag_lo"), cfg.threshold("bergman.diag_hi")))
            rep.check("bergman", "diagonal slope", srep.passed, srep.summary())
            rep.figure("bergman_diagonal.png", plotting.plot_slope, [srep], title="Bergman diagonal")
        except ValueError as exc:
            rep.check("bergman", "diagonal slope", False, str(exc))

    fits, slices, grows = [], [], []
    glo, ghi = cfg.threshold("bergman.gauss_lo"), cfg.threshold("bergman.gauss_hi")
    for p, c in clusters.items():
        slc = bergman_slice(c, (0.0,) * (2 * cfg.n), disk_offsets(c))
        fit = gaussian_fit(slc)
        fits.append(fit)
        slices.append(slc)
        ok = glo <= fit.ratio <= ghi
        grows.append([p, c.d_p, fit.c, fit.ratio, fit.points, ok])
        rep.check("bergman", f"p={p} gaussian profile", ok, f"c/(pi/2)={fit.ratio:.4f}")
    rep.write_csv("bergman_gaussian.csv", ["p", "d_p", "c", "ratio", "points", "status"], grows)
    pmax = max(clusters)
    write_slice_csv(slices[-1], cfg.out / f"bergman_slice_p{pmax}.csv")
    rep.result.files.append(cfg.out / f"bergman_slice_p{pmax}.csv")
    rep.figure("bergman_profile.png", plotting.plot_kernel_profile, slices, fits)

    sweep = decay_sweep(list(clusters.values()), delta=cfg.delta)
    factor = cfg.threshold("bergman.decay_factor")
    by_p = {r.p: r for r in sweep.reports}
    drows = [[r.p, clusters[r.p].d_p, r.delta, r.sup_bergman, r.scaled_bergman] for r in sweep.reports]
    rep.write_csv("bergman_decay.csv", ["p", "d_p", "delta", "sup", "scaled_sup"], drows)
    if not sweep.doubling_ratios:
        rep.check("bergman", "off-diagonal decay", False, "no doubling pairs in the p list")
    for p1, p2, ratio in sweep.doubling_ratios:
        rep.check("bergman", f"decay p={p1}->{p2}", ratio >= factor,
                  f"ratio {ratio:.3f} (sup/p: {by_p[p1].scaled_bergman:.3e} -> {by_p[p2].scaled_bergman:.3e})")
    rep.figure("bergman_decay.png", plotting.plot_decay, sweep)


def _slope_rows(report) -> list[list]:
    return [[p, d, e] for p, d, e in report.rows]


def run_toeplitz(cfg: RunConfig, rep: Reporter, jobs: int) -> None:
    ps = cfg.p_list("toeplitz")
    clusters = list(_clusters(cfg, rep, "toeplitz", ps, jobs, cfg.phi).values())
    f, g = lift(cfg.symbol_f, cfg.rank_E), lift(cfg.symbol_g, cfg.rank_E)
    C1 = c_symbol(f, g, 1)
    x0 = cfg.base_point
    sym = C1.evaluate(np.asarray([x0]))[0]
    ext = extract_c(jet_at(f, x0, 2), jet_at(g, x0, 2), 1)[1]
    rep.record(event="c1", x0=list(x0), symbolic=[float(sym[0, 0].real), float(sym[0, 0].imag)],
               extracted=[float(ext[0, 0].real), float(ext[0, 0].imag)])
    rep.check("toeplitz", "C1 symbol matches extract_c", float(np.max(np.abs(sym - ext))) <= 1e-10,
              f"|difference| {float(np.max(np.abs(sym - ext))):.2e}")
    reports = []
    for name, fn in (("c0", lambda: verify_product_c0(f, g, clusters, (cfg.threshold("toeplitz.c0_lo"),
                                                                         cfg.threshold("toeplitz.c0_hi")))),
                     ("c1", lambda: verify_product_c1(f, g, C1, clusters, (cfg.threshold("toeplitz.c1_lo"),
                                                                           cfg.threshold("toeplitz.c1_hi"))))):
        try:
            r = fn()
        except ValueError as exc:
            rep.check("toeplitz", f"product {name} slope", False, str(exc))
            continue
        reports.append(r)
        rep.write_csv(f"toeplitz_{name}.csv", ["p", "d_p", "error"], _slope_rows(r))
        rep.check("toeplitz", f"product {name} slope", r.passed, r.summary())
    if reports:
        rep.figure("toeplitz.png", plotting.plot_slope, reports, title="Toeplitz product expansion")


def run_correspondence(cfg: RunConfig, rep: Reporter, jobs: int) -> None:
    ps = cfg.p_list("correspondence")
    clusters = list(_clusters(cfg, rep, "correspondence", ps, jobs, cfg.phi).values())
    f, g = cfg.symbol_f, cfg.symbol_g
    try:
        r = verify_correspondence(f, g, clusters, (cfg.threshold("correspondence.lo"), cfg.threshold("correspondence.hi")))
    except ValueError as exc:
        rep.check("correspondence", "commutator slope", False, str(exc))
        return
    rep.write_csv("correspondence.csv", ["p", "d_p", "error"], _slope_rows(r))
    rep.check("correspondence", "commutator slope", r.passed, r.summary())
    rep.figure("correspondence.png", plotting.plot_slope, [r], title="correspondence principle")


def run_norm(cfg: RunConfig, rep: Reporter, jobs: int) -> None:
    ps = cfg.p_list("norm")
    clusters = list(_clusters(cfg, rep, "norm", ps, jobs, cfg.phi).values())
    if not clusters:
        return
    f = lift(cfg.symbol_f, cfg.rank_E)
    r = verify_norm_limit(f, clusters, cfg.threshold("norm.final_factor"))
    rep.write_csv("norm.csv", ["p", "d_p", "norm", "deviation"], [list(row) for row in r.rows])
    rep.check("norm", "deviation strictly decreasing", r.monotone)
    rep.check("norm", "final deviation", r.deviations[-1] <= r.final_bound,
              f"{r.deviations[-1]:.4g} <= {r.final_bound:.4g}")
    rep.figure("norm.png", plotting.plot_norm, r)


def _matrix_cells(M: np.ndarray) -> list[tuple[int, int, complex]]:
    return [(a, b, complex(M[a, b])) for a in range(M.shape[0]) for b in range(M.shape[1])]


def run_star(cfg: RunConfig, rep: Reporter, jobs: int) -> None:
    m = cfg.order
    x0 = cfg.base_point
    depth = 2 * m + 2
    fj, gj, hj = (jet_at(s, x0, depth) for s in (cfg.symbol_f, cfg.symbol_g, cfg.symbol_h))
    C = extract_c(fj, gj, m)
    rows = []
    for k, Ck in enumerate(C):
        for a, b, v in _matrix_cells(Ck):
            rows.append([k, a, b, v.real, v.imag])
    rep.write_csv("star_coefficients.csv", ["order", "row", "col", "re", "im"], rows)
    table_rows = []
    for level in range(m + 1):
        for (alpha, beta), c in sorted(bidifferential(level, cfg.n).items()):
            table_rows.append([level, " ".join(map(str, alpha)), " ".join(map(str, beta)), c.real, c.imag])
    rep.write_csv("star_bidifferential.csv", ["order", "alpha", "beta", "re", "im"], table_rows)

    c0 = float(np.max(np.abs(C[0] - (fj * gj).value())))
    rep.check("star", "C0 equals pointwise product", c0 <= 1e-12, f"|difference| {c0:.2e}")
    if m >= 1 and fj.rank == 1:
        C1_gf = extract_c(gj, fj, 1)[1]
        pb = poisson_bracket(cfg.symbol_f, cfg.symbol_g).evaluate(np.asarray([x0]))[0]
        anti = float(np.max(np.abs(C[1] - C1_gf - 1j * pb)))
        tol = cfg.threshold("star.antisym")
        rep.check("star", "C1(f,g) - C1(g,f) = i{f,g}", anti <= tol, f"residual {anti:.2e}")
    one = jet_at(FourierSymbol.constant(1.0, n=cfg.n), x0, depth)
    unit = star_product(fj, one, m)
    dev = max(float(np.max(np.abs(t.value() - (fj.value() if k == 0 else 0)))) for k, t in enumerate(unit.terms))
    rep.check("star", "f * 1 = f", dev <= 1e-12, f"max deviation {dev:.2e}")
    if m >= 1:
        res = associator(fj, gj, hj, m)
        tol = cfg.threshold("star.assoc")
        rep.record(event="associativity", order=m, residual=res)
        rep.check("star", f"associativity mod hbar^{m + 1}", res <= tol, f"residual {res:.2e}")


RUNNERS = {
    "spectrum": run_spectrum,
    "bergman": run_bergman,
    "toeplitz": run_toeplitz,
    "correspondence": run_correspondence,
    "norm": run_norm,
    "star": run_star,
}


def run(cfg: RunConfig, jobs: int = 1) -> RunResult:
    """Run every experiment named by ``cfg`` and write its report files."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = Reporter(cfg)
    rep.record(event="run", experiment=cfg.experiment, seed=cfg.seed, n=cfg.n, rank_E=cfg.rank_E,
               degree_E=cfg.degree_E, N=cfg.N if cfg.N is not None else "auto", cache=cfg.cache,
               version=__version__)
    for exp in cfg.experiments():
        try:
            RUNNERS[exp](cfg, rep, jobs)
        except Exception as exc:  # keep going with the remaining experiments
            log.exception("experiment %s failed", exp)
            rep.check(exp, "experiment completed", False, f"{type(exc).__name__}: {exc}")
    rep.finish()
    return rep.result
