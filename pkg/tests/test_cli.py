import csv
import json
import subprocess
import sys

import pytest

from btq.cache import EigenCache, cache_key
from btq.cli import main
from btq.config import ConfigError, parse_config
from btq.geometry import FourierSymbol
from btq.spectral import cluster_for

COS_X = "1 0 0.5 0.0\n-1 0 0.5 0.0\n"
COS_Y = "0 1 0.5 0.0\n0 -1 0.5 0.0\n"


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "f.sym").write_text(COS_X)
    (tmp_path / "g.sym").write_text(COS_Y)
    return tmp_path


def _write(dirpath, text, name="run.cfg"):
    path = dirpath / name
    path.write_text(text)
    return path


# --- config grammar ----------------------------------------------------------------


def test_parse_full_config(workdir):
    cfg = parse_config(
        "experiment = toeplitz\nn = 1\np = 4, 6 8 12\nN = 32\nf = f.sym\ng = g.sym\nseed = 7\n"
        "cache = rebuild\nthreshold.toeplitz.c1_hi = -1.5\np.norm = 2, 3\n",
        base=workdir,
    )
    assert cfg.experiment == "toeplitz"
    assert cfg.p_list("toeplitz") == (4, 6, 8, 12)
    assert cfg.p_list("norm") == (2, 3)
    assert cfg.N == 32 and cfg.seed == 7 and cfg.cache == "rebuild"
    assert cfg.threshold("toeplitz.c1_hi") == -1.5
    assert cfg.threshold("toeplitz.c1_lo") == -2.5
    assert cfg.symbol_f.allclose(FourierSymbol.cos((1, 0)))


def test_auto_grid_and_defaults():
    cfg = parse_config("experiment = toeplitz\n")
    assert cfg.p_list("toeplitz") == (4, 6, 8, 12)
    assert cfg.grid_size("toeplitz") == 32
    assert cfg.grid_size("spectrum") == 24
    assert cfg.symbol_g.allclose(FourierSymbol.cos((0, 1)))


@pytest.mark.parametrize(
    "text,lineno,fragment",
    [
        ("experiment = toeplitz\np = 4, 8, 6, 12\n", 2, "strictly increasing"),
        ("experiment = bogus\n", 1, "unknown experiment"),
        ("# c\n\nfoo = 1\n", 3, "unknown key"),
        ("experiment = star\nseed\n", 2, "key = value"),
        ("n = 1\nn = 2\n", 2, "duplicate"),
        ("N = lots\n", 1, "integer"),
        ("threshold.nope = 1\n", 1, "unknown threshold"),
        ("cache = sometimes\n", 1, "reuse"),
    ],
)
def test_config_errors_name_the_line(text, lineno, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, source="x.cfg")
    assert exc.value.lineno == lineno
    assert fragment in str(exc.value)
    assert f"x.cfg:{lineno}" in str(exc.value)


def test_slope_experiments_need_four_p_values():
    with pytest.raises(ConfigError, match="at least 4"):
        parse_config("experiment = correspondence\np = 4, 6, 8\n")
    parse_config("experiment = spectrum\np = 2\n")


def test_bad_symbol_file_is_reported_with_its_line(workdir):
    (workdir / "bad.sym").write_text("1 0 0.5 0.0\n-1 0 half 0.0\n")
    with pytest.raises(ConfigError) as exc:
        parse_config("experiment = norm\nf = bad.sym\n", source="run.cfg", base=workdir)
    msg = str(exc.value)
    assert "run.cfg:2" in msg and "bad.sym:2" in msg


# --- cache keys ----------------------------------------------------------------------


def test_cache_key_properties():
    phi = FourierSymbol.cos((1, 0), 0.5)
    k = cache_key(1, 32, 4, 1, 0, phi, 0)
    assert k == cache_key(1, 32, 4, 1, 0, FourierSymbol.cos((1, 0), 0.5), 0)
    assert k != cache_key(1, 32, 5, 1, 0, phi, 0)
    assert k != cache_key(1, 32, 4, 1, 0, FourierSymbol.cos((1, 0), 0.5 + 1e-9), 0)
    assert k != cache_key(1, 32, 4, 1, 0, phi, 1)
    assert k != cache_key(1, 48, 4, 1, 0, phi, 0)
    assert cache_key(1, 32, 4) == cache_key(1, 32, 4, Phi=FourierSymbol.zero())


def test_eigen_cache_discards_corrupt_entries(tmp_path):
    cache = EigenCache(tmp_path)
    c = cluster_for(2, N=16)
    key = cache_key(1, 16, 2)
    cache.put(key, c)
    assert cache.get(key).d_p == 2
    data = bytearray(cache.path(key).read_bytes())
    data[100] ^= 0xFF
    cache.path(key).write_bytes(bytes(data))
    assert cache.get(key) is None
    assert EigenCache(tmp_path, "rebuild").get(key) is None
    with pytest.raises(ValueError):
        EigenCache(tmp_path, "sometimes")


# --- end-to-end runs ------------------------------------------------------------------


def _csv(path):
    return list(csv.DictReader(path.open()))


def test_spectrum_run(workdir, capsys):
    cfg = _write(workdir, "experiment = spectrum\np = 2, 4\nseed = 3\nout = out\n")
    code = main(["spectrum", "--config", str(cfg)])
    assert code == 0
    out = workdir / "out"
    rows = _csv(out / "spectrum.csv")
    assert [r["p"] for r in rows] == ["2", "4"]
    assert all(r["status"] == "PASS" and r["seed"] == "3" for r in rows)
    assert (out / "spectrum.png").stat().st_size > 0
    summary = (out / "summary.txt").read_text()
    assert "dense oracle" in summary and summary.strip().endswith("checks passed")
    records = [json.loads(line) for line in (out / "manifest.jsonl").read_text().splitlines()]
    assert records[0]["event"] == "run" and records[0]["seed"] == 3
    assert {r["cache"] for r in records if r["event"] == "cluster"} == {"miss"}
    assert "PASS" in capsys.readouterr().out


def test_star_run_values(workdir):
    cfg = _write(workdir, "experiment = star\nf = f.sym\ng = g.sym\nx0 = 0.1, 0.3\norder = 2\nout = out\n")
    assert main(["star", "--config", str(cfg)]) == 0
    rows = _csv(workdir / "out" / "star_coefficients.csv")
    c0 = float(rows[0]["re"])
    assert c0 == pytest.approx(-0.25, abs=1e-12)  # cos(0.2 pi) cos(0.6 pi)
    assert len(_csv(workdir / "out" / "star_bidifferential.csv")) == 1 + 4 + 9
    assert "associativity" in (workdir / "out" / "summary.txt").read_text()


def test_invalid_symbol_exits_2_without_outputs(workdir, capsys):
    (workdir / "bad.sym").write_text("1 0 0.5 0.0\n1 oops 0.5 0.0\n")
    cfg = _write(workdir, "experiment = toeplitz\nf = bad.sym\nout = out\n")
    assert main(["toeplitz", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "bad.sym:2" in err
    assert not (workdir / "out").exists()


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["star", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_runs_are_bit_reproducible_and_cache_sound(workdir):
    body = "p = 2, 3, 4, 5\nN = 24\nf = f.sym\ng = g.sym\ncache_dir = shared\n"
    cfg = _write(workdir, body)
    assert main(["correspondence", "--config", str(cfg), "--out", str(workdir / "a")]) in (0, 1)
    # second run hits the cache, third rebuilds with two workers
    assert main(["correspondence", "--config", str(cfg), "--out", str(workdir / "b")]) in (0, 1)
    cfg2 = _write(workdir, body + "cache = rebuild\n", "rebuild.cfg")
    assert main(["correspondence", "--config", str(cfg2), "--out", str(workdir / "c"), "--jobs", "2"]) in (0, 1)
    a, b, c = ((workdir / d / "correspondence.csv").read_bytes() for d in "abc")
    assert a == b == c
    hits = [json.loads(s) for s in (workdir / "b" / "manifest.jsonl").read_text().splitlines()]
    assert {r["cache"] for r in hits if r["event"] == "cluster"} == {"hit"}


def test_failed_p_is_reported_and_others_continue(workdir):
    # N = 16 is below the floor for p = 5, so that point fails while p = 2..4 still run
    cfg = _write(workdir, "experiment = spectrum\np = 2, 3, 4, 5\nN = 16\nout = out\n")
    assert main(["spectrum", "--config", str(cfg)]) == 1
    rows = _csv(workdir / "out" / "spectrum.csv")
    assert [r["p"] for r in rows] == ["2", "3", "4"]
    summary = (workdir / "out" / "summary.txt").read_text()
    assert "FAIL spectrum: solve p=5" in summary


def test_console_script_entry_point(workdir):
    cfg = _write(workdir, "experiment = star\nout = out\n")
    proc = subprocess.run([sys.executable, "-m", "btq.cli", "star", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "checks passed" in proc.stdout
