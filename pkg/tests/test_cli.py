import json
import subprocess
import sys
from pathlib import Path

import pytest

from prfpoly import cli
from prfpoly.inference import FitConfig, fit_mle, simulate_tables
from prfpoly.ingest import format_table_tsv
from prfpoly.sampling import table_means
from prfpoly.types import Grid, ScaledParams, default_grid

GOLDEN = Path(__file__).parent / "data" / "golden"


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_no_arguments_is_usage_error():
    proc = subprocess.run([sys.executable, "-m", "prfpoly.cli"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage" in proc.stderr.lower()


def test_bad_flag_exit_2(capsys):
    code, _, err = run(["tables", "--no-such-flag"], capsys)
    assert code == 2


def test_tables_expected_matches_library(capsys):
    argv = ["tables", "--expected", "-t", "0.3", "--theta-s", "4", "--theta-r", "2",
            "--gamma", "1", "-m", "5", "-n", "7"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    et = table_means(5, 7, ScaledParams(0.3, 4.0), ScaledParams(0.3, 2.0, 1.0), grid=default_grid(0.3))
    assert out == cli._dumps(et.to_dict())
    body = json.loads(out)
    assert body["layout"] == "DOHRS" and body["grid"]["J"] == 800


def test_tables_expected_tsv_and_dprs(capsys):
    base = ["tables", "--expected", "-t", "0.3", "--theta-s", "1", "--theta-r", "1",
            "-m", "3", "-n", "3", "--J", "64", "--format", "tsv"]
    code, out, _ = run(base, capsys)
    assert code == 0 and out.startswith("class\tK\tO\tH\n")
    code, out, _ = run(base + ["--layout", "DPRS"], capsys)
    assert out.startswith("class\tK\tV\n")


def test_tables_missing_parameter(capsys):
    code, _, err = run(["tables", "--expected", "-t", "0.3"], capsys)
    assert code == 2 and "--theta-s" in err
    code, _, err = run(["tables", "--expected", "-t", "0.3", "--theta-s", "-1", "--theta-r", "1",
                        "-m", "3", "-n", "3"], capsys)
    assert code == 2


@pytest.mark.parametrize("case", ["toy_basic", "frame_offset"])
def test_tables_count_golden(case, capsys):
    offset = json.loads((GOLDEN / "cases.json").read_text())[case]["offset"]
    code, out, _ = run(["tables", "count", "--fasta", str(GOLDEN / f"{case}.fasta"),
                        "--species-map", str(GOLDEN / f"{case}.species.tsv"),
                        "--offset", str(offset)], capsys)
    assert code == 0
    assert out == (GOLDEN / f"{case}.dohrs.tsv").read_text()


def test_tables_count_species_lists_and_errors(tmp_path, capsys):
    code, out, _ = run(["tables", "count", "--fasta", str(GOLDEN / "toy_basic.fasta"),
                        "--species1", "s1a,s1b", "--species2", "s2a,s2b", "--format", "json"], capsys)
    assert code == 0
    body = json.loads(out)
    assert body["dohrs"]["counts"]["K_s"] == 1 and "excluded" in body
    bad = tmp_path / "bad.fasta"
    bad.write_text(">a\nATG\n>b\nAT\n")
    code, _, err = run(["tables", "count", "--fasta", str(bad), "--species1", "a",
                        "--species2", "b"], capsys)
    assert code == 2 and "unequal" in err
    code, _, err = run(["tables", "count", "--fasta", str(tmp_path / "missing.fasta"),
                        "--species1", "a", "--species2", "b"], capsys)
    assert code == 2


def write_tables(path, tabs):
    path.write_text("\n".join(format_table_tsv(t) for t in tabs))


def test_fit_matches_library(tmp_path, capsys):
    bs, br = ScaledParams(0.3, 4.0), ScaledParams(0.3, 2.0, 1.0)
    tabs = simulate_tables(bs, br, 5, 5, 4, seed=1, grid=Grid.uniform(64, 0.3 / 40))
    tsv = tmp_path / "tables.tsv"
    write_tables(tsv, tabs)
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"fit": {"steps": 40}}))
    out = tmp_path / "fit.json"
    argv = ["fit", "--in", str(tsv), "-m", "5", "-n", "5", "--shared", "theta_s", "theta_r",
            "gamma", "--starts", "2", "--J", "64", "--config", str(conf), "-o", str(out)]
    code, _, _ = run(argv, capsys)
    assert code == 0
    cfg = FitConfig.all_shared(J=64, steps=40, n_starts=2)
    lib = fit_mle(tabs, cfg).to_dict()
    assert json.loads(out.read_text()) == json.loads(cli._dumps(lib))
    man = json.loads((tmp_path / "fit.json.manifest.json").read_text())
    assert man["command"] == "fit" and man["seed"] == 0
    assert man["inputs"]["tables"][0]["sha256"]
    assert man["grid"] == {"J": 64, "steps": 40}


def test_fit_json_input_and_profile(tmp_path, capsys):
    bs, br = ScaledParams(0.3, 4.0), ScaledParams(0.3, 2.0, 1.0)
    tabs = simulate_tables(bs, br, 5, 5, 3, seed=2, grid=Grid.uniform(64, 0.3 / 40))
    js = tmp_path / "tables.json"
    js.write_text(json.dumps({"tables": [t.to_dict() for t in tabs]}))
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"fit": {"steps": 40, "shared_gamma": True, "shared_theta_s": True,
                                        "shared_theta_r": True}}))
    code, out, _ = run(["fit", "--in", str(js), "--J", "64", "--starts", "1", "--config", str(conf),
                        "--profile", "t"], capsys)
    assert code == 0
    body = json.loads(out)
    p = body["profile"]
    assert p["lower"] <= body["estimates"]["t"] <= p["upper"]


def test_fit_tsv_needs_sizes(tmp_path, capsys):
    tsv = tmp_path / "t.tsv"
    tsv.write_text("class\tK\tO\tH\nsilent\t1\t2\t0\nreplacement\t0\t1\t0\n")
    code, _, err = run(["fit", "--in", str(tsv)], capsys)
    assert code == 2


def test_reruns_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        o = tmp_path / f"run{k}.tsv"
        code, _, _ = run(["simulate", "poisson-tables", "-t", "0.3", "--theta-s", "2",
                          "--theta-r", "1", "--gamma", "0.5", "--loci", "3", "--J", "64",
                          "--seed", "5", "-o", str(o)], capsys)
        assert code == 0
        m = json.loads((tmp_path / f"run{k}.tsv.manifest.json").read_text())
        m.pop("created")
        m.pop("argv")
        outs.append((o.read_bytes(), m))
    assert outs[0] == outs[1]
    assert outs[0][1]["grid"]["J"] == 64


def test_manifest_for_stdout(tmp_path, capsys):
    man = tmp_path / "m.json"
    code, out, _ = run(["oracle", "--N", "20", "-t", "0.1", "--theta", "1", "--manifest", str(man)],
                       capsys)
    assert code == 0 and out.startswith("j\tx\texpected\n")
    assert len(out.strip().splitlines()) == 21
    m = json.loads(man.read_text())
    assert m["parameters"]["finite"]["N"] == 20
    assert {"prfpoly", "numpy", "scipy", "python"} <= set(m["versions"])


def test_oracle_json_and_finite_flags(capsys):
    code, out, _ = run(["oracle", "--N", "2", "--steps", "1", "--mu", "0", "--format", "json"], capsys)
    assert code == 0
    assert json.loads(out)["expected"] == [0.0]


def test_density_and_prf_subcommands(capsys):
    code, out, _ = run(["density", "-t", "0.1", "--gamma", "1", "--J", "32", "--payoff", "yq",
                        "--stride", "50"], capsys)
    assert code == 0 and out.startswith("t\tx\tvalue\n")
    code, out, _ = run(["density", "-t", "0.1", "--kind", "absorption", "--J", "32"], capsys)
    assert code == 0 and out.startswith("t\tx\tp0\tp1\n")
    code, out, _ = run(["prf", "-t", "0.2", "--theta", "1", "--J", "64", "--what", "fixations"], capsys)
    assert code == 0
    fx = json.loads(out)
    assert fx["fixations"]["total"] == pytest.approx(fx["fixations_alt"]["total"], rel=1e-3)
    code, out, _ = run(["prf", "-t", "0.2", "--J", "64"], capsys)
    assert code == 0 and out.startswith("y\tlegacy\tnew\ttotal\tlebesgue\n")


def test_numerical_failure_exit_1(capsys):
    code, _, err = run(["density", "-t", "0.5", "--gamma", "1", "--kind", "dual-entrance",
                        "--J", "100", "--dt", "0.004"], capsys)
    assert code == 1 and "numerical failure" in err


def test_simulate_subcommands(capsys):
    code, out, _ = run(["simulate", "field", "--N", "20", "-t", "0.05", "--theta", "1",
                        "--reps", "20"], capsys)
    assert code == 0 and out.startswith("j\tx\tmean\tvariance\n")
    code, out, _ = run(["simulate", "moran-tables", "--N", "20", "-t", "0.05", "--loci", "2"], capsys)
    assert code == 0 and out.count("class\tK\tO\tH") == 2


def test_threads(monkeypatch):
    monkeypatch.delenv("PRF_THREADS", raising=False)
    assert cli.resolve_threads(None) == 1
    monkeypatch.setenv("PRF_THREADS", "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv("PRF_THREADS", "x")
    with pytest.raises(cli.UsageError):
        cli.resolve_threads(None)


def test_bad_config_file(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text("{nope")
    code, _, err = run(["oracle", "--N", "5", "--config", str(conf)], capsys)
    assert code == 2
