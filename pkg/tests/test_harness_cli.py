import io
import json
import math

import numpy as np
import pytest

from lipflow import cli
from lipflow.flows import _frac, circle_rotation
from lipflow.function_space import Func01
from lipflow.harness import ConfigError, PropertyResult, Report, RunConfig, run_verify
from lipflow.hilbert import CoordEmbedding
from lipflow.smoothing import UniversalPoint, pair_of, r_of

ALPHA = math.sqrt(2.0) - 1.0
FAST = {"samples": {"functions": 50, "flow": 100, "psi_pairs": 100, "orbit_states": 2,
                    "injectivity_pairs": 10, "enumeration_k": 1000}}


def run(*argv):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


# -- config and report --------------------------------------------------------------

def test_config_echo_contains_every_default():
    doc = RunConfig().to_json()
    for key in ("flow", "psi", "orbit", "quad", "metric", "depth_K", "tolerances",
                "samples", "seed"):
        assert key in doc
    assert doc["samples"]["functions"] == 1000 and doc["depth_K"] == 21


@pytest.mark.parametrize("doc", [{"bogus": 1}, {"tolerances": {"linearity": 0.0}},
                                 {"depth_K": 0}, {"seed": -1}, {"seed": 2**64}])
def test_config_validation(doc):
    with pytest.raises(ConfigError):
        RunConfig.from_json(doc)


def test_pass_is_computed_from_stored_fields():
    ok = PropertyResult("a", "x", 1, 1e-13, 1e-12, "basis")
    bad = PropertyResult("b", "x", 1, 2e-12, 1e-12, "basis")
    rep = Report([ok, bad], {}, {})
    assert ok.to_json()["pass"] and not bad.to_json()["pass"]
    assert rep.failures() == ["b"] and not rep.passed
    assert rep.table().splitlines()[1] == "a,1e-13,9.9999999999999998e-13,1"


def test_every_property_has_budget_basis():
    rep = run_verify(RunConfig.from_json(FAST))
    for p in rep.properties:
        assert p.basis and p.anchor and p.samples > 0


def test_fault_injection_isolated_to_flow_properties():
    good = circle_rotation(ALPHA)
    broken = good.replace_evolve(
        lambda t, x: _frac(np.atleast_1d(np.asarray(x, dtype=float)) + ALPHA * t + 0.05 * t * t))
    rep = run_verify(RunConfig.from_json(FAST), flow_override=broken)
    failed = set(rep.failures())
    assert "flows.group_law" in failed
    # the orbit map is equivariant only because of the group law
    assert failed <= {"flows.group_law", "orbit.equivariance"}
    assert all(p.passed for p in rep.properties
               if p.name.startswith(("function_space.", "smoothing.", "psi.")))


# -- verify --------------------------------------------------------------------------

def test_verify_default_passes_and_writes_outputs(tmp_path):
    code, text = run("verify", "--out", tmp_path)
    assert code == 0
    assert text.startswith("property,max_defect,budget,pass\n")
    for name in ("report.json", "report.csv", "report.png"):
        assert (tmp_path / name).stat().st_size > 0
    assert b"\r" not in (tmp_path / "report.csv").read_bytes()
    doc = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert doc["passed"] and doc["config"]["seed"] == 0


def test_verify_seed_recorded(tmp_path):
    cfg = write_config(tmp_path, FAST)
    code, _ = run("verify", "--config", cfg, "--seed", 18446744073709551615,
                  "--out", tmp_path / "o", "--no-figures")
    assert code == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["config"]["seed"] == 2**64 - 1


def test_verify_budget_failure_exit_code(tmp_path):
    cfg = write_config(tmp_path, {**FAST, "tolerances": {"exact_flow": 1e-300}})
    code, text = run("verify", "--config", cfg)
    assert code == 2
    assert "flows.group_law," in text and ",0\n" in text


@pytest.mark.parametrize("argv", [["verify", "--config", "missing.json"],
                                  ["verify", "--seed", "-3"],
                                  ["verify", "--depth-k", "0"],
                                  ["frobnicate"]])
def test_validation_errors_exit_one(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(*argv)[0] == 1


def test_unknown_config_key_exit_one(tmp_path):
    cfg = write_config(tmp_path, {"flows": {}})
    assert run("verify", "--config", cfg)[0] == 1


def test_bad_flow_exit_one(tmp_path):
    cfg = write_config(tmp_path, {"flow": {"kind": "spiral"}})
    assert run("embed", "--config", cfg, "--out", tmp_path / "o")[0] == 1


# -- embed ---------------------------------------------------------------------------

def test_embed_circle_rotation(tmp_path):
    code, text = run("embed", "--out", tmp_path)
    assert code == 0
    manifest = tmp_path / "state_000" / "manifest.json"
    doc = json.loads(manifest.read_text())
    assert doc["depth_K"] == 21 and len(doc["pairs"]) == 21
    assert [(r["i"], r["j"]) for r in doc["pairs"][:3]] == [(1, 1), (1, 2), (2, 2)]
    assert UniversalPoint.read(manifest).certify(0.0) == []
    assert (tmp_path / "state_000" / "entries.png").exists()
    assert text.splitlines()[1].endswith(",21,0")


def test_embed_trivial_flow_constants(tmp_path):
    cfg = write_config(tmp_path, {"flow": {"kind": "rotation", "dim": 1,
                                           "params": {"alpha": 0.0}},
                                  "states": [[0.3]]})
    assert run("embed", "--config", cfg, "--out", tmp_path / "o", "--no-figures")[0] == 0
    U = UniversalPoint.read(tmp_path / "o" / "state_000" / "manifest.json")
    c = np.zeros(6)
    c[:2] = CoordEmbedding(circle_rotation(0.0).domain).coords_batch([[0.3]])[0]
    for e, (p, r) in zip(U.entries, U.meta):
        assert np.allclose(e.values, c[p.i - 1] * r, rtol=0, atol=4e-16)


def test_embed_depth_flag(tmp_path):
    assert run("embed", "--depth-k", 3, "--out", tmp_path, "--no-figures")[0] == 0
    doc = json.loads((tmp_path / "state_000" / "manifest.json").read_text())
    assert doc["depth_K"] == 3


def test_embed_is_deterministic(tmp_path):
    for d in ("a", "b"):
        run("embed", "--out", tmp_path / d, "--no-figures", "--seed", 7)
    for f in sorted((tmp_path / "a" / "state_000").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "state_000" / f.name).read_bytes()


# -- enumerate -----------------------------------------------------------------------

def test_enumerate_listing():
    code, text = run("enumerate", "--k-max", 6)
    assert code == 0
    assert text == ("k,i,j,r_j\n1,1,1,0.5\n2,1,2,0.33333333333333331\n"
                    "3,2,2,0.33333333333333331\n4,1,3,0.25\n5,2,3,0.25\n6,3,3,0.25\n")


def test_enumerate_single_row():
    assert run("enumerate", "--k-max", 1)[1] == "k,i,j,r_j\n1,1,1,0.5\n"


def test_enumerate_columns_consistent(tmp_path):
    code, text = run("enumerate", "--k-max", 5000, "--out", tmp_path)
    rows = [list(map(float, line.split(","))) for line in text.splitlines()[1:]]
    for k, i, j, r in rows:
        assert 1 <= i <= j and k == j * (j - 1) / 2 + i and r == r_of(int(j))
    assert (tmp_path / "enumeration.csv").read_text() == text


def test_enumerate_defaults_to_depth_k():
    assert len(run("enumerate", "--depth-k", 10)[1].splitlines()) == 11


# -- plot-data -----------------------------------------------------------------------

@pytest.fixture
def manifest(tmp_path):
    run("embed", "--out", tmp_path / "emb", "--no-figures")
    return tmp_path / "emb" / "state_000" / "manifest.json"


def test_plot_data_single_entry(manifest, tmp_path):
    code, text = run("plot-data", "--manifest", manifest, "--select", 1,
                     "--out", tmp_path / "pd")
    assert code == 0
    doc = json.loads(manifest.read_text())
    a, b = doc["window"]
    assert len(text.splitlines()) - 1 == round((b - a) / doc["step"]) + 1
    # bit-exact against the manifest's own CSV
    assert text == (manifest.parent / "entry_001.csv").read_text()
    assert (tmp_path / "pd" / "series_001.csv").read_text() == text
    assert (tmp_path / "pd" / "series.png").exists()


def test_plot_data_all(manifest, tmp_path):
    code, text = run("plot-data", "--manifest", manifest, "--select", "all",
                     "--out", tmp_path / "pd", "--no-figures")
    assert code == 0
    assert {line.split(",")[0] for line in text.splitlines()[1:]} == {str(k) for k in range(1, 22)}
    for k in range(1, 22):
        e = Func01.read_csv(tmp_path / "pd" / f"series_{k:03d}.csv")
        ref = Func01.read_csv(manifest.parent / f"entry_{k:03d}.csv")
        assert np.array_equal(e.values, ref.values) and np.array_equal(e.times, ref.times)
        assert tuple(pair_of(k)) == tuple(json.loads(manifest.read_text())["pairs"][k - 1][x]
                                          for x in ("i", "j"))


def test_plot_data_missing_selector(manifest, capsys):
    code, _ = run("plot-data", "--manifest", manifest, "--select", 99)
    assert code == 1
    assert "available: all, 1..21" in capsys.readouterr().err


def test_plot_data_missing_manifest(tmp_path):
    assert run("plot-data", "--manifest", tmp_path / "nope.json")[0] == 1


@pytest.mark.parametrize("name", ["circle", "annulus", "torus_dense"])
def test_shipped_configs_build(name):
    from pathlib import Path
    cfg = RunConfig.load(Path(__file__).parent.parent / "configs" / f"{name}.json")
    sys = cfg.build_flow()
    psi = cfg.build_psi(sys)
    assert cfg.build_orbit().hilbert_depth >= 6
    assert psi.coords_batch(cfg.initial_states(sys)).shape[0] >= 1
