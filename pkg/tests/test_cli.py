import json
import math
from pathlib import Path

import numpy as np
import pytest

from gigaqbx.cli import main

try:
    import jsonschema
except ImportError:        # pragma: no cover
    jsonschema = None

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"

needs_jsonschema = pytest.mark.skipif(jsonschema is None,
                                      reason="jsonschema not installed")


def _validate(doc, name):
    schema = json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())
    jsonschema.validate(doc, schema)


@pytest.fixture(scope="module")
def geom_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sphere.json"
    rc = main(["geom", "--shape", "sphere", "--refine", "1",
               "--quad-order", "6", "--out", str(path)])
    assert rc == 0
    return path


@needs_jsonschema
def test_geom_output_validates(geom_file):
    _validate(json.loads(geom_file.read_text()), "geom")


@needs_jsonschema
def test_eval_output_validates(geom_file, tmp_path):
    out = tmp_path / "eval.json"
    rc = main(["eval", "--geometry", str(geom_file), "--pqbx", "4",
               "--pfmm", "8", "--nmax", "60", "--mode", "ts",
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "eval")
    assert doc["mode"] == "ts"


@needs_jsonschema
def test_direct_output_validates(geom_file, tmp_path):
    out = tmp_path / "direct.json"
    rc = main(["direct", "--geometry", str(geom_file), "--pqbx", "4",
               "--pfmm", "8", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "eval")
    assert doc["mode"] == "direct"


def test_eval_determinism_modulo_timings(geom_file, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        rc = main(["eval", "--geometry", str(geom_file), "--pqbx", "3",
                   "--pfmm", "6", "--nmax", "60", "--density", "random",
                   "--seed", "42", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        doc.pop("timings")
        outs.append(json.dumps(doc, sort_keys=True))
    assert outs[0] == outs[1]


@needs_jsonschema
def test_count_output_validates(geom_file, tmp_path):
    out = tmp_path / "count.json"
    dump = tmp_path / "tree.txt"
    rc = main(["count", "--geometry", str(geom_file), "--nmax", "40",
               "--dump-tree", str(dump), "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "count")
    assert doc["list1_pairs"] > 0
    lines = dump.read_text().strip().split("\n")
    assert len(lines) == doc["n_boxes"]


@needs_jsonschema
def test_cost_output_validates(geom_file, tmp_path):
    out = tmp_path / "cost.json"
    rc = main(["cost", "--geometry", str(geom_file), "--nmax", "40",
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "cost")
    assert doc["total"] > 0
    assert doc["nmpole_optimum"] == pytest.approx(290.5, abs=1.0)


@needs_jsonschema
def test_fit_consumes_eval_outputs(tmp_path):
    # the urchin at low nmax populates every interaction category, making
    # all ten constants identifiable
    gpath = tmp_path / "urchin.json"
    rc = main(["geom", "--shape", "urchin", "--shape-k", "2", "--refine", "1",
               "--quad-order", "6", "--out", str(gpath)])
    assert rc == 0
    runs = []
    for mode, nmax in (("ts", 8), ("base", 8), ("ts", 64), ("base", 64)):
        out = tmp_path / f"run_{mode}_{nmax}.json"
        rc = main(["eval", "--geometry", str(gpath), "--pqbx", "4",
                   "--pfmm", "8", "--nmax", str(nmax), "--tf", "0.9",
                   "--nmpole", "0", "--mode", mode, "--out", str(out)])
        assert rc == 0
        runs.append(str(out))
    fit_out = tmp_path / "fit.json"
    rc = main(["fit", "--runs", *runs, "--pqbx", "4", "--pfmm", "8",
               "--out", str(fit_out)])
    assert rc == 0
    doc = json.loads(fit_out.read_text())
    _validate(doc, "fit")
    assert all(v >= 0 for v in doc["constants"].values())


def test_fit_rank_deficiency_is_numerical_failure(geom_file, tmp_path):
    # a lone TS run cannot identify the baseline constant
    out = tmp_path / "run.json"
    rc = main(["eval", "--geometry", str(geom_file), "--pqbx", "4",
               "--pfmm", "8", "--nmax", "60", "--mode", "ts",
               "--out", str(out)])
    assert rc == 0
    rc = main(["fit", "--runs", str(out), "--pqbx", "4", "--pfmm", "8"])
    assert rc == 2


@needs_jsonschema
def test_green_output_validates(tmp_path):
    gpath = tmp_path / "s12.json"
    rc = main(["geom", "--shape", "sphere", "--refine", "1",
               "--quad-order", "12", "--out", str(gpath)])
    assert rc == 0
    out = tmp_path / "green.json"
    rc = main(["green", "--geometry", str(gpath), "--pqbx", "5",
               "--pfmm", "12", "--nmax", "100", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "green")
    assert doc["residual"] < 2e-2


@needs_jsonschema
def test_solve_output_validates(tmp_path):
    gpath = tmp_path / "s.json"
    rc = main(["geom", "--shape", "sphere", "--refine", "0",
               "--quad-order", "10", "--target-order", "3",
               "--out", str(gpath)])
    assert rc == 0
    out = tmp_path / "solve.json"
    rc = main(["solve", "--geometry", str(gpath), "--pqbx", "4",
               "--pfmm", "8", "--nmax", "200", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "solve")
    assert doc["exterior_rel_error"] < 0.15


@needs_jsonschema
def test_sweep_outputs(geom_file, tmp_path):
    out = tmp_path / "sweep.json"
    csv_path = tmp_path / "sweep.csv"
    rc = main(["sweep", "--geometry", str(geom_file), "--nmax-grid", "32,128",
               "--nmpole-grid", "0,inf", "--csv", str(csv_path),
               "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    _validate(doc, "sweep")
    rows = csv_path.read_text().strip().split("\n")
    assert len(rows) == 5            # header + 2x2 grid
    assert rows[0].startswith("nmax,nmpole,mode")


def test_unknown_flag_exits_one(geom_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--geometry", str(geom_file), "--no-such-flag"])
    assert exc.value.code == 1


def test_helmholtz_k_validation(geom_file):
    rc = main(["eval", "--geometry", str(geom_file), "--kernel", "helmholtz",
               "--mode", "direct"])
    assert rc == 1          # missing --k
    rc = main(["eval", "--geometry", str(geom_file), "--k", "2.0"])
    assert rc == 1          # --k without helmholtz


def test_helmholtz_fmm_mode_is_validation_error(geom_file):
    rc = main(["eval", "--geometry", str(geom_file), "--kernel", "helmholtz",
               "--k", "2.0", "--mode", "ts"])
    assert rc == 1


def test_missing_geometry_file():
    rc = main(["eval", "--geometry", "/nonexistent/geo.json"])
    assert rc == 1
