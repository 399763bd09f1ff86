import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinscl.config import SCHEMA, parse_config, serialize
from kinscl.errors import ConfigurationError
from kinscl.io import OutputError, ReportEnvelope, csv_text, fmt_float, to_json, write_outputs

MINIMAL = "[run]\nscheme = fv\nT = 0.5\n[grid]\ncells = 64\n"


def test_defaults_filled():
    cfg = parse_config(MINIMAL)
    assert cfg.get("run", "cfl") == 0.4 and cfg.get("noise", "mode") == "compact_support"
    assert cfg.get("converge", "ladder") == [128, 256, 512, 1024]
    assert cfg.get("run", "dt") is None


def test_cfl_out_of_range_message():
    with pytest.raises(ConfigurationError) as exc:
        parse_config(MINIMAL, {"run__cfl": 1.5})
    assert "cfl must lie in (0,1), got 1.5" in exc.value.problems


def test_every_problem_reported():
    text = "[run]\nscheme = upwind\nT = -1\n[grid]\ncells = 2\n[noise]\nscale = -1\nbogus = 3\n[nowhere]\n"
    with pytest.raises(ConfigurationError) as exc:
        parse_config(text)
    msgs = "\n".join(exc.value.problems)
    for frag in ("unknown key 'bogus'", "unknown section [nowhere]", "scheme must be one of",
                 "T must be positive", "cells must be >= 4", "noise scale must be non-negative"):
        assert frag in msgs


def test_missing_required_and_bad_types():
    with pytest.raises(ConfigurationError) as exc:
        parse_config("[run]\nT = abc\n")
    msgs = exc.value.problems
    assert "run.T: cannot read 'abc' as float" in msgs
    assert "missing required key 'scheme' in section [run]" in msgs
    assert not any("'T'" in m for m in msgs)


def test_duplicate_and_stray_keys():
    with pytest.raises(ConfigurationError) as exc:
        parse_config("x = 1\n" + MINIMAL + "[grid]\ncells = 32\n")
    msgs = "\n".join(exc.value.problems)
    assert "outside a known section" in msgs and "duplicate key 'cells'" in msgs


def test_scheme_specific_preconditions():
    with pytest.raises(ConfigurationError, match="eta must be positive"):
        parse_config(MINIMAL, {"run__scheme": "parabolic"})
    with pytest.raises(ConfigurationError, match="xi-independent noise"):
        parse_config(MINIMAL, {"run__scheme": "bgk", "run__eta": 0.1})
    with pytest.raises(ConfigurationError, match="n_samples >= 100"):
        parse_config(MINIMAL + "[verify]\ntests = martingale\n")
    with pytest.raises(ConfigurationError, match="flux interval"):
        parse_config(MINIMAL + "[initial]\namplitude = 1.5\n")


_floats = st.floats(0.01, 10, allow_nan=False)


@given(T=_floats, cfl=st.floats(0.05, 0.95), seed=st.integers(0, 2 ** 40),
       cells=st.sampled_from([8, 64, 512]), scale=st.floats(0, 2),
       radii=st.lists(st.floats(0.01, 3), min_size=1, max_size=4, unique=True))
def test_serialize_round_trip(T, cfl, seed, cells, scale, radii):
    cfg = parse_config(MINIMAL, {"run__T": T, "run__cfl": cfl, "run__seed": seed, "grid__cells": cells,
                                 "noise__scale": scale, "verify__tail_radii": sorted(radii)})
    assert parse_config(serialize(cfg)) == cfg


def test_serialize_without_out():
    cfg = parse_config(MINIMAL, {"run__out": "/somewhere"})
    assert "out = /somewhere" in serialize(cfg) and "out =" not in serialize(cfg, include_out=False)


def test_replace_revalidates():
    cfg = parse_config(MINIMAL)
    assert cfg.replace(run__n_samples=5).get("run", "n_samples") == 5
    with pytest.raises(ConfigurationError):
        cfg.replace(grid__cells=1)


def test_schema_documents_every_key():
    for sec in SCHEMA.values():
        for kind, _, doc in sec.values():
            assert kind in ("str", "int", "float", "floats", "ints", "strs") and doc


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_float_round_trips(x):
    assert float(fmt_float(x)) == x


def test_fmt_float_nonfinite():
    assert fmt_float(float("nan")) == '"NaN"' and fmt_float(-np.inf) == '"-Infinity"'


@given(st.recursive(st.none() | st.booleans() | st.integers(-10 ** 6, 10 ** 6)
                    | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=8),
                    lambda ch: st.lists(ch, max_size=4) | st.dictionaries(st.text(max_size=5), ch, max_size=4),
                    max_leaves=12))
def test_to_json_is_valid_json(obj):
    assert json.loads(to_json(obj)) == obj


def test_to_json_numpy_and_sorted():
    text = to_json({"b": np.float64(0.5), "a": np.arange(3), "c": np.bool_(True)})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": 0.5, "c": True}


def test_csv_text():
    assert csv_text(["i", "v"], [(0, 0.5), (1, np.float64(-2.0))]) == \
        "i,v\n0,5.0000000000000000e-01\n1,-2.0000000000000000e+00\n"


def test_manifest_hashes(tmp_path):
    files = {"a.csv": "x\n1\n", "sub/b.json": "{}\n"}
    man = write_outputs(files, tmp_path / "out", "cfg text")
    for rel, text in files.items():
        assert (tmp_path / "out" / rel).read_text() == text
        assert man["files"][rel] == hashlib.sha256(text.encode()).hexdigest()
    on_disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert on_disk["files"] == man["files"] and on_disk["config"] == "cfg text"


def test_empty_result_set_passes(tmp_path):
    env = ReportEnvelope("verify", "")
    assert env.passed and env.as_dict()["results"] == [] and env.as_dict()["wall_clock_seconds"] is None
    write_outputs({"report.json": to_json(env.as_dict())}, tmp_path)
    assert json.loads((tmp_path / "report.json").read_text())["all_passed"] is True


def test_output_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError, match=str(blocker / "out")):
        write_outputs({"a": "b"}, blocker / "out")
    with pytest.raises(OutputError, match="manifest"):
        write_outputs({"manifest.json": "{}"}, tmp_path / "ok")


def test_matrix_csv_round_trip_and_sidecar():
    from kinscl.grid_noise import XiGrid, make_grid
    from kinscl.io import grids_sidecar, matrix_csv, read_matrix_csv
    from kinscl.kinetic import DiscreteYoungMeasure, equilibrium_cell_average

    g, xg = make_grid(1, 8), XiGrid(1.5, 12)
    f = equilibrium_cell_average(np.linspace(-1, 1, 8), xg)
    assert np.array_equal(read_matrix_csv(matrix_csv(g, xg, f)), f)
    ym = DiscreteYoungMeasure.dirac(g, xg, np.linspace(-1, 1, 8))
    assert np.array_equal(read_matrix_csv(matrix_csv(g, xg, ym.weights)), ym.weights)
    g2 = make_grid(2, 4)
    f2 = equilibrium_cell_average(np.zeros((4, 4)), xg)
    assert read_matrix_csv(matrix_csv(g2, xg, f2)).shape == (16, 12)
    side = json.loads(to_json(grids_sidecar(g, xg, "kinetic density f")))
    assert side["xi_M"] == 12 and np.allclose(side["xi_centers"], xg.centers)
