import json

import numpy as np
import pytest

from opframe import io
from opframe.empirical import reconstruct_frequencies, sample_runs, tally
from opframe.errors import FormatError
from opframe.models import chsh_context_freqs, chsh_schema, coin_schema, pr_box_state
from opframe.schema import schema_to_config
from opframe.statespace import deterministic_vertices, h_representation


def test_schema_file_round_trip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(schema_to_config(chsh_schema())))
    assert io.load_schema(p) == chsh_schema()


def test_bad_schema_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        io.load_schema(p)


def test_run_log_round_trip(tmp_path, rng):
    schema = chsh_schema()
    runs = sample_runs(reconstruct_frequencies(pr_box_state(), chsh_context_freqs()), 50, rng)
    p = tmp_path / "log.csv"
    io.write_run_log(p, runs)
    again = io.read_run_log(p, schema)
    assert tally(schema, again).weights == tally(schema, runs).weights


@pytest.mark.parametrize("body, line, rule", [
    ("id,performed,outcomes\n", 1, "header"),
    ("run_id,performed,outcomes\n1,toss,toss=H\n2,toss,toss=X\n", 3, "no outcome"),
    ("run_id,performed,outcomes\n1,toss,toss=H,extra\n", 2, "3 fields"),
    ("run_id,performed,outcomes\n1,toss,\n", 2, "without an outcome"),
    ("run_id,performed,outcomes\n", None, "no runs"),
])
def test_run_log_errors_carry_line_numbers(tmp_path, body, line, rule):
    p = tmp_path / "log.csv"
    p.write_text(body)
    with pytest.raises(FormatError, match=rule) as info:
        io.read_run_log(p, coin_schema())
    assert info.value.line == line


def test_atom_descriptor_round_trip():
    schema = chsh_schema()
    model = reconstruct_frequencies(pr_box_state(), chsh_context_freqs())
    for eps, eta in model.weights:
        text = io.atom_descriptor(schema, eps, eta)
        assert io.parse_atom_descriptor(schema, text) == (eps, eta)
    assert io.atom_descriptor(schema, 0b1, 0b1) == "A1|A1=0"


def test_model_round_trip(tmp_path):
    schema = chsh_schema()
    model = reconstruct_frequencies(pr_box_state(), chsh_context_freqs())
    p = tmp_path / "m.json"
    io.write_model(p, model)
    back = io.read_model(p, schema)
    assert back.weights == pytest.approx(model.weights)


def test_model_must_be_normalized(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"atoms": {"toss|toss=H": 0.5}}))
    with pytest.raises(FormatError, match="sum"):
        io.read_model(p, coin_schema())


def test_sha256_is_order_independent():
    assert io.sha256_of({"a": 1, "b": [1, 2]}) == io.sha256_of({"b": [1, 2], "a": 1})
    assert io.sha256_of({"a": np.float64(0.5)}) == io.sha256_of({"a": 0.5})


def test_csv_exports(tmp_path):
    verts = deterministic_vertices(coin_schema())
    io.export_polytope(tmp_path / "h.csv", h_representation(coin_schema()))
    io.export_vertices(tmp_path / "v.csv", verts)
    io.export_weights(tmp_path / "w.csv", verts, [0.8, 0.2])
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert len(lines) == 3
    assert "toss=H" in lines[0]
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 1 + 9
