import pytest

from opframe.errors import MalformedRun, SchemaError
from opframe.models import CHSH_CONFIG, chsh_schema, coin_schema, grid_schema
from opframe.schema import atom_of_run, build_schema, enumerate_coordinates, eta_of, schema_to_config


def test_coin_coordinates():
    coords = enumerate_coordinates(coin_schema())
    assert coords.dim == 3
    assert coords.labels() == ["toss=H", "toss=T", "toss=H&toss=T"]
    assert coords.zero_positions() == [2]
    assert coords.free_positions() == []


def test_two_binary_measurements():
    coords = enumerate_coordinates(grid_schema((2, 2)))
    assert len(coords.singles) == 4
    assert len(coords.conjunctions) == 11
    assert len(coords.free_positions()) == 4
    assert coords.possible_sets == (frozenset({0, 1}),)


def test_chsh_coordinates():
    coords = enumerate_coordinates(chsh_schema())
    assert len(coords.conjunctions) == 40
    assert len(coords.free_positions()) == 16
    assert coords.dim == 48
    assert len(coords.possible_sets) == 4


def test_impossible_family_is_upward_closed():
    schema = grid_schema((2, 2, 2), impossible=[(0, 1)])
    assert frozenset({0, 1}) in schema.impossible
    assert frozenset({0, 1, 2}) in schema.impossible
    assert frozenset({0, 2}) not in schema.impossible


def test_ordering_by_size_then_lexicographic():
    coords = enumerate_coordinates(grid_schema((2, 2)))
    keys = [c.outcomes for c in coords.conjunctions]
    assert keys == sorted(keys, key=lambda k: (len(k), k))


def test_label_round_trip():
    coords = enumerate_coordinates(chsh_schema())
    for pos in range(coords.dim):
        assert coords.parse_label(coords.label(pos)) == pos


@pytest.mark.parametrize("config, match", [
    ({"measurements": []}, "at least one"),
    ({"measurements": [{"name": "a", "outcomes": ["x"]}, {"name": "a", "outcomes": ["y"]}]}, "duplicate"),
    ({"measurements": [{"name": "a", "outcomes": ["x", "x"]}]}, "duplicate outcome"),
    ({"measurements": [{"name": "a", "outcomes": ["x", "y"], "values": [1, 1]}]}, "distinct"),
    ({"measurements": [{"name": "a", "outcomes": ["x"]}], "impossible": [["a"]]}, "fewer than 2"),
    ({"measurements": [{"name": "a", "outcomes": ["x"]}], "impossible": [["a", "b"]]}, "unknown"),
])
def test_schema_errors(config, match):
    with pytest.raises(SchemaError, match=match):
        build_schema(config)


def test_schema_config_round_trip():
    schema = chsh_schema()
    again = build_schema(schema_to_config(schema))
    assert again == schema
    assert build_schema(CHSH_CONFIG) == schema


def test_atom_of_run():
    schema = chsh_schema()
    eps = atom_of_run(schema, ["A1", "B2"], {"A1": "0", "B2": "1"})
    assert eps == (1 << 0) | (1 << 7)
    assert eta_of(schema, eps) == 0b1001
    assert atom_of_run(schema, [], []) == 0


@pytest.mark.parametrize("performed, outcomes, match", [
    (["A1", "A1"], [("A1", "0")], "twice"),
    (["A1", "A2"], [("A1", "0"), ("A2", "0")], "impossible"),
    (["A1"], [("B1", "0")], "not performed"),
    (["A1"], [("A1", "0"), ("A1", "1")], "two outcomes"),
    (["A1"], [("A1", "7")], "no outcome"),
    (["A1", "B1"], [("A1", "0")], "without an outcome"),
])
def test_malformed_runs(performed, outcomes, match):
    with pytest.raises(MalformedRun, match=match):
        atom_of_run(chsh_schema(), performed, outcomes)
