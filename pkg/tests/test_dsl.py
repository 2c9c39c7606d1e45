import glob
import math
import os
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modlearn.costs import CD, SumOfCosts
from modlearn.datasets import save_npy
from modlearn.dsl import (ConfigError, ConfigErrors, Mapping, OverrideError,
                          ParseError, Registry, Scalar, Sequence, Tagged,
                          apply_overrides, check, default_registry,
                          instantiate, load_experiment, parse, serialize,
                          validate)
from modlearn.dsl import errors as dsl_errors
from modlearn.models import MLP, RBM
from modlearn.rng import derive_seed
from modlearn.training import SGD, Train

HERE = os.path.dirname(__file__)
CONFIGS = sorted(glob.glob(os.path.join(HERE, os.pardir, "configs", "*.yaml")))
MALFORMED = sorted(glob.glob(os.path.join(HERE, "fixtures", "malformed",
                                          "*.yaml")))
EXPECT = re.compile(r"# expect: (\w+) (\d+):(\d+)")


def plain(node):
    """Config tree -> plain Python values, tags as ``(tag, payload)``."""
    if isinstance(node, Scalar):
        return node.value
    if isinstance(node, Sequence):
        return [plain(n) for n in node.items]
    if isinstance(node, Mapping):
        return {k: plain(v) for k, v in node.items.items()}
    return (node.tag, plain(node.payload))


class TestParse:
    def test_mapping_and_sequence(self):
        tree = parse("a: 1\nb: [2, 3]")
        assert plain(tree) == {"a": 1, "b": [2, 3]}
        assert isinstance(tree.items["b"], Sequence)

    def test_tagged_scientific(self):
        tree = parse("!obj:train.sgd {learning_rate: 1e-2}")
        assert isinstance(tree, Tagged) and tree.tag == "train.sgd"
        value = tree.payload.items["learning_rate"].value
        assert value == 0.01 and isinstance(value, float)

    def test_alias_is_same_node(self):
        tree = parse("x: &m {p: 1}\ny: *m")
        assert tree.items["x"] is tree.items["y"]

    @pytest.mark.parametrize("text, value", [
        ("1", 1), ("-3", -3), ("+4", 4), ("1.5", 1.5), ("1e3", 1000.0),
        ("2.5E-1", 0.25), (".5", 0.5), ("1.", 1.0), ("true", True),
        ("false", False), ("null", None), ("~", None), ("", None),
        ("'1'", "1"), ('"true"', "true"), ("yes", "yes"), ("0x10", "0x10"),
        ("1_000", "1_000"), ("hello world", "hello world"),
        (".inf", math.inf), ("-.inf", -math.inf)])
    def test_scalar_types(self, text, value):
        got = parse(f"k: {text}").items["k"].value
        assert got == value and type(got) is type(value)

    def test_integers_stay_integers(self):
        assert type(parse("k: 10").items["k"].value) is int

    def test_positions(self):
        tree = parse("# comment\nouter:\n  inner: !obj:a.b {x: 1}\n")
        inner = tree.items["outer"].items["inner"]
        assert (inner.line, inner.column) == (3, 10)
        assert inner.payload.key_positions["x"] == (3, 20)

    def test_empty_obj_payload(self):
        tree = parse("a: !obj:dataset.xor\nb: 1")
        assert tree.items["a"].payload.items == {}

    def test_npy_tag(self):
        node = parse("X: !npy:data/x.npy").items["X"]
        assert node.kind == "npy" and node.tag == "data/x.npy"

    def test_comments_and_block_sequences(self):
        tree = parse("items:  # the list\n  - 1\n  - [2, {a: b}]\n")
        assert plain(tree) == {"items": [1, [2, {"a": "b"}]]}

    def test_syntax_error_names_token(self):
        with pytest.raises(ParseError) as info:
            parse("a: [1, 2\nb: 3", source="x.yaml")
        assert info.value.line == 2
        assert "x.yaml:2:" in str(info.value)
        assert "near" in str(info.value)

    def test_bytes_input(self):
        assert plain(parse("a: 1".encode())) == {"a": 1}

    def test_not_utf8(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_bytes(b"a: \xff\xfe")
        with pytest.raises(ParseError, match="UTF-8"):
            load_experiment(path)


# -- round trip -------------------------------------------------------------

names = st.from_regex(r"[a-z][a-z0-9_]{0,5}(\.[a-z][a-z0-9_]{0,5}){0,2}",
                      fullmatch=True)
text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)
scalars = st.one_of(
    st.none(), st.booleans(), st.integers(-10**20, 10**20),
    st.floats(allow_nan=False), text).map(Scalar)


def trees():
    def extend(children):
        mapping = st.dictionaries(text, children, max_size=4).map(Mapping)
        return st.one_of(
            st.lists(children, max_size=4).map(Sequence),
            mapping,
            st.tuples(names, mapping).map(lambda t: Tagged(t[0], t[1])))
    return st.recursive(scalars, extend, max_leaves=20)


@st.composite
def shared_trees(draw):
    """A tree where some subtrees are reused (aliased) elsewhere."""
    tree = draw(trees())
    pool = []

    def walk(node, shareable=True):
        if shareable:
            pool.append(node)
        if isinstance(node, Tagged):
            # a tag and its mapping are one YAML node: never alias the
            # payload on its own
            walk(node.payload, shareable=False)
        elif isinstance(node, (Sequence, Mapping)):
            for child in (node.items if isinstance(node, Sequence)
                          else node.items.values()):
                walk(child)
    walk(tree)
    root = Sequence([tree])
    for _ in range(draw(st.integers(0, 3))):
        shared = pool[draw(st.integers(0, len(pool) - 1))]
        root.items.append(shared)
    return root


def sharing(node):
    """Identity structure: the DFS visit order of every node, with repeats
    recorded by their first index."""
    seen, out = {}, []

    def walk(n):
        if id(n) in seen:
            out.append(seen[id(n)])
            return
        seen[id(n)] = len(seen)
        out.append(type(n).__name__)
        if isinstance(n, Tagged):
            walk(n.payload)
        elif isinstance(n, Sequence):
            for c in n.items:
                walk(c)
        elif isinstance(n, Mapping):
            for c in n.items.values():
                walk(c)
    walk(node)
    return out


class TestSerialize:
    @settings(max_examples=200, deadline=None)
    @given(trees())
    def test_round_trip(self, tree):
        again = parse(serialize(tree))
        assert again == tree

    @settings(max_examples=100, deadline=None)
    @given(shared_trees())
    def test_round_trip_preserves_sharing(self, tree):
        again = parse(serialize(tree))
        assert again == tree
        assert sharing(again) == sharing(tree)

    @pytest.mark.parametrize("path", CONFIGS, ids=os.path.basename)
    def test_shipped_configs(self, path):
        tree = parse(open(path).read())
        assert parse(serialize(tree)) == tree
        assert sharing(parse(serialize(tree))) == sharing(tree)

    def test_reserialize_is_stable(self):
        tree = parse(open(CONFIGS[0]).read())
        once = serialize(tree)
        assert serialize(parse(once)) == once


# -- instantiation ------------------------------------------------------------

SGD_RBM = """
!obj:train.harness
dataset: &d !obj:dataset.binary_prototypes {num_examples: 20, dim: 4}
model: !obj:model.rbm {nvis: 4, nhid: 3}
algorithm: !obj:train.sgd
  learning_rate: 0.1
  batch_size: 5
  cost: !obj:cost.cd {}
  monitoring_dataset: {train: *d}
  termination_criterion: !obj:termination.epoch_counter {max_epochs: 2}
"""


class TestInstantiate:
    def test_builds_harness(self):
        spec = instantiate(parse(SGD_RBM))
        harness = spec.root
        assert isinstance(harness, Train)
        assert isinstance(harness.model, RBM)
        assert isinstance(harness.algorithm, SGD)
        assert isinstance(harness.algorithm.cost, CD)
        assert harness.algorithm.learning_rate == 0.1

    def test_alias_gives_one_object(self):
        harness = instantiate(parse(SGD_RBM)).root
        monitored = harness.algorithm.monitoring_dataset["train"]
        assert monitored is harness.dataset
        # a change through one reference is visible through the other
        harness.dataset.X[0, 0] = 42.0
        assert monitored.X[0, 0] == 42.0

    def test_layers_in_order(self):
        spec = instantiate(parse("""
!obj:model.mlp
nvis: 3
layers:
  - !obj:layer.sigmoid {dim: 4, layer_name: a}
  - !obj:layer.tanh {dim: 5, layer_name: b}
  - !obj:layer.softmax {dim: 2, layer_name: c}
"""))
        assert isinstance(spec.root, MLP)
        assert [layer.layer_name for layer in spec.root.layers] == \
            ["a", "b", "c"]
        assert [layer.dim for layer in spec.root.layers] == [4, 5, 2]

    def test_int_coerced_to_float(self):
        spec = instantiate(parse("!obj:train.momentum {momentum: 0}"))
        assert spec.root.momentum == 0.0

    def test_derived_seeds(self):
        spec = instantiate(parse(SGD_RBM), seed=11)
        harness = spec.root
        assert spec.seed == 11
        assert harness.seed == 11
        assert harness.model.seed == derive_seed(11, "harness.model")
        assert harness.algorithm.cost.seed == \
            derive_seed(11, "harness.algorithm.cost")
        assert spec.path_of(harness.algorithm.cost) == \
            "harness.algorithm.cost"

    def test_seed_from_config_and_explicit(self):
        tree = parse("!obj:model.rbm {nvis: 2, nhid: 2, seed: 5}")
        assert instantiate(tree).root.seed == 5
        tree = parse("!obj:train.harness\nseed: 5\n"
                     "dataset: !obj:dataset.xor {}\n"
                     "model: !obj:model.rbm {nvis: 2, nhid: 2}")
        assert instantiate(tree).root.seed == 5
        assert instantiate(tree, seed=6).root.seed == 6

    def test_same_seed_same_objects(self):
        a = instantiate(parse(SGD_RBM), seed=3).root
        b = instantiate(parse(SGD_RBM), seed=3).root
        assert a.model.W.tobytes() == b.model.W.tobytes()
        c = instantiate(parse(SGD_RBM), seed=4).root
        assert a.model.W.tobytes() != c.model.W.tobytes()

    def test_nested_lists_of_objects(self):
        spec = instantiate(parse("""
!obj:cost.sum
costs:
  - [0.5, !obj:cost.nll_softmax {}]
  - !obj:cost.weight_decay {coeffs: [1, 2]}
"""))
        assert isinstance(spec.root, SumOfCosts)
        assert spec.root.terms[0][0] == 0.5

    def test_npy(self, tmp_path):
        save_npy(tmp_path / "x.npy", np.arange(6.0).reshape(3, 2))
        (tmp_path / "exp.yaml").write_text(
            "!obj:dataset.dense\nX: !npy:x.npy\n")
        ds = load_experiment(tmp_path / "exp.yaml").root
        np.testing.assert_array_equal(ds.X, np.arange(6.0).reshape(3, 2))

    def test_errors_collected_in_one_pass(self):
        text = """
!obj:train.harness
dataset: !obj:dataset.nothing {}
model: !obj:model.rbm {nvis: 2, nhid: x, colour: red}
algorithm: !obj:train.sgd {batch_size: 2}
"""
        with pytest.raises(ConfigErrors) as info:
            instantiate(parse(text))
        kinds = [type(e).__name__ for e in info.value]
        # reported in source order
        assert kinds == ["UnknownTypeError", "TypeMismatchError",
                         "UnknownParameterError", "MissingParameterError"]
        positions = [(e.line, e.column) for e in info.value]
        assert positions == sorted(positions)

    def test_unknown_type_message(self):
        with pytest.raises(ConfigErrors) as info:
            instantiate(parse("x: 1\ny: !obj:nonexistent {}"))
        (err,) = info.value
        assert err.message.startswith("unknown type 'nonexistent'")
        assert (err.line, err.column) == (2, 4)

    def test_suggestions(self):
        with pytest.raises(ConfigErrors, match="did you mean 'model.rbm'"):
            instantiate(parse("!obj:model.rmb {nvis: 2, nhid: 2}"))

    def test_no_partial_graph(self):
        # valid siblings are built but nothing is returned
        with pytest.raises(ConfigErrors):
            instantiate(parse("- !obj:model.rbm {nvis: 2, nhid: 2}\n"
                              "- !obj:model.rbm {nvis: 0, nhid: 2}"))

    def test_custom_registry(self):
        registry = default_registry()
        registry.register("test.pair", lambda a, b=2: (a, b))
        assert instantiate(parse("!obj:test.pair {a: 1}"),
                           registry).root == (1, 2)
        assert "test.pair" not in default_registry()
        with pytest.raises(ValueError):
            registry.register("test.pair", dict)
        assert isinstance(registry, Registry)


class TestOverrides:
    def test_changes_value(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, ["algorithm.learning_rate=0.01",
                               "harness.model.nhid=5"])
        harness = instantiate(tree).root
        assert harness.algorithm.learning_rate == 0.01
        assert harness.model.nhid == 5

    def test_adds_key_and_object(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, [
            "algorithm.learning_rule=!obj:train.momentum {momentum: 0.9}"])
        assert instantiate(tree).root.algorithm.learning_rule.momentum == 0.9

    def test_list_index(self):
        tree = parse("!obj:cost.sum {costs: [!obj:cost.cd {}, "
                     "!obj:cost.weight_decay {}]}")
        apply_overrides(tree, ["costs.1=!obj:cost.weight_decay {coeffs: 3}"])
        assert instantiate(tree).root.terms[1][1].coeffs == 3

    @pytest.mark.parametrize("override", [
        "algorithm.learning_rate", "nothing.here=1", "algorithm..x=1",
        "algorithm.learning_rate.x=1", "algorithm.cost=[1",
        "model.nvis.0=1"])
    def test_bad_overrides(self, override):
        with pytest.raises(ConfigErrors) as info:
            apply_overrides(parse(SGD_RBM), [override])
        (err,) = info.value
        assert isinstance(err, OverrideError)
        assert err.source == "--override #1"

    def test_override_type_error_reported_at_instantiation(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, ["algorithm.batch_size=big"])
        with pytest.raises(ConfigErrors, match="TypeMismatchError"):
            instantiate(tree)


class TestValidate:
    def test_shipped_configs_pass(self):
        assert len(CONFIGS) == 3
        for path in CONFIGS:
            assert validate(load_experiment(path)) == []

    def test_harness_root_required(self):
        errors = validate(instantiate(parse("!obj:model.rbm {nvis: 2, "
                                            "nhid: 2}")))
        assert len(errors) == 1 and "root object" in errors[0].message

    def test_batch_size_too_large(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, ["algorithm.batch_size=50"])
        (err,) = validate(instantiate(tree))
        assert err.path == "harness.algorithm.batch_size"
        assert "exceeds the 20" in err.message

    def test_missing_termination(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, ["algorithm.termination_criterion=null"])
        (err,) = validate(instantiate(tree))
        assert err.path == "harness.algorithm.termination_criterion"

    def test_bgd_needs_value(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, ["algorithm=!obj:train.bgd {cost: !obj:cost.cd "
                               "{}, termination_criterion: "
                               "!obj:termination.epoch_counter "
                               "{max_epochs: 1}}"])
        (err,) = validate(instantiate(tree))
        assert err.path == "harness.algorithm.cost"
        assert "cost value" in err.message

    def test_default_algorithm_needs_learning_rule(self):
        text = """
!obj:train.harness
dataset: !obj:dataset.xor {}
model: !obj:model.mlp {nvis: 2, layers: [!obj:layer.sigmoid {dim: 1}]}
algorithm: !obj:train.default
  batch_size: 2
  termination_criterion: !obj:termination.epoch_counter {max_epochs: 1}
"""
        (err,) = validate(instantiate(parse(text)))
        assert "train_batch" in err.message

    def test_space_mismatch_names_both(self):
        path = os.path.join(HERE, "fixtures", "malformed",
                            "space_mismatch.yaml")
        (err,) = validate(load_experiment(path))
        assert "VectorSpace(3)" in err.message
        assert "VectorSpace(2)" in err.message
        assert err.path == "harness.model"

    def test_check_raises(self):
        tree = parse(SGD_RBM)
        apply_overrides(tree, ["algorithm.batch_size=50"])
        with pytest.raises(ConfigErrors, match="batch_size"):
            check(instantiate(tree))


@pytest.mark.parametrize("path", MALFORMED, ids=os.path.basename)
def test_malformed_fixture(path):
    kind, line, column = EXPECT.match(open(path).readline()).groups()
    with pytest.raises(ConfigError) as info:
        check(load_experiment(path))
    err = info.value
    if isinstance(err, ConfigErrors):
        err = err.errors[0]
    assert type(err) is getattr(dsl_errors, kind)
    assert (err.line, err.column) == (int(line), int(column))
    assert err.source == path
    assert f"{path}:{line}:{column}" in str(info.value)


def test_twenty_malformed_fixtures():
    assert len(MALFORMED) == 20
