import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modlearn.graph import Graph
from modlearn.spaces import (Batch, Conv2DSpace, SpaceError, VectorSpace,
                             format_as, parse_axes)

ALL_AXES = ["".join(p) for p in itertools.permutations("bc01")]


class TestNumElements:
    def test_vector(self):
        assert VectorSpace(3072).num_elements() == 3072
        assert VectorSpace(1).num_elements() == 1

    def test_conv(self):
        assert Conv2DSpace(32, 32, 3, "b01c").num_elements() == 3072

    def test_invalid(self):
        with pytest.raises(SpaceError):
            VectorSpace(0)
        with pytest.raises(SpaceError):
            Conv2DSpace(0, 3, 1)
        with pytest.raises(SpaceError):
            parse_axes("bc0")
        with pytest.raises(SpaceError):
            parse_axes("bcc1")


class TestValidate:
    def test_ok(self):
        VectorSpace(3).validate(np.zeros((5, 3)))
        Conv2DSpace(32, 32, 3, "b01c").validate(np.zeros((64, 32, 32, 3)))
        VectorSpace(3).validate(np.zeros((0, 3)))

    def test_mismatch_names_layouts(self):
        with pytest.raises(SpaceError, match=r"\[\*, 3\].*\[5, 4\]"):
            VectorSpace(3).validate(np.zeros((5, 4)))
        with pytest.raises(SpaceError):
            Conv2DSpace(2, 2, 1, "bc01").validate(np.zeros((5, 4)))


def _flatten_oracle(x, space):
    """Canonical (channel, row, column) flattening by explicit indexing."""
    n = x.shape[space.axes.index("b")]
    out = np.zeros((n, space.num_elements()))
    for i in range(n):
        for c in range(space.num_channels):
            for r in range(space.rows):
                for s in range(space.cols):
                    idx = {"b": i, "c": c, 0: r, 1: s}
                    pos = tuple(idx[a] for a in space.axes)
                    out[i, (c * space.rows + r) * space.cols + s] = x[pos]
    return out


class TestFormatAs:
    def test_vector_to_b01c(self):
        x = np.random.default_rng(0).normal(size=(64, 3072))
        out = format_as(Batch(x, VectorSpace(3072)),
                        Conv2DSpace(32, 32, 3, "b01c"))
        assert out.tensor.shape == (64, 32, 32, 3)

    def test_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        assert format_as(Batch(x, VectorSpace(3)), VectorSpace(3)).tensor is x

    def test_bc01_to_c01b(self):
        x = np.random.default_rng(1).normal(size=(64, 3, 32, 32))
        out = format_as(Batch(x, Conv2DSpace(32, 32, 3, "bc01")),
                        Conv2DSpace(32, 32, 3, "c01b")).tensor
        assert out.shape == (3, 32, 32, 64)
        assert out[2, 5, 7, 11] == x[11, 2, 5, 7]

    def test_element_count_mismatch(self):
        with pytest.raises(SpaceError, match="elements"):
            format_as(Batch(np.zeros((2, 5)), VectorSpace(5)),
                      Conv2DSpace(2, 2, 1))

    @pytest.mark.parametrize("axes", ALL_AXES)
    def test_flatten_order_is_canonical(self, axes):
        space = Conv2DSpace(2, 3, 2, axes)
        x = np.random.default_rng(2).normal(size=space.batch_shape(3))
        flat = space.np_format_as(x, VectorSpace(12))
        np.testing.assert_array_equal(flat, _flatten_oracle(x, space))

    @pytest.mark.parametrize("axes", ["b01c", "c01b"])
    def test_symbolic_matches_numeric(self, axes):
        src = Conv2DSpace(2, 3, 2, axes)
        dst = VectorSpace(12)
        x = np.random.default_rng(3).normal(size=src.batch_shape(4))
        g = Graph()
        node = g.variable("x", src.batch_shape(None))
        out = g.eval(src.format_node(node, dst), {node: x})
        np.testing.assert_array_equal(out, src.np_format_as(x, dst))
        back = g.eval(dst.format_node(src.format_node(node, dst), src),
                      {node: x})
        np.testing.assert_array_equal(back, x)

    def test_empty_batch(self):
        src = Conv2DSpace(2, 2, 1, "b01c")
        out = src.np_format_as(np.zeros((0, 2, 2, 1)), VectorSpace(4))
        assert out.shape == (0, 4)


@st.composite
def _spaces_and_batch(draw):
    rows, cols, ch = (draw(st.integers(1, 4)) for _ in range(3))
    n = draw(st.integers(0, 3))
    src_axes = draw(st.sampled_from(ALL_AXES))
    if draw(st.booleans()):
        target = VectorSpace(rows * cols * ch)
    else:
        target = Conv2DSpace(rows, cols, ch, draw(st.sampled_from(ALL_AXES)))
    src = Conv2DSpace(rows, cols, ch, src_axes)
    seed = draw(st.integers(0, 2 ** 32 - 1))
    x = np.random.default_rng(seed).normal(size=src.batch_shape(n))
    if draw(st.booleans()):
        # start from the vector side instead
        src, target = VectorSpace(rows * cols * ch), src
        x = np.random.default_rng(seed).normal(size=src.batch_shape(n))
    return src, target, x


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(_spaces_and_batch())
    def test_round_trip_exact(self, case):
        src, target, x = case
        there = format_as(Batch(x, src), target)
        target.validate(there.tensor)
        back = format_as(there, src).tensor
        assert back.shape == x.shape
        assert back.tobytes() == np.ascontiguousarray(x).tobytes()
        np.testing.assert_array_equal(np.sort(there.tensor, axis=None),
                                      np.sort(x, axis=None))
