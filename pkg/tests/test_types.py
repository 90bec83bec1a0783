"""Core type invariants and instance validation."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvedge.errors import DimensionMismatch, DuplicateNode, EmptyCollection
from mvedge.types import (
    MultiViewInstance,
    ScenarioParams,
    View,
    decode_prediction,
    encode_prediction,
    validate_instance,
)


def make_view(node=0, size=224):
    return View(np.zeros((size, size, 3), dtype=np.uint8), node=node)


class TestValidateInstance:
    params = ScenarioParams()

    def test_well_formed_instance_passes(self):
        inst = MultiViewInstance("a", 3, ((0, make_view(0)), (1, make_view(1))))
        assert validate_instance(inst, self.params) is inst

    def test_empty_collection(self):
        inst = MultiViewInstance("a", 0, ())
        with pytest.raises(EmptyCollection):
            validate_instance(inst, self.params)

    def test_duplicate_node(self):
        inst = MultiViewInstance("a", 0, ((0, make_view(0)), (0, make_view(0))))
        with pytest.raises(DuplicateNode):
            validate_instance(inst, self.params)

    def test_dimension_mismatch(self):
        inst = MultiViewInstance("a", 0, ((0, make_view(0, size=64)),))
        with pytest.raises(DimensionMismatch):
            validate_instance(inst, self.params)

    def test_label_out_of_range(self):
        inst = MultiViewInstance("a", 40, ((0, make_view(0)),))
        with pytest.raises(DimensionMismatch):
            validate_instance(inst, self.params)


class TestView:
    def test_rejects_wrong_shape(self):
        with pytest.raises(DimensionMismatch):
            View(np.zeros((4, 4), dtype=np.uint8))

    def test_rejects_wrong_dtype(self):
        with pytest.raises(DimensionMismatch):
            View(np.zeros((4, 4, 3), dtype=np.float32))

    def test_rejects_empty(self):
        with pytest.raises(DimensionMismatch):
            View(np.zeros((0, 4, 3), dtype=np.uint8))

    def test_dimensions(self):
        v = View(np.zeros((5, 9, 3), dtype=np.uint8))
        assert (v.width, v.height) == (9, 5)


class TestPredictionCodec:
    @given(st.integers(2, 256), st.data())
    def test_round_trip(self, classes, data):
        label = data.draw(st.integers(0, classes - 1))
        encoded = encode_prediction(label, classes)
        assert len(encoded) == 1
        assert decode_prediction(encoded) == label

    def test_rejects_oversized_class_space(self):
        with pytest.raises(ValueError):
            encode_prediction(0, 257)

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValueError):
            encode_prediction(40, 40)


class TestScenarioParams:
    def test_defaults(self):
        p = ScenarioParams()
        assert (p.width, p.height, p.embedding_dim, p.bins, p.classes) == (
            224, 224, 25088, 32, 40,
        )

    def test_class_ceiling(self):
        with pytest.raises(ValueError):
            ScenarioParams(classes=257)
