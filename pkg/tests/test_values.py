"""Value model: dtypes, tensors, document round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invfuzz.values import (
    ApiInput,
    BoolV,
    DecodeError,
    DEFAULT_DTYPES,
    DtypeV,
    FloatV,
    IndexOutOfRange,
    IntV,
    ListV,
    NONE,
    StrV,
    TensorV,
    TupleV,
    WrongKind,
    byte_size,
    decode_input,
    decode_value,
    encode_input,
    encode_value,
    tensor_prop,
)


class TestTensorProp:
    def test_ndim(self):
        assert tensor_prop(TensorV((5, 3, 4, 1), 0, 0, 1), "ndim") == 4

    def test_negative_index_resolution(self):
        t = TensorV((3, 1, 1), 0, 0, 1)
        assert tensor_prop(t, "shape", -1) == 1
        assert tensor_prop(t, "shape", -3) == 3

    def test_scalar_tensor(self):
        assert tensor_prop(TensorV((), 0, 0, 1), "ndim") == 0

    def test_index_out_of_range(self):
        t = TensorV((2, 3), 0, 0, 1)
        for bad in (2, -3, 5):
            with pytest.raises(IndexOutOfRange):
                tensor_prop(t, "shape", bad)

    def test_min_max_observed_vs_summary(self):
        with_elems = TensorV((3,), 0, -1.0, 1.0, np.array([-0.5, 0.0, 0.25]))
        assert tensor_prop(with_elems, "min") == -0.5
        assert tensor_prop(with_elems, "max") == 0.25
        summary_only = TensorV((3,), 0, -1.0, 1.0)
        assert tensor_prop(summary_only, "min") == -1.0
        assert tensor_prop(summary_only, "max") == 1.0

    def test_wrong_kind(self):
        with pytest.raises(WrongKind):
            tensor_prop(IntV(3), "ndim")


class TestByteSize:
    def test_paper_shape(self):
        assert byte_size(TensorV((5, 3, 4, 1), 0, 0, 1)) == 240  # 60 x float32

    def test_empty(self):
        assert byte_size(TensorV((0,), 3, 0, 1)) == 0

    def test_scalar_float64(self):
        assert byte_size(TensorV((), 1, 0, 1)) == 8

    def test_monotone_in_shape_and_width(self):
        base = byte_size(TensorV((2, 3), 0, 0, 1))
        assert byte_size(TensorV((2, 4), 0, 0, 1)) >= base
        assert byte_size(TensorV((3, 3), 0, 0, 1)) >= base
        assert byte_size(TensorV((2, 3), 1, 0, 1)) >= base  # float64 wider


def scalars():
    return st.one_of(
        st.integers(-(2**40), 2**40).map(IntV),
        st.floats(allow_nan=False, allow_infinity=False, width=32).map(
            lambda x: FloatV(float(x))
        ),
        st.booleans().map(BoolV),
        st.text(max_size=12).map(StrV),
        st.integers(0, len(DEFAULT_DTYPES) - 1).map(DtypeV),
        st.just(NONE),
    )


@st.composite
def tensors(draw):
    nd = draw(st.integers(0, 3))
    shape = tuple(draw(st.integers(0, 3)) for _ in range(nd))
    lo = draw(st.floats(-100, 100, allow_nan=False))
    hi = lo + draw(st.floats(0, 50, allow_nan=False))
    dtype = draw(st.integers(0, len(DEFAULT_DTYPES) - 1))
    numel = int(np.prod(shape)) if shape else 1
    if draw(st.booleans()):
        elements = np.linspace(lo, hi, numel) if numel else np.empty(0)
        return TensorV(shape, dtype, lo, hi, elements)
    return TensorV(shape, dtype, lo, hi)


def values():
    leaf = st.one_of(scalars(), tensors())
    return st.one_of(
        leaf,
        st.lists(leaf, max_size=3).map(lambda xs: ListV(tuple(xs))),
        st.lists(leaf, max_size=3).map(lambda xs: TupleV(tuple(xs))),
    )


class TestDocumentRoundTrip:
    @given(values())
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_identity(self, v):
        assert decode_value(encode_value(v)) == v

    def test_tensor_with_elements(self):
        t = TensorV((3,), 0, 0.0, 1.0, np.array([0.2, 0.5, 0.9]))
        doc = encode_value(t)
        assert doc["dtype"] == "float32" and doc["elements"] == [0.2, 0.5, 0.9]
        assert decode_value(doc) == t

    def test_ndim_shape_mismatch(self):
        doc = {"kind": "tensor", "ndim": 2, "shape": [1, 2, 3], "dtype": "float32", "lo": 0, "hi": 1}
        with pytest.raises(DecodeError) as err:
            decode_value(doc)
        assert "shape" in err.value.path

    def test_list_of_ints(self):
        v = ListV((IntV(1), IntV(2)))
        doc = encode_value(v)
        assert doc["kind"] == "list" and doc["items"][0]["kind"] == "int"
        assert decode_value(doc) == v

    def test_unknown_field_rejected(self):
        with pytest.raises(DecodeError):
            decode_value({"kind": "int", "value": 1, "extra": True})

    def test_unknown_kind_rejected(self):
        with pytest.raises(DecodeError):
            decode_value({"kind": "mystery"})

    def test_element_count_mismatch(self):
        doc = {"kind": "tensor", "shape": [2], "dtype": "float32", "lo": 0, "hi": 1,
               "elements": [0.5]}
        with pytest.raises(DecodeError):
            decode_value(doc)

    def test_nonfinite_elements_roundtrip(self):
        t = TensorV((2,), 0, 0.0, 1.0, np.array([np.nan, np.inf]))
        assert decode_value(encode_value(t)) == t

    def test_api_input_roundtrip(self):
        inp = ApiInput("ref.argmax", (("input", TensorV((2,), 0, 0, 1)), ("dim", IntV(0))))
        assert decode_input(encode_input(inp)) == inp

    def test_min_le_observed_extrema(self):
        t = TensorV((4,), 0, -1.0, 2.0, np.array([-0.9, 0.0, 1.1, 1.9]))
        assert tensor_prop(t, "min") >= t.lo
        assert tensor_prop(t, "max") <= t.hi
