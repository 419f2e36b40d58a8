import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mspatplus.errors import (
    ConstantVector,
    DimensionMismatch,
    NegativeCount,
    NonPositiveExpected,
    ParseError,
    UnknownAreaId,
)
from mspatplus.io import load_dataset, read_csv_rows, standardize, write_csv


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def toy(tmp_path):
    c = _write(tmp_path / "counts.csv", "area_id,burglary,robbery\nA,3,1\nB,0,4\n")
    e = _write(tmp_path / "expected.csv", "area_id,burglary,robbery\nA,2.5,1.5\nB,1.0,3.0\n")
    x = _write(tmp_path / "cov.csv", "area_id,sex_ratio\nA,0.9\nB,1.1\n")
    g = _write(tmp_path / "graph.txt", "n=2\n0 1\n")
    return tmp_path, c, e, x, g


def test_toy_bundle(toy):
    _, c, e, x, g = toy
    b = load_dataset(c, e, x, g)
    assert (b.n, b.J) == (2, 2)
    assert b.crimes == ("burglary", "robbery")
    np.testing.assert_array_equal(b.Y, [[3, 1], [0, 4]])
    np.testing.assert_array_equal(b.covariates["sex_ratio"], [0.9, 1.1])


def test_shuffled_rows_join_on_key(toy):
    d, c, e, x, g = toy
    e2 = _write(d / "e2.csv", "area_id,burglary,robbery\nB,1.0,3.0\nA,2.5,1.5\n")
    x2 = _write(d / "x2.csv", "area_id,sex_ratio\nB,1.1\nA,0.9\n")
    a, b = load_dataset(c, e, x, g), load_dataset(c, e2, x2, g)
    np.testing.assert_array_equal(a.e, b.e)
    np.testing.assert_array_equal(a.covariates["sex_ratio"], b.covariates["sex_ratio"])


def test_load_errors(toy):
    d, c, e, x, g = toy
    with pytest.raises(NonPositiveExpected):
        load_dataset(c, _write(d / "e0.csv", "area_id,burglary,robbery\nA,0,1\nB,1,1\n"), x, g)
    with pytest.raises(NegativeCount):
        load_dataset(_write(d / "cn.csv", "area_id,burglary,robbery\nA,-1,1\nB,1,1\n"), e, x, g)
    with pytest.raises(UnknownAreaId):
        load_dataset(c, e, _write(d / "xu.csv", "area_id,sex_ratio\nA,1\nB,2\nC,3\n"), g)
    with pytest.raises(DimensionMismatch):
        load_dataset(c, e, _write(d / "xm.csv", "area_id,sex_ratio\nA,1\n"), g)
    with pytest.raises(DimensionMismatch):
        load_dataset(c, e, x, _write(d / "g3.txt", "n=3\n0 1\n1 2\n"))
    with pytest.raises(ParseError) as exc:
        load_dataset(c, e, _write(d / "xna.csv", "area_id,sex_ratio\nA,1\nB,NA\n"), g)
    assert exc.value.line == 3
    with pytest.raises(ParseError):
        load_dataset(c, e, _write(d / "xh.csv", "id,sex_ratio\nA,1\nB,2\n"), g)
    with pytest.raises(ParseError):
        load_dataset(c, e, _write(d / "xd.csv", "area_id,sex_ratio\nA,1\nA,2\n"), g)


def test_standardize_examples():
    np.testing.assert_allclose(standardize([1, 2, 3]), [-1, 0, 1], atol=1e-15)
    z = standardize([3.0, 1.0, 4.0, 1.0, 5.0])
    np.testing.assert_allclose(standardize(z), z, atol=1e-12)
    with pytest.raises(ConstantVector):
        standardize([5, 5, 5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=20),
       st.floats(0.1, 10) | st.floats(-10, -0.1), st.floats(-100, 100))
def test_standardize_affine_invariance(x, a, b):
    x = np.array(x)
    if np.ptp(x) < 1e-3:
        return
    np.testing.assert_allclose(standardize(a * x + b), np.sign(a) * standardize(x), atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=10))
def test_csv_round_trip_bit_exact(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "v.csv"
    write_csv(p, ["i", "v"], [(i, v) for i, v in enumerate(values)])
    back = [float(r["v"]) for r in read_csv_rows(p)]
    assert [np.float64(v).tobytes() for v in back] == [np.float64(v).tobytes() for v in values]
