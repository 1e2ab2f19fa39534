import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foolmetrics.errors import DimensionMismatch, EmptyInput, IndexOutOfRange, InvalidPercentile, ParseError, ZeroNormRow
from foolmetrics.visual_sim import (
    WeightTemplates,
    format_matrix,
    knee_threshold,
    load_templates,
    pairwise_vis_matrix,
    parse_templates,
    percentile_curve,
    templates_from_rows,
    vis_similarity,
    write_templates,
)
from oracles import cosine_oracle, nearest_rank_oracle


def test_valid_templates():
    w = templates_from_rows([(1, 0), (0, 1), (1, 1)])
    assert w.class_count == 3 and w.feature_dim == 2


def test_zero_row_reported():
    with pytest.raises(ZeroNormRow) as exc:
        templates_from_rows([(1, 0), (0, 0)])
    assert exc.value.row == 1


def test_ragged_rows():
    with pytest.raises(DimensionMismatch):
        templates_from_rows([(1, 0), (0, 1, 2)])


def test_vis_examples():
    w = templates_from_rows([(1, 0), (0, 1), (1, 1), (-2, 0)])
    assert vis_similarity(w, 0, 1) == 0.0
    assert vis_similarity(w, 2, 0) == pytest.approx(0.70711, abs=1e-5)
    assert vis_similarity(w, 0, 3) == -1.0
    assert vis_similarity(w, 2, 2) == 1.0
    with pytest.raises(IndexOutOfRange):
        vis_similarity(w, 0, 4)


def test_pairwise_examples():
    m = pairwise_vis_matrix(templates_from_rows([(1, 0), (0, 1)]))
    np.testing.assert_array_equal(m.matrix, [[1, 0], [0, 1]])
    m = pairwise_vis_matrix(templates_from_rows([(1, 0), (1, 1), (0, 1)]))
    assert sorted(np.round(m.matrix[np.triu_indices(3, 1)], 5)) == [0.0, 0.70711, 0.70711]
    with pytest.raises(IndexOutOfRange):
        m[3, 0]


def test_pairwise_matches_scalar_recomputation(rng):
    w = rng.normal(size=(20, 8))
    m = pairwise_vis_matrix(WeightTemplates(w))
    for i in range(20):
        for j in range(20):
            want = 1.0 if i == j else cosine_oracle(w[i].tolist(), w[j].tolist())
            assert m[i, j] == pytest.approx(want, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 100), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_matrix_invariants(c, d, seed):
    w = np.random.default_rng(seed).normal(size=(c, d))
    m = pairwise_vis_matrix(WeightTemplates(w)).matrix
    assert np.array_equal(m, m.T)
    assert np.all(np.abs(np.diag(m) - 1) <= 1e-9)
    assert np.all((m >= -1) & (m <= 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 2**32 - 1),
       st.floats(1e-3, 1e3))
def test_scale_invariance(c, d, seed, alpha):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(c, d))
    i = int(rng.integers(c))
    scaled = w.copy()
    scaled[i] *= alpha
    a = pairwise_vis_matrix(WeightTemplates(w)).matrix
    b = pairwise_vis_matrix(WeightTemplates(scaled)).matrix
    assert np.max(np.abs(a[i] - b[i])) <= 1e-12


def test_percentile_examples():
    grid = [k / 100 for k in range(1, 101)]
    curve = percentile_curve(grid)
    assert dict(curve)[95] == 0.95
    assert knee_threshold(curve) == 0.95
    assert knee_threshold(curve, 100) == 1.0
    assert all(v == 0.3 for _, v in percentile_curve([0.3] * 17))
    assert dict(percentile_curve([1, 2, 3, 4]))[50] == 2
    with pytest.raises(EmptyInput):
        percentile_curve([])
    with pytest.raises(InvalidPercentile):
        knee_threshold(curve, 0)
    with pytest.raises(InvalidPercentile):
        knee_threshold(curve, 101)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=300))
def test_percentile_matches_oracle(values):
    curve = percentile_curve(values)
    assert [p for p, _ in curve] == list(range(1, 101))
    vals = [v for _, v in curve]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    for p in (1, 13, 50, 95, 100):
        assert dict(curve)[p] == nearest_rank_oracle(values, p)
        assert knee_threshold(curve, p) == dict(curve)[p]


# -- files ------------------------------------------------------------------------

def test_template_round_trip(tmp_path, rng):
    w = WeightTemplates(rng.normal(size=(5, 3)))
    p = tmp_path / "w.csv"
    write_templates(w, p, header="seed=3")
    assert p.read_text().startswith("# seed=3\nclass_id,w_0,w_1,w_2\n")
    np.testing.assert_array_equal(load_templates(p).weights, w.weights)


def test_template_parse_errors():
    with pytest.raises(ZeroNormRow):
        parse_templates("class_id,w_0,w_1\n0,1,0\n1,0,0\n")
    with pytest.raises(DimensionMismatch):
        parse_templates("class_id,w_0,w_1\n0,1,0\n1,0,1,2\n")
    with pytest.raises(ParseError):
        parse_templates("id,w_0\n0,1\n")
    with pytest.raises(ParseError, match=":3:"):
        parse_templates("class_id,w_0\n0,1\n2,1\n", path="w.csv")
    with pytest.raises(ParseError):
        parse_templates("class_id,w_0\n0,abc\n")


def test_matrix_output_has_nine_significant_digits():
    m = pairwise_vis_matrix(templates_from_rows([(1, 0), (1, 1)]))
    lines = format_matrix(m).splitlines()
    assert lines == ["1,0.707106781", "0.707106781,1"]
