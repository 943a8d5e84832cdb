import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swipe.corpus import TASK_MULTICLASS, TASK_MULTILABEL
from swipe.encoder import SegmentMatrix
from swipe.errors import ConfigError
from swipe.head import (
    Pooling,
    SwipeParams,
    classify,
    explain,
    pool,
    rank_segments,
    segment_gates,
    segment_scores,
)


def _params(weight, bias, gate_weight=None, gate_bias=None):
    import swipe.autodiff as ad

    weight = np.asarray(weight, dtype=float)
    n_labels, dim = weight.shape
    return SwipeParams(
        weight=ad.Tensor(weight, requires_grad=True),
        bias=ad.Tensor(np.asarray(bias, dtype=float), requires_grad=True),
        gate_weight=ad.Tensor(
            np.zeros((n_labels, dim)) if gate_weight is None else np.asarray(gate_weight, float),
            requires_grad=True,
        ),
        gate_bias=ad.Tensor(
            np.zeros(n_labels) if gate_bias is None else np.asarray(gate_bias, float),
            requires_grad=True,
        ),
    )


def _random_instance(rng, n_labels, m, dim):
    mat = SegmentMatrix(doc_id="d", rows=rng.normal(size=(m, dim)))
    params = SwipeParams.create(n_labels, dim, init_seed=int(rng.integers(2**31)))
    return mat, params


class TestInit:
    def test_random_rows_scale(self):
        params = SwipeParams.create(n_labels=50, dim=100, init_seed=0)
        assert abs(params.weight.data.std() - 0.1) < 0.02  # 1/sqrt(dim)
        assert np.all(params.bias.data == 0)

    def test_label_vector_rows_copied(self):
        vectors = np.arange(6, dtype=float).reshape(2, 3)
        params = SwipeParams.create(n_labels=2, dim=3, label_vectors=vectors)
        np.testing.assert_array_equal(params.weight.data, vectors)
        vectors[0, 0] = 99.0  # the copy must not alias the caller's array
        assert params.weight.data[0, 0] == 0.0

    def test_label_vector_shape_checked(self):
        with pytest.raises(ConfigError):
            SwipeParams.create(n_labels=2, dim=3, label_vectors=np.zeros((3, 3)))


class TestScores:
    def test_bias_only(self):
        params = _params(np.zeros((2, 3)), [1.5, -2.0])
        mat = SegmentMatrix(doc_id="d", rows=np.ones((4, 3)))
        scores = segment_scores(mat, params)
        np.testing.assert_allclose(scores[0], 1.5)
        np.testing.assert_allclose(scores[1], -2.0)

    def test_dot_product(self):
        params = _params([[1.0, -1.0]], [0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.array([[3.0, 1.0]]))
        np.testing.assert_allclose(segment_scores(mat, params), [[2.0]])

    def test_matches_matrix_multiply_oracle(self):
        rng = np.random.default_rng(0)
        mat, params = _random_instance(rng, n_labels=3, m=4, dim=5)
        scores = segment_scores(mat, params)
        oracle = params.weight.data @ mat.rows.T + params.bias.data[:, None]
        np.testing.assert_allclose(scores, oracle, atol=1e-6)
        assert scores.shape == (3, 4)

    def test_dim_mismatch(self):
        params = _params(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ConfigError):
            segment_scores(SegmentMatrix(doc_id="d", rows=np.zeros((2, 4))), params)


class TestGates:
    def test_zero_params_give_half(self):
        params = _params(np.zeros((2, 3)), np.zeros(2))
        mat = SegmentMatrix(doc_id="d", rows=np.ones((4, 3)))
        np.testing.assert_allclose(segment_gates(mat, params), 0.5)

    def test_saturation(self):
        params = _params(np.zeros((1, 1)), [0.0], gate_weight=[[50.0]], gate_bias=[0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.array([[1.0]]))
        gates = segment_gates(mat, params)
        assert abs(gates[0, 0] - 1.0) < 1e-15

    def test_matches_sigmoid_affine_oracle(self):
        rng = np.random.default_rng(1)
        mat, params = _random_instance(rng, n_labels=2, m=5, dim=4)
        gates = segment_gates(mat, params)
        logits = params.gate_weight.data @ mat.rows.T + params.gate_bias.data[:, None]
        np.testing.assert_allclose(gates, 1 / (1 + np.exp(-logits)), atol=1e-6)
        assert np.all((gates > 0) & (gates < 1))


class TestPool:
    def test_max(self):
        y, argmax = pool(np.array([[-1.0, 2.0, 0.5]]), None, Pooling.MAX)
        assert y[0] == 2.0 and argmax[0] == 1

    def test_sum(self):
        y, argmax = pool(np.array([[1.0, -2.0, 0.5]]), None, Pooling.SUM)
        np.testing.assert_allclose(y, [-0.5])
        assert argmax is None

    def test_gated_max(self):
        y, argmax = pool(
            np.array([[-1.0, 2.0, 0.5]]), np.array([[0.9, 0.1, 0.8]]), Pooling.GATED_MAX
        )
        np.testing.assert_allclose(y, [0.4])
        assert argmax[0] == 2

    def test_missing_gates_rejected(self):
        with pytest.raises(ConfigError):
            pool(np.zeros((1, 3)), None, Pooling.GATED_SUM)

    def test_brute_force_oracle_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n_labels = int(rng.integers(1, 6))
            m = int(rng.integers(1, 7))
            scores = rng.normal(size=(n_labels, m))
            gates = 1 / (1 + np.exp(-rng.normal(size=(n_labels, m))))
            for strategy in Pooling:
                y, _ = pool(scores, gates if strategy.gated else None, strategy)
                for i in range(n_labels):
                    if strategy is Pooling.MAX:
                        expected = max(scores[i])
                    elif strategy is Pooling.GATED_MAX:
                        expected = max(g * z for g, z in zip(gates[i], scores[i]))
                    elif strategy is Pooling.SUM:
                        expected = sum(scores[i])
                    else:
                        expected = sum(g * z for g, z in zip(gates[i], scores[i]))
                    assert abs(y[i] - expected) < 1e-6

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=(3, 6))
        gates = 1 / (1 + np.exp(-rng.normal(size=(3, 6))))
        perm = rng.permutation(6)
        for strategy in Pooling:
            g = gates if strategy.gated else None
            g_perm = gates[:, perm] if strategy.gated else None
            y, _ = pool(scores, g, strategy)
            y_perm, _ = pool(scores[:, perm], g_perm, strategy)
            np.testing.assert_allclose(y, y_perm, atol=1e-9)


class TestClassify:
    def test_all_zero_params_strict_threshold(self):
        params = _params(np.zeros((3, 2)), np.zeros(3))
        mat = SegmentMatrix(doc_id="d", rows=np.ones((4, 2)))
        pred = classify(mat, params, Pooling.SUM, TASK_MULTILABEL)
        assert pred.bits.tolist() == [0, 0, 0]  # y == 0 counts as negative
        assert pred.seg_bits.tolist() == np.zeros((3, 4), dtype=int).tolist()

    def test_single_segment_equals_standard_perceptron(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            mat, params = _random_instance(rng, n_labels=3, m=1, dim=4)
            perceptron_bits = (
                params.weight.data @ mat.rows[0] + params.bias.data > 0
            ).astype(int)
            for strategy in (Pooling.MAX, Pooling.SUM):
                pred = classify(mat, params, strategy, TASK_MULTILABEL)
                assert pred.bits.tolist() == perceptron_bits.tolist()

    def test_planted_positive_segment_is_flagged(self):
        # shared segments score negative, one planted segment scores +1
        params = _params([[1.0]], [0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.array([[-1.0], [-0.5], [1.0], [-2.0]]))
        pred = classify(mat, params, Pooling.MAX, TASK_MULTILABEL)
        assert pred.bits[0] == 1
        assert pred.seg_bits[0].tolist() == [0, 0, 1, 0]
        assert pred.key_segments[0] == 2

    def test_multiclass_argmax_and_tie_break(self):
        params = _params(np.zeros((3, 2)), [0.5, 0.5, 0.2])
        mat = SegmentMatrix(doc_id="d", rows=np.zeros((2, 2)))
        pred = classify(mat, params, Pooling.MAX, TASK_MULTICLASS)
        assert pred.pred_class == 0  # tie between labels 0 and 1 -> lowest index

    def test_record_serialization_layout(self):
        rng = np.random.default_rng(0)
        mat, params = _random_instance(rng, n_labels=2, m=3, dim=4)
        pred = classify(mat, params, Pooling.GATED_MAX, TASK_MULTILABEL)
        record = pred.to_record(["alpha", "beta"])
        assert record["doc_id"] == "d"
        assert {e["label"] for e in record["per_label"]} == {"alpha", "beta"}
        entry = record["per_label"][0]
        assert set(entry) == {"label", "y", "bit", "key_segment",
                              "positive_segments", "segment_scores"}
        assert len(entry["segment_scores"]) == 3


class TestRanking:
    def test_descending_order(self):
        params = _params([[1.0]], [0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.array([[0.1], [5.0], [-3.0]]))
        pred = classify(mat, params, Pooling.MAX, TASK_MULTILABEL)
        assert rank_segments(pred, 0) == [1, 0, 2]

    def test_stable_ties_keep_index_order(self):
        params = _params([[0.0]], [0.7])
        mat = SegmentMatrix(doc_id="d", rows=np.zeros((4, 1)))
        pred = classify(mat, params, Pooling.SUM, TASK_MULTILABEL)
        assert rank_segments(pred, 0) == [0, 1, 2, 3]

    def test_gated_ranking_uses_product(self):
        params = _params([[1.0]], [0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.array([[5.0], [0.1], [0.2]]))
        pred = classify(mat, params, Pooling.GATED_MAX, TASK_MULTILABEL)
        pred.gates = np.array([[0.01, 0.999, 0.5]])
        products = pred.gates[0] * pred.seg_scores[0]
        expected = list(np.argsort(-products, kind="stable"))
        assert rank_segments(pred, 0, use_gate=True) == expected


class TestExplain:
    def test_positive_document_has_key_in_positive_set(self):
        rng = np.random.default_rng(11)
        found = 0
        for _ in range(100):
            mat, params = _random_instance(rng, n_labels=2, m=5, dim=3)
            pred = classify(mat, params, Pooling.MAX, TASK_MULTILABEL)
            for label in range(2):
                result = explain(pred, label)
                if pred.bits[label] == 1:
                    found += 1
                    assert result.key_segment in result.positive_segments
                    assert len(result.positive_segments) >= 1
                else:
                    assert result.positive_segments == ()
        assert found > 0

    def test_sum_pooling_positive_set(self):
        params = _params([[1.0]], [0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.array([[3.0], [-1.0], [-1.0]]))
        pred = classify(mat, params, Pooling.SUM, TASK_MULTILABEL)
        assert pred.scores[0] == pytest.approx(1.0)
        result = explain(pred, 0)
        assert result.positive_segments == (0,)

    def test_label_out_of_range(self):
        params = _params([[1.0]], [0.0])
        mat = SegmentMatrix(doc_id="d", rows=np.ones((2, 1)))
        pred = classify(mat, params, Pooling.MAX, TASK_MULTILABEL)
        with pytest.raises(ConfigError):
            explain(pred, 5)


# -- hypothesis property tests ------------------------------------------------

finite = st.floats(-10, 10, allow_nan=False)

# sign preservation under gating holds in exact arithmetic; a subnormal score
# times a small gate underflows to +-0.0, so keep magnitudes out of that regime
signable = finite.map(lambda v: 0.0 if abs(v) < 1e-12 else v)


@settings(max_examples=80, deadline=None)
@given(
    scores=st.lists(st.lists(signable, min_size=1, max_size=6), min_size=1, max_size=4)
    .filter(lambda rows: len({len(r) for r in rows}) == 1),
    gate_logits=finite,
)
def test_gate_sign_preservation_implies_same_max_bit(scores, gate_logits):
    scores = np.asarray(scores)
    rng = np.random.default_rng(0)
    gates = 1 / (1 + np.exp(-rng.normal(gate_logits, 1, size=scores.shape)))
    y_max, _ = pool(scores, None, Pooling.MAX)
    y_gated, _ = pool(scores, gates, Pooling.GATED_MAX)
    np.testing.assert_array_equal(y_max > 0, y_gated > 0)
    assert np.array_equal(np.sign(gates * scores), np.sign(scores))


@settings(max_examples=80, deadline=None)
@given(
    first=st.lists(finite, min_size=1, max_size=8),
    inserted=finite,
    position=st.integers(0, 8),
)
def test_sum_deduction_inserted_element_sign(first, inserted, position):
    # two score lists differing by one inserted element e:
    # sum(with e) > 0 and sum(without e) < 0 forces e > 0
    position = min(position, len(first))
    with_e = first[:position] + [inserted] + first[position:]
    if sum(with_e) > 0 and sum(first) < 0:
        assert inserted > 0
