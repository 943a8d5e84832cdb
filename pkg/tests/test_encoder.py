import numpy as np
import pytest

from swipe import autodiff as ad
from swipe import hashing
from swipe.encoder import (
    HashEncoderParams,
    InteractionParams,
    SegmentMatrix,
    encode_segments,
    featurize_segments,
    interact,
    interact_tensor,
    load_precomputed,
    write_precomputed,
)
from swipe.errors import ConfigError, FormatError
from swipe.truncate import Segment


def _segments(token_lists, doc_id="d"):
    return [
        Segment(doc_id=doc_id, index=k, tokens=tuple(toks), char_span=(k, k))
        for k, toks in enumerate(token_lists)
    ]


class TestSegmentMatrix:
    def test_requires_2d(self):
        with pytest.raises(FormatError):
            SegmentMatrix(doc_id="d", rows=np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(FormatError):
            SegmentMatrix(doc_id="d", rows=np.array([[1.0, np.inf]]))


class TestHashEncoder:
    def test_single_bucket_row_equals_that_embedding(self):
        # with one bucket, every n-gram hits bucket 0: mean of identical rows
        params = HashEncoderParams.create(n_buckets=1, dim=4, init_seed=0)
        out = encode_segments(_segments([["a", "b", "c"], ["d"]]), params)
        np.testing.assert_allclose(out.rows[0], params.table.data[0])
        np.testing.assert_allclose(out.rows[1], params.table.data[0])

    def test_zero_table_gives_zero_rows(self):
        params = HashEncoderParams.create(n_buckets=64, dim=4, init_seed=0)
        params.table.data = np.zeros_like(params.table.data)
        out = encode_segments(_segments([["a", "b"], ["c", "d", "e"]]), params)
        np.testing.assert_array_equal(out.rows, np.zeros((2, 4)))

    def test_rows_match_standalone_hash_and_average_oracle(self):
        # oracle recomputes the same contract with its own loop
        params = HashEncoderParams.create(n_buckets=97, dim=4, ngram_orders=(1, 2),
                                          hash_seed=5, init_seed=1)
        token_lists = [["the", "cat", "sat"], ["on", "the", "mat", "."]]
        out = encode_segments(_segments(token_lists), params)
        for k, tokens in enumerate(token_lists):
            grams = [tuple(tokens[i:i + n]) for n in (1, 2)
                     for i in range(len(tokens) - n + 1)]
            rows = []
            for gram in grams:
                h = hashing.hash64(b"\x1f".join(t.encode() for t in gram), 5)
                rows.append(params.table.data[h % 97])
            np.testing.assert_allclose(out.rows[k], np.mean(rows, axis=0), atol=1e-12)

    def test_differentiable_wrt_table(self):
        params = HashEncoderParams.create(n_buckets=16, dim=3, init_seed=2)
        feats = featurize_segments(_segments([["a", "b"], ["c"]]), params)
        out = ad.sum_along(ad.embedding_bag_mean(params.table, feats.ids, feats.offsets))
        out.backward()
        assert params.table.grad is not None
        assert np.any(params.table.grad != 0)

    def test_empty_segment_list_rejected(self):
        params = HashEncoderParams.create(n_buckets=16, dim=3)
        with pytest.raises(ConfigError):
            featurize_segments([], params)


class TestPrecomputed:
    def test_round_trip(self, tmp_path):
        mats = {
            "a": SegmentMatrix(doc_id="a", rows=np.arange(6, dtype=float).reshape(3, 2)),
            "b": SegmentMatrix(doc_id="b", rows=np.ones((1, 2))),
        }
        path = tmp_path / "vectors.jsonl"
        write_precomputed(mats, path)
        loaded = load_precomputed(path)
        assert set(loaded) == {"a", "b"}
        np.testing.assert_array_equal(loaded["a"].rows, mats["a"].rows)
        assert loaded["a"].m == 3 and loaded["a"].h == 2

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "vectors.jsonl"
        path.write_text('{"h": 2}\n{"doc_id": "a", "vectors": [[1.0, 2.0], [1.0, 2.0, 3.0]]}\n')
        with pytest.raises(FormatError, match="dimension"):
            load_precomputed(path)

    def test_empty_file_empty_map(self, tmp_path):
        path = tmp_path / "vectors.jsonl"
        path.write_text("")
        assert load_precomputed(path) == {}

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "vectors.jsonl"
        path.write_text('{"doc_id": "a", "vectors": [[1.0]]}\n')
        with pytest.raises(FormatError, match="declare h"):
            load_precomputed(path)


class TestInteraction:
    def test_zero_layers_is_identity(self):
        params = InteractionParams.create(num_layers=0, dim=8)
        mat = SegmentMatrix(doc_id="d", rows=np.random.default_rng(0).normal(size=(3, 8)))
        out = interact(mat, params)
        np.testing.assert_array_equal(out.rows, mat.rows)

    def test_single_row_shape_preserved_and_finite(self):
        params = InteractionParams.create(num_layers=2, dim=8, n_heads=2, init_seed=1)
        mat = SegmentMatrix(doc_id="d", rows=np.random.default_rng(1).normal(size=(1, 8)))
        out = interact(mat, params)
        assert out.rows.shape == (1, 8)
        assert np.all(np.isfinite(out.rows))

    def test_permutation_equivariance_without_positions(self):
        rng = np.random.default_rng(7)
        params = InteractionParams.create(num_layers=2, dim=8, n_heads=2, init_seed=3)
        rows = rng.normal(size=(5, 8))
        perm = rng.permutation(5)
        out = interact(SegmentMatrix(doc_id="d", rows=rows), params)
        out_perm = interact(SegmentMatrix(doc_id="d", rows=rows[perm]), params)
        np.testing.assert_allclose(out_perm.rows, out.rows[perm], atol=1e-6)

    def test_positions_break_equivariance_and_cap_length(self):
        rng = np.random.default_rng(7)
        params = InteractionParams.create(num_layers=1, dim=8, n_heads=2,
                                          max_positions=4, init_seed=3)
        rows = rng.normal(size=(3, 8))
        out = interact(SegmentMatrix(doc_id="d", rows=rows), params)
        swapped = rows[[1, 0, 2]]
        out_swapped = interact(SegmentMatrix(doc_id="d", rows=swapped), params)
        assert not np.allclose(out_swapped.rows, out.rows[[1, 0, 2]], atol=1e-6)
        with pytest.raises(ConfigError, match="positional"):
            interact(SegmentMatrix(doc_id="d", rows=rng.normal(size=(5, 8))), params)

    def test_dim_mismatch_rejected(self):
        params = InteractionParams.create(num_layers=1, dim=8, n_heads=2)
        with pytest.raises(ConfigError):
            interact(SegmentMatrix(doc_id="d", rows=np.zeros((2, 4))), params)

    def test_heads_must_divide_dim(self):
        with pytest.raises(ConfigError):
            InteractionParams.create(num_layers=1, dim=6, n_heads=4)

    def test_differentiable_end_to_end(self):
        params = InteractionParams.create(num_layers=1, dim=4, n_heads=2, init_seed=0)
        x = ad.Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
        out = ad.sum_along(interact_tensor(x, params))
        out.backward()
        assert x.grad is not None and np.all(np.isfinite(x.grad))
        assert params.layers[0].wq.grad is not None
