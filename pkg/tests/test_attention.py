import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from objerase.attention import (
    AttentionLogits,
    AttentionMap,
    Branch,
    DescriptorAxis,
    PresenceField,
    SuppressionVector,
    TokenDescriptor,
    cosine_similarity,
    extract_descriptor,
    logit_shift_softmax,
    modulated_softmax,
    presence_scores,
    row_softmax,
    suppression_vector,
)
from objerase.errors import InvalidInputError

finite_logits = hnp.arrays(
    dtype=np.float64,
    shape=st.tuples(st.integers(1, 6), st.integers(2, 6)),
    elements=st.floats(-30, 30),
)


def softmax_oracle(row):
    """Direct exponential arithmetic, the independent check for softmax values."""
    exps = [math.exp(v) for v in row]
    total = sum(exps)
    return [e / total for e in exps]


class TestRowSoftmax:
    def test_all_zero_logits_give_uniform_rows(self):
        out = row_softmax(AttentionLogits(np.zeros((2, 2))))
        assert np.array_equal(out.values, np.full((2, 2), 0.5))

    def test_single_row_ln2(self):
        out = row_softmax(AttentionLogits(np.array([[math.log(2.0), 0.0]])))
        expected = softmax_oracle([math.log(2.0), 0.0])
        assert expected == pytest.approx([2 / 3, 1 / 3], abs=1e-15)
        assert np.allclose(out.values[0], expected, atol=1e-12)

    def test_shift_invariance(self):
        logits = np.array([[1.0, -2.0, 0.5], [3.0, 3.0, -1.0]])
        base = row_softmax(AttentionLogits(logits))
        shifted = row_softmax(AttentionLogits(logits + 17.25))
        assert np.allclose(base.values, shifted.values, atol=1e-12)

    def test_large_logits_stay_finite(self):
        out = row_softmax(AttentionLogits(np.array([[30.0, -30.0, 0.0]])))
        assert np.all(np.isfinite(out.values))
        assert out.values.sum() == pytest.approx(1.0, abs=1e-9)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            AttentionLogits(np.array([[np.nan, 0.0]]))
        with pytest.raises(InvalidInputError):
            AttentionLogits(np.array([[np.inf, 0.0]]))

    @settings(max_examples=30, deadline=None)
    @given(finite_logits)
    def test_rows_stochastic(self, values):
        out = row_softmax(AttentionLogits(values))
        assert np.allclose(out.values.sum(axis=-1), 1.0, atol=1e-6)
        assert out.values.min() >= 0.0


class TestDescriptors:
    def test_identity_map_column(self):
        attn = AttentionMap(np.eye(4))
        desc = extract_descriptor(attn, 0, DescriptorAxis.KEY_COLUMN)
        assert np.array_equal(desc.values, np.array([1.0, 0.0, 0.0, 0.0]))

    def test_uniform_map_any_axis(self):
        attn = AttentionMap(np.full((5, 5), 0.2))
        for axis in DescriptorAxis:
            desc = extract_descriptor(attn, 3, axis)
            assert np.allclose(desc.values, 0.2)

    def test_two_head_mean(self):
        rng = np.random.default_rng(3)
        heads = rng.dirichlet(np.ones(4), size=(2, 4))  # (head, query, key)
        attn = AttentionMap(heads)
        for i in range(4):
            expected = (heads[0][:, i] + heads[1][:, i]) / 2.0
            desc = extract_descriptor(attn, i, DescriptorAxis.KEY_COLUMN)
            assert np.allclose(desc.values, expected, atol=1e-12)

    def test_query_row_axis(self):
        values = np.array([[0.7, 0.3], [0.1, 0.9]])
        desc = extract_descriptor(AttentionMap(values), 1, DescriptorAxis.QUERY_ROW)
        assert np.array_equal(desc.values, values[1])

    def test_out_of_range(self):
        attn = AttentionMap(np.eye(3))
        with pytest.raises(InvalidInputError):
            extract_descriptor(attn, 3, DescriptorAxis.KEY_COLUMN)


class TestCosine:
    def test_identical_vectors(self):
        u = TokenDescriptor(np.array([0.25, 0.5, 0.25]), 0, DescriptorAxis.KEY_COLUMN)
        assert cosine_similarity(u, u) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        u = TokenDescriptor(np.array([1.0, 0.0]), 0, DescriptorAxis.KEY_COLUMN)
        v = TokenDescriptor(np.array([0.0, 1.0]), 1, DescriptorAxis.KEY_COLUMN)
        assert cosine_similarity(u, v) == 0.0

    def test_hand_arithmetic(self):
        u = TokenDescriptor(np.array([1.0, 1.0, 0.0]), 0, DescriptorAxis.KEY_COLUMN)
        v = TokenDescriptor(np.array([1.0, 0.0, 0.0]), 0, DescriptorAxis.KEY_COLUMN)
        oracle = 1.0 / math.sqrt(2.0)
        assert cosine_similarity(u, v) == pytest.approx(oracle, abs=1e-12)
        assert oracle == pytest.approx(0.70711, abs=5e-6)

    def test_zero_norm_scores_zero(self):
        z = TokenDescriptor(np.zeros(3), 0, DescriptorAxis.KEY_COLUMN)
        v = TokenDescriptor(np.array([1.0, 0.0, 0.0]), 0, DescriptorAxis.KEY_COLUMN)
        assert cosine_similarity(z, v) == 0.0
        assert cosine_similarity(v, z) == 0.0

    def test_length_mismatch(self):
        u = TokenDescriptor(np.ones(2), 0, DescriptorAxis.KEY_COLUMN)
        v = TokenDescriptor(np.ones(3), 0, DescriptorAxis.KEY_COLUMN)
        with pytest.raises(InvalidInputError):
            cosine_similarity(u, v)


def _perm_rows(order):
    m = np.zeros((len(order), len(order)))
    for r, c in enumerate(order):
        m[r, c] = 1.0
    return m


class TestPresenceScores:
    def test_identical_maps_score_one(self):
        values = np.random.default_rng(0).dirichlet(np.ones(6), size=6)
        src = AttentionMap(values, branch=Branch.SOURCE)
        tgt = AttentionMap(values.copy(), branch=Branch.TARGET)
        field = presence_scores(src, tgt, [0, 2, 5])
        assert set(field.scores) == {0, 2, 5}
        for p in field.scores.values():
            assert p == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_descriptors_score_zero(self):
        src = AttentionMap(_perm_rows([1, 0, 2, 3]), branch=Branch.SOURCE)
        tgt = AttentionMap(_perm_rows([3, 2, 0, 1]), branch=Branch.TARGET)
        field = presence_scores(src, tgt, [1])
        # src column 1 = e0, tgt column 1 = e3: orthogonal one-hot columns.
        assert field.scores[1] == 0.0

    def test_half_mixture_matches_mixture_oracle(self):
        # src column 1 is e0; tgt column 1 is the even mix of e0 and e2.
        src = AttentionMap(_perm_rows([1, 0, 2, 3]), branch=Branch.SOURCE)
        tgt_rows = np.array(
            [
                [0.0, 0.5, 0.5, 0.0],
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 0.5, 0.5, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        tgt = AttentionMap(tgt_rows, branch=Branch.TARGET)
        s = np.array([1.0, 0.0, 0.0, 0.0])
        b = np.array([0.0, 0.0, 1.0, 0.0])
        mix = 0.5 * s + 0.5 * b
        oracle = float(np.dot(mix, s) / (np.linalg.norm(mix) * np.linalg.norm(s)))
        assert oracle == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)
        field = presence_scores(src, tgt, [1])
        assert field.scores[1] == pytest.approx(oracle, abs=1e-12)

    def test_shape_and_branch_validation(self):
        a = AttentionMap(np.eye(3), branch=Branch.SOURCE)
        b = AttentionMap(np.eye(4), branch=Branch.TARGET)
        with pytest.raises(InvalidInputError):
            presence_scores(a, b, [0])
        c = AttentionMap(np.eye(3), branch=Branch.SOURCE)
        with pytest.raises(InvalidInputError):
            presence_scores(a, c, [0])

    def test_scores_always_in_unit_interval(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            src = AttentionMap(rng.dirichlet(np.ones(5), size=5), branch=Branch.SOURCE)
            tgt = AttentionMap(rng.dirichlet(np.ones(5), size=5), branch=Branch.TARGET)
            field = presence_scores(src, tgt, range(5))
            for p in field.scores.values():
                assert 0.0 <= p <= 1.0


class TestSuppressionVector:
    def test_masked_and_unmasked_coefficients(self):
        field = PresenceField(scores={2: 0.3})
        eta = suppression_vector(field, [2], num_keys=5)
        assert eta.coefficients[2] == pytest.approx(0.7, abs=1e-15)
        for j in (0, 1, 3, 4):
            assert eta.coefficients[j] == 1.0

    def test_full_presence_means_full_suppression(self):
        eta = suppression_vector(PresenceField(scores={0: 1.0}), [0], num_keys=2)
        assert eta.coefficients[0] == 0.0

    def test_domain_mismatch(self):
        with pytest.raises(InvalidInputError):
            suppression_vector(PresenceField(scores={0: 0.5}), [0, 1], num_keys=3)

    def test_identical_maps_chain_to_zero_eta_on_mask(self):
        values = np.random.default_rng(5).dirichlet(np.ones(4), size=4)
        src = AttentionMap(values, branch=Branch.SOURCE)
        tgt = AttentionMap(values.copy(), branch=Branch.TARGET)
        field = presence_scores(src, tgt, [1, 2])
        eta = suppression_vector(field, [1, 2], num_keys=4)
        assert eta.coefficients[1] == pytest.approx(0.0, abs=1e-12)
        assert eta.coefficients[2] == pytest.approx(0.0, abs=1e-12)


class TestModulatedSoftmax:
    def test_unit_eta_is_bitwise_standard_softmax(self):
        rng = np.random.default_rng(2)
        logits = AttentionLogits(rng.uniform(-30, 30, size=(6, 6)))
        plain = row_softmax(logits)
        gated = modulated_softmax(logits, SuppressionVector(np.ones(6)))
        assert np.array_equal(plain.values, gated.values)

    def test_three_key_hand_arithmetic(self):
        logits = AttentionLogits(np.zeros((3, 3)))
        eta = SuppressionVector(np.array([1.0, 1.0, 0.5]))
        out = modulated_softmax(logits, eta)
        oracle = [1.0 / 2.5, 1.0 / 2.5, 0.5 / 2.5]
        assert oracle == pytest.approx([0.4, 0.4, 0.2], abs=1e-15)
        assert np.allclose(out.values, np.tile(oracle, (3, 1)), atol=1e-12)

    def test_zero_coefficient_zeroes_column_exactly(self):
        rng = np.random.default_rng(4)
        logits = AttentionLogits(rng.normal(size=(5, 5)))
        eta = np.ones(5)
        eta[2] = 0.0
        out = modulated_softmax(logits, SuppressionVector(eta))
        assert np.all(out.values[:, 2] == 0.0)
        # Remaining weights are the softmax renormalized over surviving keys.
        plain = row_softmax(logits).values
        keep = [0, 1, 3, 4]
        renorm = plain[:, keep] / plain[:, keep].sum(axis=1, keepdims=True)
        assert np.allclose(out.values[:, keep], renorm, atol=1e-12)

    def test_degenerate_row_falls_back_to_uniform_over_alive_keys(self):
        logits = AttentionLogits(np.zeros((2, 3)))
        tiny = 1e-321  # subnormal: gated mass underflows the 1e-20 floor
        out = modulated_softmax(logits, SuppressionVector(np.array([tiny, tiny, 0.0])))
        assert np.allclose(out.values, np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]]))

    def test_all_zero_eta_rejected(self):
        logits = AttentionLogits(np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            modulated_softmax(logits, SuppressionVector(np.zeros(2)))

    def test_monotone_in_single_coefficient(self):
        rng = np.random.default_rng(6)
        logits = AttentionLogits(rng.uniform(-5, 5, size=(4, 4)))
        for j in range(4):
            prev = None
            for eta_j in np.linspace(0.01, 1.0, 25):
                eta = np.ones(4)
                eta[j] = eta_j
                weight = modulated_softmax(logits, SuppressionVector(eta)).values[:, j]
                if prev is not None:
                    assert np.all(weight >= prev - 1e-12)
                prev = weight

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        values = rng.normal(size=(3, 5))
        eta = SuppressionVector(rng.uniform(0.1, 1.0, size=5))
        a = modulated_softmax(AttentionLogits(values), eta)
        b = modulated_softmax(AttentionLogits(values + 123.0), eta)
        assert np.allclose(a.values, b.values, atol=1e-12)

    def test_applied_identically_across_heads(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=(3, 4, 4))
        eta = np.ones(4)
        eta[1] = 0.0
        out = modulated_softmax(AttentionLogits(values, head_count=3), SuppressionVector(eta))
        assert out.values.shape == (3, 4, 4)
        assert np.all(out.values[:, :, 1] == 0.0)


class TestLogitShiftSoftmax:
    def test_unit_eta_identity(self):
        rng = np.random.default_rng(9)
        logits = AttentionLogits(rng.normal(size=(4, 4)))
        assert np.array_equal(
            logit_shift_softmax(logits, SuppressionVector(np.ones(4))).values,
            row_softmax(logits).values,
        )

    def test_matches_modulated_on_random_instances(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            logits = AttentionLogits(rng.uniform(-30, 30, size=(8, 8)))
            eta = SuppressionVector(rng.uniform(1e-6, 1.0, size=8))
            a = modulated_softmax(logits, eta).values
            b = logit_shift_softmax(logits, eta).values
            assert np.abs(a - b).max() < 1e-9

    def test_three_key_hand_arithmetic(self):
        logits = AttentionLogits(np.zeros((3, 3)))
        out = logit_shift_softmax(logits, SuppressionVector(np.array([1.0, 1.0, 0.5])))
        assert np.allclose(out.values, np.tile([0.4, 0.4, 0.2], (3, 1)), atol=1e-12)

    def test_zero_eta_is_domain_error(self):
        logits = AttentionLogits(np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            logit_shift_softmax(logits, SuppressionVector(np.array([1.0, 0.0])))


class TestInvariantProperties:
    @settings(max_examples=30, deadline=None)
    @given(finite_logits, st.integers(0, 2**32 - 1))
    def test_gated_rows_stochastic(self, values, seed):
        eta_vals = np.random.default_rng(seed).uniform(0.0, 1.0, size=values.shape[-1])
        if not (eta_vals > 0).any():
            eta_vals[0] = 0.5
        out = modulated_softmax(AttentionLogits(values), SuppressionVector(eta_vals))
        assert np.allclose(out.values.sum(axis=-1), 1.0, atol=1e-6)

    @settings(max_examples=30, deadline=None)
    @given(finite_logits, st.integers(0, 2**32 - 1))
    def test_equivalence_for_positive_eta(self, values, seed):
        eta_vals = np.random.default_rng(seed).uniform(1e-4, 1.0, size=values.shape[-1])
        logits = AttentionLogits(values)
        eta = SuppressionVector(eta_vals)
        a = modulated_softmax(logits, eta).values
        b = logit_shift_softmax(logits, eta).values
        assert np.abs(a - b).max() < 1e-9
