import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vulnminer.errors import ConfigError, NumericError
from vulnminer.nn import (
    AttentionParams,
    GruParams,
    RiskMatrix,
    attention_backward,
    attention_forward,
    finite_diff_gradcheck,
    gru_backward,
    gru_forward,
    risk_biased_attention,
    risky_attention_mass,
    weighted_bce_loss,
)


def zeroed_gru(dim=4, hidden=3):
    p = GruParams.init(dim, hidden, seed=0)
    for arr in p.arrays().values():
        arr[...] = 0.0
    return p


class TestGruForward:
    def test_zero_params_halve_hidden_state(self):
        p = zeroed_gru()
        h0 = np.array([1.0, 2.0, -4.0])
        _, states, _ = gru_forward(np.zeros((3, 4)), p, h0=h0)
        for t in range(3):
            assert np.allclose(states[t], h0 * 0.5 ** (t + 1))

    def test_empty_sequence_scores_sigmoid_bias(self):
        p = zeroed_gru()
        p.b[...] = 0.7
        score, states, _ = gru_forward(np.zeros((0, 4)), p)
        assert states.shape == (0, 3)
        assert np.isclose(score, 1.0 / (1.0 + np.exp(-0.7)))

    def test_width_mismatch_raises(self):
        p = zeroed_gru(dim=4)
        with pytest.raises(ConfigError):
            gru_forward(np.zeros((2, 5)), p)

    def test_nan_input_reports_step(self):
        p = GruParams.init(2, 2, seed=1)
        seq = np.zeros((3, 2))
        seq[1, 0] = np.nan
        with pytest.raises(NumericError) as err:
            gru_forward(seq, p)
        assert err.value.step == 1

    def test_score_strictly_inside_unit_interval(self):
        p = GruParams.init(3, 3, seed=2, scale=5.0)
        rng = np.random.default_rng(0)
        score, _, _ = gru_forward(rng.uniform(-9, 9, (20, 3)), p)
        assert 0.0 < score < 1.0


class TestGruGradients:
    def test_full_gradcheck(self):
        rng = np.random.default_rng(7)
        p = GruParams.init(4, 4, seed=5, scale=0.5)
        seq = rng.uniform(-1, 1, (5, 4))

        def loss():
            s, _, _ = gru_forward(seq, p)
            return weighted_bce_loss(s, 1, w_pos=2.0)[0]

        score, _, cache = gru_forward(seq, p)
        _, dscore = weighted_bce_loss(score, 1, w_pos=2.0)
        grads, dseq = gru_backward(cache, dscore)
        assert finite_diff_gradcheck(loss, p.arrays(), grads) < 1e-4
        assert finite_diff_gradcheck(loss, {"seq": seq}, {"seq": dseq}) < 1e-4

    def test_linear_readout_is_exact(self):
        # with zero recurrent weights the score is a function of the bias
        # alone, so central differences on b are exact to rounding
        p = zeroed_gru(dim=2, hidden=2)
        p.b[...] = 0.3

        def loss():
            s, _, _ = gru_forward(np.zeros((1, 2)), p)
            return weighted_bce_loss(s, 0, w_pos=1.0)[0]

        score, _, cache = gru_forward(np.zeros((1, 2)), p)
        _, dscore = weighted_bce_loss(score, 0, w_pos=1.0)
        grads, _ = gru_backward(cache, dscore)
        err = finite_diff_gradcheck(loss, {"b": p.b}, {"b": grads["b"]},
                                    eps=1e-4)
        assert err < 1e-8


class TestAttention:
    def test_zero_bias_reduces_to_unbiased_bitwise(self):
        rng = np.random.default_rng(3)
        p = AttentionParams.init(6, seed=4)
        emb = rng.uniform(-1, 1, (5, 6))
        zero = RiskMatrix.build(5, [], beta=0.0)
        s1, p1, a1, _ = attention_forward(emb, p, zero)
        s2, p2, a2, _ = attention_forward(emb, p, None)
        assert s1 == s2
        assert np.array_equal(p1, p2)
        assert np.array_equal(a1, a2)

    def test_uniform_logits_closed_form(self):
        p = AttentionParams.init(4, seed=0)
        for arr in p.arrays().values():
            arr[...] = 0.0
        bias = RiskMatrix.build(2, [1], beta=np.log(3.0))
        _, attn = risk_biased_attention(np.zeros((2, 4)), p, bias)
        assert np.allclose(attn, [[0.25, 0.75], [0.25, 0.75]], atol=1e-9)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        p = AttentionParams.init(8, seed=6)
        emb = rng.uniform(-2, 2, (7, 8))
        bias = RiskMatrix.build(7, [0, 3], beta=2.0)
        _, _, attn, _ = attention_forward(emb, p, bias)
        assert np.allclose(attn.sum(axis=1), 1.0, atol=1e-9)

    def test_risky_mass_strictly_increases_with_beta(self):
        rng = np.random.default_rng(11)
        p = AttentionParams.init(6, seed=2)
        emb = rng.uniform(-1, 1, (6, 6))
        risky = (1, 4)
        masses = []
        for beta in np.arange(0.0, 4.5, 0.5):
            bias = RiskMatrix.build(6, risky, beta=float(beta))
            _, _, attn, _ = attention_forward(emb, p, bias)
            masses.append(risky_attention_mass(attn, risky))
        assert all(b > a for a, b in zip(masses, masses[1:]))

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(13)
        p = AttentionParams.init(4, seed=3)
        emb = rng.uniform(-1, 1, (4, 4))
        base = RiskMatrix.build(4, [2], beta=1.0)
        shifted = RiskMatrix(matrix=base.matrix + 7.5, beta=1.0,
                             risky_columns=base.risky_columns)
        _, _, a1, _ = attention_forward(emb, p, base)
        _, _, a2, _ = attention_forward(emb, p, shifted)
        assert np.allclose(a1, a2, atol=1e-9)

    def test_shape_mismatch_raises(self):
        p = AttentionParams.init(4, seed=1)
        bias = RiskMatrix.build(3, [], beta=0.0)
        with pytest.raises(ConfigError):
            attention_forward(np.zeros((4, 4)), p, bias)

    def test_unprojected_form(self):
        rng = np.random.default_rng(17)
        p = AttentionParams.init(4, seed=9, project_qkv=False)
        emb = rng.uniform(-1, 1, (3, 4))
        score, _, attn, _ = attention_forward(emb, p, None)
        expected = emb @ emb.T / 2.0
        expected = np.exp(expected - expected.max(axis=1, keepdims=True))
        expected /= expected.sum(axis=1, keepdims=True)
        assert np.allclose(attn, expected)
        assert 0.0 < score < 1.0

    def test_gradcheck_projected(self):
        rng = np.random.default_rng(7)
        p = AttentionParams.init(8, seed=9, scale=0.4)
        emb = rng.uniform(-1, 1, (6, 8))
        bias = RiskMatrix.build(6, [2, 4], beta=1.5)

        def loss():
            s, _, _, _ = attention_forward(emb, p, bias)
            return weighted_bce_loss(s, 0, w_pos=1.0, w_neg=2.0)[0]

        score, _, _, cache = attention_forward(emb, p, bias)
        _, dscore = weighted_bce_loss(score, 0, w_pos=1.0, w_neg=2.0)
        grads, demb = attention_backward(cache, dscore)
        assert finite_diff_gradcheck(loss, p.arrays(), grads) < 1e-4
        assert finite_diff_gradcheck(loss, {"emb": emb}, {"emb": demb}) < 1e-4

    def test_gradcheck_unprojected(self):
        rng = np.random.default_rng(19)
        p = AttentionParams.init(4, seed=21, scale=0.4, project_qkv=False)
        emb = rng.uniform(-1, 1, (5, 4))

        def loss():
            s, _, _, _ = attention_forward(emb, p, None)
            return weighted_bce_loss(s, 1, w_pos=3.0)[0]

        score, _, _, cache = attention_forward(emb, p, None)
        _, dscore = weighted_bce_loss(score, 1, w_pos=3.0)
        grads, demb = attention_backward(cache, dscore)
        checkable = {k: v for k, v in p.arrays().items()
                     if k not in ("wq", "wk", "wv")}
        assert finite_diff_gradcheck(loss, checkable,
                                     {k: grads[k] for k in checkable}) < 1e-4
        assert finite_diff_gradcheck(loss, {"emb": emb}, {"emb": demb}) < 1e-4


class TestRiskMatrix:
    def test_no_risky_tokens_zero_matrix(self):
        bias = RiskMatrix.build(4, [], beta=2.0)
        assert np.array_equal(bias.matrix, np.zeros((4, 4)))

    def test_risky_column_biased_in_every_row(self):
        bias = RiskMatrix.build(6, [5], beta=2.5)
        assert np.allclose(bias.matrix[:, 5], 2.5)
        others = np.delete(bias.matrix, 5, axis=1)
        assert np.array_equal(others, np.zeros((6, 5)))

    def test_negative_beta_rejected(self):
        with pytest.raises(ConfigError):
            RiskMatrix.build(3, [0], beta=-1.0)

    def test_out_of_range_column_rejected(self):
        with pytest.raises(ConfigError):
            RiskMatrix.build(3, [4], beta=1.0)


class TestLoss:
    def test_symmetric_point_is_ln2(self):
        loss, _ = weighted_bce_loss(0.5, 1, w_pos=1.0)
        assert np.isclose(loss, np.log(2.0))

    def test_positive_weight_scales_linearly(self):
        base, _ = weighted_bce_loss(0.3, 1, w_pos=1.0)
        scaled, _ = weighted_bce_loss(0.3, 1, w_pos=4.0)
        assert np.isclose(scaled, 4.0 * base)

    def test_negative_weight_scales_negative_class(self):
        base, _ = weighted_bce_loss(0.3, 0, w_pos=1.0, w_neg=1.0)
        scaled, _ = weighted_bce_loss(0.3, 0, w_pos=1.0, w_neg=2.0)
        assert np.isclose(scaled, 2.0 * base)

    @given(st.floats(0.05, 0.95), st.integers(0, 1), st.floats(0.5, 8.0))
    @settings(max_examples=60, deadline=None)
    def test_gradient_matches_finite_difference(self, score, label, w_pos):
        eps = 1e-7
        _, grad = weighted_bce_loss(score, label, w_pos)
        up, _ = weighted_bce_loss(score + eps, label, w_pos)
        down, _ = weighted_bce_loss(score - eps, label, w_pos)
        numeric = (up - down) / (2 * eps)
        assert abs(grad - numeric) / max(abs(grad), abs(numeric)) < 1e-6

    def test_out_of_domain_score_rejected(self):
        with pytest.raises(NumericError):
            weighted_bce_loss(1.0, 1, w_pos=1.0)

    def test_bad_label_rejected(self):
        with pytest.raises(ConfigError):
            weighted_bce_loss(0.5, 2, w_pos=1.0)


def test_gradcheck_rejects_bad_eps():
    with pytest.raises(ConfigError):
        finite_diff_gradcheck(lambda: 0.0, {}, {}, eps=0.0)
