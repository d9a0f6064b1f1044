import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acnn import metric_head as mh

# an 8x8 second-layer channel and its zero-layer weights
# (weights rounded to at most 3 significant digits)
CHANNEL = np.array([
    [195, 254, 254, 243, 173, 58, 0, 0],
    [195, 243, 243, 232, 162, 48, 0, 0],
    [147, 147, 147, 136, 66, 0, 0, 0],
    [32, 32, 32, 51, 29, 29, 29, 29],
    [21, 21, 51, 117, 107, 107, 107, 77],
    [0, 0, 29, 107, 107, 107, 107, 77],
    [0, 0, 29, 107, 107, 107, 107, 77],
    [0, 0, 29, 107, 107, 107, 107, 77],
], dtype=np.float64)

WEIGHTS = np.array([
    [0.195, 0.254, 0.254, 0.243, 0.173, 0.0865, 0.0346, 0.0173],
    [0.195, 0.243, 0.243, 0.232, 0.162, 0.081, 0.0324, 0.0162],
    [0.147, 0.147, 0.147, 0.136, 0.081, 0.054, 0.027, 0.0178],
    [0.0735, 0.0735, 0.0735, 0.068, 0.0535, 0.0535, 0.0535, 0.0385],
    [0.0294, 0.0294, 0.0585, 0.117, 0.107, 0.107, 0.107, 0.077],
    [0.0147, 0.0214, 0.0535, 0.107, 0.107, 0.107, 0.107, 0.077],
    [0.0107, 0.0214, 0.0535, 0.107, 0.107, 0.107, 0.107, 0.077],
    [0.0107, 0.0214, 0.0535, 0.107, 0.107, 0.107, 0.107, 0.077],
])

# a reference set of first-layer thresholds, keyed (n1, n2)
REFERENCE_WH1 = {
    (0, 1): -9695, (0, 2): -5244, (0, 3): -21297, (0, 4): -21560, (0, 5): -26932,
    (0, 6): -24960, (0, 7): -31905, (0, 8): -18336, (0, 9): -20449,
    (1, 0): 9695, (1, 2): 9377, (1, 3): -7676, (1, 4): -8273, (1, 5): -13799,
    (1, 6): -12613, (1, 7): -19396, (1, 8): -5566, (1, 9): -8243,
    (2, 0): 5244, (2, 1): -9377, (2, 3): -16925, (2, 4): -16866, (2, 5): -20909,
    (2, 6): -21795, (2, 7): -27718, (2, 8): -15057, (2, 9): -15953,
    (3, 0): 21297, (3, 1): 7676, (3, 2): 16925, (3, 4): -833, (3, 5): -5377,
    (3, 6): -5556, (3, 7): -11052, (3, 8): 1592, (3, 9): 140,
    (4, 0): 21560, (4, 1): 8273, (4, 2): 16866, (4, 3): 833, (4, 5): -4733,
    (4, 6): -4520, (4, 7): -10859, (4, 8): 2488, (4, 9): 1210,
    (5, 0): 26932, (5, 1): 13799, (5, 2): 20909, (5, 3): 5377, (5, 4): 4733,
    (5, 6): 210, (5, 7): -5618, (5, 8): 7821, (5, 9): 5892,
    (6, 0): 24960, (6, 1): 12613, (6, 2): 21795, (6, 3): 5556, (6, 4): 4520,
    (6, 5): -210, (6, 7): -5851, (6, 8): 7682, (6, 9): 5221,
    (7, 0): 31905, (7, 1): 19396, (7, 2): 27718, (7, 3): 11052, (7, 4): 10859,
    (7, 5): 5618, (7, 6): 5851, (7, 8): 14054, (7, 9): 12178,
    (8, 0): 18336, (8, 1): 5566, (8, 2): 15057, (8, 3): -1592, (8, 4): -2488,
    (8, 5): -7821, (8, 6): -7682, (8, 7): -14054, (8, 9): -1545,
    (9, 0): 20449, (9, 1): 8243, (9, 2): 15953, (9, 3): -140, (9, 4): -1210,
    (9, 5): -5892, (9, 6): -5221, (9, 7): -12178, (9, 8): 1545,
}


def zero_layer_oracle(ch):
    h, w = ch.shape
    out = np.zeros((h, w))
    for i, j in itertools.product(range(h), range(w)):
        out[i, j] = max((ch[il, jl] / 1000) / (1 + (i - il) ** 2 + (j - jl) ** 2)
                        for il, jl in itertools.product(range(h), range(w)))
    return out


class TestZeroLayer:
    def test_worked_example(self):
        ch = np.zeros((8, 8))
        ch[1, 4] = 162
        assert mh.compute_zero_layer(ch)[2, 6] == 0.162 / 6
        assert round(0.162 / 6, 3) == 0.027

    def test_reference_table(self):
        w0 = mh.compute_zero_layer(CHANNEL)
        # reference values carry at most 3 significant digits
        np.testing.assert_allclose(w0, WEIGHTS, rtol=5e-3, atol=5e-5)
        assert w0[0, 0] == 0.195
        assert w0[2, 6] == 0.162 / 6

    def test_all_zero(self):
        assert not mh.compute_zero_layer(np.zeros((2, 3, 8, 8))).any()

    def test_leading_axes_preserved(self, rng):
        ch = rng.uniform(0, 255, size=(3, 2, 5, 5))
        w0 = mh.compute_zero_layer(ch)
        assert w0.shape == ch.shape
        np.testing.assert_array_equal(w0[1, 1], mh.compute_zero_layer(ch[1, 1]))

    @settings(max_examples=300)
    @given(arrays(np.float64, (3, 3), elements=st.floats(0, 1000)))
    def test_brute_force_oracle(self, ch):
        w0 = mh.compute_zero_layer(ch)
        np.testing.assert_array_equal(w0, zero_layer_oracle(ch))
        assert (w0 >= ch / 1000).all()


class TestReferenceThresholds:
    def test_table_is_antisymmetric(self):
        assert len(REFERENCE_WH1) == 90
        for (a, b), v in REFERENCE_WH1.items():
            assert REFERENCE_WH1[(b, a)] == -v


def random_head(rng, n=4, shape=(3, 6, 6)):
    channels = rng.uniform(0, 255, size=(n,) + shape)
    channels[channels < 120] = 0
    return channels, mh.build_head(channels)


class TestFirstLayer:
    def test_pair_count(self):
        assert len(mh.ordered_pairs(10)) == 90
        assert mh.ordered_pairs(3) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]

    def test_exact_antisymmetry(self, rng):
        channels, head = random_head(rng)
        idx = {p: k for k, p in enumerate(head.pairs)}
        for a, b in head.pairs:
            np.testing.assert_array_equal(head.w1[idx[(a, b)]], -head.w1[idx[(b, a)]])
            assert head.wh1[a, b] == -head.wh1[b, a]

    def test_matches_direct_formula(self, rng):
        channels, head = random_head(rng)
        w0 = np.array([zero_layer_oracle(c) for c in channels.reshape(-1, 6, 6)]).reshape(channels.shape)
        for k, (a, b) in enumerate(head.pairs):
            w = w0[a] - w0[b]
            np.testing.assert_allclose(head.w1[k], w, rtol=1e-12, atol=1e-15)
            s_a, s_b = np.sum(channels[a] * w), np.sum(channels[b] * w)
            assert head.wh1[a, b] == pytest.approx(-(s_a + s_b) / 2, rel=1e-9)

    def test_identical_exemplars(self, rng):
        ch = rng.uniform(0, 255, size=(1, 2, 5, 5))
        head = mh.build_head(np.concatenate([ch, ch]))
        assert not head.w1.any()
        assert not head.wh1.any()

    def test_needs_two(self):
        with pytest.raises(ValueError):
            mh.build_head(np.zeros((1, 1, 5, 5)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mh.compute_first_layer(np.zeros((2, 1, 5, 5)), np.zeros((2, 1, 4, 4)))


class TestSecondLayer:
    def test_counting_weights(self):
        w2, wh2 = mh.second_layer(10)
        assert w2.shape == (10, 90)
        assert wh2 == -9
        assert w2.sum() == 90
        assert (w2.sum(axis=1) == 9).all()
        for p, (a, _) in enumerate(mh.ordered_pairs(10)):
            assert w2[a, p] == 1


class TestClassify:
    def test_exemplars_win_all_comparisons(self, rng):
        channels, head = random_head(rng)
        for e, ch in enumerate(channels):
            pre = mh.first_layer_preactivations(head, ch)
            others = [b for b in range(len(channels)) if b != e]
            if all(pre[e, b] > 0 for b in others):
                label, nets = mh.classify(head, ch)
                assert label == e and nets[e] == 0

    def test_zero_input_uses_threshold_signs(self, rng):
        channels, head = random_head(rng)
        label, nets = mh.classify(head, np.zeros(head.channel_shape))
        n = head.n_classes
        wins = [(head.wh1[a] > 0).sum() for a in range(n)]
        np.testing.assert_array_equal(nets, np.array(wins) - (n - 1))
        assert label == int(np.argmax(nets))

    def test_tie_break_lowest_index(self):
        channels = np.zeros((3, 1, 5, 5))
        head = mh.build_head(channels)
        label, nets = mh.classify(head, np.zeros((1, 5, 5)))
        assert label == 0 and (nets == -2).all()

    def test_dimension_mismatch(self, rng):
        _, head = random_head(rng)
        with pytest.raises(ValueError):
            mh.classify(head, np.zeros((3, 5, 5)))

    @settings(max_examples=50)
    @given(st.integers(0, 2**31 - 1))
    def test_complementary_neurons(self, seed):
        rng = np.random.default_rng(seed)
        _, head = random_head(rng, n=5, shape=(2, 5, 5))
        x = rng.uniform(0, 255, size=head.channel_shape)
        pre = mh.first_layer_preactivations(head, x)
        np.testing.assert_array_equal(pre, -pre.T)
        fires = pre > 0
        assert not (fires & fires.T).any()
        label, nets = mh.classify(head, x)
        assert nets.tolist() == (fires.sum(axis=1) - 4).tolist()
