"""Leakage statistics tests: KDE, MI, shuffle bound, channel matrix.

Expected values for the mixture datasets were computed first with the
independent quadrature oracles in oracles.py and frozen here.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (analytic_mixture_mi, gaussian_mixture_dataset,
                     quadrature_kde_mi)
from tcsim.stats import (DegenerateAlphabet, EmptyInputClass, TooFewSamples,
                         channel_matrix, estimate_density, estimate_mi,
                         leak_verdict, silverman_bandwidth, zero_leakage_bound)

# analytic MI (bits) of uniform mixtures of unit Gaussians at means 0, d, ...
# frozen from oracles.analytic_mixture_mi at 2**19 quadrature nodes
TRUE_MIXTURE_MI = {
    (2, 0.5): 0.043730,
    (2, 1.0): 0.160747,
    (2, 2.0): 0.485944,
    (2, 4.0): 0.912822,
    (3, 0.5): 0.111167,
    (3, 1.0): 0.366165,
    (3, 2.0): 0.893237,
    (3, 4.0): 1.468725,
    (4, 0.5): 0.195960,
    (4, 1.0): 0.576508,
    (4, 2.0): 1.219413,
    (4, 4.0): 1.869233,
}


class TestDensity:
    def test_degenerate_spike(self):
        d = estimate_density(np.zeros(100))
        assert d.bandwidth == pytest.approx(1e-6)
        assert d.pdf(0.0)[0] > 1e5

    def test_unit_gaussian_density_at_zero(self):
        rng = np.random.default_rng(42)
        d = estimate_density(rng.standard_normal(10_000))
        assert d.pdf(0.0)[0] == pytest.approx(0.3989, abs=0.02)

    def test_single_sample_rejected(self):
        with pytest.raises(TooFewSamples):
            estimate_density([1.0])

    def test_silverman_rule(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(1000)
        sd = float(np.std(x, ddof=1))
        iqr = float(np.percentile(x, 75) - np.percentile(x, 25))
        expected = 1.06 * min(sd, iqr / 1.34) * 1000 ** (-0.2)
        assert silverman_bandwidth(x) == pytest.approx(expected)

    def test_density_integrates_to_one(self):
        rng = np.random.default_rng(3)
        d = estimate_density(rng.standard_normal(500))
        x = np.linspace(-8, 8, 4001)
        assert np.trapezoid(d.pdf(x), x) == pytest.approx(1.0, abs=1e-3)


class TestEstimateMi:
    def test_constant_channel_exactly_zero(self):
        inputs = ["a"] * 50 + ["b"] * 50
        outputs = np.full(100, 7.25)
        m = estimate_mi(inputs, outputs)
        assert m.value_bits == 0.0
        assert not m.clamped

    def test_disjoint_supports_one_bit(self):
        rng = np.random.default_rng(7)
        inputs = rng.integers(0, 2, 4000)
        outputs = np.where(inputs == 1, 1000.0, 0.0) + rng.standard_normal(4000)
        assert estimate_mi(inputs, outputs).value_bits == pytest.approx(1.0, abs=0.01)

    @pytest.mark.parametrize("d", [0.5, 1.0, 2.0, 4.0])
    def test_binary_gaussian_matches_quadrature_oracle(self, d):
        inputs, outputs = gaussian_mixture_dataset(2, d, 10_000, seed=2025)
        est = estimate_mi(inputs, outputs).value_bits
        oracle = quadrature_kde_mi(inputs, outputs)
        assert est == pytest.approx(oracle, abs=0.02)

    def test_tracks_analytic_truth(self):
        inputs, outputs = gaussian_mixture_dataset(2, 2.0, 10_000, seed=11)
        est = estimate_mi(inputs, outputs).value_bits
        assert est == pytest.approx(TRUE_MIXTURE_MI[(2, 2.0)], abs=0.06)

    def test_permutation_invariance(self):
        inputs, outputs = gaussian_mixture_dataset(3, 1.0, 600, seed=5)
        m1 = estimate_mi(inputs, outputs).value_bits
        perm = np.random.default_rng(1).permutation(len(inputs))
        m2 = estimate_mi(inputs[perm], outputs[perm]).value_bits
        assert m1 == pytest.approx(m2, abs=1e-12)

    def test_merging_symbols_cannot_gain_information(self):
        # collapsing two separated symbols into one label loses information
        rng = np.random.default_rng(9)
        inputs = rng.integers(0, 3, 6000)
        outputs = inputs * 5.0 + rng.standard_normal(6000)
        full = estimate_mi(inputs, outputs).value_bits
        merged = np.where(inputs == 2, 1, inputs)
        assert estimate_mi(merged, outputs).value_bits < full

    def test_requires_two_symbols(self):
        with pytest.raises(DegenerateAlphabet):
            estimate_mi(["a"] * 10, np.arange(10.0))

    def test_requires_two_samples_per_symbol(self):
        with pytest.raises(TooFewSamples):
            estimate_mi(["a", "a", "b"], np.array([1.0, 2.0, 3.0]))

    def test_non_negative_even_on_noise(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            m = estimate_mi(rng.integers(0, 2, 200), rng.standard_normal(200))
            assert m.value_bits >= 0.0


class TestZeroLeakageBound:
    def test_shuffles_preserve_output_multiset(self):
        inputs, outputs = gaussian_mixture_dataset(2, 1.0, 400, seed=3)
        # permutation invariance of the multiset is structural: permuting the
        # output column cannot change sorted outputs
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(outputs))
        assert np.array_equal(np.sort(outputs[perm]), np.sort(outputs))

    def test_bound_fields(self):
        inputs, outputs = gaussian_mixture_dataset(2, 0.0, 300, seed=8)
        b = zero_leakage_bound(inputs, outputs, shuffles=50, seed=4)
        assert len(b.shuffle_mis) == 50
        assert b.bound_bits == pytest.approx(b.mean + 1.645 * b.sd)
        assert b.bound_bits >= 0

    def test_deterministic_leak_dwarfs_bound(self):
        rng = np.random.default_rng(17)
        inputs = rng.integers(0, 2, 2000)
        outputs = inputs * 100.0 + rng.standard_normal(2000)
        v = leak_verdict(inputs, outputs, shuffles=100, seed=5)
        assert v.leak
        assert v.m.value_bits > 10 * v.m0.bound_bits

    def test_zero_dependence_mostly_no_leak(self):
        false_count = 0
        for i in range(20):
            rng = np.random.default_rng(900 + i)
            inputs = rng.integers(0, 4, 1500)
            outputs = rng.standard_normal(1500)
            v = leak_verdict(inputs, outputs, shuffles=100, seed=900 + i)
            false_count += (not v.leak)
        assert false_count >= 18

    def test_small_true_leaks_reliably_flagged(self):
        # 0.16 analytic bits at n=10,000 is far outside the shuffle bound
        for seed in range(2000, 2012):
            rng = np.random.default_rng(seed)
            inputs = rng.integers(0, 2, 10_000)
            outputs = inputs * 1.0 + rng.standard_normal(10_000)
            assert leak_verdict(inputs, outputs, shuffles=100, seed=seed + 5).leak

    def test_verdict_strictness(self):
        # identical constant outputs: M == M0 == 0 must NOT count as a leak
        inputs = ["a", "a", "b", "b"] * 30
        outputs = np.full(120, 5.0)
        v = leak_verdict(inputs, outputs, shuffles=20, seed=0)
        assert v.m.value_bits == 0.0 and v.m0.bound_bits == 0.0
        assert not v.leak


class TestChannelMatrix:
    def test_rows_sum_to_one(self):
        inputs, outputs = gaussian_mixture_dataset(3, 1.0, 900, seed=2)
        _, _, matrix = channel_matrix(inputs, outputs, bins=16)
        assert np.allclose(matrix.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic_channel_one_hot_rows(self):
        inputs = np.array([0, 0, 1, 1, 2, 2])
        outputs = np.array([0.0, 0.0, 10.0, 10.0, 20.0, 20.0])
        _, _, matrix = channel_matrix(inputs, outputs, bins=4)
        for row in matrix:
            assert np.count_nonzero(row) == 1
            assert row.max() == 1.0

    def test_bins_validated(self):
        with pytest.raises(ValueError):
            channel_matrix([0, 1], [0.0, 1.0], bins=1)

    def test_empty_input_class(self):
        with pytest.raises(EmptyInputClass):
            channel_matrix([0, 0, 1, 1], [0.0, 1.0, 2.0, 3.0], bins=4,
                           alphabet=(0, 1, 2))


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.sampled_from([0.5, 1.0, 2.0]), st.integers(0, 10_000))
def test_mi_non_negative_and_bounded(k, d, seed):
    inputs, outputs = gaussian_mixture_dataset(k, d, 400, seed)
    m = estimate_mi(inputs, outputs)
    assert 0.0 <= m.value_bits <= np.log2(k) + 0.05


def test_oracle_table_is_current():
    # guards the frozen constants against oracle drift
    for (k, d), frozen in TRUE_MIXTURE_MI.items():
        assert analytic_mixture_mi([i * d for i in range(k)]) == pytest.approx(
            frozen, abs=5e-6)
