from __future__ import annotations

import random

import pytest
import scipy.stats

from telesim.stats import DegenerateSample, WilcoxonResult, spearman_rho, wilcoxon_signed_rank

# Completion times from the no-delay and uniform-100-500ms columns of the
# three-subject timing table.
NO_DELAY = [40.0, 33.0, 65.0]
UNI_100_500 = [361.0, 154.0, 350.0]


def test_three_pair_exact_quarter():
    res = wilcoxon_signed_rank(NO_DELAY, UNI_100_500)
    assert res.method == "exact"
    assert res.w == 0.0
    assert res.p_two_sided == 0.25


def test_direction_symmetric():
    a = wilcoxon_signed_rank(NO_DELAY, UNI_100_500)
    b = wilcoxon_signed_rank(UNI_100_500, NO_DELAY)
    assert a.p_two_sided == b.p_two_sided
    assert a.w == b.w


def test_degenerate_sample():
    with pytest.raises(DegenerateSample):
        wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])


def test_input_validation():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([], [])


def test_known_vector_matches_reference():
    x = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30]
    y = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29]
    res = wilcoxon_signed_rank(x, y)
    ref = scipy.stats.wilcoxon(x, y, alternative="two-sided", method="exact")
    assert abs(res.p_two_sided - ref.pvalue) < 1e-9
    assert res.w == ref.statistic


def test_exact_agrees_with_reference_on_random_samples():
    rng = random.Random(20250809)
    for trial in range(100):
        n = rng.randint(4, 20)
        x = [rng.uniform(0, 100) for _ in range(n)]
        y = [xi + rng.uniform(-30, 30) for xi in x]
        res = wilcoxon_signed_rank(x, y)
        ref = scipy.stats.wilcoxon(x, y, alternative="two-sided", method="exact")
        assert abs(res.p_two_sided - ref.pvalue) < 1e-9, (trial, n)


def test_exact_handles_ties_and_zeros():
    x = [10.0, 12.0, 9.0, 9.0, 14.0, 11.0]
    y = [10.0, 10.0, 11.0, 7.0, 12.0, 13.0]  # one zero diff, tied magnitudes
    res = wilcoxon_signed_rank(x, y)
    assert res.n == 5
    assert res.method == "exact"
    assert 0.0 < res.p_two_sided <= 1.0


def test_approx_mode_tracks_reference():
    rng = random.Random(7)
    for _ in range(20):
        n = rng.randint(26, 60)
        x = [rng.uniform(0, 100) for _ in range(n)]
        y = [xi + rng.uniform(-10, 10) for xi in x]
        res = wilcoxon_signed_rank(x, y)
        assert res.method == "approx"
        ref = scipy.stats.wilcoxon(x, y, alternative="two-sided",
                                   method="approx", correction=False)
        assert abs(res.p_two_sided - ref.pvalue) < 1e-9


def test_spearman_matches_reference():
    rng = random.Random(9)
    x = [rng.uniform(0, 10) for _ in range(25)]
    y = [xi * 2 + rng.uniform(-3, 3) for xi in x]
    mine = spearman_rho(x, y)
    ref = scipy.stats.spearmanr(x, y).statistic
    assert abs(mine - ref) < 1e-12


def test_spearman_perfect_monotone():
    assert spearman_rho([1, 2, 3, 4], [10, 20, 25, 90]) == 1.0
