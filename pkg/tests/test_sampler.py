import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from gw_border.border import exact_conditional_prob
from gw_border.errors import DomainError, InvalidInputError, ResidueClassError
from gw_border.family import progeny_pgf
from gw_border.oracle import enumerate_trees
from gw_border.sampler import (
    GWConfig,
    OffspringTable,
    border_profile,
    conditioned_estimate,
    make_rng,
    mean_protected,
    sample_conditioned_trees,
    sample_offspring,
    sample_sizes,
    sample_tree,
)


def _within(estimate, exact, samples, sigmas=4.0):
    sd = math.sqrt(max(exact * (1.0 - exact), 1e-12) / samples)
    return abs(estimate - exact) <= sigmas * sd


class TestOffspringLaw:
    def test_plane_probabilities(self, plane):
        table = OffspringTable(plane, 0.5)
        assert table.probs[:4] == pytest.approx([0.5, 0.25, 0.125, 0.0625], rel=1e-12)
        assert table.cdf[-1] == 1.0

    def test_cayley_tail_is_cut(self, cayley):
        table = OffspringTable(cayley, 1.0)
        assert table.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert 10 < table.max_offspring < 40

    def test_binary_never_draws_one(self, binary):
        draws = OffspringTable(binary, 1.0).draw(make_rng(5), 10000)
        assert set(np.unique(draws)) <= {0, 2}
        assert 0.45 < (draws == 0).mean() < 0.55

    def test_sample_offspring(self, cayley):
        rng = make_rng(6)
        draws = [sample_offspring(cayley, 1.0, rng) for _ in range(4000)]
        assert all(isinstance(d, int) and d >= 0 for d in draws)
        # Poisson(1) mean
        assert abs(sum(draws) / len(draws) - 1.0) < 4.0 / math.sqrt(len(draws))


class TestUnconditionedTrees:
    def test_sample_tree(self, plane):
        rng = make_rng(1)
        for _ in range(50):
            tree = sample_tree(plane, 0.5, 200, rng)
            assert tree is None or 1 <= tree.size <= 200

    def test_node_cap_must_be_positive(self, plane):
        with pytest.raises(InvalidInputError):
            sample_tree(plane, 0.5, 0, make_rng(0))

    def test_tiny_tilt_gives_a_single_node(self, plane):
        tree = sample_tree(plane, 1e-12, 10, make_rng(2))
        assert tree.size == 1

    def test_single_node_frequency(self, plane):
        sizes = sample_sizes(plane, 0.5, 20000, 50, make_rng(3))
        assert _within((sizes == 1).mean(), 0.5, 20000)

    def test_size_law_matches_progeny(self, plane):
        cap = 15
        sizes = sample_sizes(plane, 0.5, 20000, cap, make_rng(4))
        law = progeny_pgf(plane, 0.5, cap)
        probs = [law.coeff(n) for n in range(1, cap + 1)]
        probs.append(1.0 - sum(probs))
        counts = np.bincount(sizes, minlength=cap + 2)[1:]
        expected = np.array(probs) * sizes.size
        assert stats.chisquare(counts, expected).pvalue > 1e-3


class TestConditionedTrees:
    def test_plane_size_five_is_uniform(self, plane):
        shapes = [t.parents for t in enumerate_trees(5)]
        trees = sample_conditioned_trees(plane, 5, 7000, seed=3)
        assert len(trees) == 7000
        counts = Counter(t.parents for t in trees)
        assert set(counts) <= set(shapes)
        observed = [counts[s] for s in shapes]
        assert stats.chisquare(observed).pvalue > 1e-3

    def test_reproducible(self, motzkin):
        first = sample_conditioned_trees(motzkin, 9, 20, seed=8)
        second = sample_conditioned_trees(motzkin, 9, 20, seed=8)
        assert first == second
        assert all(t.size == 9 for t in first)

    def test_residue(self, binary):
        with pytest.raises(ResidueClassError):
            sample_conditioned_trees(binary, 6, 5)


class TestBorderProfile:
    def test_lopsided_tree(self):
        root, rerooted = border_profile(np.array([2, 0, 1, 1, 1, 0]))
        assert root == 1
        assert rerooted == [1, 5, 2, 2, 1, 5]

    def test_small_trees(self):
        assert border_profile(np.array([0])) == (0, [0])
        assert border_profile(np.array([1, 0])) == (1, [1, 1])


class TestEstimates:
    @pytest.mark.parametrize("name,n", [("plane", 10), ("binary", 9), ("cayley", 8)])
    def test_estimate_matches_exact(self, name, n, request):
        fam = request.getfixturevalue(name)
        report = conditioned_estimate(GWConfig(family=fam, target_n=n, k=2, samples=5000, seed=42))
        exact = float(exact_conditional_prob(fam, 2, n))
        assert report.accepted == 5000
        assert not report.insufficient
        assert report.exact_float == pytest.approx(exact, rel=1e-12)
        assert _within(report.p_hat, exact, 5000)
        assert sum(report.border_histogram.values()) == 5000

    def test_law_does_not_depend_on_tilt(self, plane):
        exact = float(exact_conditional_prob(plane, 2, 6))
        for t in (0.3, 0.5):
            report = conditioned_estimate(GWConfig(family=plane, target_n=6, k=2, samples=4000, t=t, seed=9))
            assert report.t == t
            assert _within(report.p_hat, exact, 4000)

    def test_k_zero(self, motzkin):
        report = conditioned_estimate(GWConfig(family=motzkin, target_n=7, k=0, samples=200, seed=1))
        assert report.p_hat == 1.0
        assert report.ci_half_width == 0.0
        assert report.mean_protected == 1.0
        assert report.exact == "1"

    def test_limit_constant_is_reported(self, plane):
        report = conditioned_estimate(GWConfig(family=plane, target_n=5, k=2, samples=50))
        assert report.limit_constant == pytest.approx(4 / 9, rel=1e-12)
        assert report.expected_attempts == pytest.approx(512 / 14, rel=1e-9)

    def test_threads_do_not_change_the_result(self, plane):
        base = dict(family=plane, target_n=8, k=2, samples=400, seed=11)
        single = conditioned_estimate(GWConfig(threads=1, **base))
        pooled = conditioned_estimate(GWConfig(threads=2, **base))
        assert single == pooled

    def test_seed_changes_the_sample(self, plane):
        base = dict(family=plane, target_n=8, k=2, samples=400)
        assert conditioned_estimate(GWConfig(seed=1, **base)) != conditioned_estimate(GWConfig(seed=2, **base))

    def test_budget_exhaustion(self, plane):
        report = conditioned_estimate(GWConfig(family=plane, target_n=10, k=2, samples=100, max_attempts=50))
        assert report.insufficient
        assert report.accepted < 100
        assert report.attempts <= 50

    def test_residue(self, binary):
        with pytest.raises(ResidueClassError):
            conditioned_estimate(GWConfig(family=binary, target_n=4, k=1))

    @pytest.mark.parametrize("t", [0.0, 1.0, 2.5])
    def test_tilt_outside_disc(self, plane, t):
        with pytest.raises(DomainError):
            conditioned_estimate(GWConfig(family=plane, target_n=5, k=1, t=t, samples=10))

    def test_node_cap_below_target(self, plane):
        with pytest.raises(InvalidInputError):
            conditioned_estimate(GWConfig(family=plane, target_n=10, k=1, samples=10, node_cap=5))

    def test_supercritical_tilt_needs_node_cap(self, plane):
        with pytest.raises(InvalidInputError, match="node_cap"):
            conditioned_estimate(GWConfig(family=plane, target_n=6, k=2, t=0.7, samples=10))

    def test_supercritical_tilt_with_node_cap(self, plane):
        # the size-conditioned law is the same beyond the apex
        exact = float(exact_conditional_prob(plane, 2, 6))
        report = conditioned_estimate(GWConfig(family=plane, target_n=6, k=2, t=0.7, samples=1000, node_cap=60, seed=2))
        assert report.accepted == 1000
        assert _within(report.p_hat, exact, 1000)


class TestMeanProtected:
    def test_unary_path(self, unary):
        # a path of 10 nodes: both ends and the six middle nodes are two steps from any other end
        report = mean_protected(GWConfig(family=unary, target_n=10, k=2, samples=30, seed=4))
        assert report.accepted == 30
        assert report.mean_protected == pytest.approx(0.8, rel=1e-12)
        assert report.p_hat == 1.0
        assert report.limit_constant is None

    def test_fraction_is_a_proportion(self, plane):
        report = mean_protected(GWConfig(family=plane, target_n=12, k=2, samples=500, seed=6))
        assert 0.0 < report.mean_protected < 1.0
        assert report.mean_protected_ci > 0.0

    @pytest.mark.slow
    def test_cayley_large_trees(self, cayley):
        report = mean_protected(GWConfig(family=cayley, target_n=400, k=2, samples=100, seed=12))
        assert report.exact is None
        assert abs(report.mean_protected - math.exp(-math.exp(-1))) < 0.05
