"""Quotients, quotient clouds, Hausdorff comparison, rebalancing."""

import itertools

import numpy as np
import pytest

from stepkernels import (
    DecorationSpace,
    OverlapMatrix,
    Quotient,
    QuotientCloud,
    RealStepKernel,
    SignedMeasure,
    StepKernel,
    d1_quotient,
    delta_cut,
    dsquare_quotient,
    from_real_graphon,
    hausdorff,
    lp_distance,
    quotient,
    quotient_cloud,
    rebalance_partition,
    relabel,
)

RUNNING_KERNEL = from_real_graphon(RealStepKernel([0.5, 0.5], [[0.2, 0.8], [0.8, 0.2]]))


def random_prob_kernel(rng, space, parts):
    e = rng.random((parts, parts, space.size)) + 0.05
    e /= e.sum(axis=2, keepdims=True)
    return StepKernel(space, np.full(parts, 1.0 / parts), e)


def random_quotient(rng, space, k):
    a = rng.random(k) + 0.1
    a /= a.sum()
    b = rng.random((k, k, space.size)) + 0.05
    b /= b.sum(axis=2, keepdims=True)
    return Quotient(space, a, b)


def d1_oracle(a, b):
    """Direct summation from the definition (test-local)."""
    total = float(np.abs(a.alpha - b.alpha).sum())
    for i in range(a.k):
        for j in range(a.k):
            mu = SignedMeasure(a.space, a.alpha[i] * a.alpha[j] * a.beta[i, j])
            nu = SignedMeasure(b.space, b.alpha[i] * b.alpha[j] * b.beta[i, j])
            total += lp_distance(mu, nu)
    return total


def dsquare_oracle(a, b):
    best = 0.0
    for s in itertools.product([0, 1], repeat=a.k):
        for t in itertools.product([0, 1], repeat=a.k):
            mu = np.zeros(a.space.size)
            nu = np.zeros(a.space.size)
            for i in range(a.k):
                for j in range(a.k):
                    if s[i] and t[j]:
                        mu += a.alpha[i] * a.alpha[j] * a.beta[i, j]
                        nu += b.alpha[i] * b.alpha[j] * b.beta[i, j]
            best = max(best, lp_distance(
                SignedMeasure(a.space, np.clip(mu, 0, None)),
                SignedMeasure(a.space, np.clip(nu, 0, None)),
            ))
    return float(np.abs(a.alpha - b.alpha).sum()) + best


class TestQuotientConstruction:
    def test_trivial_partition(self):
        q = quotient(RUNNING_KERNEL, (np.array([0, 0]), 1))
        assert q.alpha[0] == pytest.approx(1.0)
        assert q.beta[0, 0].sum() == pytest.approx(1.0)

    def test_aligned_partition_reproduces_entries(self):
        q = quotient(RUNNING_KERNEL, (np.array([0, 1]), 2))
        assert np.allclose(q.beta, RUNNING_KERNEL.entries)
        assert np.allclose(q.alpha, [0.5, 0.5])

    def test_fractional_overlap_double_sum(self):
        rho = np.array([[0.3, 0.2], [0.1, 0.4]])
        q = quotient(RUNNING_KERNEL, OverlapMatrix(rho))
        direct = np.zeros((2, 2, 2))
        for i in range(2):
            for j in range(2):
                for p in range(2):
                    for r in range(2):
                        direct[i, j] += rho[p, i] * rho[r, j] * RUNNING_KERNEL.entries[p, r]
        assert np.allclose(q.scaled(), direct, atol=1e-12)

    def test_degenerate_cell_zero_measure(self):
        q = quotient(RUNNING_KERNEL, (np.array([0, 0]), 2))
        assert q.degenerate()[1]
        assert np.all(q.beta[1, :] == 0.0)
        assert np.all(q.beta[:, 1] == 0.0)

    def test_probability_source_gives_probability_decorations(self):
        rng = np.random.default_rng(0)
        z = DecorationSpace.discrete(range(3))
        w = random_prob_kernel(rng, z, 4)
        rho = OverlapMatrix(np.outer(w.part_sizes, [0.3, 0.7]))
        q = quotient(w, rho)
        masses = q.beta.sum(axis=2)
        assert np.allclose(masses, 1.0)

    def test_infeasible_overlap_rejected(self):
        with pytest.raises(ValueError, match="row sums"):
            quotient(RUNNING_KERNEL, OverlapMatrix([[0.3, 0.3], [0.1, 0.4]]))


class TestQuotientDistances:
    def test_d1_identity(self):
        rng = np.random.default_rng(1)
        q = random_quotient(rng, DecorationSpace.two_point(), 3)
        assert d1_quotient(q, q) == 0.0

    def test_d1_dirac_swap_single_edge(self):
        z = DecorationSpace.two_point()
        base = np.zeros((2, 2, 2))
        base[:, :, 0] = 1.0
        other = base.copy()
        other[0, 1] = [0.0, 1.0]
        a = Quotient(z, [0.5, 0.5], base)
        b = Quotient(z, [0.5, 0.5], other)
        # one ordered edge with mass 1/4, Diracs at distance 1
        assert d1_quotient(a, b) == pytest.approx(0.25)

    def test_d1_alpha_term_lower_bound(self):
        z = DecorationSpace.two_point()
        beta = np.zeros((2, 2, 2))
        beta[:, :, 0] = 1.0
        a = Quotient(z, [0.5, 0.5], beta)
        b = Quotient(z, [0.3, 0.7], beta)
        assert d1_quotient(a, b) >= 0.4

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_d1_against_oracle(self, k):
        rng = np.random.default_rng(10 + k)
        z = DecorationSpace.discrete(range(3))
        a, b = random_quotient(rng, z, k), random_quotient(rng, z, k)
        assert d1_quotient(a, b) == pytest.approx(d1_oracle(a, b), abs=1e-12)

    def test_dsquare_identity(self):
        rng = np.random.default_rng(2)
        q = random_quotient(rng, DecorationSpace.two_point(), 3)
        assert dsquare_quotient(q, q) == 0.0

    def test_dsquare_k1_formula(self):
        z = DecorationSpace.two_point()
        a = Quotient(z, [1.0], np.array([[[0.3, 0.7]]]))
        b = Quotient(z, [1.0], np.array([[[0.5, 0.5]]]))
        expected = lp_distance(
            SignedMeasure(z, [0.3, 0.7]), SignedMeasure(z, [0.5, 0.5])
        )
        assert dsquare_quotient(a, b) == pytest.approx(expected)

    @pytest.mark.parametrize("k", [2, 3])
    def test_dsquare_against_oracle(self, k):
        rng = np.random.default_rng(20 + k)
        z = DecorationSpace.two_point()
        a, b = random_quotient(rng, z, k), random_quotient(rng, z, k)
        assert dsquare_quotient(a, b) == pytest.approx(dsquare_oracle(a, b), abs=1e-12)

    def test_metric_sandwich(self):
        rng = np.random.default_rng(3)
        z = DecorationSpace.two_point()
        for _ in range(40):
            k = int(rng.integers(1, 6))
            a, b = random_quotient(rng, z, k), random_quotient(rng, z, k)
            d1 = d1_quotient(a, b)
            ds = dsquare_quotient(a, b)
            assert d1 / k**2 - 1e-12 <= ds <= k**2 * d1 + 1e-12

    def test_triangle_inequality(self):
        rng = np.random.default_rng(4)
        z = DecorationSpace.two_point()
        for _ in range(20):
            k = int(rng.integers(1, 4))
            a, b, c = (random_quotient(rng, z, k) for _ in range(3))
            assert d1_quotient(a, b) <= d1_quotient(a, c) + d1_quotient(c, b) + 1e-9
            assert dsquare_quotient(a, b) <= (
                dsquare_quotient(a, c) + dsquare_quotient(c, b) + 1e-9
            )

    def test_mismatched_k_rejected(self):
        rng = np.random.default_rng(5)
        z = DecorationSpace.two_point()
        with pytest.raises(ValueError, match="different cell counts"):
            d1_quotient(random_quotient(rng, z, 2), random_quotient(rng, z, 3))


class TestQuotientCloud:
    def test_k1_single_member(self):
        cloud = quotient_cloud(RUNNING_KERNEL, 1, mode="enumerate", cells=4)
        assert len(cloud) == 1

    def test_constant_kernel_collapses(self):
        z = DecorationSpace.two_point()
        mu = SignedMeasure(z, [0.4, 0.6])
        w = StepKernel.constant(mu, [1.0])
        cloud = quotient_cloud(w, 2, mode="enumerate", cells=6)
        alphas = sorted(q.alpha[0] for q in cloud.quotients)
        # one member per distinct mass split
        assert len(cloud) == len(set(np.round(alphas, 9)))

    def test_enumerate_count_and_dedup(self):
        cloud = quotient_cloud(RUNNING_KERNEL, 2, mode="enumerate", cells=6)
        assert 1 <= len(cloud) <= 64
        key = {tuple(np.round(np.concatenate([q.alpha, q.scaled().ravel()]), 9)) for q in cloud.quotients}
        assert len(key) == len(cloud)

    def test_enumeration_budget(self):
        with pytest.raises(ValueError, match="budget"):
            quotient_cloud(RUNNING_KERNEL, 4, mode="enumerate", cells=12)

    def test_alpha_filter(self):
        cloud = quotient_cloud(RUNNING_KERNEL, 2, mode="enumerate", cells=4, alpha=[0.5, 0.5])
        for q in cloud.quotients:
            assert np.allclose(q.alpha, [0.5, 0.5])

    def test_sample_mode_provenance_and_determinism(self):
        a = quotient_cloud(RUNNING_KERNEL, 2, mode="sample", cells=8, count=16, seed=3)
        b = quotient_cloud(RUNNING_KERNEL, 2, mode="sample", cells=8, count=16, seed=3)
        assert a.provenance == b.provenance
        assert len(a) == len(b)
        for qa, qb in zip(a.quotients, b.quotients):
            assert np.allclose(qa.scaled(), qb.scaled())

    def test_alpha_grid_mode(self):
        cloud = quotient_cloud(RUNNING_KERNEL, 2, mode="alpha_grid", cells=8, count=9)
        alphas = {round(q.alpha[0], 9) for q in cloud.quotients}
        assert {0.0, 0.5, 1.0} <= alphas

    def test_relabel_invariance_of_cloud(self):
        rng = np.random.default_rng(6)
        z = DecorationSpace.two_point()
        w = random_prob_kernel(rng, z, 4)
        moved = relabel(w, rng.permutation(4))
        a = quotient_cloud(w, 2, mode="enumerate", cells=4)
        b = quotient_cloud(moved, 2, mode="enumerate", cells=4)
        assert hausdorff(a, b, metric="d1") == pytest.approx(0.0, abs=1e-12)


class TestHausdorff:
    def test_identical_clouds(self):
        cloud = quotient_cloud(RUNNING_KERNEL, 2, mode="enumerate", cells=4)
        assert hausdorff(cloud, cloud, metric="d1") == 0.0
        assert hausdorff(cloud, cloud, metric="dsquare") == 0.0

    def test_singletons_reduce_to_metric(self):
        rng = np.random.default_rng(7)
        z = DecorationSpace.two_point()
        qa, qb = random_quotient(rng, z, 2), random_quotient(rng, z, 2)
        ca = QuotientCloud(z, 2, (qa,), {})
        cb = QuotientCloud(z, 2, (qb,), {})
        assert hausdorff(ca, cb, "d1") == pytest.approx(d1_quotient(qa, qb))
        assert hausdorff(ca, cb, "dsquare") == pytest.approx(dsquare_quotient(qa, qb))

    def test_nested_clouds_one_sided(self):
        rng = np.random.default_rng(8)
        z = DecorationSpace.two_point()
        members = tuple(random_quotient(rng, z, 2) for _ in range(3))
        small = QuotientCloud(z, 2, members[:1], {})
        big = QuotientCloud(z, 2, members, {})
        expected = max(
            min(d1_quotient(q, small.quotients[0]) for _ in [0])
            for q in big.quotients
        )
        assert hausdorff(small, big, "d1") == pytest.approx(expected)

    def test_empty_cloud_rejected(self):
        z = DecorationSpace.two_point()
        empty = QuotientCloud(z, 2, (), {})
        other = QuotientCloud(z, 2, (random_quotient(np.random.default_rng(0), z, 2),), {})
        with pytest.raises(ValueError, match="non-empty"):
            hausdorff(empty, other)

    def test_matched_clouds_bounded_by_delta(self):
        rng = np.random.default_rng(9)
        z = DecorationSpace.two_point()
        for _ in range(5):
            u = random_prob_kernel(rng, z, 4)
            w = random_prob_kernel(rng, z, 4)
            res = delta_cut(u, w, metric="lp")
            overlaid = relabel(w, res.permutation)
            mu, mw = [], []
            for assignment in itertools.product(range(2), repeat=4):
                zvec = np.array(assignment)
                mu.append(quotient(u, (zvec, 2)))
                mw.append(quotient(overlaid, (zvec, 2)))
            h = hausdorff(
                QuotientCloud(z, 2, tuple(mu), {}),
                QuotientCloud(z, 2, tuple(mw), {}),
                metric="dsquare",
            )
            assert h <= res.value + 1e-9


class TestRebalance:
    def test_noop(self):
        o = OverlapMatrix([[0.5, 0.0], [0.0, 0.5]])
        r = rebalance_partition(o, [0.5, 0.5])
        assert np.allclose(r.rho, o.rho)

    def test_forced_transfer(self):
        o = OverlapMatrix([[0.5, 0.0], [0.0, 0.5]])
        r = rebalance_partition(o, [0.25, 0.75])
        assert np.allclose(r.col_sums, [0.25, 0.75])
        assert np.allclose(r.row_sums, o.row_sums)
        # monotone: column 0 only shrank, column 1 only grew
        assert np.all(r.rho[:, 0] <= o.rho[:, 0] + 1e-12)
        assert np.all(r.rho[:, 1] >= o.rho[:, 1] - 1e-12)

    def test_mass_transfer_bound(self):
        rng = np.random.default_rng(10)
        z = DecorationSpace.discrete(range(3))
        for _ in range(20):
            parts = int(rng.integers(2, 5))
            k = int(rng.integers(2, 4))
            w = random_prob_kernel(rng, z, parts)
            assignment = rng.integers(0, k, size=parts)
            o = OverlapMatrix.from_assignment(w.part_sizes, assignment, k)
            target = rng.random(k) + 0.1
            target /= target.sum()
            moved = rebalance_partition(o, target)
            gap = float(np.abs(o.col_sums - target).sum())
            d1 = d1_quotient(quotient(w, o), quotient(w, moved))
            assert d1 <= (1 + 2 * w.sup_tv()) * gap + 1e-9
            assert d1 <= 3 * gap + 1e-9

    def test_rejects_wrong_total(self):
        o = OverlapMatrix([[0.5, 0.0], [0.0, 0.5]])
        with pytest.raises(ValueError, match="total mass"):
            rebalance_partition(o, [0.25, 0.25])


class TestDsquareSearch:
    def test_falls_through_to_exact(self):
        rng = np.random.default_rng(30)
        z = DecorationSpace.two_point()
        a, b = random_quotient(rng, z, 3), random_quotient(rng, z, 3)
        from stepkernels import dsquare_quotient_search

        res = dsquare_quotient_search(a, b)
        assert res.exact
        assert res.value == pytest.approx(dsquare_quotient(a, b))

    def test_large_k_flagged_lower_bound(self):
        rng = np.random.default_rng(31)
        z = DecorationSpace.two_point()
        k = 14
        a, b = random_quotient(rng, z, k), random_quotient(rng, z, k)
        with pytest.raises(ValueError, match="capped"):
            dsquare_quotient(a, b)
        from stepkernels import dsquare_quotient_search
        from stepkernels.search import SearchBudget

        res = dsquare_quotient_search(a, b, SearchBudget(restarts=2, steps=0, seed=0))
        assert not res.exact
        # any rectangle realizes a lower bound; d1 sandwich gives an upper cap
        assert res.value <= k * k * d1_quotient(a, b) + 1e-9
        assert res.value >= float(np.abs(a.alpha - b.alpha).sum())
