import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dgib.bounds import (
    BoundConfig,
    GaussianParams,
    LossBreakdown,
    assemble_loss,
    ce_lower_bound,
    consensual_term,
    gaussian_kl,
    gaussian_log_ratio,
    kl_bernoulli,
    kl_categorical,
    mi_exact_discrete,
    nwj_bound,
)

probs = st.floats(0.0, 1.0, allow_nan=False)
open_probs = st.floats(1e-6, 1 - 1e-6, allow_nan=False)


def brute_mi(joint):
    """Double loop over the support, written independently of the vectorized form."""
    px = [sum(row) for row in joint]
    py = [sum(joint[i][j] for i in range(len(joint))) for j in range(len(joint[0]))]
    total = 0.0
    for i, row in enumerate(joint):
        for j, p in enumerate(row):
            if p > 0:
                total += p * math.log(p / (px[i] * py[j]))
    return total


def support_samples(joint):
    joint = np.asarray(joint)
    px, py = joint.sum(1), joint.sum(0)
    cells = list(itertools.product(range(joint.shape[0]), range(joint.shape[1])))
    pw = np.array([joint[i, j] for i, j in cells])
    mw = np.array([px[i] * py[j] for i, j in cells])
    return cells, pw, mw


class TestCrossEntropy:
    def test_frozen_value(self):
        assert ce_lower_bound([0.9, 0.1], [1, 0]) == pytest.approx(-(math.log(0.9) * 2) / 2, abs=1e-12)
        assert ce_lower_bound([0.9, 0.1], [1, 0]) == pytest.approx(0.10536, abs=1e-5)

    def test_half(self):
        assert ce_lower_bound([0.5] * 7, [1, 0, 1, 1, 0, 0, 1]) == pytest.approx(math.log(2), abs=1e-14)

    def test_exact_labels_near_zero(self):
        assert ce_lower_bound([1.0, 0.0], [1, 0]) == pytest.approx(-math.log(1 - 1e-7), abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            ce_lower_bound([], [])
        with pytest.raises(ValueError):
            ce_lower_bound([0.5, 0.5], [1])

    def test_tensor_in_tensor_out(self):
        p = torch.tensor([0.3, 0.6], dtype=torch.float64, requires_grad=True)
        out = ce_lower_bound(p, torch.tensor([0.0, 1.0]))
        out.backward()
        assert p.grad is not None


class TestKL:
    def test_bernoulli_frozen(self):
        expect = 0.8 * math.log(0.8 / 0.25) + 0.2 * math.log(0.2 / 0.75)
        assert kl_bernoulli([0.8], 0.25) == pytest.approx(expect, abs=1e-14)
        assert kl_bernoulli([0.8], 0.25) == pytest.approx(0.66617, abs=1e-5)
        assert kl_bernoulli([1.0], 0.5) == pytest.approx(math.log(2), abs=1e-15)

    def test_bernoulli_prior_must_be_open(self):
        for bad in (0.0, 1.0):
            with pytest.raises(ValueError):
                kl_bernoulli([0.5], bad)

    def test_categorical_frozen(self):
        expect = 0.5 * math.log(1.5) + 0.5 * math.log(0.75)
        assert kl_categorical([0.5, 0.25, 0.25], 3) == pytest.approx(expect, abs=1e-15)
        assert kl_categorical([0.5, 0.25, 0.25], 3) == pytest.approx(0.05889, abs=1e-5)
        assert kl_categorical([1, 0, 0, 0], 4) == pytest.approx(math.log(4), abs=1e-15)
        assert kl_categorical([0.25] * 4, 4) == pytest.approx(0.0, abs=1e-15)

    def test_categorical_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            kl_categorical([0.5, 0.6], 2)
        with pytest.raises(ValueError):
            kl_categorical([0.5, 0.5], 3)

    @given(arrays(np.float64, st.integers(1, 8), elements=probs), open_probs)
    def test_bernoulli_matches_outcome_sum(self, p, p0):
        brute = 0.0
        for pi in p:
            for x, (a, b) in ((1, (pi, p0)), (0, (1 - pi, 1 - p0))):
                if a > 0:
                    brute += a * math.log(a / b)
        assert kl_bernoulli(p, p0) == pytest.approx(brute, abs=1e-12)
        assert kl_bernoulli(p, p0) >= -1e-12

    @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(0.0, 10.0)))
    def test_categorical_matches_outcome_sum(self, w):
        if w.sum() <= 0:
            return
        phi = w / w.sum()
        m = len(phi)
        brute = sum(x * math.log(x / (1.0 / m)) for x in phi if x > 0)
        assert kl_categorical(phi, m) == pytest.approx(brute, abs=1e-12)
        assert kl_categorical(phi, m) >= -1e-12


class TestGaussian:
    def test_scalar_case(self):
        p = GaussianParams([0.0], [0.0])
        q = GaussianParams([1.0], [0.0])
        assert gaussian_log_ratio(np.array([[0.0]]), p, q) == pytest.approx(0.5, abs=1e-15)

    @given(arrays(np.float64, (5, 3), elements=st.floats(-5, 5)))
    def test_same_distribution_is_zero(self, z):
        p = GaussianParams(np.ones(3), np.full(3, 0.3))
        assert gaussian_log_ratio(z, p, p) == 0.0
        assert consensual_term(z, p, p) == 0.0

    def test_consensual_equals_log_ratio(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((10, 4))
        p = GaussianParams(rng.standard_normal(4), rng.standard_normal(4))
        q = GaussianParams(np.zeros(4), np.zeros(4))
        assert consensual_term(z, p, q) == gaussian_log_ratio(z, p, q)

    def test_errors(self):
        p = GaussianParams([0.0], [0.0])
        with pytest.raises(ValueError):
            gaussian_log_ratio(np.zeros((0, 1)), p, p)
        with pytest.raises(ValueError):
            gaussian_log_ratio(np.array([[np.inf]]), p, p)
        with pytest.raises(ValueError):
            gaussian_log_ratio(np.zeros((1, 1)), GaussianParams([0.0], [-np.inf]), p)

    def test_converges_to_closed_form(self):
        rng = np.random.default_rng(3)
        p = GaussianParams(rng.standard_normal(3), rng.uniform(-1, 1, 3))
        q = GaussianParams(rng.standard_normal(3), rng.uniform(-1, 1, 3))
        z = p.mu.numpy() + np.exp(0.5 * p.log_sigma2.numpy()) * rng.standard_normal((50_000, 3))
        terms = (p.log_density(torch.from_numpy(z)) - q.log_density(torch.from_numpy(z))).numpy()
        se = terms.std(ddof=1) / math.sqrt(len(terms))
        assert abs(gaussian_log_ratio(z, p, q) - gaussian_kl(p, q)) < 3 * se

    def test_standard_error_shrinks(self):
        rng = np.random.default_rng(5)
        p = GaussianParams([0.5, -0.2], [0.2, -0.3])
        q = GaussianParams.standard(2)

        def spread(n):
            est = []
            for _ in range(100):
                z = p.mu.numpy() + np.exp(0.5 * p.log_sigma2.numpy()) * rng.standard_normal((n, 2))
                est.append(consensual_term(z, p, q))
            return np.std(est)

        ratio = spread(50) / spread(800)
        # sqrt(800/50) = 4; allow Monte Carlo slack on a 100-replicate spread
        assert 2.5 < ratio < 6.0

    @given(st.floats(-3, 3), st.floats(-2, 2))
    def test_closed_form_nonnegative(self, mu, lv):
        p = GaussianParams([mu], [lv])
        assert gaussian_kl(p, GaussianParams.standard(1)) >= 0.0
        assert gaussian_kl(p, p) == 0.0


class TestMutualInformation:
    def test_frozen_value(self):
        expect = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
        assert mi_exact_discrete([[0.4, 0.1], [0.1, 0.4]]) == pytest.approx(expect, abs=1e-15)
        assert mi_exact_discrete([[0.4, 0.1], [0.1, 0.4]]) == pytest.approx(0.19274, abs=1e-5)

    def test_product_and_copy(self):
        assert mi_exact_discrete(np.outer([0.3, 0.7], [0.2, 0.5, 0.3])) == pytest.approx(0.0, abs=1e-15)
        assert mi_exact_discrete([[0.5, 0.0], [0.0, 0.5]]) == pytest.approx(math.log(2), abs=1e-15)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            mi_exact_discrete([[0.5, 0.5], [0.5, 0.5]])

    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.floats(0, 1)))
    def test_matches_double_loop(self, w):
        if w.sum() <= 0:
            return
        joint = w / w.sum()
        assert mi_exact_discrete(joint) == pytest.approx(brute_mi(joint.tolist()), abs=1e-12)


class TestNWJ:
    def test_constant_critic_gives_zero(self):
        cells, pw, mw = support_samples([[0.4, 0.1], [0.1, 0.4]])
        assert nwj_bound(cells, cells, lambda x, y: 1.0, pw, mw) == pytest.approx(0.0, abs=1e-15)

    def test_optimal_critic_is_tight(self):
        joint = np.array([[0.4, 0.1], [0.1, 0.4]])
        cells, pw, mw = support_samples(joint)
        px, py = joint.sum(1), joint.sum(0)
        f = lambda x, y: 1.0 + math.log(joint[x, y] / (px[x] * py[y]))  # noqa: E731
        assert nwj_bound(cells, cells, f, pw, mw) == pytest.approx(mi_exact_discrete(joint), abs=1e-12)

    @given(arrays(np.float64, (3, 3), elements=st.floats(0.01, 1)), arrays(np.float64, (3, 3), elements=st.floats(-4, 4)))
    def test_any_critic_below_mi(self, w, table):
        joint = w / w.sum()
        cells, pw, mw = support_samples(joint)
        assert nwj_bound(cells, cells, lambda x, y: table[x, y], pw, mw) <= mi_exact_discrete(joint) + 1e-9

    def test_overflow_is_clamped_and_flagged(self):
        with pytest.warns(RuntimeWarning):
            val = nwj_bound([(0, 0)], [(0, 0)], lambda x, y: 1000.0)
        assert math.isfinite(val)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            nwj_bound([], [(0, 0)], lambda x, y: 0.0)


class TestAssemble:
    def test_frozen_total(self):
        cfg = BoundConfig(beta1=0.01, beta2=0.01, alpha=0.5)
        out = assemble_loss(0.7, {1: 2.0}, {1: 3.0}, 1.0, cfg)
        assert out.total == pytest.approx(0.5 * (0.7 + 0.05) + 0.5 * (0.7 + 0.01), abs=1e-15)
        assert out.total == pytest.approx(0.73, abs=1e-12)

    def test_alpha_one_is_ms(self):
        cfg = BoundConfig(beta1=0.3, beta2=0.7, alpha=1.0)
        out = assemble_loss(0.4, {1: 1.5, 2: 0.5}, {1: 2.0}, 9.0, cfg)
        assert out.total == out.dgib_ms

    def test_zero_betas_give_ce(self):
        cfg = BoundConfig(beta1=0.0, beta2=0.0, alpha=0.3)
        ce = torch.tensor(0.1234567, dtype=torch.float64)
        out = assemble_loss(ce, {1: torch.tensor(5.0)}, {1: torch.tensor(5.0)}, torch.tensor(1.0), cfg)
        assert out.total is ce

    def test_index_sets_filter_terms(self):
        cfg = BoundConfig(beta1=1.0, beta2=0.0, alpha=1.0, time_indices_A=frozenset({2}), time_indices_Z=frozenset())
        out = assemble_loss(0.0, {1: 1.0, 2: 2.0}, {1: 4.0}, 0.0, cfg)
        assert out.sum_A == 2.0 and out.sum_Z == 0.0 and out.total == 2.0

    @given(
        st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(-5, 5),
        st.floats(0, 1), st.floats(0, 1), st.floats(0, 1),
    )
    def test_recomposition_identity(self, ce, a, z, c, alpha, b1, b2):
        cfg = BoundConfig(beta1=b1, beta2=b2, alpha=alpha)
        out = assemble_loss(ce, {1: a}, {1: z}, c, cfg)
        assert out.total == pytest.approx(out.recompose(), rel=1e-10, abs=1e-12)

    @given(st.floats(0.1, 3), st.floats(0.1, 3))
    def test_linear_in_parts(self, s, ce):
        cfg = BoundConfig(beta1=0.2, beta2=0.3, alpha=0.4)
        base = assemble_loss(ce, {1: 1.0}, {1: 2.0}, 3.0, cfg).total
        scaled = assemble_loss(s * ce, {1: s}, {1: 2.0 * s}, 3.0 * s, cfg).total
        assert scaled == pytest.approx(s * base, rel=1e-12)

    def test_breakdown_flags_nonfinite(self):
        lb = LossBreakdown(0.1, {1: float("nan")}, {}, 0.0, 0.1)
        assert lb.first_nonfinite() == "sum_A"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BoundConfig(alpha=1.5)
        with pytest.raises(ValueError):
            BoundConfig(beta1=-1)
        with pytest.raises(ValueError):
            BoundConfig(mc_samples=0)
        with pytest.raises(ValueError):
            BoundConfig(prior_kind="gamma")
