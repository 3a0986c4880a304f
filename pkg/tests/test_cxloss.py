import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from therm2vis import cxloss
from therm2vis.errors import ContractError
from therm2vis.perceptual import FeatureStack, random_net

from conftest import smooth_image


def oracle_similarity(x_rows, y_rows, h=0.5, eps=1e-5):
    """Scalar reimplementation of the similarity with plain Python loops."""
    n, m = len(x_rows), len(y_rows)
    dim = len(y_rows[0])
    mu = [sum(v[k] for v in y_rows) / m for k in range(dim)]
    xc = [[v[k] - mu[k] for k in range(dim)] for v in x_rows]
    yc = [[v[k] - mu[k] for k in range(dim)] for v in y_rows]

    def unit(v):
        norm = math.sqrt(sum(a * a for a in v)) + eps
        return [a / norm for a in v]

    xu = [unit(v) for v in xc]
    yu = [unit(v) for v in yc]
    d = [
        [max(1.0 - sum(a * b for a, b in zip(xi, yj)), 0.0) for yj in yu]
        for xi in xu
    ]
    dtil = []
    for i in range(n):
        row_min = min(d[i])
        dtil.append([d[i][j] / (row_min + eps) for j in range(m)])
    w = [[math.exp((1.0 - dtil[i][j]) / h) for j in range(m)] for i in range(n)]
    a = []
    for i in range(n):
        total = sum(w[i])
        a.append([w[i][j] / total for j in range(m)])
    return sum(max(a[i][j] for i in range(n)) for j in range(m)) / m


def random_set(seed, n=6, dim=16, scale=1.0):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(scale * rng.standard_normal((n, dim)))


class TestDistanceMatrix:
    def test_self_distance_near_zero(self):
        x = random_set(0, n=2)
        d = cxloss.distance_matrix(x, x)
        assert float(d.diag().max()) < 1e-4

    def test_orthogonal_gives_one(self):
        v = torch.tensor([[2.0, 0.0], [-2.0, 0.0]], dtype=torch.float64)  # mean zero
        x = torch.tensor([[0.0, 3.0]], dtype=torch.float64)
        d = cxloss.distance_matrix(x, v)
        assert torch.allclose(d, torch.ones_like(d), atol=1e-4)

    def test_antiparallel_gives_two(self):
        v = torch.tensor([[2.0, 0.0], [-2.0, 0.0]], dtype=torch.float64)
        x = torch.tensor([[-2.0, 0.0]], dtype=torch.float64)
        d = cxloss.distance_matrix(x, v)
        assert abs(float(d[0, 0]) - 2.0) < 1e-4

    def test_range(self):
        d = cxloss.distance_matrix(random_set(1), random_set(2))
        assert float(d.min()) >= 0.0 and float(d.max()) <= 2.0 + 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            cxloss.distance_matrix(random_set(0, dim=8), random_set(1, dim=16))


class TestContextualSimilarity:
    def test_single_pair_is_one(self):
        d = torch.tensor([[0.3]], dtype=torch.float64)
        assert float(cxloss.contextual_similarity(d)) == 1.0

    def test_all_equal_distances_uniform(self):
        for m in (2, 4, 7):
            d = torch.full((5, m), 0.8, dtype=torch.float64)
            assert abs(float(cxloss.contextual_similarity(d)) - 1.0 / m) < 1e-9

    def test_identical_well_separated_sets(self):
        # frozen instance: 4 vectors in 16 dims, well separated
        x = random_set(11, n=4, dim=16, scale=3.0)
        cx = float(cxloss.contextual_similarity(cxloss.distance_matrix(x, x)))
        assert cx >= 0.99

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_scalar_oracle(self, seed):
        x = random_set(seed * 2, n=5, dim=6)
        y = random_set(seed * 2 + 1, n=7, dim=6)
        got = float(
            cxloss.contextual_similarity(cxloss.distance_matrix(x, y))
        )
        want = oracle_similarity(x.tolist(), y.tolist())
        assert abs(got - want) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        n=st.integers(1, 10),
        m=st.integers(1, 10),
        dim=st.integers(2, 12),
    )
    def test_bounds(self, seed, n, m, dim):
        rng = np.random.default_rng(seed)
        x = torch.from_numpy(rng.standard_normal((n, dim)))
        y = torch.from_numpy(rng.standard_normal((m, dim)))
        cx = float(cxloss.contextual_similarity(cxloss.distance_matrix(x, y)))
        assert 0.0 < cx <= 1.0 + 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        x = random_set(3, n=6)
        y = random_set(4, n=9)
        base = float(cxloss.contextual_similarity(cxloss.distance_matrix(x, y)))
        for _ in range(20):
            xp = x[torch.from_numpy(rng.permutation(len(x)))]
            yp = y[torch.from_numpy(rng.permutation(len(y)))]
            got = float(cxloss.contextual_similarity(cxloss.distance_matrix(xp, yp)))
            assert abs(got - base) < 1e-9


class TestCxLoss:
    def setup_method(self):
        self.cfg = cxloss.LossConfig()

    def test_identical_sets_near_zero(self):
        x = random_set(11, n=4, dim=16, scale=3.0)
        assert float(cxloss.cx_loss(x, x, self.cfg)) <= 0.02

    def test_uniform_distance_loss_log_m(self):
        d = torch.full((4, 4), 0.8, dtype=torch.float64)
        loss = -math.log(float(cxloss.contextual_similarity(d)))
        assert abs(loss - math.log(4)) < 1e-9

    def test_nonnegative(self):
        for seed in range(10):
            loss = float(cxloss.cx_loss(random_set(seed), random_set(seed + 50), self.cfg))
            assert loss >= 0.0

    def test_reference_permutation_invariant(self):
        g = random_set(0, n=5)
        ref = random_set(1, n=8)
        base = float(cxloss.cx_loss(g, ref, self.cfg))
        perm = ref[torch.from_numpy(np.random.default_rng(2).permutation(8))]
        assert abs(float(cxloss.cx_loss(g, perm, self.cfg)) - base) < 1e-9

    def test_monotonicity_smoke(self):
        for seed in range(5):
            g = random_set(seed, n=6, scale=2.0)
            ref = random_set(seed + 100, n=6, scale=2.0)
            worse = float(cxloss.cx_loss(g, ref, self.cfg))
            better = float(cxloss.cx_loss(ref.clone(), ref, self.cfg))
            assert better < worse

    def test_gradient_matches_finite_differences(self):
        cfg = self.cfg
        rng = np.random.default_rng(123)
        for _ in range(5):
            g0 = torch.from_numpy(rng.standard_normal((8, 16)))
            ref = torch.from_numpy(rng.standard_normal((8, 16)))
            g = g0.clone().requires_grad_(True)
            cxloss.cx_loss(g, ref, cfg).backward()
            analytic = g.grad.numpy()
            step = 1e-4
            for _ in range(6):
                i, j = int(rng.integers(8)), int(rng.integers(16))
                plus = g0.clone()
                plus[i, j] += step
                minus = g0.clone()
                minus[i, j] -= step
                fd = (
                    float(cxloss.cx_loss(plus, ref, cfg))
                    - float(cxloss.cx_loss(minus, ref, cfg))
                ) / (2 * step)
                denom = max(abs(analytic[i, j]), abs(fd), 1e-10)
                assert abs(fd - analytic[i, j]) / denom < 1e-3


class TestFlattenAndSubsample:
    def grid_stack(self, h, w, c=8, seed=0):
        rng = np.random.default_rng(seed)
        return FeatureStack({"layer": torch.from_numpy(rng.random((c, h, w)))})

    def test_under_cap_keeps_all(self):
        feats = cxloss.flatten_and_subsample(self.grid_stack(16, 16), "layer", 1024, 0)
        assert feats.shape == (256, 8)

    def test_over_cap_samples_exactly(self):
        feats = cxloss.flatten_and_subsample(self.grid_stack(32, 32), "layer", 1024, 0)
        assert feats.shape == (1024, 8)

    def test_seed_determinism(self):
        stack = self.grid_stack(32, 32)
        a = cxloss.flatten_and_subsample(stack, "layer", 100, 7)
        b = cxloss.flatten_and_subsample(stack, "layer", 100, 7)
        assert torch.equal(a, b)

    def test_different_seeds_differ(self):
        stack = self.grid_stack(32, 32)
        a = cxloss.flatten_and_subsample(stack, "layer", 100, 7)
        b = cxloss.flatten_and_subsample(stack, "layer", 100, 8)
        assert not torch.equal(a, b)


class TestTotalLoss:
    def test_same_image_all_roles_near_zero(self, frozen_net):
        img = smooth_image(5, 3, size=64)
        total, breakdown = cxloss.total_loss(img, img, img, frozen_net, cxloss.LossConfig())
        assert float(total) <= 0.05
        assert breakdown["total"] == pytest.approx(float(total))

    def test_lambda1_zero_leaves_target_term(self, frozen_net):
        s = smooth_image(1, 3, size=64)
        t = smooth_image(2, 3, size=64)
        g = smooth_image(3, 3, size=64)
        cfg = cxloss.LossConfig(lambda1=0.0, lambda2=1.0)
        total, breakdown = cxloss.total_loss(s, t, g, frozen_net, cfg)
        assert float(total) == pytest.approx(breakdown["target"], rel=1e-9)

    def test_default_weights(self):
        cfg = cxloss.LossConfig()
        assert cfg.lambda1 == 0.01
        assert cfg.lambda2 == 0.99
        assert cfg.source_layers == ("conv4_2",)
        assert cfg.target_layers == ("conv3_2", "conv4_2")

    def test_differentiable_wrt_generated(self, frozen_net):
        s = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(0))
        t = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(1))
        g = torch.rand(3, 32, 32, generator=torch.Generator().manual_seed(2))
        g.requires_grad_(True)
        total, _ = cxloss.total_loss(s, t, g, frozen_net, cxloss.LossConfig())
        total.backward()
        assert float(g.grad.abs().sum()) > 0
