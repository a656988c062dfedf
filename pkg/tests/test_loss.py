import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from rfcontrast.loss import (ContrastiveBatch, grad_check, snn_loss,
                             snn_loss_reference, symmetrized_loss)

# hand-derived: N=2, y=(0,1), q_i=k_i orthogonal unit vectors, tau=0.2
# per-query fraction 1/(1+e^-10), loss = log(1+e^-10)
ORTHOGONAL_PAIR_LOSS = 4.5398899216870535e-05


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_batch(rng, n=None, d=None, tau=0.2):
    n = n or int(rng.integers(1, 9))
    d = d or int(rng.integers(2, 17))
    return ContrastiveBatch(
        q=torch.from_numpy(unit_rows(rng, n, d)),
        k=torch.from_numpy(unit_rows(rng, n, d)),
        y=torch.from_numpy(rng.integers(0, 3, n)),
        tau=tau)


class TestSnnLoss:
    def test_all_same_y_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        batch = ContrastiveBatch(q=torch.from_numpy(unit_rows(rng, 6, 8)),
                                 k=torch.from_numpy(unit_rows(rng, 6, 8)),
                                 y=torch.zeros(6, dtype=torch.long))
        assert snn_loss(batch).item() == 0.0

    def test_orthogonal_pair_value(self):
        q = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        batch = ContrastiveBatch(q=q, k=q.clone(), y=torch.tensor([0, 1]), tau=0.2)
        assert abs(snn_loss(batch).item() - ORTHOGONAL_PAIR_LOSS) < 1e-8

    def test_matches_reference_oracle_seeded(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            batch = random_batch(rng)
            fast = snn_loss(batch).item()
            ref = snn_loss_reference(batch.q.numpy(), batch.k.numpy(), batch.y.numpy())
            assert abs(fast - ref) <= 1e-6 * max(abs(ref), 1e-12)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_matches_reference_oracle_property(self, seed):
        rng = np.random.default_rng(seed)
        batch = random_batch(rng)
        fast = snn_loss(batch).item()
        ref = snn_loss_reference(batch.q.numpy(), batch.k.numpy(), batch.y.numpy())
        assert abs(fast - ref) <= 1e-6 * max(abs(ref), 1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            assert snn_loss(random_batch(rng)).item() >= 0.0

    def test_monotone_in_positive_key_distance(self):
        # pulling a same-transmission key (j != i) away from q_i cannot lower
        # the loss; k[1] moves on a circle that keeps its distance to every
        # other query fixed, so only the (q[0], k[1]) distance grows
        q = torch.eye(4, dtype=torch.float64)[:3]
        y = torch.tensor([0, 0, 1])
        prev = None
        for theta in np.linspace(0.1, math.pi - 0.1, 8):
            k = q.clone()
            k[1] = torch.tensor([math.cos(theta), 0.0, 0.0, math.sin(theta)],
                                dtype=torch.float64)
            val = snn_loss(ContrastiveBatch(q, k, y, 0.2)).item()
            if prev is not None:
                assert val >= prev - 1e-12
            prev = val

    def test_tau_validation(self):
        rng = np.random.default_rng(0)
        batch = random_batch(rng)
        with pytest.raises(ValueError):
            snn_loss(ContrastiveBatch(batch.q, batch.k, batch.y, tau=0.0))
        with pytest.raises(ValueError):
            snn_loss(ContrastiveBatch(batch.q, batch.k, batch.y, tau=-1.0))

    def test_nan_rejected(self):
        q = torch.full((2, 4), math.nan, dtype=torch.float64)
        with pytest.raises(ValueError, match="NaN"):
            snn_loss(ContrastiveBatch(q, q, torch.tensor([0, 1])))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            snn_loss(ContrastiveBatch(torch.ones(2, 4), torch.ones(3, 4),
                                      torch.tensor([0, 1])))


class TestSymmetrized:
    def test_collapse_to_four_tau(self):
        rng = np.random.default_rng(3)
        q = torch.from_numpy(unit_rows(rng, 5, 8))
        k = torch.from_numpy(unit_rows(rng, 5, 8))
        y = torch.tensor([0, 0, 1, 1, 2])
        full = symmetrized_loss(q, k, q, k, y, 0.2).item()
        single = 4 * 0.2 * snn_loss(ContrastiveBatch(q, k, y, 0.2)).item()
        assert abs(full - single) < 1e-9

    def test_all_same_y_zero(self):
        rng = np.random.default_rng(4)
        mats = [torch.from_numpy(unit_rows(rng, 4, 6)) for _ in range(4)]
        y = torch.zeros(4, dtype=torch.long)
        assert symmetrized_loss(*mats, y, 0.2).item() == 0.0

    def test_swapping_view_pairs_commutes(self):
        rng = np.random.default_rng(5)
        q_w, k_s, q_s, k_w = [torch.from_numpy(unit_rows(rng, 4, 6)) for _ in range(4)]
        y = torch.tensor([0, 1, 0, 1])
        a = symmetrized_loss(q_w, k_s, q_s, k_w, y, 0.2).item()
        b = symmetrized_loss(q_s, k_w, q_w, k_s, y, 0.2).item()
        assert a == b

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            symmetrized_loss(torch.ones(2, 4), torch.ones(2, 4), torch.ones(2, 5),
                             torch.ones(2, 4), torch.tensor([0, 1]), 0.2)


class TestGradCheck:
    def test_random_small_batches(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            err = grad_check(snn_loss, random_batch(rng))
            assert err < 1e-4

    def test_degenerate_batch_no_nan(self):
        rng = np.random.default_rng(10)
        q = torch.from_numpy(unit_rows(rng, 4, 8))
        batch = ContrastiveBatch(q, q.clone(), torch.zeros(4, dtype=torch.long))
        err = grad_check(snn_loss, batch)
        assert not math.isnan(err)
        assert err < 1e-4

    def test_epsilon_halving_stays_bounded(self):
        rng = np.random.default_rng(12)
        batch = random_batch(rng, n=5, d=8)
        e1 = grad_check(snn_loss, batch, epsilon=1e-4)
        e2 = grad_check(snn_loss, batch, epsilon=5e-5)
        assert e2 <= 4 * e1 + 1e-10
