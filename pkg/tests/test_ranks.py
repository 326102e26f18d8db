import numpy as np
import pytest

from lorank.ranks import RankPolicy, escalate, initial_rank, rank_cap, should_escalate

# (name, n, m, round(2 ln m), round(sqrt(2m))) for the benchmark instances
# whose rank columns are published.
RANK_TABLE = [
    ("G60", 7000, 7000, 18, 118),
    ("MC_3000", 3000, 930328, 27, 1364),
    ("G40_mb", 2001, 2001, 15, 63),
    ("H3O", 3163, 2964, 16, 77),
    ("p_auss2_3.0", 9116, 9115, 18, 135),
    ("qap7", 50, 358, 12, 27),
    ("qap10", 101, 1021, 14, 45),
    ("theta12", 601, 90020, 23, 424),
]


class TestInitialRank:
    @pytest.mark.parametrize("name,n,m,log_rank,sqrt_rank", RANK_TABLE)
    def test_published_log_ranks(self, name, n, m, log_rank, sqrt_rank):
        assert initial_rank(n, m, "log_small") == log_rank

    @pytest.mark.parametrize("name,n,m,log_rank,sqrt_rank", RANK_TABLE)
    def test_published_sqrt_ranks(self, name, n, m, log_rank, sqrt_rank):
        assert initial_rank(n, m, "sqrt2m") == sqrt_rank

    def test_log_large_halves(self):
        assert initial_rank(10000, 930328, "log_large") == 14  # round(ln m)

    def test_degenerate_clamp(self):
        assert initial_rank(5, 1, "log_small") == 1
        assert initial_rank(5, 1, "log_large") == 1

    def test_clamped_to_n(self):
        assert initial_rank(3, 10**6, "sqrt2m") == 3

    def test_fixed_mode(self):
        assert initial_rank(100, 50, 7) == 7
        assert initial_rank(4, 50, 7) == 4   # still capped by n

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            initial_rank(10, 10, "bogus")


class TestShouldEscalate:
    def test_boundary(self):
        policy = RankPolicy(difficulty_threshold=200)
        assert not should_escalate(0, policy)
        assert not should_escalate(199, policy)
        assert should_escalate(200, policy)
        assert should_escalate(201, policy)


class TestEscalate:
    def test_growth_12_to_18(self, rng):
        policy = RankPolicy()
        R = rng.standard_normal((50, 12))
        out = escalate(R, policy, cap=27, rng=rng)
        assert out.shape == (50, 18)
        np.testing.assert_array_equal(out[:, :12], R)

    def test_trajectory_hits_cap_45(self, rng):
        # 14 -> 21 -> 32 -> 45 (capped)
        policy = RankPolicy()
        R = rng.standard_normal((101, 14))
        sizes = []
        for _ in range(4):
            R = escalate(R, policy, cap=45, rng=rng)
            sizes.append(R.shape[1])
        assert sizes == [21, 32, 45, 45]

    def test_at_cap_is_noop(self, rng, caplog):
        policy = RankPolicy()
        R = rng.standard_normal((10, 5))
        out = escalate(R, policy, cap=5, rng=rng)
        assert out is R

    def test_never_shrinks_never_exceeds_cap(self, rng):
        policy = RankPolicy()
        for r in (1, 3, 9, 20):
            R = rng.standard_normal((40, r))
            out = escalate(R, policy, cap=21, rng=rng)
            assert r <= out.shape[1] <= 21

    def test_padding_barely_moves_gram_matrix(self, rng):
        policy = RankPolicy()
        R = rng.standard_normal((30, 6))
        out = escalate(R, policy, cap=20, rng=rng)
        drift = np.linalg.norm(out @ out.T - R @ R.T)
        assert drift <= 1e-2 * (1.0 + np.linalg.norm(R @ R.T))


def test_rank_cap():
    assert rank_cap(101, 1021) == 45
    assert rank_cap(20, 1021) == 20
    assert rank_cap(5, 1) == 1
