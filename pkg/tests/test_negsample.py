import math
import time

import numpy as np
import pytest

from timeaware_cbow import _kernels
from timeaware_cbow.negsample import alias_tables, build_sampler, draw, draw_many


def exact(counts):
    w = [c**0.75 for c in counts]
    s = sum(w)
    return [x / s for x in w]


def test_two_code_probabilities():
    s = build_sampler([8, 1])
    assert 8**0.75 == pytest.approx(4.75683, abs=1e-5)
    np.testing.assert_allclose(s.probabilities, [0.82629, 0.17371], atol=1e-5)
    np.testing.assert_allclose(s.implied_probabilities(), exact([8, 1]), rtol=1e-12)


def test_symmetric_counts():
    np.testing.assert_allclose(build_sampler([5, 5]).implied_probabilities(), [0.5, 0.5])


def test_single_code():
    s = build_sampler([7])
    assert s.implied_probabilities()[0] == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    assert draw(s, rng) == 0


def test_alias_tables_match_weights_exactly():
    rng = np.random.default_rng(5)
    for _ in range(20):
        counts = rng.integers(1, 10_000, size=rng.integers(1, 300))
        s = build_sampler(counts)
        np.testing.assert_allclose(s.implied_probabilities(), exact(counts.tolist()), rtol=1e-9, atol=1e-15)


def test_alias_tables_reject_bad_weights():
    with pytest.raises(ValueError):
        alias_tables([])
    with pytest.raises(ValueError):
        alias_tables([0.0, 0.0])
    with pytest.raises(ValueError):
        alias_tables([1.0, -1.0])


def test_exclusion_forces_other_code():
    s = build_sampler([8, 1])
    rng = np.random.default_rng(1)
    assert all(draw(s, rng, exclude=0) == 1 for _ in range(200))


def test_exclusion_with_single_code_errors():
    with pytest.raises(ValueError):
        draw(build_sampler([3]), np.random.default_rng(0), exclude=0)


def test_exclusion_is_conditional_distribution():
    counts = [10, 20, 30, 40]
    s = build_sampler(counts)
    rng = np.random.default_rng(2)
    n = 40_000
    got = np.bincount([draw(s, rng, exclude=3) for _ in range(n)], minlength=4) / n
    p = np.array(exact(counts))
    p[3] = 0
    p /= p.sum()
    assert got[3] == 0
    np.testing.assert_allclose(got, p, atol=0.01)


def test_empirical_two_code_frequency():
    s = build_sampler([8, 1])
    draws = draw_many(s, np.random.default_rng(3), 10**6)
    assert abs((draws == 0).mean() - 0.82629) < 0.005


def test_same_seed_same_draws():
    s = build_sampler([3, 4, 5, 6])
    a = [draw(s, np.random.default_rng(9)) for _ in range(1)] + list(draw_many(s, np.random.default_rng(9), 50))
    b = [draw(s, np.random.default_rng(9)) for _ in range(1)] + list(draw_many(s, np.random.default_rng(9), 50))
    assert a == b


def test_kernel_alias_draws_match_distribution():
    counts = np.arange(1, 101)
    s = build_sampler(counts)
    state = np.array([12345], dtype=np.uint64)
    n = 200_000
    got = np.bincount([_kernels.alias_draw(s.prob, s.alias, state) for _ in range(n)], minlength=100) / n
    assert 0.5 * np.abs(got - s.probabilities).sum() < 0.02


def test_draw_time_linear_in_n():
    s = build_sampler(np.arange(1, 10_001))
    rng = np.random.default_rng(0)
    draw_many(s, rng, 1000)

    def best(n):
        times = []
        for _ in range(5):
            t = time.perf_counter()
            draw_many(s, rng, n)
            times.append(time.perf_counter() - t)
        return min(times)

    t1, t4 = best(250_000), best(1_000_000)
    # 4x the draws: between 2x and 8x the time (factor-of-2 slack around linear)
    assert 2.0 <= t4 / t1 <= 8.0
    assert math.isfinite(t4)
