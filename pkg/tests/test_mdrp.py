import logging
import time

import numpy as np
import pytest
import scipy.linalg

from tests.context import (
    BudgetExceeded,
    DimensionMismatch,
    NotStable,
    NotSymmetric,
    mdrp,
    spectral_abscissa,
)
from tests.fake_systems import FakeSystemGenerator

# non-normal 2 x 2 example: sigma_min is far below -alpha
JORDANISH = np.array([[-1.0, 10.0], [0.0, -1.0]])


def test_upper_bound_value():
    """Verify the upper bound of the non-normal example is its smallest singular value."""
    assert mdrp.upper_bound(JORDANISH) == pytest.approx(0.0990, abs=1e-4)
    assert mdrp.upper_bound(-np.eye(3)) == pytest.approx(1.0)


def test_destabilizer_witnesses():
    """Verify both constructed destabilizers reach the imaginary axis on random stable M."""
    rng = np.random.default_rng(30)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        M = FakeSystemGenerator.stable_matrix(rng, n, margin=float(rng.uniform(0.1, 2.0)))

        shifted = M + mdrp.identity_destabilizer(M)
        assert abs(spectral_abscissa(shifted)) <= 1e-10

        singular = M + mdrp.singular_destabilizer(M)
        assert scipy.linalg.svdvals(singular)[-1] <= 1e-8


def test_destabilizer_sizes():
    """Verify the destabilizer norms are the two terms of the upper bound."""
    rng = np.random.default_rng(31)
    M = FakeSystemGenerator.stable_matrix(rng, 4)
    alpha = spectral_abscissa(M)

    assert np.linalg.norm(mdrp.identity_destabilizer(M), "fro") == pytest.approx(-2 * alpha)
    assert np.linalg.norm(mdrp.singular_destabilizer(M), "fro") == pytest.approx(
        scipy.linalg.svdvals(M)[-1]
    )


def test_symmetric_exact():
    """Verify the exact symmetric MDRP is -alpha and the preconditions are enforced."""
    M = np.diag([-0.5, -2.0, -3.0])
    assert mdrp.symmetric_exact(M) == pytest.approx(0.5)
    assert mdrp.is_symmetric(M)

    with pytest.raises(NotSymmetric):
        mdrp.symmetric_exact(JORDANISH)
    with pytest.raises(NotStable):
        mdrp.symmetric_exact(np.diag([0.5, -1.0]))
    with pytest.raises(DimensionMismatch):
        mdrp.symmetric_exact(np.zeros((2, 3)))


def test_upper_bound_needs_stable():
    """Verify an unstable or marginal matrix is refused."""
    with pytest.raises(NotStable):
        mdrp.upper_bound(np.zeros((2, 2)))


def test_estimate_symmetric():
    """Verify the bisection estimate lands within 5% of the exact symmetric MDRP."""
    rng = np.random.default_rng(32)
    for _ in range(3):
        n = int(rng.integers(2, 4))
        M = FakeSystemGenerator.symmetric_stable_matrix(rng, n)
        exact = mdrp.symmetric_exact(M)

        result = mdrp.estimate(M, tol=1e-3 * exact, seed=1, inner_starts=4)
        assert result.method == mdrp.MdrpMethod.BISECTION
        assert abs(result.beta - exact) <= 0.05 * exact
        assert result.beta <= result.upper


def test_estimate_symmetric_batch():
    """Verify 20 symmetric matrices up to n = 6 are estimated within 5% in under five minutes."""
    rng = np.random.default_rng(33)
    start = time.perf_counter()
    for _ in range(20):
        n = int(rng.integers(2, 7))
        M = FakeSystemGenerator.symmetric_stable_matrix(rng, n)
        exact = mdrp.symmetric_exact(M)

        result = mdrp.estimate(M, tol=1e-3, seed=1, inner_starts=20)
        assert abs(result.beta - exact) <= 0.05 * exact

    assert time.perf_counter() - start < 300


def test_inner_search_stalls(caplog):
    """Verify a restart with nothing to find stops well before its evaluation cap."""
    M = np.diag([-1.0, -2.0, -3.0])
    restart = mdrp._Restart(
        M=M,
        beta=0.5,
        start=np.ones(9) / 3.0,
        index=0,
        maxfev=100000,
        threshold=-1e-9,
        stall=50,
        stall_atol=1e-6,
    )

    with caplog.at_level(logging.DEBUG):
        alpha, v = mdrp._local_search(restart)

    assert v is None
    assert -1.0 < alpha <= -0.5 + 1e-6
    assert "stalled" in caplog.text


def test_estimate_non_normal():
    """Verify the estimate stays below the upper bound and any witness destabilizes."""
    result = mdrp.estimate(JORDANISH, tol=1e-3, seed=0, inner_starts=4)

    assert 0 < result.beta <= result.upper
    assert result.iterations > 0
    if result.witness is not None:
        assert spectral_abscissa(JORDANISH + result.witness) >= -1e-9
        assert np.linalg.norm(result.witness, "fro") >= result.beta


def test_estimate_deterministic():
    """Verify a fixed seed gives the same estimate across runs and thread counts."""
    first = mdrp.estimate(JORDANISH, tol=1e-2, seed=3, inner_starts=4, threads=1)
    second = mdrp.estimate(JORDANISH, tol=1e-2, seed=3, inner_starts=4, threads=1)
    threaded = mdrp.estimate(JORDANISH, tol=1e-2, seed=3, inner_starts=4, threads=4)

    assert first.as_dict() == second.as_dict()
    assert first.as_dict() == threaded.as_dict()


def test_estimate_upper_bound_only():
    """Verify no inner starts reports the upper bound."""
    result = mdrp.estimate(JORDANISH, inner_starts=0)
    assert result.method == mdrp.MdrpMethod.UPPER_BOUND_ONLY
    assert result.beta == result.upper
    assert result.as_dict()["method"] == "upper_bound_only"


def test_estimate_budget():
    """Verify a too small iteration budget raises BudgetExceeded."""
    with pytest.raises(BudgetExceeded):
        mdrp.estimate(-np.eye(2), tol=1e-6, inner_starts=1, max_iterations=1)


def test_nominal_mdrp_shortcut():
    """Verify a symmetric closed loop gets the exact value unless bisection is forced."""
    M = np.diag([-0.5, -2.0])
    exact = mdrp.nominal_mdrp(M)
    assert exact.method == mdrp.MdrpMethod.SYMMETRIC_EXACT
    assert exact.beta == pytest.approx(0.5)

    forced = mdrp.nominal_mdrp(M, force_bisection=True, tol=1e-2, inner_starts=2)
    assert forced.method == mdrp.MdrpMethod.BISECTION
    assert forced.beta == pytest.approx(0.5, rel=0.05)


def test_streams_are_keyed():
    """Verify generator streams depend only on their (seed, step, restart) key."""
    a = mdrp.stream(1, 2, 3).standard_normal(4)
    b = mdrp.stream(1, 2, 3).standard_normal(4)
    c = mdrp.stream(1, 2, 4).standard_normal(4)

    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
