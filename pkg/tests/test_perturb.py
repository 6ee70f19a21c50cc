import math

import numpy as np
import pytest

from tests.context import (
    FACTORS,
    DegenerateCoverage,
    DimensionMismatch,
    DomainError,
    NormExceedsBound,
    Perturbation,
    PerturbationCoords,
    ZeroPerturbation,
    analyze,
    closed_form_cost,
    optimal_update,
    residual_cost,
    synthesize,
)
from tests.fake_systems import FakeSystemGenerator


@pytest.fixture(autouse=True)
def fresh_factors():
    FACTORS.flush()
    yield
    FACTORS.flush()


def _random_case(rng, max_n: int = 8):
    n = int(rng.integers(2, max_n + 1))
    # keep mp < n^2 so every theta is reachable
    m = int(rng.integers(1, n))
    p = int(rng.integers(1, n + 1))
    B, C = FakeSystemGenerator.pair(rng, n, m, p)
    coords = PerturbationCoords.random(
        n,
        m,
        p,
        rho=float(rng.uniform(0.1, 5.0)),
        tau=float(rng.uniform(0.01, 1.0)),
        theta=float(rng.uniform(0.0, 1.0)),
        rng=rng,
    )
    return B, C, coords


def test_closed_form_cost_value():
    """Verify the closed form cost at rho = 2, tau = theta = 0.45."""
    assert closed_form_cost(2.0, 0.45, 0.45) == pytest.approx(0.71161, abs=1e-5)
    assert closed_form_cost(3.0, 1.0, 1.0) == pytest.approx(9.0)
    assert closed_form_cost(3.0, 0.7, 0.0) == 0.0


def test_closed_form_matches_residual():
    """Verify closed_form_cost equals residual_cost of the synthesized Delta on random cases."""
    rng = np.random.default_rng(20)
    for _ in range(500):
        B, C, coords = _random_case(rng)
        delta = synthesize(B, C, coords)

        expected = closed_form_cost(coords.rho, coords.tau, coords.theta)
        cost = residual_cost(B, C, delta)
        assert abs(cost - expected) <= 1e-9 * max(1.0, expected)


def test_synthesize_norm():
    """Verify ||Delta||_F = rho sin(pi tau / 2) and the bound rho is carried over."""
    rng = np.random.default_rng(21)
    B, C, coords = _random_case(rng)
    delta = synthesize(B, C, coords)

    assert delta.fro_norm == pytest.approx(coords.rho * math.sin(math.pi * coords.tau / 2))
    assert delta.rho == coords.rho


def test_theta_zero_is_cancellable():
    """Verify theta = 0 gives a Delta the update removes completely."""
    rng = np.random.default_rng(22)
    B, C = FakeSystemGenerator.pair(rng, 5, 2, 3)
    coords = PerturbationCoords.random(5, 2, 3, rho=1.0, tau=0.8, theta=0.0, rng=rng)
    delta = synthesize(B, C, coords)

    G = optimal_update(B, C, delta)
    assert np.linalg.norm(B @ G @ C + delta.delta) < 1e-12


def test_analyze_inverts_synthesize():
    """Verify analyze recovers the coordinates used by synthesize."""
    rng = np.random.default_rng(23)
    for _ in range(50):
        B, C, coords = _random_case(rng, max_n=5)
        if not 0.05 < coords.theta < 0.95:
            continue

        recovered = analyze(synthesize(B, C, coords), B, C)
        assert recovered.rho == pytest.approx(coords.rho)
        assert recovered.tau == pytest.approx(coords.tau, abs=1e-9)
        assert recovered.theta == pytest.approx(coords.theta, abs=1e-9)
        np.testing.assert_allclose(recovered.phi_c, coords.phi_c, atol=1e-8)
        np.testing.assert_allclose(recovered.phi_s, coords.phi_s, atol=1e-8)


def test_analyze_empty_block():
    """Verify a fully cancellable Delta has theta = 0 and a canonical phi_s."""
    rng = np.random.default_rng(24)
    B, C = FakeSystemGenerator.pair(rng, 3, 1, 2)
    delta = Perturbation(delta=-B @ rng.standard_normal((1, 2)) @ C, rho=100.0)

    coords = analyze(delta, B, C)
    assert coords.theta == pytest.approx(0.0, abs=1e-9)
    assert coords.phi_s[0] == 1.0
    assert np.linalg.norm(coords.phi_s) == pytest.approx(1.0)


def test_analyze_errors():
    """Verify analyze refuses a zero Delta."""
    B, C = np.eye(3)[:, :1], np.eye(3)[:2]
    with pytest.raises(ZeroPerturbation):
        analyze(Perturbation(delta=np.zeros((3, 3))), B, C)


def test_degenerate_coverage():
    """Verify theta > 0 is refused when mp = n^2."""
    rng = np.random.default_rng(25)
    coords = PerturbationCoords.random(2, 2, 2, rho=1.0, tau=0.5, theta=0.5, rng=rng)
    with pytest.raises(DegenerateCoverage):
        synthesize(np.eye(2), np.eye(2), coords)

    coords = PerturbationCoords.random(2, 2, 2, rho=1.0, tau=0.5, theta=0.0, rng=rng)
    delta = synthesize(np.eye(2), np.eye(2), coords)
    assert residual_cost(np.eye(2), np.eye(2), delta) == pytest.approx(0.0, abs=1e-24)


def test_coords_validation():
    """Verify out of range coordinates and non-unit directions are refused."""
    phi_c = np.array([1.0, 0.0])
    phi_s = np.array([0.0, 1.0])
    PerturbationCoords(rho=1.0, tau=1.0, theta=1.0, phi_c=phi_c, phi_s=phi_s)

    with pytest.raises(DomainError):
        PerturbationCoords(rho=1.0, tau=0.0, theta=0.5, phi_c=phi_c, phi_s=phi_s)
    with pytest.raises(DomainError):
        PerturbationCoords(rho=1.0, tau=0.5, theta=1.5, phi_c=phi_c, phi_s=phi_s)
    with pytest.raises(DomainError):
        PerturbationCoords(rho=0.0, tau=0.5, theta=0.5, phi_c=phi_c, phi_s=phi_s)
    with pytest.raises(DomainError):
        PerturbationCoords(rho=1.0, tau=0.5, theta=0.5, phi_c=2 * phi_c, phi_s=phi_s)

    coords = PerturbationCoords(rho=1.0, tau=0.5, theta=0.5, phi_c=phi_c, phi_s=phi_s)
    with pytest.raises(DimensionMismatch):
        synthesize(np.eye(3)[:, :1], np.eye(3)[:1], coords)


def test_norm_exceeds_bound():
    """Verify a perturbation cannot be built above its bound."""
    with pytest.raises(NormExceedsBound):
        Perturbation(delta=2 * np.eye(2), rho=1.0)
