import os  # noqa: F401
import sys  # noqa: F401
import json
from typing import Generator, Tuple

import numpy as np

from .context import GainMatrix, Provenance, StateSpaceModel, spectral_abscissa


class FakeSystemGenerator:
    """Helper class to generate random plants, gains and model files."""

    # AC3 benchmark gains, as printed with four decimals
    ac3_F_nominal = np.array([[0.0, 0.0, 0.0, -0.5057], [0.7521, 0.0, -3.0713, 1.1408]])
    ac3_G_star = np.array(
        [[0.0745, -0.2034, 0.0214, -0.0939], [0.0115, -0.0302, 0.0018, -0.0169]]
    )
    ac3_F_updated = np.array(
        [[0.0745, -0.2034, 0.0214, -0.5996], [0.7636, -0.0302, -3.0695, 1.1239]]
    )

    def conditioned(rng, rows: int, cols: int, low: float = 0.5, high: float = 2.0) -> np.ndarray:
        """Random rows x cols matrix with singular values drawn from [low, high]."""
        k = min(rows, cols)
        U, _ = np.linalg.qr(rng.standard_normal((rows, k)))
        V, _ = np.linalg.qr(rng.standard_normal((cols, k)))
        return U @ np.diag(rng.uniform(low, high, k)) @ V.T

    def pair(rng, n: int, m: int, p: int) -> Tuple[np.ndarray, np.ndarray]:
        """Full-rank, well conditioned B (n x m) and C (p x n)."""
        B = FakeSystemGenerator.conditioned(rng, n, m)
        C = FakeSystemGenerator.conditioned(rng, p, n)
        return B, C

    def dims(rng, max_n: int = 6, min_n: int = 1) -> Tuple[int, int, int]:
        n = int(rng.integers(min_n, max_n + 1))
        m = int(rng.integers(1, n + 1))
        p = int(rng.integers(1, n + 1))
        return n, m, p

    def stable_matrix(rng, n: int, margin: float = 0.5) -> np.ndarray:
        """Random n x n matrix shifted so that its spectral abscissa is -margin."""
        M = rng.standard_normal((n, n))
        return M - (spectral_abscissa(M) + margin) * np.eye(n)

    def symmetric_stable_matrix(rng, n: int, margin: float = 0.5) -> np.ndarray:
        Q = rng.standard_normal((n, n))
        return -(Q @ Q.T / n + margin * np.eye(n))

    def stable_system(
        rng, n: int = 4, m: int = 2, p: int = 2, margin: float = 0.5
    ) -> Tuple[StateSpaceModel, GainMatrix]:
        """Random plant and a nonzero gain with spectral abscissa of A + B F C at -margin."""
        B, C = FakeSystemGenerator.pair(rng, n, m, p)
        F = 0.3 * rng.standard_normal((m, p))
        A0 = rng.standard_normal((n, n))
        shift = spectral_abscissa(A0 + B @ F @ C) + margin
        model = StateSpaceModel(A=A0 - shift * np.eye(n), B=B, C=C)
        return model, GainMatrix(F=F, provenance=Provenance.NOMINAL)

    def symmetric_system(
        rng, n: int = 4, m: int = 2, p: int = 2, margin: float = 0.5
    ) -> Tuple[StateSpaceModel, GainMatrix]:
        """Random plant whose closed loop A + B F C is symmetric and Hurwitz."""
        B, C = FakeSystemGenerator.pair(rng, n, m, p)
        F = 0.3 * rng.standard_normal((m, p))
        S = FakeSystemGenerator.symmetric_stable_matrix(rng, n, margin)
        model = StateSpaceModel(A=S - B @ F @ C, B=B, C=C)
        return model, GainMatrix(F=F, provenance=Provenance.NOMINAL)

    def symmetric_systems(
        seed: int = 7, count: int = 3
    ) -> Generator[Tuple[StateSpaceModel, GainMatrix], None, None]:
        rng = np.random.default_rng(seed)
        for _ in range(count):
            yield FakeSystemGenerator.symmetric_system(rng)

    def model_file(path, model: StateSpaceModel, F=None, delta=None, rho=None) -> str:
        """Writes a model JSON file and returns its path as a string."""
        data = {"A": model.A.tolist(), "B": model.B.tolist(), "C": model.C.tolist()}
        if F is not None:
            data["F_nominal"] = np.asarray(F).tolist()
        if delta is not None:
            data["Delta"] = np.asarray(delta).tolist()
        if rho is not None:
            data["rho"] = rho

        with open(path, "w") as f:
            json.dump(data, f)
        return str(path)
