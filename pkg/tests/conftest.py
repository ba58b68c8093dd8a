import numpy as np
import pytest

from src.models.spectral_models import SpectralField, half_width, shell_mask
from src.services.wick_calculus import make_context
from src.utils.run_store import RunStore


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(rng: np.random.Generator, N: int, scale: float = 1.0) -> SpectralField:
    """Field with independent complex Gaussian coefficients on <k> <= N."""
    K = half_width(N)
    shape = (2 * K + 1, 2 * K + 1)
    coeffs = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return SpectralField.from_coeffs(N, coeffs * shell_mask(K, N))


@pytest.fixture
def field4(rng):
    """Small smooth random field at cutoff 4."""
    return random_field(rng, 4, scale=0.3)


@pytest.fixture
def ctx_r1_n4():
    return make_context(1, 4)


@pytest.fixture
def store(tmp_path):
    return RunStore(tmp_path / "runs")
