import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("radialmc", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("radialmc")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def trig_poly(theta, coeffs):
    """sum_k a_k cos(k theta) + b_k sin(k theta), k = 1..len(coeffs)."""
    out = np.zeros_like(theta)
    for k, (a, b) in enumerate(coeffs, start=1):
        out += a * np.cos(k * theta) + b * np.sin(k * theta)
    return out


def random_trig(rng, theta, degree=5, amplitude=0.3):
    coeffs = rng.uniform(-1.0, 1.0, size=(degree, 2))
    u = trig_poly(theta, coeffs)
    return amplitude * u / np.abs(u).max()
