import numpy as np
import pytest

from spdtraj.estimation import CovarianceTrajectory
from spdtraj.geometry import sym_exp, symmetrize


def random_sym(rng, n, scale=1.0):
    return symmetrize(rng.normal(size=(n, n))) * scale


def random_tracefree(rng, n, scale=1.0):
    A = random_sym(rng, n, scale)
    return A - np.trace(A) / n * np.eye(n)


def random_unitdet(rng, n, spread=0.6):
    return sym_exp(random_tracefree(rng, n, spread))


def random_spd(rng, n, spread=0.6, logdet_scale=0.5):
    A = random_sym(rng, n, spread)
    return sym_exp(A + logdet_scale * rng.normal() * np.eye(n))


def smooth_unitdet_curve(rng, n, n_modes=2, amp=0.5):
    """Analytic smooth unit-determinant trajectory t -> exp(A(t))."""
    dirs = []
    for _ in range(n_modes):
        D = random_tracefree(rng, n)
        dirs.append(D / np.linalg.norm(D))
    coef = rng.normal(size=n_modes) * amp
    phase = rng.uniform(0, 2 * np.pi, size=n_modes)
    freq = rng.integers(1, 3, size=n_modes)

    def f(t):
        A = sum(
            c * np.sin(np.pi * fq * t + ph) * D
            for c, ph, fq, D in zip(coef, phase, freq, dirs)
        )
        return sym_exp(A)

    return f


def sample_curve(f, T):
    ts = np.linspace(0.0, 1.0, T)
    return CovarianceTrajectory(matrices=np.array([f(t) for t in ts]))


def smooth_warp_fn(rng, strength=0.35, modes=2):
    """Smooth endpoint-preserving diffeomorphism of [0, 1] (sine perturbation)."""
    a = rng.uniform(-1, 1, size=modes)
    a = a / np.sum(np.abs(a) * np.pi * np.arange(1, modes + 1)) * strength

    def g(t):
        t = np.asarray(t, dtype=float)
        return t + sum(a[j - 1] * np.sin(np.pi * j * t) for j in range(1, modes + 1))

    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
