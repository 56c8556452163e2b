"""Shared test helpers: reproducible band-limited random fields."""

import numpy as np
import pytest

from torusma.geometry import GridField, TorusSpec


def trig_poly(spec: TorusSpec, kmax: int, seed: int, num_modes: int = 6) -> GridField:
    """Random real trigonometric polynomial with frequencies bounded by ``kmax``.

    Built directly as a sum of cosine modes, so the field is *exactly*
    band-limited and can be resampled at any resolution without error.
    """
    rng = np.random.default_rng(seed)
    coords = spec.coordinates()
    values = np.zeros(spec.shape)
    for _ in range(num_modes):
        k = rng.integers(-kmax, kmax + 1, size=spec.num_axes)
        if not np.any(k):
            k[0] = 1
        amp = rng.normal()
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * kj * cj for kj, cj in zip(k, coords))
        values = values + amp * np.cos(arg + phase)
    return GridField(spec, values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
