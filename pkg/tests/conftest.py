"""
tests/conftest.py - Shared fixtures: synthetic masks, images and phantom specs.
"""
import numpy as np
import pytest

from src.phantom import PhantomSpec, generate


def bar(shape, top, left, height, width) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[top:top + height, left:left + width] = True
    return mask


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def dumbbell():
    """Two 20x150 bars stacked end to end, joined by a 4-px-wide bridge."""
    shape = (360, 60)
    a = bar(shape, 20, 20, 150, 20)
    b = bar(shape, 180, 20, 150, 20)
    bridge = bar(shape, 170, 28, 10, 4)
    return a | b | bridge, [a, b]


@pytest.fixture
def triple_chain():
    """Three 20x150 bars chained by two bridges."""
    shape = (520, 60)
    bars = [bar(shape, 20 + 160 * i, 20, 150, 20) for i in range(3)]
    bridges = [bar(shape, 170 + 160 * i, 28, 10, 4) for i in range(2)]
    mask = np.zeros(shape, dtype=bool)
    for m in bars + bridges:
        mask |= m
    return mask, bars


@pytest.fixture
def step_image():
    img = np.full((32, 32), 50, dtype=np.uint8)
    img[:, 16:] = 200
    return img


@pytest.fixture(scope="session")
def clean_phantom():
    """Noise-free default-size phantom with twelve straight glands."""
    spec = PhantomSpec(name="clean", gland_count=12, gland_width=14.0, seed=7)
    image, truth = generate(spec)
    return spec, image, truth


@pytest.fixture(scope="session")
def noisy_phantom():
    spec = PhantomSpec(name="noisy", gland_count=16, noise_sigma=6.0, lash_count=5, seed=11)
    image, truth = generate(spec)
    return spec, image, truth
