import numpy as np
import pytest

from paraherm import models
from paraherm.chartcalc import random_polynomial_field

MODEL_SPECS = {
    "flat": ("flat-para-kahler", {"n": 2}),
    "abelian": ("group-double", {"algebra": "abelian"}),
    "heisenberg": ("group-double", {"algebra": "heisenberg"}),
    "affine": ("group-double", {"algebra": "affine"}),
    "projective": ("projective", {"n": 2}),
    "projective3": ("projective", {"n": 3}),
    "sasaki": ("tangent-sasaki", {}),
}

_cache = {}


def get_model(key):
    if key not in _cache:
        name, params = MODEL_SPECS[key]
        _cache[key] = models.build_model(name, **params)
    return _cache[key]


@pytest.fixture(params=["flat", "abelian", "heisenberg", "projective", "sasaki"])
def builtin(request):
    """The five built-in models."""
    return get_model(request.param)


@pytest.fixture
def heisenberg():
    return get_model("heisenberg")


@pytest.fixture
def flat():
    return get_model("flat")


def poly_fields(model, seed, count=3):
    rng = np.random.default_rng(seed)
    return [random_polynomial_field(model.chart, rng) for _ in range(count)]
