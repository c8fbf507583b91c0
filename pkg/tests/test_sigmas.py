import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sigmatune.controller import ControllerParams
from sigmatune.dynamics import PlantParams
from sigmatune.exceptions import ConfigError, UnknownTarget
from sigmatune.sigmas import (
    SigmaBinding,
    SigmaPair,
    SigmaSampler,
    apply_sigmas,
    parse_coupling,
)


def test_default_binding_overwrites_gains():
    gains, plant, model = apply_sigmas(SigmaPair(16, -2), SigmaBinding(),
                                       gains=ControllerParams(), plant=PlantParams(),
                                       model=PlantParams())
    assert (gains.gamma1, gains.gamma2, gains.k) == (16.0, -2.0, 115.0)
    assert plant == PlantParams() and model == PlantParams()


def test_plant_binding_leaves_controller_alone():
    gains, plant, model = apply_sigmas(SigmaPair(0.1, 0.2), SigmaBinding("delta", "eps2"),
                                       gains=ControllerParams(), plant=PlantParams(),
                                       model=PlantParams())
    assert gains == ControllerParams() and model == PlantParams()
    assert (plant.delta, plant.eps2, plant.eps1) == (0.1, 0.2, 1.6)


def test_model_binding_leaves_true_plant_alone():
    _, plant, model = apply_sigmas(SigmaPair(3.0, -1.0), SigmaBinding("model.eps1", "gamma2"),
                                   gains=ControllerParams(), plant=PlantParams(),
                                   model=PlantParams())
    assert plant == PlantParams()
    assert model.eps1 == 3.0


def test_model_binding_needs_a_model():
    with pytest.raises(UnknownTarget):
        apply_sigmas(SigmaPair(1, 2), SigmaBinding("model.eps1", "gamma2"),
                     gains=ControllerParams(), plant=PlantParams(), model=None)


def test_binding_validation():
    with pytest.raises(UnknownTarget):
        SigmaBinding("gamma1", "mass")
    with pytest.raises(ConfigError):
        SigmaBinding("gamma1", "gamma1")
    with pytest.raises(ConfigError):
        SigmaBinding.parse("gamma1")
    assert SigmaBinding.parse(" k , eps1 ") == SigmaBinding("k", "eps1")


def test_binding_read():
    b = SigmaBinding("gamma2", "model.delta")
    model = PlantParams(delta=7.0)
    assert b.read(ControllerParams(), PlantParams(), model) == (4.0, 7.0)


def test_sampler_coupling_over_many_draws():
    s1, s2 = SigmaSampler().draw_many(np.random.default_rng(0), 100_000)
    assert s1.min() >= -50 and s1.max() <= 50
    assert np.all(s2 == -s1 / 8)
    assert abs(s1.mean()) < 0.5
    assert s1.min() < -45 and s1.max() > 45


def test_sampler_sequential_draws_are_coupled():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        p = SigmaSampler().draw(rng)
        assert -50 <= p.s1 <= 50 and p.s2 == -p.s1 / 8


@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.sampled_from([None, -0.125, 2.0]))
def test_draw_many_matches_sequential_draws(seed, n, coupling):
    sampler = SigmaSampler(coupling=coupling)
    a1, a2 = sampler.draw_many(np.random.default_rng(seed), n)
    rng = np.random.default_rng(seed)
    seq = [sampler.draw(rng) for _ in range(n)]
    assert list(a1) == [p.s1 for p in seq]
    assert list(a2) == [p.s2 for p in seq]


def test_uncoupled_sampler_is_independent():
    s1, s2 = SigmaSampler(coupling=None).draw_many(np.random.default_rng(1), 50_000)
    assert abs(np.corrcoef(s1, s2)[0, 1]) < 0.02
    assert s2.min() >= -50 and s2.max() <= 50


def test_sampler_range_validated():
    with pytest.raises(ConfigError):
        SigmaSampler(5.0, 5.0)


def test_parse_coupling():
    assert parse_coupling("uncoupled") is None
    assert parse_coupling(None) is None
    assert parse_coupling("-0.125") == -0.125
    for bad in ("abc", "nan", float("inf")):
        with pytest.raises(ConfigError):
            parse_coupling(bad)
