import numpy as np
import pytest

from ltnid.errors import DataError
from ltnid.simulate import (GenerationConfig, add_noise, discretize, generate_synthetic,
                            simulate_trajectory, step, threshold)
from ltnid.types import LtnModel


@pytest.fixture
def hand_model():
    return LtnModel(0.5, np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), 1.0)


def test_threshold_cases():
    assert threshold([-1.0, 0.5, 3.0], 2.0).tolist() == [0.0, 0.5, 2.0]
    x = np.linspace(0, 2, 7)
    assert np.array_equal(threshold(x, 2.0), x)
    y = np.array([-3.0, 1.0, 9.0])
    assert np.array_equal(threshold(threshold(y, 2.0), 2.0), threshold(y, 2.0))


def test_step_by_hand(hand_model):
    assert step(hand_model, [1.0, 2.0], [3.0]).tolist() == [1.5, 2.0]
    assert step(hand_model, [0.0, 0.0], [0.0]).tolist() == [0.0, 0.0]
    with pytest.raises(DataError):
        step(hand_model, [1.0], [3.0])


def test_step_increment_in_band(rng):
    model, _ = generate_synthetic(GenerationConfig(n=4, m=3, T_d=1, rng_seed=5))
    x = rng.uniform(0, 4, (200, 4))
    u = rng.uniform(0, 6, (200, 3))
    inc = step(model, x, u) - model.alpha * x
    assert inc.min() >= 0 and inc.max() <= model.s_D


def test_trajectory_three_steps(hand_model):
    traj = simulate_trajectory(hand_model, [1.0, 2.0], [[3.0], [0.0], [1.0]])
    expected = [[1.0, 2.0], [1.5, 2.0], [1.75, 1.0], [1.875, 1.5]]
    assert np.allclose(traj, expected, atol=0)


def test_trajectory_zero_and_bounds(rng):
    model, _ = generate_synthetic(GenerationConfig(n=3, m=2, T_d=1, rng_seed=1))
    assert not simulate_trajectory(model, np.zeros(3), np.zeros((5, 2))).any()
    traj = simulate_trajectory(model, np.zeros(3), rng.uniform(0, 6, (300, 2)))
    assert traj.min() >= 0 and traj.max() <= model.s_D / (1 - model.alpha) + 1e-12
    with pytest.raises(DataError):
        simulate_trajectory(model, -np.ones(3), np.zeros((1, 2)))


def test_discretize_formula_and_inverse(rng):
    W = rng.normal(size=(3, 3))
    np.fill_diagonal(W, 0.0)
    B = rng.normal(size=(3, 2))
    model = discretize(1.0, 0.1, W, B, 20.0)
    assert model.alpha == pytest.approx(0.9)
    assert model.s_D == pytest.approx(2.0)
    assert np.allclose(model.W_D * 1.0 / 0.1, W)
    assert np.allclose(model.B_D * 10.0, B)
    with pytest.raises(DataError):
        discretize(1.0, 1.0, W, B, 1.0)


def test_generate_default_configuration():
    model, batch = generate_synthetic(GenerationConfig())
    assert (batch.n, batch.m, batch.T_d) == (10, 10, 250)
    assert model.alpha == 0.9 and model.s_D == 2.0
    assert batch.x.min() >= 0 and batch.x.max() <= 4
    assert batch.u.min() >= 0 and batch.u.max() <= 6
    assert model.W_D.min() >= 0 and model.W_D.max() <= 0.1
    assert model.B_D.min() >= -0.04 and model.B_D.max() <= 0.06
    assert not np.diag(model.W_D).any()
    assert np.array_equal(batch.x_plus, step(model, batch.x, batch.u))


def test_generate_split_respects_dale():
    model, _ = generate_synthetic(GenerationConfig(n=6, m=2, T_d=3, n_excitatory=4))
    assert model.W_D[:, :4].min() >= 0 and model.W_D[:, 4:].max() <= 0
    assert model.dale_signs.tolist() == [1, 1, 1, 1, -1, -1]


def test_generate_is_seeded():
    a = generate_synthetic(GenerationConfig(rng_seed=11))[1]
    b = generate_synthetic(GenerationConfig(rng_seed=11))[1]
    c = generate_synthetic(GenerationConfig(rng_seed=12))[1]
    assert np.array_equal(a.x_plus, b.x_plus)
    assert not np.array_equal(a.x_plus, c.x_plus)


@pytest.mark.parametrize("field,value", [("state_range", (2.0, 1.0)), ("alpha_star", 1.0),
                                         ("s_D_star", 0.0), ("input_range", (5.0, 0.0))])
def test_config_validation_names_field(field, value):
    with pytest.raises(DataError, match=field):
        GenerationConfig(**{field: value})


def test_noise_bounds_and_identity():
    _, batch = generate_synthetic(GenerationConfig(n=3, m=2, T_d=40))
    same = add_noise(batch, 0.0, 1)
    assert np.array_equal(same.x, batch.x) and same.eps_bar == 0.0
    noisy = add_noise(batch, 0.1, 1)
    assert noisy.eps_bar == 0.1
    for a, b in ((noisy.x, batch.x), (noisy.u, batch.u), (noisy.x_plus, batch.x_plus)):
        d = np.abs(a - b)
        assert d.max() <= 0.1 and d.max() > 0.05
    assert np.array_equal(noisy.self_loop_mask, batch.self_loop_mask)
    assert np.array_equal(add_noise(batch, 0.1, 1).x, noisy.x)
    with pytest.raises(DataError):
        add_noise(batch, -0.1, 1)
