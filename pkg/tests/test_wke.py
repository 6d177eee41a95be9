import math

import numpy as np
import pytest

from wavekin.model import ForcingProfile, ModelParams
from wavekin.wke import WKESolver, WkeState, linear_solution

P = ModelParams(d=3, L=8.0, r_star=1.0, forcing=ForcingProfile(1.0, 0.5), epsilon=0.1)


@pytest.fixture(scope="module")
def solver():
    return WKESolver(P)


def test_linear_solution(solver):
    k = solver.knots
    assert np.all(linear_solution(0.0, P, k).values == 0)
    np.testing.assert_array_equal(linear_solution(np.inf, P, k).values, solver.b2 / solver.gamma)
    vals = np.array([linear_solution(t, P, k).values for t in np.linspace(0, 3, 31)])
    assert np.all(np.diff(vals, axis=0) >= 0)


def test_eps_zero_is_exact(solver):
    traj = solver.solve(2.0, 0.05, [0.0])
    lin = np.array([solver.linear(t) for t in traj["tau"]])
    assert np.max(np.abs(traj["z"][0] - lin)) <= 1e-12
    assert np.all(solver.solve(0.0, 0.05)["z"] == 0)


def test_pure_decay_without_forcing():
    p = ModelParams(d=3, L=8.0, forcing=ForcingProfile(0.0, 0.5))
    s = WKESolver(p)
    z0 = np.exp(-s.knots**2)
    st = WkeState(0.0, s.field(z0), 0.0, 0.1)
    for k in range(1, 4):
        st = s.wke_step(st)
        np.testing.assert_allclose(st.z.values, z0 * np.exp(-2 * s.gamma * 0.1 * k), rtol=1e-14)
    assert len(st.history) == 3


def test_first_order_in_h(solver):
    ends = [solver.solve(1.0, h, [0.2])["z"][0, -1] for h in (0.1, 0.05, 0.025)]
    e1 = solver.norm(ends[0] - ends[1])
    e2 = solver.norm(ends[1] - ends[2])
    assert 1.5 < e1 / e2 < 2.5


def test_stationary(solver):
    z, res = solver.stationary(0.0)
    np.testing.assert_array_equal(z.values, solver.b2 / solver.gamma)
    z, res = solver.stationary(0.1)
    assert res[-1] <= 1e-10
    ratios = np.array(res[2:]) / np.array(res[1:-1])
    assert np.all(ratios < 0.5)


def test_stationary_eps_squared_scaling(solver):
    z0 = solver.b2 / solver.gamma
    dev = [solver.norm(solver.stationary(e)[0].values - z0) / e**2 for e in (0.05, 0.1, 0.2)]
    assert max(dev) / min(dev) < 1.1


def test_long_time_linear_decay(solver):
    traj = solver.solve(3.0, 0.05, [0.0])
    z0 = solver.b2 / solver.gamma
    for t, v in zip(traj["tau"], traj["z"][0]):
        assert solver.norm(v - z0) <= math.exp(-2 * t) * solver.norm(z0) * (1 + 1e-12)


def test_nonnegative_and_bounded(solver):
    traj = solver.solve(3.0, 0.1, [0.1, 0.3])
    assert traj["negative"] == 0
    # |z| <= C |b^2| with C fitted once and frozen
    assert np.all(traj["sup_norm"] <= 1.1 * solver.norm(solver.b2))


def test_drive_perturbation_response():
    s = WKESolver(P)
    base = s.solve(2.0, 0.1, [0.1])["z"][0]
    xi = 1e-3
    s.b2 = s.b2 + xi * np.exp(-s.knots**2)
    pert = s.solve(2.0, 0.1, [0.1])["z"][0]
    shift = max(s.norm(a - b) for a, b in zip(base, pert))
    assert shift <= 1.0 * s.norm(xi * np.exp(-s.knots**2))


def test_errors(solver):
    with pytest.raises(ValueError):
        solver.solve(1.0, 0.3)
    with pytest.raises(ValueError):
        linear_solution(-1.0, P, solver.knots)
    big = WKESolver(ModelParams(d=3, L=8.0, forcing=ForcingProfile(30.0, 0.5), epsilon=0.5))
    with pytest.raises(RuntimeError):
        big.stationary(0.5)
