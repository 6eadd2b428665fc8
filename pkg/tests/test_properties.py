import json
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from potential_games.lattice import backward_table, closed_form_potential
from potential_games.measure import (
    LossMap,
    RegretState,
    binomial_dist,
    convolve_step,
    epsilon_regret,
    load_state_csv,
    save_state_csv,
)
from potential_games.potential import (
    DEFAULT_GRID,
    divided_difference_g,
    exp_mixture_final,
    gaussian_convolve,
    n_convexity_check,
    strict_positivity_report,
)
from potential_games.serialize import dumps_json

finite = st.floats(-5, 5, allow_nan=False)


@st.composite
def states(draw, max_atoms=8):
    n = draw(st.integers(1, max_atoms))
    regrets = draw(st.lists(finite, min_size=n, max_size=n))
    masses = draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n))
    return RegretState.from_atoms(regrets, masses, normalize=True)


@st.composite
def loss_maps(draw, n_atoms):
    s = draw(st.floats(0.05, 1.0))
    m = draw(st.integers(1, 3))
    vals = np.array(draw(st.lists(st.floats(-1, 1), min_size=n_atoms * m, max_size=n_atoms * m)))
    w = np.array(draw(st.lists(st.floats(0.01, 1), min_size=n_atoms * m, max_size=n_atoms * m)))
    w = w.reshape(n_atoms, m)
    return LossMap(s, s * vals.reshape(n_atoms, m), w / w.sum(axis=1, keepdims=True))


@st.composite
def mixtures(draw):
    k = draw(st.integers(1, 3))
    weights = draw(st.lists(st.floats(0.1, 2.0), min_size=k, max_size=k))
    rates = draw(st.lists(st.floats(0.2, 1.5), min_size=k, max_size=k))
    return exp_mixture_final(weights, rates)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_mass_conservation(data):
    state = data.draw(states())
    losses = data.draw(loss_maps(len(state)))
    ell = data.draw(st.floats(-losses.step_size, losses.step_size))
    out = convolve_step(state, losses, ell)
    assert abs(out.masses.sum() - 1.0) < 1e-12
    assert np.all(np.diff(out.regrets) > 0)


@settings(max_examples=60, deadline=None)
@given(states(), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_epsilon_regret_nonincreasing(state, a, b):
    lo, hi = min(a, b), max(a, b)
    assert epsilon_regret(state, hi) <= epsilon_regret(state, lo)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 120), st.floats(0.01, 2.0))
def test_binomial_moments(n, s):
    d = binomial_dist(n, s)
    assert abs(d.mean()) < 1e-12 * max(1.0, n * s)
    assert abs(d.variance() - n * s * s) < 1e-12 * max(1.0, n * s * s)


@settings(max_examples=25, deadline=None)
@given(mixtures(), mixtures(), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_sp_closure(f, g, a, b):
    assert strict_positivity_report(f, 4, DEFAULT_GRID).passed
    combo = lambda R: a * f(R) + b * g(R)  # noqa: E731
    assert strict_positivity_report(combo, 4, DEFAULT_GRID).passed


@settings(max_examples=40, deadline=None)
@given(mixtures(), st.floats(-3, 3), st.floats(0.05, 1.5))
def test_divided_difference_positive_for_sp4(f, R, a):
    assert divided_difference_g(f, R, a) > 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5), st.floats(-2, 2), st.floats(0.1, 1.0))
def test_n_convexity_matches_stencil_sign(coeffs, R, a):
    f = lambda x: sum(c * np.asarray(x, float) ** k for k, c in enumerate(coeffs))  # noqa: E731
    g = divided_difference_g(f, R, a)
    # the fourth difference of a quartic is its leading coefficient
    assert math.isclose(g, coeffs[4], abs_tol=1e-9)
    if abs(g) > 1e-9:
        pts = [R - 2 * a, R - a, R, R + a, R + 2 * a]
        assert n_convexity_check(f, 4, pts) == (g > 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(-5, 5), st.floats(0, 1))
def test_quadrature_stable_in_order(T, R, frac):
    t = frac * T
    a = gaussian_convolve(np.exp, T, t, R, 40)
    b = gaussian_convolve(np.exp, T, t, R, 80)
    assert abs(a - b) <= 1e-9 * max(1.0, abs(b))
    assert math.isclose(b, math.exp(R + (T - t) / 2), rel_tol=1e-12)


@settings(max_examples=15, deadline=None)
@given(mixtures(), st.integers(0, 2), st.sampled_from(["lower", "upper"]))
def test_table_matches_closed_form(f, k, side):
    tab = backward_table(f, 1.0, k, side)
    for i in range(tab.n_steps + 1):
        R = tab.regret(i, np.arange(i + 1))
        cf = closed_form_potential(f, 1.0, k, i, R, side)
        assert np.allclose(tab.column(i), cf, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(state=states())
def test_state_csv_round_trip(tmp_path_factory, state):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    save_state_csv(state, path)
    assert load_state_csv(path) == state


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=6))
def test_json_floats_lossless(xs):
    back = json.loads(dumps_json({"x": xs}))["x"]
    assert back == xs
