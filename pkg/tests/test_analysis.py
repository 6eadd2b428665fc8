import json
import math

import numpy as np
import pytest

from potential_games.analysis import (
    bound_value,
    bound_verification,
    convergence_study,
    half_step_check,
    monotonicity_study,
    random_atomic_state,
    tail_bound_families,
    tail_potential_comparison,
    tail_potential_study,
    variance_clock,
)
from potential_games.errors import ArgumentError, PreconditionError
from potential_games.games import (
    ExpertLossAdversary,
    GameConfig,
    random_expert_losses,
    run_game,
)
from potential_games.measure import RegretState
from potential_games.potential import Potential, exp_final, exp_mixture_final, parse_final

EXP_FINAL = exp_final()
EXP = Potential.exponential(1.0)


class TestConvergence:
    def test_sequence_and_limit(self):
        rep = convergence_study(EXP_FINAL, 1.0, 3)
        vals = rep.values["0.0,0.0"]
        assert vals["lower"] == pytest.approx([math.cosh(2.0**-k) ** (4**k) for k in range(4)],
                                              rel=1e-13)
        assert vals["limit"] == pytest.approx(math.exp(0.5), rel=1e-13)
        assert rep.passed

    def test_gap_at_level_zero(self):
        vals = convergence_study(EXP_FINAL, 1.0, 0).values["0.0,0.0"]
        assert vals["upper_minus_lower"][0] == pytest.approx(math.cosh(2) - math.cosh(1), rel=1e-13)

    def test_probe_at_horizon(self):
        rep = convergence_study(EXP_FINAL, 1.0, 3, probes=[(1.0, 0.4)])
        vals = rep.values["1.0,0.4"]
        assert vals["lower"] == pytest.approx([math.exp(0.4)] * 4, rel=1e-15)
        assert max(vals["upper_minus_lower"]) == 0.0
        assert rep.passed

    def test_probe_off_lattice(self):
        with pytest.raises(ArgumentError):
            convergence_study(EXP_FINAL, 1.0, 2, probes=[(0.1, 0.0)])

    def test_sp2_gate(self):
        with pytest.raises(PreconditionError):
            convergence_study(lambda R: -np.asarray(R, float), 1.0, 2)

    def test_json(self):
        rep = convergence_study(EXP_FINAL, 1.0, 1)
        data = json.loads(rep.to_json())
        assert set(data) == {"study", "params", "probes", "values", "verdicts", "tolerances", "seed"}
        assert data["values"]["0.0,0.0"]["lower"][0] == math.cosh(1)


class TestMonotonicity:
    def test_nodes(self):
        rep = monotonicity_study(exp_final(0.5), 1.0, 3)
        assert rep.passed
        assert rep.values["k=2"]["nodes"] == sum(range(1, 17))

    def test_probes(self):
        rep = monotonicity_study(EXP_FINAL, 1.0, 2, probes=[(0.0, 0.0)])
        seq = rep.values["0.0,0.0"]["lower"]
        assert seq[0] < seq[1] < seq[2]
        assert rep.passed

    def test_half_step(self):
        hs = half_step_check(EXP_FINAL, 1.0, 0.0)
        assert hs["four_step"] == pytest.approx(math.cosh(0.5) ** 4)
        assert hs["one_step"] == pytest.approx(math.cosh(1))
        assert hs["difference"] == pytest.approx((2 * math.cosh(2) - 8 * math.cosh(1) + 6) / 16,
                                                 abs=1e-12)

    def test_half_step_other_tau(self):
        hs = half_step_check(exp_mixture_final([1, 1], [0.5, 1.5]), 0.49, 0.3)
        assert hs["error"] < 1e-10

    def test_sp4_gate(self):
        f = parse_final("polyfinal:coeffs=30;10;1")
        with pytest.raises(PreconditionError):
            monotonicity_study(f, 1.0, 2)

    def test_needs_two_levels(self):
        with pytest.raises(ArgumentError):
            monotonicity_study(EXP_FINAL, 1.0, 0)


class TestVarianceClock:
    def test_random_walk(self):
        n, s = 8, 0.5
        tr = run_game(GameConfig.continuous(EXP, s, n * s * s), "potential", "random-walk")
        V, var = variance_clock(tr)
        assert V == pytest.approx(n * s * s)
        assert var == pytest.approx([s * s] * n)

    def test_constant(self):
        tr = run_game(GameConfig.continuous(EXP, 0.5, 1.0, n_steps=3), "potential", "constant:l=0.1")
        V, var = variance_clock(tr)
        assert V == 0.0 and var == pytest.approx([0.0] * 3, abs=1e-15)

    def test_biased_single_step(self):
        tr = run_game(GameConfig.integer(1, EXP_FINAL), "potential", "biased:p=0.75")
        _, var = variance_clock(tr)
        assert var == pytest.approx([0.75])

    def test_missing_history(self):
        tr = run_game(GameConfig.integer(1, EXP_FINAL), "potential", "random-walk",
                      record_history=False)
        with pytest.raises(ArgumentError):
            variance_clock(tr)


class TestBounds:
    def test_exp(self):
        assert bound_value("exp", 100, 0.01) == pytest.approx(math.sqrt(200 * math.log(100)))
        assert bound_value("exp", 100, 0.01) == pytest.approx(30.3485, abs=1e-4)

    def test_normal_hedge(self):
        want = math.sqrt(101 * (2 * math.log(50) + math.log(101)))
        assert bound_value("normalhedge", 100, 0.01) == pytest.approx(want)
        assert bound_value("normal_hedge", 100, 0.01) == pytest.approx(35.45, abs=5e-3)

    def test_zero_time(self):
        assert bound_value("exp", 0.0, 0.3) == 0.0

    def test_uniform(self):
        want = math.sqrt(12 * (math.log(12) + 2 * math.log(10)))
        assert bound_value("uniform", 10, 0.1, nu=2) == pytest.approx(want)
        with pytest.raises(ArgumentError):
            bound_value("uniform", 10, 0.1)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.5])
    def test_eps_range(self, eps):
        with pytest.raises(ArgumentError):
            bound_value("exp", 1.0, eps)

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            bound_value("nope", 1.0, 0.1)

    def test_normal_hedge_exceeds_exp(self):
        for t in (1, 10, 100, 1000):
            for eps in (0.25, 0.1, 0.01, 0.001):
                assert bound_value("normal_hedge", t, eps) >= bound_value("exp", t, eps)


class TestBoundVerification:
    def test_normal_hedge_few_seeds(self):
        eps = [0.5, 0.25, 0.1]
        traces = []
        for seed in range(3):
            L = random_expert_losses(16, 50, seed)
            cfg = GameConfig.experts(Potential.normal_hedge(), 16, 50, eps=eps, seed=seed)
            traces.append(run_game(cfg, "potential", ExpertLossAdversary(L), record_history=False))
        rep = bound_verification(traces, "normal_hedge", eps)
        assert rep.values["checks"] == 3 * 51 * 3
        assert rep.passed

    def test_constant_losses(self):
        L = np.zeros((20, 4))
        cfg = GameConfig.experts(Potential.normal_hedge(), 4, 20)
        tr = run_game(cfg, "potential", ExpertLossAdversary(L))
        rep = bound_verification(tr, "exp", [0.5, 0.01, 0.001])
        assert rep.passed

    def test_tuned_exponential_reports_violations(self):
        # exponential weights tuned for one eps: the small-eps check may fail; only report
        L = random_expert_losses(32, 100, 7)
        cfg = GameConfig.experts(Potential.exponential(0.1), 32, 100)
        tr = run_game(cfg, "potential", ExpertLossAdversary(L))
        rep = bound_verification(tr, "exp", [0.001])
        assert rep.values["checks"] == 101
        assert isinstance(rep.values["violations"], list)

    def test_unrecorded_eps_needs_states(self):
        cfg = GameConfig.experts(Potential.normal_hedge(), 4, 5)
        tr = run_game(cfg, "potential", ExpertLossAdversary(np.ones((5, 4))), record_history=False)
        with pytest.raises(ArgumentError):
            bound_verification(tr, "exp", [0.3])


class TestTailPotential:
    def test_forward_direction(self):
        rep = tail_potential_study(100, seed=1)
        assert rep.values["apb_without_srb"] == 0

    def test_families_are_bounds(self):
        grid = np.linspace(-10, 10, 201)
        for G in tail_bound_families().values():
            g = G(grid)
            assert np.all(g > 0) and np.all(g <= 1) and np.all(np.diff(g) <= 0)

    def test_tail_bound_without_potential_bound(self):
        # N uniform atoms with G equal to the tail: the tail bound holds with
        # equality, but the average of 1/G is the harmonic number H_N > 1
        N = 4
        st = RegretState.from_atoms(np.arange(N, dtype=float), np.full(N, 1 / N))
        G = lambda R: np.clip(st.tail(np.asarray(R, float)), 1 / N, 1.0)  # noqa: E731
        c = tail_potential_comparison(st, G)
        assert c["srb_holds"]
        assert c["apb"] == pytest.approx(sum(1 / k for k in range(1, N + 1)))
        assert not c["apb_holds"]

    def test_strict_margin_never_holds(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            st = random_atomic_state(rng)
            for G in tail_bound_families().values():
                assert not tail_potential_comparison(st, G)["strict_srb_holds"]
