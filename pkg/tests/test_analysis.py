"""Closed forms, enumeration oracle and monotonicity reports."""

import math

import numpy as np
import pytest

from powergame.analysis import (
    ContinuousGameParams,
    DomainError,
    TooLarge,
    best_reply_derivative,
    check_strategic_substitutes,
    closed_form_best_reply,
    continuous_payoff,
    discrete_scalar_reply,
    enumerate_pure_ne,
    grid_best_reply,
    naive_full_payoff,
    payoff_along_best_reply,
    price_bound,
    profile_hash,
    stagnation_interference,
    stagnation_ratio,
    export_ne_report,
)
from powergame.game import GameParams, PriceTable, StrategyProfile, compute_price_table, run_single_carrier_game
from powergame.toys import random_coupled_instance, single_link_instance, symmetric_ring_instance

P_REF = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=0.1, xi=1.0, s_max=1.0)


def test_closed_form_reference_value():
    r = closed_form_best_reply(0.0, P_REF)
    assert r.within_price_bound
    assert r.power_w == pytest.approx(0.306, abs=5e-4)


def test_closed_form_matches_grid():
    r = closed_form_best_reply(0.0, P_REF)
    s_grid = grid_best_reply(0.0, P_REF, n=100_000)
    assert abs(r.power_w - s_grid) <= P_REF.s_max / (100_000 - 1)


def test_closed_form_boundary_case():
    # xi exactly at the bound: log term vanishes, s = (I + N) beta / a
    i = 0.3
    p = ContinuousGameParams(alpha=1.2, beta=0.9, a=0.5, noise_w=0.05,
                             xi=1.2 / (4 * (0.3 + 0.05)), s_max=10.0)
    r = closed_form_best_reply(i, p)
    assert r.within_price_bound
    assert r.power_w == pytest.approx((i + p.noise_w) * p.beta / p.a, rel=1e-9)


def test_closed_form_degenerate_above_bound():
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=0.1,
                             xi=1.01 * price_bound(0.0, P_REF), s_max=1.0)
    r = closed_form_best_reply(0.0, p)
    assert not r.within_price_bound
    assert r.power_w == 0.0


def test_derivative_sign_pattern():
    # positive at low interference, negative near the price bound
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=1e-3, xi=1.0, s_max=5.0)
    i_bound = p.alpha / (4 * p.xi) - p.noise_w
    assert best_reply_derivative(1e-6, p) > 0
    assert best_reply_derivative(i_bound * 0.999, p) < 0
    # exactly one sign change over the valid domain
    grid = np.linspace(1e-6, i_bound * 0.9999, 4000)
    signs = np.sign([best_reply_derivative(float(i), p) for i in grid])
    assert np.count_nonzero(np.diff(signs)) == 1


def test_derivative_domain_error():
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=0.1, xi=3.0, s_max=1.0)
    with pytest.raises(DomainError):
        best_reply_derivative(1.0, p)


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(8)
    for _ in range(200):
        alpha = rng.uniform(0.5, 2.0)
        beta = rng.uniform(0.5, 1.5)
        a = rng.uniform(0.1, 1.0)
        noise = rng.uniform(1e-3, 0.2)
        i = rng.uniform(0.01, 1.0)
        xi = rng.uniform(0.1, 0.8) * alpha / (4 * (i + noise))
        p = ContinuousGameParams(alpha, beta, a, noise, xi, 10.0)
        d_an = best_reply_derivative(i, p)
        if abs(d_an) < 1e-3 * beta / a:
            continue
        h = 1e-6 * (i + noise)
        d_fd = (closed_form_best_reply(i + h, p, clamp=False).power_w
                - closed_form_best_reply(i - h, p, clamp=False).power_w) / (2 * h)
        assert d_fd == pytest.approx(d_an, rel=1e-6)


def test_payoff_along_best_reply_decreasing():
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=0.8, noise_w=0.02, xi=0.9, s_max=10.0)
    i_bound = p.alpha / (4 * p.xi) - p.noise_w
    grid = np.linspace(0.0, i_bound * 0.999, 200)
    u = [payoff_along_best_reply(float(i), p)[0] for i in grid]
    w = [payoff_along_best_reply(float(i), p)[1] for i in grid]
    assert all(a > b for a, b in zip(u, u[1:]))
    assert all(a > b for a, b in zip(w, w[1:]))


def test_payoff_along_matches_direct_evaluation():
    p = ContinuousGameParams(alpha=1.3, beta=0.7, a=0.6, noise_w=0.05, xi=0.8, s_max=50.0)
    for i in (0.0, 0.05, 0.2):
        if p.xi > price_bound(i, p):
            continue
        u_br, w_br = payoff_along_best_reply(i, p)
        s = closed_form_best_reply(i, p, clamp=False).power_w
        assert w_br == pytest.approx(float(continuous_payoff(s, i, p)), rel=1e-9)
        gamma = p.a * s / (i + p.noise_w)
        assert u_br == pytest.approx(1 / (1 + math.exp(-p.alpha * (gamma - p.beta))), rel=1e-9)


def test_payoff_along_boundary_value():
    i = 0.1
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=0.1,
                             xi=1.0 / (4 * 0.2), s_max=10.0)
    u_br, _ = payoff_along_best_reply(i, p)
    assert u_br == pytest.approx(2 * p.xi * 0.2 / p.alpha, rel=1e-12)


def test_stagnation_bisection():
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=1e-3, xi=1.0, s_max=5.0)
    i_star = stagnation_interference(p)
    assert best_reply_derivative(i_star * 0.9, p) > 0
    assert best_reply_derivative(min(i_star * 1.1, p.alpha / (4 * p.xi) - p.noise_w - 1e-9), p) < 0
    # r* is the same zero expressed as a price-times-interference ratio
    r_star = stagnation_ratio(p.alpha, p.beta)
    assert 4 * p.xi * (i_star + p.noise_w) / p.alpha == pytest.approx(r_star, rel=1e-6)


def test_discrete_scalar_reply_directions():
    levels = np.linspace(0.0, 1.0, 11)
    p = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=0.01, xi=1.0, s_max=1.0)
    i_star = stagnation_interference(p)
    sweep = np.linspace(i_star, p.alpha / (4 * p.xi) * 1.5, 10)
    replies = [discrete_scalar_reply(levels, float(i), p) for i in sweep]
    assert all(b <= a + 1e-12 for a, b in zip(replies, replies[1:]))

    free = ContinuousGameParams(alpha=1.0, beta=1.0, a=1.0, noise_w=0.01, xi=0.0, s_max=1.0)
    replies = [discrete_scalar_reply(levels, float(i), free) for i in np.linspace(0, 2, 10)]
    assert all(b >= a - 1e-12 for a, b in zip(replies, replies[1:]))


# -- enumeration oracle ------------------------------------------------------


def test_enumerate_single_team_unique_ne():
    sc, tensor = single_link_instance(levels=(0.0, 0.25, 0.5, 0.75, 1.0))
    params = GameParams(delta=0.0, noise_power_w=0.1)
    prices = PriceTable(np.full((1, 1), 1.0))
    report = enumerate_pure_ne(sc, tensor, params, prices)
    assert report.n_equilibria == 1
    # the unique NE is the unconstrained argmax over the level set
    best = max(sc.power_levels.fractions,
               key=lambda f: naive_full_payoff(
                   sc, tensor, StrategyProfile(np.array([[f]])), 0, params, prices))
    assert report.ne_profiles[0].fractions[0, 0] == best


def test_enumerate_symmetric_ne_set():
    sc, tensor = symmetric_ring_instance(2, self_gain=1.0, cross_gain=0.4,
                                         levels=(0.0, 0.5, 1.0))
    params = GameParams(delta=0.0, noise_power_w=0.02)
    prices = PriceTable(np.full((2, 1), 0.5))
    report = enumerate_pure_ne(sc, tensor, params, prices)
    assert report.n_equilibria >= 1
    profiles = {tuple(p.fractions.reshape(-1)) for p in report.ne_profiles}
    swapped = {(b, a) for a, b in profiles}
    assert profiles == swapped


def test_enumerate_too_large():
    sc, tensor = symmetric_ring_instance(3, levels=tuple(np.linspace(0, 1, 11)))
    params = GameParams(noise_power_w=0.02)
    with pytest.raises(TooLarge):
        enumerate_pure_ne(sc, tensor, params, PriceTable(np.full((3, 1), 0.5)), max_joint=100)


def test_bps_outcome_in_ne_set_and_welfare_max():
    rng = np.random.default_rng(4)
    seen_multi = 0
    for _ in range(25):
        n = int(rng.integers(2, 4))
        sc, tensor = symmetric_ring_instance(
            n, self_gain=float(rng.uniform(0.5, 1.0)),
            cross_gain=float(rng.uniform(0.1, 0.5)),
            levels=(0.0, 1 / 3, 2 / 3, 1.0))
        params = GameParams(delta=float(rng.choice([0.0, 0.6])),
                            k=float(rng.uniform(0.05, 0.25)), noise_power_w=0.02)
        prices = compute_price_table(sc, tensor, params)
        out = run_single_carrier_game(sc, tensor, 0, params, prices=prices)
        if not out.converged:
            continue
        report = enumerate_pure_ne(sc, tensor, params, prices, carrier_indices=(0,),
                                   bps_outcome=out)
        assert report.bps_is_ne
        if report.n_equilibria >= 2:
            seen_multi += 1
            assert report.bps_welfare_is_max
    assert seen_multi >= 2


def test_ne_report_export(tmp_path):
    sc, tensor = symmetric_ring_instance(2, cross_gain=0.3, levels=(0.0, 0.5, 1.0))
    params = GameParams(noise_power_w=0.02)
    prices = compute_price_table(sc, tensor, params)
    out = run_single_carrier_game(sc, tensor, 0, params, prices=prices)
    report = enumerate_pure_ne(sc, tensor, params, prices, bps_outcome=out)
    export_ne_report(report, sc, tmp_path)
    lines = (tmp_path / "ne_report.csv").read_text().strip().splitlines()
    assert lines[0] == "ne_index,welfare,is_bps_outcome,profile_hash"
    assert len(lines) == report.n_equilibria + 1
    assert len(profile_hash(report.ne_profiles[0])) == 16


# -- monotonicity report ------------------------------------------------------


def test_substitutes_report_runs_clean():
    sc, tensor = random_coupled_instance(np.random.default_rng(12), n_levels=4)
    params = GameParams(k=0.25, delta=0.0, noise_power_w=1e-2)
    report = check_strategic_substitutes(sc, tensor, params, sample_count=40, seed=3)
    assert report.pairs_checked + report.pairs_skipped == 40
    assert report.violations == ()


def test_substitutes_requires_positive_prices():
    sc, tensor = symmetric_ring_instance(2)
    params = GameParams(noise_power_w=1e-2)
    with pytest.raises(ValueError):
        check_strategic_substitutes(sc, tensor, params, 5, seed=0,
                                    prices=PriceTable(np.zeros((2, 1))))
