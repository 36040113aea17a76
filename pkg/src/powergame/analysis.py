"""Independent verification: closed forms, exhaustive oracles, monotonicity.

Everything here deliberately avoids the vectorized engine paths: payoffs are
recomputed with plain loops, optima with brute-force grids, equilibria by
exhaustive enumeration. These are the reference implementations the game
engine is checked against.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .game import GameOutcome, GameParams, PriceTable, StrategyProfile
from .propagation import AttenuationTensor
from .scenario import Scenario


class DomainError(ValueError):
    """Parameters fall outside the closed form's real domain."""


class TooLarge(ValueError):
    """Joint strategy space exceeds the enumeration budget."""


@dataclass(frozen=True)
class ContinuousGameParams:
    """Single-location, single-tile, single-carrier scalar game parameters."""

    alpha: float
    beta: float
    a: float        # link gain
    noise_w: float
    xi: float       # price per received watt
    s_max: float    # maximum transmit power, watts

    def __post_init__(self):
        for name in ("alpha", "beta", "a", "noise_w", "s_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")


def price_bound(interference_w: float, p: ContinuousGameParams) -> float:
    """Largest price for which the continuous best reply stays real-positive."""
    return p.alpha / (4.0 * (interference_w + p.noise_w))


def continuous_payoff(s_w, interference_w: float, p: ContinuousGameParams):
    """Scalar payoff: sigmoid utility minus the received-power price."""
    from scipy.special import expit

    s_w = np.asarray(s_w, dtype=float)
    gamma = p.a * s_w / (interference_w + p.noise_w)
    return expit(p.alpha * (gamma - p.beta)) - p.xi * p.a * s_w


@dataclass(frozen=True)
class BestReplyPoint:
    power_w: float
    within_price_bound: bool


def closed_form_best_reply(interference_w: float, p: ContinuousGameParams,
                           clamp: bool = True) -> BestReplyPoint:
    """Interior payoff-maximizing power of the scalar game.

    Returns 0 with within_price_bound=False when the price exceeds
    alpha / (4 (I + N)), where the stationary point stops being real.
    """
    q = interference_w + p.noise_w
    if p.xi <= 0:
        # no price: utility is increasing, the reply saturates
        return BestReplyPoint(min(p.s_max, float("inf")) if clamp else float("inf"), True)
    x = p.alpha / (2.0 * p.xi * q) - 1.0
    # the exact price bound maps to x = 1; leave float headroom for it
    if x < 1.0 - 1e-12:
        return BestReplyPoint(0.0, False)
    y = x - math.sqrt(max(x * x - 1.0, 0.0))
    s = -q / (p.alpha * p.a) * (math.log(y) - p.alpha * p.beta)
    if clamp:
        s = min(max(s, 0.0), p.s_max)
    return BestReplyPoint(s, True)


def best_reply_derivative(interference_w: float, p: ContinuousGameParams) -> float:
    """Slope of the unclamped continuous best reply with respect to interference.

    Positive at low interference, one zero crossing (the stagnation region),
    negative approaching the price bound.
    """
    q = interference_w + p.noise_w
    radicand = p.alpha * (p.alpha - 4.0 * p.xi * q)
    if radicand < 0:
        raise DomainError("price exceeds alpha / (4 (I + N)); derivative undefined")
    if radicand == 0:
        return float("-inf")
    x = p.alpha / (2.0 * p.xi * q) - 1.0
    y = x - math.sqrt(x * x - 1.0)
    return p.beta / p.a - 1.0 / (p.a * math.sqrt(radicand)) - math.log(y) / (p.alpha * p.a)


def payoff_along_best_reply(interference_w: float, p: ContinuousGameParams) -> tuple[float, float]:
    """Utility and payoff at the continuous best reply; both decrease with I."""
    q = interference_w + p.noise_w
    radicand = p.alpha * p.alpha - 4.0 * p.alpha * p.xi * q
    if radicand < 0:
        raise DomainError("price exceeds alpha / (4 (I + N))")
    u_br = 2.0 * p.xi * q / (p.alpha - math.sqrt(radicand)) if p.xi > 0 else 1.0
    s_br = closed_form_best_reply(interference_w, p, clamp=False).power_w
    w_br = u_br - p.xi * p.a * s_br
    return u_br, w_br


def grid_best_reply(interference_w: float, p: ContinuousGameParams, n: int = 100_000) -> float:
    """Brute-force maximizer of the scalar payoff on a uniform power grid."""
    grid = np.linspace(0.0, p.s_max, n)
    return float(grid[np.argmax(continuous_payoff(grid, interference_w, p))])


def stagnation_ratio(alpha: float, beta: float, tol: float = 1e-12) -> float:
    """Critical ratio r* = 4 xi (I + N) / alpha past which replies decrease.

    The sign of the reply derivative depends on the price and interference
    only through r (and on alpha, beta); bisection finds its single zero.
    Returns 0 when the reply is decreasing everywhere.
    """
    def g(r: float) -> float:
        root = math.sqrt(1.0 - r)
        arg = (2.0 - 2.0 * root - r) / r
        return beta - 1.0 / (alpha * root) - math.log(arg) / alpha

    lo, hi = 1e-15, 1.0 - 1e-15
    if g(hi) >= 0:
        return 1.0
    if g(lo) <= 0:
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def stagnation_interference(p: ContinuousGameParams, tol: float = 1e-12) -> float:
    """Interference where the continuous best reply stops growing.

    Bisection on the derivative's single sign change; returns 0 when the
    reply is already non-increasing at zero interference.
    """
    i_bound = p.alpha / (4.0 * p.xi) - p.noise_w
    if i_bound <= 0:
        return 0.0
    lo, hi = 0.0, i_bound * (1.0 - 1e-12)
    if best_reply_derivative(lo, p) <= 0:
        return 0.0
    if best_reply_derivative(hi, p) >= 0:
        return i_bound
    while hi - lo > tol * max(1.0, i_bound):
        mid = 0.5 * (lo + hi)
        if best_reply_derivative(mid, p) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def discrete_scalar_reply(levels_w: np.ndarray, interference_w: float,
                          p: ContinuousGameParams, delta: float = 0.0,
                          gamma_min: float = 0.1) -> float:
    """Discrete best reply of the scalar game (ties broken to lower power)."""
    w = continuous_payoff(levels_w, interference_w, p)
    if delta > 0:
        gamma = p.a * levels_w / (interference_w + p.noise_w)
        w = w - delta * (gamma <= gamma_min)
    best = np.max(w)
    tied = np.flatnonzero(w >= best - 1e-12 * max(1.0, abs(best)))
    return float(levels_w[tied[0]])


# -- independent payoff evaluator (plain loops) ---------------------------


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-min(x, 700.0)))
    ex = math.exp(max(x, -700.0))
    return ex / (1.0 + ex)


def naive_average_attenuation(scenario: Scenario, tensor: AttenuationTensor,
                              location_id: int, carrier_index: int) -> float:
    tiles = scenario.location_tiles[location_id]
    if len(tiles) == 0:
        return 0.0
    total_ue = sum(int(scenario.tiles[z].ue_count) for z in tiles)
    if total_ue == 0:
        return sum(float(tensor.gains[location_id, z, carrier_index]) for z in tiles) / len(tiles)
    return sum(
        scenario.tiles[z].ue_count / total_ue * float(tensor.gains[location_id, z, carrier_index])
        for z in tiles
    )


def naive_carrier_payoff(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                         team_id: int, carrier_index: int, params: GameParams, prices: PriceTable,
                         prior_served: np.ndarray | None = None) -> tuple[float, float, float, float]:
    """Single-carrier payoff recomputed with explicit loops.

    Returns (payoff, utility, cost, e_t) with the same semantics the engine
    uses inside a per-carrier game: utility and priced power on this carrier
    only, coverage penalty skipping tiles in prior_served.
    """
    e_team = scenario.team_ue_count(team_id)
    if e_team == 0:
        raise ValueError("team has no UEs")
    frac = profile.fractions
    noise = params.noise_w(carrier_index)
    utility = 0.0
    e_t = 0.0
    power_cost = 0.0
    for l in scenario.team_locations[team_id]:
        l = int(l)
        rad_l = frac[l, carrier_index] * scenario.locations[l].max_power_w
        for z in scenario.location_tiles[l]:
            z = int(z)
            interf = 0.0
            for other in scenario.locations:
                if other.id == l:
                    continue
                interf += (frac[other.id, carrier_index] * other.max_power_w
                           * float(tensor.gains[other.id, z, carrier_index]))
            gamma = rad_l * float(tensor.gains[l, z, carrier_index]) / (noise + interf)
            weight = scenario.tiles[z].ue_count / e_team
            utility += weight * _sigmoid(params.alpha * (gamma - params.beta))
            if gamma <= params.gamma_min and (prior_served is None or not prior_served[z]):
                e_t += weight
        abar = naive_average_attenuation(scenario, tensor, l, carrier_index)
        power_cost += float(prices.values[l, carrier_index]) * abar * rad_l
    cost = power_cost + params.delta * e_t
    return utility - cost, utility, cost, e_t


def naive_full_payoff(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                      team_id: int, params: GameParams, prices: PriceTable,
                      carrier_indices: Sequence[int] | None = None) -> float:
    """All-carrier payoff with the coverage penalty on the best SINR per tile."""
    e_team = scenario.team_ue_count(team_id)
    if e_team == 0:
        raise ValueError("team has no UEs")
    if carrier_indices is None:
        carrier_indices = range(len(scenario.carriers))
    frac = profile.fractions
    utility = 0.0
    power_cost = 0.0
    e_t = 0.0
    for l in scenario.team_locations[team_id]:
        l = int(l)
        rad_row = [frac[l, c] * scenario.locations[l].max_power_w for c in carrier_indices]
        for z in scenario.location_tiles[l]:
            z = int(z)
            best_gamma = 0.0
            weight = scenario.tiles[z].ue_count / e_team
            for ci, c in enumerate(carrier_indices):
                interf = 0.0
                for other in scenario.locations:
                    if other.id == l:
                        continue
                    interf += (frac[other.id, c] * other.max_power_w
                               * float(tensor.gains[other.id, z, c]))
                gamma = rad_row[ci] * float(tensor.gains[l, z, c]) / (params.noise_w(c) + interf)
                utility += weight * _sigmoid(params.alpha * (gamma - params.beta))
                best_gamma = max(best_gamma, gamma)
            if best_gamma <= params.gamma_min:
                e_t += weight
        for ci, c in enumerate(carrier_indices):
            abar = naive_average_attenuation(scenario, tensor, l, c)
            power_cost += float(prices.values[l, c]) * abar * rad_row[ci]
    return utility - power_cost - params.delta * e_t


# -- equilibrium certificates ---------------------------------------------


@dataclass(frozen=True)
class DeviationViolation:
    team_id: int
    carrier_index: int
    payoff_current: float
    payoff_deviation: float
    deviation: tuple[float, ...]


def ne_certificate(scenario: Scenario, tensor: AttenuationTensor, outcome: GameOutcome,
                   params: GameParams) -> list[DeviationViolation]:
    """Exhaustive per-carrier unilateral deviation check of a game outcome.

    Each settled per-carrier game is re-audited with the independently coded
    payoff evaluator: no team may improve its per-carrier payoff (under the
    served-tile exemptions that game was played with) beyond the tie
    tolerance by changing its power column on that carrier.
    """
    subs = outcome.per_carrier if outcome.per_carrier else (outcome,)
    violations: list[DeviationViolation] = []
    levels = scenario.power_levels.fractions
    for sub in subs:
        ci = sub.carrier_index
        prior = sub.prior_served
        for team in scenario.teams:
            if scenario.team_ue_count(team.id) == 0:
                continue
            locs = scenario.team_locations[team.id]
            current, _, _, _ = naive_carrier_payoff(
                scenario, tensor, outcome.profile, team.id, ci, params, sub.prices, prior)
            tol = params.tie_tolerance * max(1.0, abs(current))
            for cand in itertools.product(levels, repeat=len(locs)):
                dev_profile = outcome.profile.with_team_column(scenario, team.id, ci, np.array(cand))
                w_dev, _, _, _ = naive_carrier_payoff(
                    scenario, tensor, dev_profile, team.id, ci, params, sub.prices, prior)
                if w_dev > current + tol:
                    violations.append(DeviationViolation(team.id, ci, current, w_dev, cand))
    return violations


@dataclass(frozen=True)
class NEReport:
    ne_profiles: tuple[StrategyProfile, ...]
    ne_welfares: tuple[float, ...]
    best_welfare: float | None
    bps_profile: StrategyProfile | None
    bps_welfare: float | None
    bps_converged: bool | None
    bps_is_ne: bool | None
    bps_welfare_is_max: bool | None
    joint_profiles_scanned: int

    @property
    def n_equilibria(self) -> int:
        return len(self.ne_profiles)


def enumerate_pure_ne(scenario: Scenario, tensor: AttenuationTensor, params: GameParams,
                      prices: PriceTable, carrier_indices: Sequence[int] | None = None,
                      bps_outcome: GameOutcome | None = None,
                      max_joint: int = 10_000_000) -> NEReport:
    """Exhaustive scan for pure Nash equilibria of the full (joint) game.

    A profile is an NE when no team can improve its all-carrier payoff by
    any joint change of its own matrix over the carriers in scope. Teams
    without UEs are pinned to zero power.
    """
    if carrier_indices is None:
        carrier_indices = tuple(range(len(scenario.carriers)))
    carrier_indices = tuple(carrier_indices)
    levels = scenario.power_levels.fractions
    active = [t.id for t in scenario.teams if scenario.team_ue_count(t.id) > 0]

    spaces: dict[int, list[np.ndarray]] = {}
    for t in active:
        n_slots = len(scenario.team_locations[t]) * len(carrier_indices)
        if len(levels) ** n_slots > max_joint:
            raise TooLarge("per-team strategy space exceeds the enumeration budget")
        spaces[t] = [np.array(c).reshape(len(scenario.team_locations[t]), len(carrier_indices))
                     for c in itertools.product(levels, repeat=n_slots)]
    total = 1
    for t in active:
        total *= len(spaces[t])
        if total > max_joint:
            raise TooLarge(f"joint strategy count exceeds {max_joint}")

    def build_profile(indices: tuple[int, ...]) -> StrategyProfile:
        frac = np.zeros((len(scenario.locations), len(scenario.carriers)))
        for t, idx in zip(active, indices):
            frac[np.ix_(scenario.team_locations[t], carrier_indices)] = spaces[t][idx]
        return StrategyProfile(frac)

    shape = tuple(len(spaces[t]) for t in active)
    payoff = np.empty(shape + (len(active),))
    for indices in np.ndindex(shape):
        profile = build_profile(indices)
        for k, t in enumerate(active):
            payoff[indices + (k,)] = naive_full_payoff(
                scenario, tensor, profile, t, params, prices, carrier_indices)

    ne_indices: list[tuple[int, ...]] = []
    for indices in np.ndindex(shape):
        is_ne = True
        for k, t in enumerate(active):
            w_cur = payoff[indices + (k,)]
            tol = params.tie_tolerance * max(1.0, abs(w_cur))
            others = list(indices)
            column = payoff[tuple(others[:k]) + (slice(None),) + tuple(others[k + 1:]) + (k,)]
            if column.max() > w_cur + tol:
                is_ne = False
                break
        if is_ne:
            ne_indices.append(indices)

    ne_profiles = tuple(build_profile(i) for i in ne_indices)
    ne_welfares = tuple(float(payoff[i + (slice(None),)].sum()) for i in ne_indices)
    best_welfare = max(ne_welfares) if ne_welfares else None

    bps_profile = bps_welfare = bps_is_ne = bps_welfare_is_max = bps_converged = None
    if bps_outcome is not None:
        bps_profile = bps_outcome.profile
        bps_converged = bps_outcome.converged
        bps_welfare = sum(
            naive_full_payoff(scenario, tensor, bps_profile, t, params, prices, carrier_indices)
            for t in active
        )
        bps_is_ne = any(
            np.array_equal(bps_profile.fractions, p.fractions) for p in ne_profiles
        )
        if best_welfare is not None:
            tol = params.tie_tolerance * max(1.0, abs(best_welfare))
            bps_welfare_is_max = bps_welfare >= best_welfare - tol

    return NEReport(
        ne_profiles=ne_profiles, ne_welfares=ne_welfares, best_welfare=best_welfare,
        bps_profile=bps_profile, bps_welfare=bps_welfare, bps_converged=bps_converged,
        bps_is_ne=bps_is_ne, bps_welfare_is_max=bps_welfare_is_max,
        joint_profiles_scanned=total,
    )


def welfare(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
            params: GameParams, prices: PriceTable) -> float:
    """Social welfare: summed payoffs of the populated teams."""
    from .game import team_payoff

    return sum(
        team_payoff(scenario, tensor, profile, t.id, params, prices)
        for t in scenario.teams if scenario.team_ue_count(t.id) > 0
    )


# -- strategic substitutes monotonicity -----------------------------------


@dataclass(frozen=True)
class MonotonicityViolation:
    pair_index: int
    norm_low: float
    norm_high: float
    reply_norm_low: float
    reply_norm_high: float


@dataclass(frozen=True)
class MonotonicityReport:
    pairs_checked: int
    pairs_skipped: int
    violations: tuple[MonotonicityViolation, ...]


def _orchestrated_reply(scenario: Scenario, tensor: AttenuationTensor, base: StrategyProfile,
                        team_id: int, params: GameParams, prices: PriceTable) -> np.ndarray:
    """Team reply matrix against fixed opponents, carriers high to low."""
    from .game import best_reply, served_tiles

    profile = base
    served = np.zeros(len(scenario.tiles), dtype=bool)
    for ci in scenario.carrier_order_desc_freq:
        reply = best_reply(scenario, tensor, profile, team_id, ci, params, prices,
                           prior_served=served)
        profile = profile.with_team_column(scenario, team_id, ci, reply.column)
        served |= served_tiles(scenario, tensor, profile, params, ci)
    return profile.team_matrix(scenario, team_id)


def check_strategic_substitutes(scenario: Scenario, tensor: AttenuationTensor, params: GameParams,
                                sample_count: int, seed: int, team_id: int = 0,
                                prices: PriceTable | None = None,
                                past_stagnation_only: bool = True) -> MonotonicityReport:
    """Sampled monotonicity of the team best reply in the interference matrix.

    Draws opponent-profile pairs with element-wise ordered induced
    interference, keeps those whose Frobenius norms differ, and compares the
    norms of the team's reply matrices. With positive prices the reply norm
    should not grow with interference once every tile is past the stagnation
    region (below it the reply rises with interference, so such pairs are
    skipped by default); violations are reported, not raised.
    """
    from .game import compute_price_table, interference as eq1

    if prices is None:
        prices = compute_price_table(scenario, tensor, params)
    if (prices.for_team(scenario, team_id) <= 0).any():
        raise ValueError("substitutes check requires strictly positive prices")

    rng = np.random.default_rng(seed)
    levels = np.asarray(scenario.power_levels.fractions)
    other_locs = np.flatnonzero(scenario.loc_team != team_id)
    tiles = scenario.team_tiles[team_id]
    n_car = len(scenario.carriers)
    r_star = stagnation_ratio(params.alpha, params.beta)
    serving_rows = scenario.tile_serving[tiles]

    def interference_matrix(profile: StrategyProfile) -> np.ndarray:
        return np.array([
            [eq1(scenario, tensor, profile, team_id, int(z), c) for c in range(n_car)]
            for z in tiles
        ])

    def past_stagnation(i_mat: np.ndarray) -> bool:
        for zi in range(len(tiles)):
            for c in range(n_car):
                xi = float(prices.values[serving_rows[zi], c])
                if 4.0 * xi * (i_mat[zi, c] + params.noise_w(c)) < r_star * params.alpha:
                    return False
        return True

    # bias the low draw upward: low-interference pairs sit in the rising
    # (complements-like) region and would all be skipped anyway
    lo_floor = len(levels) // 2

    checked = skipped = 0
    violations: list[MonotonicityViolation] = []
    for i in range(sample_count):
        low_idx = rng.integers(lo_floor, len(levels), size=(len(other_locs), n_car))
        hi_idx = np.array([[rng.integers(l, len(levels)) for l in row] for row in low_idx])
        frac_lo = np.zeros((len(scenario.locations), n_car))
        frac_hi = np.zeros((len(scenario.locations), n_car))
        frac_lo[other_locs, :] = levels[low_idx]
        frac_hi[other_locs, :] = levels[hi_idx]
        p_lo = StrategyProfile(frac_lo)
        p_hi = StrategyProfile(frac_hi)

        i_lo = interference_matrix(p_lo)
        i_hi = interference_matrix(p_hi)
        n_lo = float(np.linalg.norm(i_lo))
        n_hi = float(np.linalg.norm(i_hi))
        if not (n_hi > n_lo and (i_hi >= i_lo - 1e-15).all()):
            skipped += 1
            continue
        if past_stagnation_only and not past_stagnation(i_lo):
            skipped += 1
            continue
        checked += 1
        r_lo = _orchestrated_reply(scenario, tensor, p_lo, team_id, params, prices)
        r_hi = _orchestrated_reply(scenario, tensor, p_hi, team_id, params, prices)
        rn_lo = float(np.linalg.norm(r_lo))
        rn_hi = float(np.linalg.norm(r_hi))
        if rn_hi > rn_lo + 1e-12:
            violations.append(MonotonicityViolation(i, n_lo, n_hi, rn_lo, rn_hi))

    return MonotonicityReport(pairs_checked=checked, pairs_skipped=skipped,
                              violations=tuple(violations))


# -- CSV -----------------------------------------------------------------


def profile_hash(profile: StrategyProfile) -> str:
    return hashlib.sha256(np.ascontiguousarray(profile.fractions).tobytes()).hexdigest()[:16]


def export_ne_report(report: NEReport, scenario: Scenario, out_dir: str | Path) -> None:
    from .game import write_strategy_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ne_report.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ne_index", "welfare", "is_bps_outcome", "profile_hash"])
        for i, (p, wf) in enumerate(zip(report.ne_profiles, report.ne_welfares)):
            is_bps = (report.bps_profile is not None
                      and np.array_equal(p.fractions, report.bps_profile.fractions))
            w.writerow([i, "%.17g" % wf, int(is_bps), profile_hash(p)])
    for i, p in enumerate(report.ne_profiles):
        write_strategy_csv(p, scenario, out / f"ne_{i:03d}_strategy.csv")
