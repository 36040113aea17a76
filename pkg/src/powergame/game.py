"""Team-based downlink power-setting game.

Each team (one macro plus the micros in its cell) picks a matrix of power
fractions, one entry per (location, carrier). The payoff is a sigmoid
utility of per-tile SINR minus a priced-power cost and a coverage penalty.
Teams play sequential best replies per carrier, from the all-zero profile,
carriers in descending frequency order.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .propagation import AttenuationTensor, average_attenuation_matrix
from .scenario import Scenario

try:  # fused candidate-evaluation kernel; numpy path below stays equivalent
    import numba

    @numba.njit(parallel=True, cache=True)
    def _payoff_kernel(cand_w, team_gain, g_serving, j_z, i_ext, weights, penalty_weights,
                       noise, alpha, beta, gamma_min, delta, price_vec,
                       out_payoff, out_util, out_e):  # pragma: no cover - exercised via best_reply
        n_cand, n_loc = cand_w.shape
        n_tile = team_gain.shape[1]
        for k in numba.prange(n_cand):
            util = 0.0
            efrac = 0.0
            for z in range(n_tile):
                rx = 0.0
                for l in range(n_loc):
                    rx += cand_w[k, l] * team_gain[l, z]
                sig = cand_w[k, j_z[z]] * g_serving[z]
                gamma = sig / (noise + i_ext[z] + rx - sig)
                x = alpha * (gamma - beta)
                if x >= 0.0:
                    s = 1.0 / (1.0 + math.exp(-x))
                else:
                    ex = math.exp(x)
                    s = ex / (1.0 + ex)
                util += weights[z] * s
                if gamma <= gamma_min:
                    efrac += penalty_weights[z]
            cost = 0.0
            for l in range(n_loc):
                cost += cand_w[k, l] * price_vec[l]
            out_payoff[k] = util - cost - delta * efrac
            out_util[k] = util
            out_e[k] = efrac

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

# Thermal noise at -174 dBm/Hz plus a 9 dB receiver noise figure.
def thermal_noise_w(bandwidth_hz: float, noise_figure_db: float = 9.0) -> float:
    return 10.0 ** ((-174.0 + noise_figure_db - 30.0) / 10.0) * bandwidth_hz


DEFAULT_NOISE_W_10MHZ = thermal_noise_w(10e6)


class NoUsers(ValueError):
    """Team has no UEs; the caller must skip it."""


@dataclass(frozen=True)
class GameParams:
    alpha: float = 1.0                 # sigmoid steepness
    beta: float = 1.0                  # sigmoid center, linear SINR (1 = 0 dB)
    delta: float = 0.6                 # price per unserved-UE fraction
    k: float = 0.25                    # price weight, must stay <= 1/4
    gamma_min: float = 0.1             # linear SINR serving threshold (-10 dB)
    noise_power_w: float | tuple[float, ...] = DEFAULT_NOISE_W_10MHZ
    tie_tolerance: float = 1e-9        # relative payoff tolerance for ties
    max_rounds: int = 25
    price_update_per_round: bool = False

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not (0 < self.k <= 0.25):
            raise ValueError("k must lie in (0, 1/4]")
        if self.gamma_min <= 0:
            raise ValueError("gamma_min must be > 0 (linear units)")
        noise = self.noise_power_w if isinstance(self.noise_power_w, tuple) else (self.noise_power_w,)
        if any(n <= 0 for n in noise):
            raise ValueError("noise power must be > 0")
        if self.tie_tolerance < 0:
            raise ValueError("tie tolerance must be >= 0")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")

    def noise_w(self, carrier_index: int) -> float:
        if isinstance(self.noise_power_w, tuple):
            return self.noise_power_w[carrier_index]
        return self.noise_power_w


@dataclass(frozen=True)
class PriceTable:
    """Nonnegative prices per received power unit, indexed (location, carrier)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)) or (v < 0).any():
            raise ValueError("prices must be finite and >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def for_team(self, scenario: Scenario, team_id: int) -> np.ndarray:
        return self.values[scenario.team_locations[team_id], :]

    @staticmethod
    def zeros(scenario: Scenario) -> "PriceTable":
        return PriceTable(np.zeros((len(scenario.locations), len(scenario.carriers))))


@dataclass(frozen=True)
class StrategyProfile:
    """Power fractions for every (location, carrier), all teams stacked."""

    fractions: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        if f.ndim != 2:
            raise ValueError("fractions must be a (location, carrier) array")
        if (f < 0).any() or (f > 1).any():
            raise ValueError("fractions must lie in [0, 1]")
        f.setflags(write=False)
        object.__setattr__(self, "fractions", f)

    def radiated_w(self, scenario: Scenario) -> np.ndarray:
        return self.fractions * scenario.loc_max_w[:, None]

    def team_matrix(self, scenario: Scenario, team_id: int) -> np.ndarray:
        return self.fractions[scenario.team_locations[team_id], :]

    def with_team_column(self, scenario: Scenario, team_id: int, carrier_index: int,
                         column: np.ndarray) -> "StrategyProfile":
        f = self.fractions.copy()
        f[scenario.team_locations[team_id], carrier_index] = column
        return StrategyProfile(f)

    def total_watts(self, scenario: Scenario) -> float:
        return float(self.radiated_w(scenario).sum())

    def validate_levels(self, scenario: Scenario) -> bool:
        levels = np.asarray(scenario.power_levels.fractions)
        return bool(np.all(np.isclose(self.fractions[..., None], levels[None, None, :], atol=1e-12).any(-1)))

    @staticmethod
    def zeros(scenario: Scenario) -> "StrategyProfile":
        return StrategyProfile(np.zeros((len(scenario.locations), len(scenario.carriers))))

    @staticmethod
    def uniform(scenario: Scenario, fraction: float) -> "StrategyProfile":
        return StrategyProfile(np.full((len(scenario.locations), len(scenario.carriers)), float(fraction)))

    @staticmethod
    def min_power(scenario: Scenario) -> "StrategyProfile":
        return StrategyProfile.uniform(scenario, scenario.power_levels.min_positive)

    @staticmethod
    def max_power(scenario: Scenario) -> "StrategyProfile":
        return StrategyProfile.uniform(scenario, scenario.power_levels.fractions[-1])


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    round: int
    team_id: int
    carrier_id: int
    payoff: float
    utility: float
    cost: float
    e_t: float
    total_watts: float
    evaluations: int
    changed: bool


@dataclass(frozen=True)
class GameOutcome:
    profile: StrategyProfile
    converged: bool
    iterations: int
    rounds: int
    trace: tuple[TraceRow, ...]
    payoff_evaluations: int
    prices: PriceTable
    carrier_index: int | None = None
    prior_served: np.ndarray | None = None
    per_carrier: tuple["GameOutcome", ...] = ()


# -- Eq.-level operations ------------------------------------------------


def interference(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                 team_id: int, tile_id: int, carrier_index: int) -> float:
    """External interference at a tile: all other teams' received power."""
    if tile_id not in scenario.team_tiles[team_id]:
        raise IndexError(f"tile {tile_id} is not served by team {team_id}")
    rad = profile.radiated_w(scenario)[:, carrier_index]
    outside = scenario.loc_team != team_id
    return float(rad[outside] @ tensor.gains[outside, tile_id, carrier_index])


def sinr(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
         team_id: int, location_id: int, tile_id: int, carrier_index: int,
         params: GameParams) -> float:
    """Per-tile SINR: serving power over noise plus all other received power.

    The denominator groups noise, intra-team interference (other locations
    of the same team) and external interference; summing received power from
    every non-serving location covers both interference terms.
    """
    if scenario.tiles[tile_id].serving_location_id != location_id:
        raise IndexError(f"tile {tile_id} is not served by location {location_id}")
    if scenario.locations[location_id].team_id != team_id:
        raise IndexError(f"location {location_id} is not in team {team_id}")
    rad = profile.radiated_w(scenario)[:, carrier_index]
    rx = rad * tensor.gains[:, tile_id, carrier_index]
    signal = rx[location_id]
    return float(signal / (params.noise_w(carrier_index) + rx.sum() - signal))


def tile_sinr_matrix(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                     params: GameParams) -> np.ndarray:
    """SINR of every tile on every carrier under its serving location."""
    rad = profile.radiated_w(scenario)  # (L, C)
    n_car = len(scenario.carriers)
    out = np.empty((len(scenario.tiles), n_car))
    serving = scenario.tile_serving
    for c in range(n_car):
        rx = tensor.gains[:, :, c] * rad[:, c][:, None]  # (L, Z)
        total = rx.sum(axis=0)
        signal = rx[serving, np.arange(len(scenario.tiles))]
        out[:, c] = signal / (params.noise_w(c) + total - signal)
    return out


def team_utility(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                 team_id: int, params: GameParams) -> float:
    """Sigmoid utility summed over the team's tiles and all carriers."""
    e_t = scenario.team_ue_count(team_id)
    if e_t == 0:
        raise NoUsers(f"team {team_id} has no UEs")
    tiles = scenario.team_tiles[team_id]
    weights = scenario.tile_ue[tiles] / e_t
    gammas = _team_tile_sinr(scenario, tensor, profile, team_id, params)  # (|Zt|, C)
    return float((weights[:, None] * expit(params.alpha * (gammas - params.beta))).sum())


def _team_tile_sinr(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                    team_id: int, params: GameParams) -> np.ndarray:
    tiles = scenario.team_tiles[team_id]
    serving = scenario.tile_serving[tiles]
    rad = profile.radiated_w(scenario)
    out = np.empty((len(tiles), len(scenario.carriers)))
    for c in range(len(scenario.carriers)):
        rx = tensor.gains[:, tiles, c] * rad[:, c][:, None]
        total = rx.sum(axis=0)
        signal = rx[serving, np.arange(len(tiles))]
        out[:, c] = signal / (params.noise_w(c) + total - signal)
    return out


def team_unserved_fraction(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                           team_id: int, params: GameParams,
                           carrier_indices: Sequence[int] | None = None) -> float:
    """Fraction of team UEs whose best SINR over the carriers is <= gamma_min."""
    e_t = scenario.team_ue_count(team_id)
    if e_t == 0:
        return 0.0
    tiles = scenario.team_tiles[team_id]
    weights = scenario.tile_ue[tiles] / e_t
    gammas = _team_tile_sinr(scenario, tensor, profile, team_id, params)
    if carrier_indices is not None:
        gammas = gammas[:, list(carrier_indices)]
    unserved = gammas.max(axis=1) <= params.gamma_min
    return float(weights[unserved].sum())


def team_cost(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
              team_id: int, params: GameParams, prices: PriceTable,
              abar: np.ndarray | None = None) -> tuple[float, float]:
    """Priced-power cost plus the coverage penalty; returns (cost, e_t)."""
    if abar is None:
        abar = average_attenuation_matrix(tensor, scenario)
    locs = scenario.team_locations[team_id]
    rad = profile.radiated_w(scenario)[locs, :]
    power_cost = float((prices.values[locs, :] * abar[locs, :] * rad).sum())
    e_t = team_unserved_fraction(scenario, tensor, profile, team_id, params)
    return power_cost + params.delta * e_t, e_t


def team_payoff(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                team_id: int, params: GameParams, prices: PriceTable,
                abar: np.ndarray | None = None) -> float:
    """Utility minus cost for the full (all carriers) strategy profile."""
    u = team_utility(scenario, tensor, profile, team_id, params)
    cost, _ = team_cost(scenario, tensor, profile, team_id, params, prices, abar)
    return u - cost


# -- price setting -------------------------------------------------------


def update_prices(scenario: Scenario, tensor: AttenuationTensor, reference_profile: StrategyProfile,
                  team_id: int, carrier_index: int, params: GameParams) -> np.ndarray:
    """Per-location prices k*alpha / mean interference under a reference profile.

    The mean interference at a location is the UE-weighted external plus
    intra-team interference over its served tiles. An interference-free
    location falls back to k*alpha / (4 N), saturating the price bound at
    the noise floor.
    """
    locs = scenario.team_locations[team_id]
    rad = reference_profile.radiated_w(scenario)[:, carrier_index]
    noise = params.noise_w(carrier_index)
    out = np.empty(len(locs))
    for i, l in enumerate(locs):
        tiles = scenario.location_tiles[l]
        if len(tiles) == 0:
            out[i] = params.k * params.alpha / (4.0 * noise)
            continue
        rx = rad[:, None] * tensor.gains[:, tiles, carrier_index]  # (L_tot, |Zl|)
        combined = rx.sum(axis=0) - rx[l, :]  # external + intra-team, serving excluded
        ue = scenario.tile_ue[tiles].astype(float)
        mean_i = float(np.dot(ue / ue.sum(), combined)) if ue.sum() > 0 else float(combined.mean())
        out[i] = params.k * params.alpha / mean_i if mean_i > 0 else params.k * params.alpha / (4.0 * noise)
    return out


def compute_price_table(scenario: Scenario, tensor: AttenuationTensor, params: GameParams,
                        reference_profile: StrategyProfile | None = None) -> PriceTable:
    """Alg.-1 prices for all teams and carriers (min-power reference by default)."""
    if reference_profile is None:
        reference_profile = StrategyProfile.min_power(scenario)
    values = np.zeros((len(scenario.locations), len(scenario.carriers)))
    for team in scenario.teams:
        for c in range(len(scenario.carriers)):
            values[scenario.team_locations[team.id], c] = update_prices(
                scenario, tensor, reference_profile, team.id, c, params
            )
    return PriceTable(values)


# -- best reply ----------------------------------------------------------

_CANDIDATE_CACHE: dict[tuple[tuple[float, ...], int], np.ndarray] = {}


def _candidate_columns(levels: tuple[float, ...], n_locations: int) -> np.ndarray:
    key = (levels, n_locations)
    cached = _CANDIDATE_CACHE.get(key)
    if cached is None:
        cached = np.array(list(itertools.product(levels, repeat=n_locations)))
        cached.setflags(write=False)
        _CANDIDATE_CACHE[key] = cached
    return cached


def strategy_preference_key(scenario: Scenario, team_id: int, matrix: np.ndarray) -> tuple:
    """Total-order key over team strategy matrices; lower is preferred.

    Orders by (1) total radiated watts, (2) power placed on micros close to
    the macro, (3) power placed on high-frequency carriers, then (4) the
    flattened matrix itself, which makes the order total.
    """
    locs = scenario.team_locations[team_id]
    max_w = scenario.loc_max_w[locs]
    watts = matrix * max_w[:, None]
    total = float(watts.sum())

    macro_pos = np.asarray(scenario.locations[scenario.teams[team_id].leader_location_id].position)
    micro_rows = [i for i, l in enumerate(locs) if not scenario.loc_is_macro[l]]
    micro_rows.sort(key=lambda i: float(np.hypot(*(scenario.loc_positions[locs[i]] - macro_pos))))
    micro_pref = tuple(-float(matrix[i, :].sum()) for i in micro_rows)

    carrier_pref = tuple(-float(watts[:, c].sum()) for c in scenario.carrier_order_desc_freq)
    return (total, micro_pref, carrier_pref, tuple(matrix.reshape(-1)))


@dataclass(frozen=True)
class BestReplyResult:
    column: np.ndarray          # power fractions per team location
    payoff: float               # per-carrier payoff of the winning candidate
    utility: float
    cost: float
    e_t: float
    evaluations: int


def best_reply(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
               team_id: int, carrier_index: int, params: GameParams, prices: PriceTable,
               abar: np.ndarray | None = None, prior_served: np.ndarray | None = None,
               _chunk_cells: int = 2_000_000) -> BestReplyResult:
    """Exhaustive best reply of one team on one carrier.

    Evaluates all |P|^L candidate columns against the other teams' current
    strategies (the team's other carriers stay fixed and do not enter the
    per-carrier payoff). Tiles already served on previously settled carriers
    are exempt from the coverage penalty via `prior_served`.
    """
    e_team = scenario.team_ue_count(team_id)
    if e_team == 0:
        raise NoUsers(f"team {team_id} has no UEs")
    if abar is None:
        abar = average_attenuation_matrix(tensor, scenario)

    locs = scenario.team_locations[team_id]
    tiles = scenario.team_tiles[team_id]
    n_loc = len(locs)
    weights = scenario.tile_ue[tiles] / e_team  # E_z / E_t
    serving = scenario.tile_serving[tiles]
    loc_row = {int(l): i for i, l in enumerate(locs)}
    j_z = np.array([loc_row[int(l)] for l in serving], dtype=np.int64)

    gains_all = tensor.gains[:, tiles, carrier_index]      # (L_tot, |Zt|)
    team_gain = gains_all[locs, :]                         # (L, |Zt|)
    g_serving = team_gain[j_z, np.arange(len(tiles))]

    rad_c = profile.radiated_w(scenario)[:, carrier_index]
    i_ext = rad_c @ gains_all - rad_c[locs] @ team_gain    # other teams only

    max_w = scenario.loc_max_w[locs]
    noise = params.noise_w(carrier_index)
    price_vec = prices.values[locs, carrier_index] * abar[locs, carrier_index]
    penalty_active = (
        np.ones(len(tiles), dtype=bool) if prior_served is None else ~prior_served[tiles]
    )
    penalty_weights = weights * penalty_active

    candidates = _candidate_columns(scenario.power_levels.fractions, n_loc)
    cand_w = np.ascontiguousarray(candidates * max_w[None, :])
    n_cand = len(candidates)
    payoffs = np.empty(n_cand)
    utilities = np.empty(n_cand)
    unserved = np.empty(n_cand)

    if _HAVE_NUMBA:
        _payoff_kernel(cand_w, np.ascontiguousarray(team_gain), g_serving, j_z,
                       np.ascontiguousarray(i_ext), weights, penalty_weights,
                       noise, params.alpha, params.beta, params.gamma_min, params.delta,
                       np.ascontiguousarray(price_vec), payoffs, utilities, unserved)
    else:
        chunk = max(1, _chunk_cells // max(len(tiles), 1))
        for start in range(0, n_cand, chunk):
            blk = cand_w[start:start + chunk]
            team_rx = blk @ team_gain                      # (B, |Zt|)
            signal = blk[:, j_z] * g_serving[None, :]
            gamma = signal / (noise + i_ext[None, :] + team_rx - signal)
            util = expit(params.alpha * (gamma - params.beta)) @ weights
            e_frac = (gamma <= params.gamma_min) @ penalty_weights
            payoffs[start:start + chunk] = util - blk @ price_vec - params.delta * e_frac
            utilities[start:start + chunk] = util
            unserved[start:start + chunk] = e_frac

    w_max = payoffs.max()
    tol = params.tie_tolerance * max(1.0, abs(w_max))
    tied = np.flatnonzero(payoffs >= w_max - tol)

    current = profile.team_matrix(scenario, team_id)
    best_idx = -1
    best_key = None
    for idx in tied:
        m = current.copy()
        m[:, carrier_index] = candidates[idx]
        key = strategy_preference_key(scenario, team_id, m)
        if best_key is None or key < best_key:
            best_key = key
            best_idx = int(idx)

    return BestReplyResult(
        column=candidates[best_idx].copy(),
        payoff=float(payoffs[best_idx]),
        utility=float(utilities[best_idx]),
        cost=float(cand_w[best_idx] @ price_vec + params.delta * unserved[best_idx]),
        e_t=float(unserved[best_idx]),
        evaluations=n_cand,
    )


# -- game loops ----------------------------------------------------------


def run_single_carrier_game(scenario: Scenario, tensor: AttenuationTensor, carrier_index: int,
                            params: GameParams, team_order: Sequence[int] | None = None,
                            prices: PriceTable | None = None,
                            base_profile: StrategyProfile | None = None,
                            prior_served: np.ndarray | None = None) -> GameOutcome:
    """Sequential best replies on one carrier, from zero power, to a fixed point.

    Prices default to the Alg.-1 values computed once from the min-power
    reference. Teams without UEs keep zero power and are skipped.
    """
    if team_order is None:
        team_order = [t.id for t in scenario.teams]
    else:
        if sorted(team_order) != sorted(t.id for t in scenario.teams):
            raise ValueError("team_order must be a permutation of team ids")

    profile = base_profile if base_profile is not None else StrategyProfile.zeros(scenario)
    zero_col = np.zeros(scenario.locations_per_team)
    for t in scenario.teams:
        profile = profile.with_team_column(scenario, t.id, carrier_index, zero_col)

    if prices is None:
        prices = compute_price_table(scenario, tensor, params)
    abar = average_attenuation_matrix(tensor, scenario)

    trace: list[TraceRow] = []
    iterations = 0
    evaluations = 0
    converged = False
    rounds = 0
    for _round in range(params.max_rounds):
        if params.price_update_per_round and _round > 0:
            prices = compute_price_table(scenario, tensor, params, reference_profile=profile)
        changed = False
        for t in team_order:
            if scenario.team_ue_count(t) == 0:
                continue
            reply = best_reply(scenario, tensor, profile, t, carrier_index, params, prices,
                               abar=abar, prior_served=prior_served)
            iterations += 1
            evaluations += reply.evaluations
            old = profile.fractions[scenario.team_locations[t], carrier_index]
            this_changed = not np.array_equal(old, reply.column)
            if this_changed:
                profile = profile.with_team_column(scenario, t, carrier_index, reply.column)
                changed = True
            trace.append(TraceRow(
                iteration=iterations, round=_round + 1, team_id=t,
                carrier_id=scenario.carriers[carrier_index].id,
                payoff=reply.payoff, utility=reply.utility, cost=reply.cost, e_t=reply.e_t,
                total_watts=profile.total_watts(scenario),
                evaluations=reply.evaluations, changed=this_changed,
            ))
        rounds += 1
        if not changed:
            converged = True
            break

    return GameOutcome(
        profile=profile, converged=converged, iterations=iterations, rounds=rounds,
        trace=tuple(trace), payoff_evaluations=evaluations, prices=prices,
        carrier_index=carrier_index,
        prior_served=None if prior_served is None else prior_served.copy(),
    )


def served_tiles(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                 params: GameParams, carrier_index: int) -> np.ndarray:
    """Boolean per-tile flags: SINR strictly above gamma_min on this carrier."""
    gam = tile_sinr_matrix(scenario, tensor, profile, params)[:, carrier_index]
    return gam > params.gamma_min


def run_multi_carrier_game(scenario: Scenario, tensor: AttenuationTensor, params: GameParams,
                           team_order: Sequence[int] | None = None,
                           prices: PriceTable | None = None) -> GameOutcome:
    """Per-carrier games in descending frequency order, settled carriers frozen.

    When a later (lower-frequency) carrier is played, tiles already above
    gamma_min on a settled carrier are exempt from the coverage penalty.
    """
    if prices is None:
        prices = compute_price_table(scenario, tensor, params)

    profile = StrategyProfile.zeros(scenario)
    served = np.zeros(len(scenario.tiles), dtype=bool)
    subs: list[GameOutcome] = []
    trace: list[TraceRow] = []
    iterations = 0
    evaluations = 0
    for ci in scenario.carrier_order_desc_freq:
        sub = run_single_carrier_game(
            scenario, tensor, ci, params, team_order=team_order, prices=prices,
            base_profile=profile, prior_served=served.copy(),
        )
        subs.append(sub)
        profile = sub.profile
        served |= served_tiles(scenario, tensor, profile, params, ci)
        for row in sub.trace:
            trace.append(replace(row, iteration=iterations + row.iteration))
        iterations += sub.iterations
        evaluations += sub.payoff_evaluations

    return GameOutcome(
        profile=profile,
        converged=all(s.converged for s in subs),
        iterations=iterations,
        rounds=max(s.rounds for s in subs),
        trace=tuple(trace),
        payoff_evaluations=evaluations,
        prices=prices,
        per_carrier=tuple(subs),
    )


# -- CSV -----------------------------------------------------------------

_FLOAT_FMT = "%.17g"


def write_strategy_csv(profile: StrategyProfile, scenario: Scenario, path: str | Path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["team_id", "location_id", "carrier_id", "fraction", "watts"])
        rad = profile.radiated_w(scenario)
        for loc in scenario.locations:
            for ci, carrier in enumerate(scenario.carriers):
                w.writerow([loc.team_id, loc.id, carrier.id,
                            _FLOAT_FMT % profile.fractions[loc.id, ci],
                            _FLOAT_FMT % rad[loc.id, ci]])


def read_strategy_csv(path: str | Path, scenario: Scenario) -> StrategyProfile:
    fractions = np.zeros((len(scenario.locations), len(scenario.carriers)))
    id_to_idx = {c.id: i for i, c in enumerate(scenario.carriers)}
    with open(Path(path), newline="") as f:
        for row in csv.DictReader(f):
            fractions[int(row["location_id"]), id_to_idx[int(row["carrier_id"])]] = float(row["fraction"])
    return StrategyProfile(fractions)


def write_trace_csv(trace: Sequence[TraceRow], path: str | Path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "round", "team", "carrier_id", "payoff", "utility",
                    "cost", "e_t", "total_watts", "evaluations", "changed"])
        for r in trace:
            w.writerow([r.iteration, r.round, r.team_id, r.carrier_id,
                        _FLOAT_FMT % r.payoff, _FLOAT_FMT % r.utility, _FLOAT_FMT % r.cost,
                        _FLOAT_FMT % r.e_t, _FLOAT_FMT % r.total_watts,
                        r.evaluations, int(r.changed)])
