"""Traffic, scheduling, energy and metrics on top of a power strategy.

Runs a 1 ms TTI loop: Poisson download requests arrive per cell, a
proportional-fair scheduler hands out resource blocks per carrier, and the
run is summarized into throughput, energy-efficiency, RB-efficiency and
fairness metrics. Power strategies come from the game (recomputed every
update period) or from fixed baselines, including a simplified eICIC with
cell range expansion and almost-blank subframes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .game import (
    GameParams,
    StrategyProfile,
    compute_price_table,
    run_multi_carrier_game,
)
from .propagation import AttenuationTensor, PropagationModel
from .scenario import AreaType, PoAKind, Scenario, TimeOfDay

TTI_S = 1e-3


class AllZero(ValueError):
    """Jain index is undefined when every value is zero."""


class ContentKind(enum.Enum):
    VIDEO = "Video"
    GENERIC = "Generic"


CONTENT_SIZE_BITS = {ContentKind.VIDEO: 1_000_000, ContentKind.GENERIC: 500_000}
CONTENT_DEADLINE_S = {ContentKind.VIDEO: 0.5, ContentKind.GENERIC: 1.0}


class Policy(enum.Enum):
    BPS = "bps"
    MAX_POWER = "max"
    MIN_POWER = "min"
    EICIC_LITE = "eicic"


@dataclass(frozen=True)
class DownloadRequest:
    id: int
    tile_id: int
    kind: ContentKind
    arrival_s: float
    vehicular: bool = False

    @property
    def size_bits(self) -> int:
        return CONTENT_SIZE_BITS[self.kind]

    @property
    def deadline_s(self) -> float:
        return CONTENT_DEADLINE_S[self.kind]


@dataclass(frozen=True)
class RateTable:
    """Step lookup from linear SINR to bits per RB per TTI."""

    breakpoints_linear: tuple[float, ...]
    bits_per_rb: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints_linear) != len(self.bits_per_rb):
            raise ValueError("breakpoints and rates must have equal length")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints_linear, self.breakpoints_linear[1:])):
            raise ValueError("breakpoints must be strictly ascending")
        if any(r2 < r1 for r1, r2 in zip(self.bits_per_rb, self.bits_per_rb[1:])):
            raise ValueError("rates must be non-decreasing")

    def lookup(self, gamma_linear):
        g = np.asarray(gamma_linear, dtype=float)
        idx = np.searchsorted(self.breakpoints_linear, g, side="right")
        rates = np.concatenate(([0.0], self.bits_per_rb))
        return rates[idx]


# 15-step CQI-style table: -6.5 dB -> 0.1523 b/s/Hz up to 19.8 dB -> 5.5547
# b/s/Hz, scaled to one 180 kHz x 1 ms resource block.
_CQI_DB = (-6.5, -4.5, -2.6, -0.8, 1.0, 2.9, 4.7, 6.6, 8.5, 10.4, 12.2, 14.1, 15.9, 17.8, 19.8)
_CQI_EFF = (0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
            2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547)
DEFAULT_RATE_TABLE = RateTable(
    breakpoints_linear=tuple(10.0 ** (db / 10.0) for db in _CQI_DB),
    bits_per_rb=tuple(eff * 180.0 for eff in _CQI_EFF),
)


@dataclass(frozen=True)
class EnergyModel:
    """Linear load-dependent consumption per PoA kind."""

    static_w: dict[PoAKind, float] = field(
        default_factory=lambda: {PoAKind.MACRO: 130.0, PoAKind.MICRO: 6.8})
    load_slope: dict[PoAKind, float] = field(
        default_factory=lambda: {PoAKind.MACRO: 4.7, PoAKind.MICRO: 4.0})

    def __post_init__(self):
        if any(v < 0 for v in self.static_w.values()) or any(v < 0 for v in self.load_slope.values()):
            raise ValueError("energy coefficients must be >= 0")

    def power_w(self, kind: PoAKind, radiated_w: float) -> float:
        return self.static_w[kind] + self.load_slope[kind] * radiated_w


def energy_consumed(location_kind: PoAKind, strategy_row_w: Sequence[float], duration_s: float,
                    model: EnergyModel | None = None) -> float:
    """Joules consumed by one PoA radiating a fixed per-carrier power row."""
    if duration_s < 0:
        raise ValueError("duration must be >= 0")
    model = model or EnergyModel()
    return model.power_w(location_kind, float(np.sum(strategy_row_w))) * duration_s


def sinr_to_rate(gamma_linear: float, table: RateTable | None = None) -> float:
    """Bits per RB per TTI for a linear SINR (0 below the lowest breakpoint)."""
    if gamma_linear < 0:
        raise ValueError("SINR must be >= 0")
    table = table or DEFAULT_RATE_TABLE
    return float(table.lookup(gamma_linear))


def jain_index(values: Sequence[float]) -> float:
    """(sum x)^2 / (n sum x^2); 1 when all equal, 1/n at maximal imbalance."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("jain index needs at least one value")
    if (v < 0).any():
        raise ValueError("jain index needs nonnegative values")
    sq = float((v ** 2).sum())
    if sq == 0:
        raise AllZero("all values are zero")
    return float(v.sum() ** 2 / (v.size * sq))


def _location_area_type(scenario: Scenario, location_id: int) -> AreaType:
    ox, oy = scenario.grid_origin
    nx, ny = scenario.grid_shape
    x, y = scenario.locations[location_id].position
    i = min(int((x - ox) / scenario.tile_side_m), nx - 1)
    j = min(int((y - oy) / scenario.tile_side_m), ny - 1)
    return scenario.tiles[j * nx + i].area_type


def generate_traffic(scenario: Scenario, duration_s: float, seed: int,
                     time_of_day: TimeOfDay | None = None) -> tuple[DownloadRequest, ...]:
    """Poisson download requests per cell over the horizon.

    Each cell (PoA) generates requests at the rate of its own area type and
    the scenario's time of day; the requesting tile is drawn proportionally
    to the UE count among the cell's tiles, and the content kind uniformly.
    """
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    tod = time_of_day or scenario.time_of_day
    if tod is None:
        raise ValueError("scenario has no time of day; populate it or pass one")
    rng = np.random.default_rng(seed)
    rates = scenario.traffic.request_rate_per_cell_s[tod]

    requests: list[DownloadRequest] = []
    req_id = 0
    for loc in scenario.locations:
        tiles = scenario.location_tiles[loc.id]
        ue = scenario.tile_ue[tiles].astype(float)
        lam = rates[_location_area_type(scenario, loc.id)]
        if lam <= 0 or len(tiles) == 0 or ue.sum() == 0:
            continue
        count = rng.poisson(lam * duration_s)
        if count == 0:
            continue
        arrivals = np.sort(rng.uniform(0.0, duration_s, size=count))
        tile_choice = rng.choice(tiles, size=count, p=ue / ue.sum())
        kinds = rng.integers(0, 2, size=count)
        for a, z, k in zip(arrivals, tile_choice, kinds):
            tile = scenario.tiles[int(z)]
            p_veh = tile.ue_count_vehicular / tile.ue_count if tile.ue_count else 0.0
            requests.append(DownloadRequest(
                id=req_id, tile_id=int(z),
                kind=ContentKind.VIDEO if k == 0 else ContentKind.GENERIC,
                arrival_s=float(a), vehicular=bool(rng.random() < p_veh),
            ))
            req_id += 1
    requests.sort(key=lambda r: (r.arrival_s, r.id))
    return tuple(
        DownloadRequest(i, r.tile_id, r.kind, r.arrival_s, r.vehicular)
        for i, r in enumerate(requests)
    )


def pf_schedule(inst_rates: np.ndarray, mean_served: np.ndarray, remaining: np.ndarray,
                rb_budget: Sequence[int], eps: float = 1e-9) -> np.ndarray:
    """Proportional-fair RB allocation for one cell and one TTI.

    Every RB goes to the active download maximizing instantaneous rate over
    smoothed served rate; bits granted within this TTI count toward the
    denominator so equal contenders split the budget evenly. Downloads are
    dropped from contention once their remaining bits are covered.
    """
    inst = np.asarray(inst_rates, dtype=float)
    n_dl, n_car = inst.shape
    alloc = np.zeros((n_dl, n_car), dtype=np.int64)
    rem = np.asarray(remaining, dtype=float).copy()
    bits_tti = np.zeros(n_dl)
    for c in range(n_car):
        budget = int(rb_budget[c])
        while budget > 0:
            eligible = (rem > 0) & (inst[:, c] > 0)
            if not eligible.any():
                break
            idx = np.flatnonzero(eligible)
            if len(idx) == 1:
                d = int(idx[0])
                need = min(budget, int(math.ceil(rem[d] / inst[d, c])))
                alloc[d, c] += need
                got = min(inst[d, c] * need, rem[d])
                bits_tti[d] += got
                rem[d] -= got
                budget -= need
                continue
            metric = inst[idx, c] / (eps + mean_served[idx] + bits_tti[idx])
            d = int(idx[np.argmax(metric)])
            alloc[d, c] += 1
            got = min(inst[d, c], rem[d])
            bits_tti[d] += got
            rem[d] -= got
            budget -= 1
    return alloc


@dataclass(frozen=True)
class MetricsReport:
    policy: Policy
    time_of_day: TimeOfDay
    duration_s: float
    seed: int
    requests_total: int
    requests_completed: int
    requests_failed: int
    requests_in_flight: int
    total_bits: float
    demand_met: float
    failed_fraction: dict[ContentKind, float]
    energy_j: dict[PoAKind, float]
    energy_efficiency_bits_per_j: dict[PoAKind, float]
    rb_efficiency_kb_per_rb: dict[PoAKind, float]
    rbs_used: dict[PoAKind, int]
    bits_by_kind: dict[PoAKind, float]
    jain_inner: float
    jain_edge: float
    mean_ue_throughput_bps: float
    mean_throughput_by_area_bps: dict[AreaType, float]
    rb_capacity_bits: float
    game_converged: bool | None = None

    def rows(self) -> list[tuple]:
        """Flatten into (policy, time_of_day, metric, poa_kind, value) rows."""
        p, t = self.policy.value, self.time_of_day.value
        out = [
            (p, t, "requests_total", "", float(self.requests_total)),
            (p, t, "requests_completed", "", float(self.requests_completed)),
            (p, t, "requests_failed", "", float(self.requests_failed)),
            (p, t, "requests_in_flight", "", float(self.requests_in_flight)),
            (p, t, "total_bits", "", self.total_bits),
            (p, t, "demand_met", "", self.demand_met),
            (p, t, "jain_inner", "", self.jain_inner),
            (p, t, "jain_edge", "", self.jain_edge),
            (p, t, "mean_ue_throughput_bps", "", self.mean_ue_throughput_bps),
        ]
        for kind, v in self.failed_fraction.items():
            out.append((p, t, "failed_fraction", kind.value, v))
        for kind in PoAKind:
            out.append((p, t, "energy_j", kind.value, self.energy_j[kind]))
            out.append((p, t, "energy_efficiency_bits_per_j", kind.value,
                        self.energy_efficiency_bits_per_j[kind]))
            out.append((p, t, "rb_efficiency_kb_per_rb", kind.value,
                        self.rb_efficiency_kb_per_rb[kind]))
            out.append((p, t, "rbs_used", kind.value, float(self.rbs_used[kind])))
        for area, v in self.mean_throughput_by_area_bps.items():
            out.append((p, t, "mean_ue_throughput_bps", area.value, v))
        return out


class _ActiveDownload:
    __slots__ = ("req", "remaining", "delivered", "ewma", "cell")

    def __init__(self, req: DownloadRequest, cell: int):
        self.req = req
        self.remaining = float(req.size_bits)
        self.delivered = 0.0
        self.ewma = 0.0
        self.cell = cell


def _strategy_for_policy(scenario: Scenario, tensor: AttenuationTensor, policy: Policy,
                         params: GameParams) -> tuple[StrategyProfile, bool | None]:
    if policy is Policy.BPS:
        outcome = run_multi_carrier_game(scenario, tensor, params)
        return outcome.profile, outcome.converged
    if policy is Policy.MIN_POWER:
        return StrategyProfile.min_power(scenario), None
    # max-power for both the plain baseline and eICIC
    return StrategyProfile.max_power(scenario), None


def _tile_gamma(scenario: Scenario, tensor: AttenuationTensor, profile: StrategyProfile,
                params: GameParams, serving: np.ndarray, muted_macros: bool) -> np.ndarray:
    """(tile, carrier) linear SINR under a profile and association map."""
    rad = profile.radiated_w(scenario).copy()
    if muted_macros:
        rad[scenario.loc_is_macro, :] = 0.0
    n_tiles = len(scenario.tiles)
    gamma = np.empty((n_tiles, len(scenario.carriers)))
    for c in range(len(scenario.carriers)):
        rx = tensor.gains[:, :, c] * rad[:, c][:, None]
        total = rx.sum(axis=0)
        signal = rx[serving, np.arange(n_tiles)]
        gamma[:, c] = signal / (params.noise_w(c) + total - signal)
    return gamma


def _edge_tiles(scenario: Scenario, tensor: AttenuationTensor, threshold_db: float = 3.0) -> np.ndarray:
    """Tiles whose serving signal beats the best neighbor by < threshold."""
    ref = scenario.reference_carrier_index
    rx = tensor.gains[:, :, ref] * scenario.loc_max_w[:, None]
    serving = scenario.tile_serving
    idx = np.arange(len(scenario.tiles))
    own = rx[serving, idx]
    rx_masked = rx.copy()
    rx_masked[serving, idx] = -np.inf
    best_other = rx_masked.max(axis=0)
    return own < best_other * 10.0 ** (threshold_db / 10.0)


def run_simulation(scenario: Scenario, tensor: AttenuationTensor, policy: Policy | str,
                   duration_s: float, seed: int, params: GameParams | None = None,
                   rate_table: RateTable | None = None, energy_model: EnergyModel | None = None,
                   update_period_ms: int = 100, cre_bias_db: float = 8.0,
                   abs_period: int = 4, propagation_model: PropagationModel | None = None,
                   ) -> MetricsReport:
    """TTI-level simulation of one policy over one scenario snapshot.

    The power strategy is refreshed at every update period; with a static
    snapshot the game inputs do not change, so the refresh reuses the first
    outcome. Under eICIC-lite, micro association gets a CRE bias and macros
    are muted every `abs_period`-th TTI.
    """
    policy = Policy(policy) if isinstance(policy, str) else policy
    params = params or GameParams()
    table = rate_table or DEFAULT_RATE_TABLE
    energy_model = energy_model or EnergyModel()
    if duration_s < update_period_ms * TTI_S:
        raise ValueError("duration must cover at least one power update period")
    tod = scenario.time_of_day
    if tod is None:
        raise ValueError("populate the scenario (populate_ues) before simulating")

    n_tti = int(round(duration_s / TTI_S))
    profile, game_converged = _strategy_for_policy(scenario, tensor, policy, params)

    if policy is Policy.EICIC_LITE:
        ref = scenario.reference_carrier_index
        rx = tensor.gains[:, :, ref] * scenario.loc_max_w[:, None]
        rx = rx * np.where(scenario.loc_is_macro, 1.0, 10.0 ** (cre_bias_db / 10.0))[:, None]
        serving = rx.argmax(axis=0)
    else:
        serving = scenario.tile_serving

    gamma_normal = _tile_gamma(scenario, tensor, profile, params, serving, muted_macros=False)
    rates_normal = table.lookup(gamma_normal)
    if policy is Policy.EICIC_LITE:
        gamma_abs = _tile_gamma(scenario, tensor, profile, params, serving, muted_macros=True)
        rates_abs = table.lookup(gamma_abs)
    else:
        gamma_abs, rates_abs = gamma_normal, rates_normal

    # optional per-period fast fading jitter for vehicular requests
    fading_rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    use_fading = propagation_model is not None and propagation_model.vehicular_fast_fading

    requests = generate_traffic(scenario, duration_s, seed, tod)
    is_macro_cell = scenario.loc_is_macro
    rb_budget = np.array([c.rb_count for c in scenario.carriers], dtype=np.int64)

    pending = list(requests)
    pending.reverse()  # pop() yields earliest arrival first
    active_by_cell: dict[int, list[_ActiveDownload]] = {}
    finished: list[tuple[DownloadRequest, float, float, str]] = []  # (req, delivered, active_time, state)
    rbs_used = {PoAKind.MACRO: 0, PoAKind.MICRO: 0}
    bits_by_kind = {PoAKind.MACRO: 0.0, PoAKind.MICRO: 0.0}
    rb_capacity_bits = 0.0
    ewma_tau = 100.0

    for tti in range(n_tti):
        now_end = (tti + 1) * TTI_S
        is_abs = policy is Policy.EICIC_LITE and tti % abs_period == 0
        rates = rates_abs if is_abs else rates_normal
        gamma = gamma_abs if is_abs else gamma_normal
        if use_fading and tti % update_period_ms == 0:
            veh_jitter = 10.0 ** (fading_rng.normal(
                0.0, propagation_model.fast_fading_std_db, size=len(scenario.tiles)) / 10.0)

        while pending and pending[-1].arrival_s < now_end:
            req = pending.pop()
            cell = int(serving[req.tile_id])
            active_by_cell.setdefault(cell, []).append(_ActiveDownload(req, cell))

        for cell, downloads in list(active_by_cell.items()):
            if not downloads:
                del active_by_cell[cell]
                continue
            kind = PoAKind.MACRO if is_macro_cell[cell] else PoAKind.MICRO
            budget = rb_budget if not (is_abs and is_macro_cell[cell]) else np.zeros_like(rb_budget)
            served_this = np.zeros(len(downloads))
            if budget.sum() > 0:
                inst = np.array([rates[d.req.tile_id, :] for d in downloads])
                if use_fading:
                    for di, d in enumerate(downloads):
                        if d.req.vehicular:
                            inst[di, :] = table.lookup(
                                gamma[d.req.tile_id, :] * veh_jitter[d.req.tile_id])
                alloc = pf_schedule(
                    inst,
                    np.array([d.ewma for d in downloads]),
                    np.array([d.remaining for d in downloads]),
                    budget,
                )
                for di, d in enumerate(downloads):
                    n_rbs = int(alloc[di].sum())
                    if n_rbs:
                        capacity = float((alloc[di] * inst[di]).sum())
                        got = min(capacity, d.remaining)
                        d.remaining -= got
                        d.delivered += got
                        served_this[di] = got
                        rbs_used[kind] += n_rbs
                        bits_by_kind[kind] += got
                        rb_capacity_bits += capacity
            survivors = []
            for di, d in enumerate(downloads):
                d.ewma += (served_this[di] - d.ewma) / ewma_tau
                if d.remaining <= 0:
                    finished.append((d.req, d.delivered, now_end - d.req.arrival_s, "completed"))
                elif now_end >= d.req.arrival_s + d.req.deadline_s:
                    finished.append((d.req, d.delivered, d.req.deadline_s, "failed"))
                else:
                    survivors.append(d)
            active_by_cell[cell] = survivors

    # flush in-flight downloads at the horizon
    for downloads in active_by_cell.values():
        for d in downloads:
            finished.append((d.req, d.delivered, duration_s - d.req.arrival_s, "in_flight"))

    # energy: static power always, load power scaled by the muting duty cycle
    energy = {PoAKind.MACRO: 0.0, PoAKind.MICRO: 0.0}
    rad_total = profile.radiated_w(scenario).sum(axis=1)
    n_abs = sum(1 for t in range(n_tti) if policy is Policy.EICIC_LITE and t % abs_period == 0)
    for loc in scenario.locations:
        on_ttis = n_tti - (n_abs if (policy is Policy.EICIC_LITE and loc.kind is PoAKind.MACRO) else 0)
        energy[loc.kind] += (energy_model.static_w[loc.kind] * n_tti
                             + energy_model.load_slope[loc.kind] * rad_total[loc.id] * on_ttis) * TTI_S

    total_requested = float(sum(r.size_bits for r in requests))
    total_delivered = float(sum(f[1] for f in finished))
    completed = sum(1 for f in finished if f[3] == "completed")
    failed = sum(1 for f in finished if f[3] == "failed")
    in_flight = sum(1 for f in finished if f[3] == "in_flight")

    failed_fraction = {}
    for kind in ContentKind:
        of_kind = [f for f in finished if f[0].kind is kind]
        failed_fraction[kind] = (
            sum(1 for f in of_kind if f[3] == "failed") / len(of_kind) if of_kind else math.nan
        )

    throughputs = np.array([f[1] / f[2] for f in finished if f[2] > 0])
    edge = _edge_tiles(scenario, tensor)
    tput_edge = [f[1] / f[2] for f in finished if f[2] > 0 and edge[f[0].tile_id]]
    tput_inner = [f[1] / f[2] for f in finished if f[2] > 0 and not edge[f[0].tile_id]]

    def safe_jain(vals):
        try:
            return jain_index(vals) if len(vals) else math.nan
        except AllZero:
            return math.nan

    by_area: dict[AreaType, float] = {}
    for area in AreaType:
        vals = [f[1] / f[2] for f in finished
                if f[2] > 0 and scenario.tiles[f[0].tile_id].area_type is area]
        by_area[area] = float(np.mean(vals)) if vals else math.nan

    return MetricsReport(
        policy=policy,
        time_of_day=tod,
        duration_s=duration_s,
        seed=seed,
        requests_total=len(requests),
        requests_completed=completed,
        requests_failed=failed,
        requests_in_flight=in_flight,
        total_bits=total_delivered,
        demand_met=(total_delivered / total_requested) if total_requested > 0 else 1.0,
        failed_fraction=failed_fraction,
        energy_j=energy,
        energy_efficiency_bits_per_j={
            k: (bits_by_kind[k] / energy[k]) if energy[k] > 0 else math.nan for k in PoAKind
        },
        rb_efficiency_kb_per_rb={
            k: (bits_by_kind[k] / 1000.0 / rbs_used[k]) if rbs_used[k] else math.nan for k in PoAKind
        },
        rbs_used=rbs_used,
        bits_by_kind=bits_by_kind,
        jain_inner=safe_jain(tput_inner),
        jain_edge=safe_jain(tput_edge),
        mean_ue_throughput_bps=float(throughputs.mean()) if len(throughputs) else math.nan,
        mean_throughput_by_area_bps=by_area,
        rb_capacity_bits=rb_capacity_bits,
        game_converged=game_converged,
    )


def write_metrics_csv(reports: Sequence[MetricsReport], path) -> None:
    import csv
    from pathlib import Path

    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["policy", "time_of_day", "metric", "poa_kind", "value"])
        for r in reports:
            for row in r.rows():
                w.writerow([row[0], row[1], row[2], row[3], "%.17g" % row[4]])
