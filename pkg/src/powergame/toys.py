"""Small hand-built and randomly generated instances for verification.

These power the oracle suites: single-link games whose continuous optimum
is known in closed form, symmetric rings for welfare checks, and small
random two-tier scenarios for equilibrium certificates.
"""

from __future__ import annotations

import numpy as np

from .propagation import AttenuationTensor, PropagationModel, build_attenuation_tensor
from .scenario import (
    AreaType,
    Carrier,
    Location,
    PoAKind,
    PowerLevelSet,
    Scenario,
    ScenarioConfig,
    Team,
    Tile,
    TimeOfDay,
    TrafficProfile,
    build_scenario,
    populate_ues,
)

_TOY_CARRIERS = (
    Carrier(1, 2.6e9, 10e6),
    Carrier(2, 800e6, 10e6),
)


def manual_instance(
    gains: np.ndarray,
    loc_team: list[int],
    serving: list[int],
    ue_counts: list[int],
    max_power_w: list[float] | float = 1.0,
    levels: tuple[float, ...] = (0.0, 0.5, 1.0),
    n_carriers: int = 1,
    loc_kind: list[PoAKind] | None = None,
) -> tuple[Scenario, AttenuationTensor]:
    """Build a scenario directly from an explicit gain tensor.

    gains is (L, Z) or (L, Z, C). Tiles sit on a 1 x Z strip, each location
    at its first served tile's center, so structural invariants hold; the
    association invariant is not implied and is simply not checked here.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim == 2:
        gains = np.repeat(gains[:, :, None], n_carriers, axis=2)
    n_loc, n_tile, n_car = gains.shape
    carriers = _TOY_CARRIERS[:n_car]
    if len(carriers) < n_car:
        carriers = tuple(Carrier(i + 1, 3e9 - i * 5e8, 10e6) for i in range(n_car))
    if np.isscalar(max_power_w):
        max_power_w = [float(max_power_w)] * n_loc
    if loc_kind is None:
        seen: set[int] = set()
        loc_kind = []
        for t in loc_team:
            loc_kind.append(PoAKind.MICRO if t in seen else PoAKind.MACRO)
            seen.add(t)

    side = 100.0
    tiles = []
    for z in range(n_tile):
        tiles.append(Tile(z, z * side, 0.0, side, AreaType.CITY_CENTRE, serving[z],
                          ue_count_pedestrian=int(ue_counts[z]), ue_count_vehicular=0))
    locations = []
    for l in range(n_loc):
        own = [z for z in range(n_tile) if serving[z] == l]
        cz = own[0] if own else 0
        locations.append(Location(l, loc_kind[l], ((cz + 0.5) * side, side / 2.0),
                                  max_power_w[l], loc_team[l]))
    team_ids = sorted(set(loc_team))
    teams = tuple(
        Team(
            id=t,
            leader_location_id=next(l for l in range(n_loc)
                                    if loc_team[l] == t and loc_kind[l] is PoAKind.MACRO),
            member_location_ids=tuple(l for l in range(n_loc) if loc_team[l] == t),
            tile_ids=tuple(z for z in range(n_tile) if loc_team[serving[z]] == t),
        )
        for t in team_ids
    )
    scenario = Scenario(
        carriers=carriers,
        locations=tuple(locations),
        tiles=tuple(tiles),
        teams=teams,
        power_levels=PowerLevelSet(levels),
        traffic=TrafficProfile.default(),
        grid_origin=(0.0, 0.0),
        grid_shape=(n_tile, 1),
        tile_side_m=side,
        time_of_day=TimeOfDay.MORNING,
    )
    tensor = AttenuationTensor(gains=gains, carrier_ids=tuple(c.id for c in carriers))
    return scenario, tensor


def single_link_instance(
    gain: float = 1.0,
    max_power_w: float = 1.0,
    levels: tuple[float, ...] = tuple(round(0.01 * i, 2) for i in range(101)),
    ue_count: int = 1,
) -> tuple[Scenario, AttenuationTensor]:
    """One team, one macro, one tile: the scalar game of the continuous analysis."""
    return manual_instance(
        gains=np.array([[gain]]), loc_team=[0], serving=[0], ue_counts=[ue_count],
        max_power_w=max_power_w, levels=levels,
    )


def symmetric_ring_instance(
    n_teams: int,
    self_gain: float = 1.0,
    cross_gain: float = 0.1,
    levels: tuple[float, ...] = (0.0, 1 / 3, 2 / 3, 1.0),
    max_power_w: float = 1.0,
    n_carriers: int = 1,
    ue_count: int = 1,
) -> tuple[Scenario, AttenuationTensor]:
    """Single-location teams where every team interferes equally with the rest."""
    gains = np.full((n_teams, n_teams), cross_gain)
    np.fill_diagonal(gains, self_gain)
    return manual_instance(
        gains=gains,
        loc_team=list(range(n_teams)),
        serving=list(range(n_teams)),
        ue_counts=[ue_count] * n_teams,
        max_power_w=max_power_w,
        levels=levels,
        n_carriers=n_carriers,
    )


def random_toy_config(rng: np.random.Generator, n_teams: int | None = None,
                      micros_per_cell: int | None = None, n_carriers: int | None = None,
                      n_levels: int | None = None) -> ScenarioConfig:
    """Small random two-tier config: 2-3 teams, L <= 2, |P| <= 4, 1-2 carriers."""
    n_teams = int(rng.integers(2, 4)) if n_teams is None else n_teams
    micros_per_cell = int(rng.integers(0, 2)) if micros_per_cell is None else micros_per_cell
    n_carriers = int(rng.integers(1, 3)) if n_carriers is None else n_carriers
    n_levels = int(rng.integers(2, 5)) if n_levels is None else n_levels
    isd = float(rng.uniform(400.0, 700.0))
    levels = tuple(round(i / (n_levels - 1), 6) for i in range(n_levels))
    carriers = (_TOY_CARRIERS[0],) if n_carriers == 1 else _TOY_CARRIERS
    return ScenarioConfig(
        inter_site_distance_m=isd,
        macro_count=n_teams,
        micros_per_cell=micros_per_cell,
        micro_radius_m=50.0,
        tile_side_m=isd / 2.5,
        grid_margin_m=isd / 4.0,
        carriers=carriers,
        power_levels=PowerLevelSet(levels),
    )


def random_toy_instance(
    rng: np.random.Generator,
    model: PropagationModel | None = None,
    time_of_day: TimeOfDay = TimeOfDay.MORNING,
    **config_kwargs,
) -> tuple[Scenario, AttenuationTensor]:
    """Random small scenario with every team populated (resamples until so)."""
    model = model or PropagationModel.default()
    for _ in range(50):
        config = random_toy_config(rng, **config_kwargs)
        seed = int(rng.integers(0, 2**63 - 1))
        scenario = populate_ues(build_scenario(config, seed), time_of_day, seed + 1)
        if all(scenario.team_ue_count(t.id) > 0 for t in scenario.teams):
            tensor = build_attenuation_tensor(scenario, model, seed + 2)
            return scenario, tensor
    raise RuntimeError("could not draw a toy instance with all teams populated")


def random_coupled_instance(
    rng: np.random.Generator,
    n_teams: int | None = None,
    locs_per_team: int | None = None,
    n_carriers: int | None = None,
    n_levels: int | None = None,
    cross_range: tuple[float, float] = (0.02, 0.7),
) -> tuple[Scenario, AttenuationTensor]:
    """Random toy with meaningful cross-team coupling.

    Every location serves one or two tiles with unit-order gains; other
    locations reach each tile at a random fraction of the serving gain, so
    priced interference actually shapes the best replies (geometry-built
    toys at hundreds of meters are effectively isolated and collapse to
    trivial games).
    """
    n_teams = int(rng.integers(2, 4)) if n_teams is None else n_teams
    locs_per_team = int(rng.integers(1, 3)) if locs_per_team is None else locs_per_team
    n_carriers = int(rng.integers(1, 3)) if n_carriers is None else n_carriers
    n_levels = int(rng.integers(2, 5)) if n_levels is None else n_levels

    loc_team: list[int] = []
    serving: list[int] = []
    max_power: list[float] = []
    for t in range(n_teams):
        for j in range(locs_per_team):
            loc = len(loc_team)
            loc_team.append(t)
            max_power.append(float(rng.uniform(1.0, 3.0)) if j == 0 else float(rng.uniform(0.3, 1.0)))
            for _ in range(int(rng.integers(1, 3))):
                serving.append(loc)
    n_loc = len(loc_team)
    n_tile = len(serving)

    gains = np.empty((n_loc, n_tile, n_carriers))
    for z in range(n_tile):
        own = float(rng.uniform(0.3, 1.0))
        for l in range(n_loc):
            base = own if l == serving[z] else own * float(rng.uniform(*cross_range))
            for c in range(n_carriers):
                gains[l, z, c] = base * (1.0 if c == 0 else float(rng.uniform(0.6, 1.0)))

    levels = tuple(round(i / (n_levels - 1), 6) for i in range(n_levels))
    ue = [int(rng.integers(1, 6)) for _ in range(n_tile)]
    return manual_instance(gains=gains, loc_team=loc_team, serving=serving,
                           ue_counts=ue, max_power_w=max_power, levels=levels,
                           n_carriers=n_carriers)


def desk_config(micros_per_cell: int = 4, traffic_scale: float = 30.0) -> ScenarioConfig:
    """Seven-team desk-scale scenario with the default carriers and powers.

    Per-cell request rates are scaled up: at paper rates a 35-cell desk
    network sees a handful of downloads per second and the schedulers never
    contend, which is not the operating regime the full-scale morning and
    afternoon results are about.
    """
    base = TrafficProfile.default()
    traffic = TrafficProfile(
        base_density_ue_m2=base.base_density_ue_m2,
        vehicle_share=base.vehicle_share,
        density_weight=base.density_weight,
        request_rate_per_cell_s={
            tod: {a: v * traffic_scale for a, v in sub.items()}
            for tod, sub in base.request_rate_per_cell_s.items()
        },
    )
    return ScenarioConfig(
        macro_count=7,
        micros_per_cell=micros_per_cell,
        tile_side_m=50.0,
        grid_margin_m=250.0,
        traffic=traffic,
    )
