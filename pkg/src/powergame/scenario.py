"""Network scenarios: geometry, tiles, teams, carriers and UE distribution.

A scenario is an immutable snapshot of a two-tier network. Macro PoAs sit on
a hexagonal lattice, each macro leads a team formed with the micro PoAs
deployed inside its cell, and the whole area is partitioned into a square
tile grid. Tiles are associated with the PoA providing the strongest
zero-shadowing reference power on the lowest-frequency carrier.
"""

from __future__ import annotations

import enum
import json
import math
import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

RB_BANDWIDTH_HZ = 180e3


class PoAKind(enum.Enum):
    MACRO = "Macro"
    MICRO = "Micro"


class AreaType(enum.Enum):
    CITY_CENTRE = "CityCentre"
    COMMERCIAL = "Commercial"
    SCHOOL = "School"
    PARK = "Park"
    RESIDENTIAL = "Residential"


class TimeOfDay(enum.Enum):
    MORNING = "Morning"
    AFTERNOON = "Afternoon"
    EVENING = "Evening"


class InvalidConfig(ValueError):
    """A scenario configuration value is out of range or malformed."""


class GeometryError(RuntimeError):
    """Micro placement could not satisfy the non-overlap constraint."""


@dataclass(frozen=True)
class Carrier:
    id: int
    center_frequency_hz: float
    bandwidth_hz: float

    def __post_init__(self):
        if self.center_frequency_hz <= 0:
            raise InvalidConfig(f"carrier {self.id}: center frequency must be > 0")
        if self.bandwidth_hz <= 0:
            raise InvalidConfig(f"carrier {self.id}: bandwidth must be > 0")

    @property
    def rb_count(self) -> int:
        return int(self.bandwidth_hz // RB_BANDWIDTH_HZ)


@dataclass(frozen=True)
class Location:
    id: int
    kind: PoAKind
    position: tuple[float, float]
    max_power_w: float
    team_id: int

    def __post_init__(self):
        if self.max_power_w <= 0:
            raise InvalidConfig(f"location {self.id}: max power must be > 0")


@dataclass(frozen=True)
class Tile:
    id: int
    x: float  # lower-left corner, meters
    y: float
    side_m: float
    area_type: AreaType
    serving_location_id: int
    ue_count_pedestrian: int = 0
    ue_count_vehicular: int = 0

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.side_m / 2.0, self.y + self.side_m / 2.0)

    @property
    def area_m2(self) -> float:
        return self.side_m * self.side_m

    @property
    def ue_count(self) -> int:
        return self.ue_count_pedestrian + self.ue_count_vehicular


@dataclass(frozen=True)
class Team:
    id: int
    leader_location_id: int
    member_location_ids: tuple[int, ...]
    tile_ids: tuple[int, ...]


@dataclass(frozen=True)
class PowerLevelSet:
    """Discrete transmit power fractions, always containing the off level 0."""

    fractions: tuple[float, ...]

    def __post_init__(self):
        f = self.fractions
        if not f or f[0] != 0.0:
            raise InvalidConfig("power levels must start at 0 (the off level)")
        if f[-1] > 1.0:
            raise InvalidConfig("power levels must not exceed 1")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise InvalidConfig("power levels must be strictly ascending")

    def __len__(self) -> int:
        return len(self.fractions)

    @property
    def min_positive(self) -> float:
        if len(self.fractions) < 2:
            raise InvalidConfig("power level set has no positive level")
        return self.fractions[1]


DEFAULT_POWER_LEVELS = PowerLevelSet(tuple(round(0.1 * i, 1) for i in range(11)))

# Per-area baseline UE density [UE/m^2], share of vehicular UEs, and the
# time-of-day density weights / per-cell request rates (requests/s).
_AREA_ORDER = (
    AreaType.CITY_CENTRE,
    AreaType.COMMERCIAL,
    AreaType.SCHOOL,
    AreaType.PARK,
    AreaType.RESIDENTIAL,
)
_BASE_DENSITY = (0.0245, 0.0147, 0.0074, 0.0009, 0.0009)
_VEHICLE_SHARE = (0.30, 0.05, 0.05, 0.05, 0.50)
_DENSITY_WEIGHTS = {
    TimeOfDay.MORNING: (0.5, 0.6, 0.6, 0.8, 0.8),
    TimeOfDay.AFTERNOON: (1.0, 0.95, 0.95, 0.7, 1.0),
    TimeOfDay.EVENING: (0.08, 0.5, 0.01, 0.5, 0.6),
}
_REQUEST_RATES = {
    TimeOfDay.MORNING: (0.75, 0.54, 0.27, 0.04, 0.04),
    TimeOfDay.AFTERNOON: (1.5, 0.9, 0.4, 0.03, 0.05),
    TimeOfDay.EVENING: (0.12, 0.45, 0.005, 0.02, 0.03),
}


@dataclass(frozen=True)
class TrafficProfile:
    """Per-area UE densities, vehicle shares and request arrival rates."""

    base_density_ue_m2: Mapping[AreaType, float]
    vehicle_share: Mapping[AreaType, float]
    density_weight: Mapping[TimeOfDay, Mapping[AreaType, float]]
    request_rate_per_cell_s: Mapping[TimeOfDay, Mapping[AreaType, float]]

    def __post_init__(self):
        for a, lam in self.base_density_ue_m2.items():
            if lam < 0:
                raise InvalidConfig(f"traffic.base_density[{a.value}] must be >= 0")
        for tod, rates in self.request_rate_per_cell_s.items():
            for a, lam in rates.items():
                if lam < 0:
                    raise InvalidConfig(f"traffic.request_rate[{tod.value}][{a.value}] must be >= 0")

    def expected_density(self, area: AreaType, tod: TimeOfDay) -> float:
        return self.base_density_ue_m2[area] * self.density_weight[tod][area]

    @staticmethod
    def default() -> "TrafficProfile":
        return TrafficProfile(
            base_density_ue_m2=dict(zip(_AREA_ORDER, _BASE_DENSITY)),
            vehicle_share=dict(zip(_AREA_ORDER, _VEHICLE_SHARE)),
            density_weight={t: dict(zip(_AREA_ORDER, w)) for t, w in _DENSITY_WEIGHTS.items()},
            request_rate_per_cell_s={t: dict(zip(_AREA_ORDER, w)) for t, w in _REQUEST_RATES.items()},
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario generation parameters (see docs for the key map)."""

    inter_site_distance_m: float = 500.0
    macro_count: int = 57
    micros_per_cell: int = 4
    tile_side_m: float = 68.0
    # Optional explicit grid shape; derived from geometry when None.
    grid_nx: int | None = None
    grid_ny: int | None = None
    grid_margin_m: float = 250.0
    macro_max_w: float = 20.0
    micro_max_w: float = 1.0
    micro_radius_m: float = 60.0
    micro_placement_retries: int = 1000
    carriers: tuple[Carrier, ...] = (
        Carrier(1, 2.6e9, 10e6),
        Carrier(2, 1.8e9, 10e6),
        Carrier(3, 800e6, 10e6),
    )
    power_levels: PowerLevelSet = DEFAULT_POWER_LEVELS
    traffic: TrafficProfile = field(default_factory=TrafficProfile.default)
    # Concentric area-type bands as fractions of the largest tile radius,
    # ordered CityCentre / Commercial / School / Park (Residential beyond).
    area_band_fractions: tuple[float, float, float, float] = (0.20, 0.40, 0.55, 0.75)

    def __post_init__(self):
        if self.inter_site_distance_m <= 0:
            raise InvalidConfig("geometry.inter_site_distance_m must be > 0")
        if self.macro_count < 1:
            raise InvalidConfig("geometry.macro_count must be >= 1")
        if self.micros_per_cell < 0:
            raise InvalidConfig("geometry.micros_per_cell must be >= 0")
        if self.tile_side_m <= 0:
            raise InvalidConfig("tiles.side_m must be > 0")
        if self.macro_max_w <= 0 or self.micro_max_w <= 0:
            raise InvalidConfig("power.macro_max_w and power.micro_max_w must be > 0")
        if self.micro_radius_m <= 0:
            raise InvalidConfig("geometry.micro_radius_m must be > 0")
        ids = [c.id for c in self.carriers]
        freqs = [c.center_frequency_hz for c in self.carriers]
        if len(set(ids)) != len(ids) or len(set(freqs)) != len(freqs):
            raise InvalidConfig("carriers must have distinct ids and frequencies")
        if not self.carriers:
            raise InvalidConfig("at least one carrier is required")
        if any(not (0 < f < 1) for f in self.area_band_fractions) or any(
            b <= a for a, b in zip(self.area_band_fractions, self.area_band_fractions[1:])
        ):
            raise InvalidConfig("areas.band_fractions must be ascending in (0, 1)")

    @staticmethod
    def from_dict(doc: Mapping) -> "ScenarioConfig":
        def get(section, key, default):
            return doc.get(section, {}).get(key, default) if isinstance(doc.get(section, {}), Mapping) else default

        known_sections = {"geometry", "tiles", "carriers", "power", "traffic", "areas"}
        unknown = set(doc) - known_sections
        if unknown:
            raise InvalidConfig(f"unknown config section(s): {sorted(unknown)}")
        for section in known_sections - {"carriers"}:
            sec = doc.get(section, {})
            if not isinstance(sec, Mapping):
                raise InvalidConfig(f"config section '{section}' must be a mapping")

        carriers_doc = doc.get("carriers")
        if carriers_doc is None:
            carriers = ScenarioConfig.__dataclass_fields__["carriers"].default
        else:
            carriers = tuple(
                Carrier(
                    id=c.get("id", i + 1),
                    center_frequency_hz=float(c["freq_hz"]),
                    bandwidth_hz=float(c["bandwidth_hz"]),
                )
                for i, c in enumerate(carriers_doc)
            )

        levels_doc = get("power", "levels", None)
        levels = DEFAULT_POWER_LEVELS if levels_doc is None else PowerLevelSet(tuple(float(v) for v in levels_doc))

        traffic = TrafficProfile.default()
        tdoc = doc.get("traffic", {})
        if tdoc:
            def by_area(m, fallback):
                if m is None:
                    return fallback
                return {AreaType(k): float(v) for k, v in m.items()}

            def by_tod(m, fallback):
                if m is None:
                    return fallback
                return {TimeOfDay(k): {AreaType(a): float(v) for a, v in sub.items()} for k, sub in m.items()}

            traffic = TrafficProfile(
                base_density_ue_m2=by_area(tdoc.get("base_density_ue_m2"), traffic.base_density_ue_m2),
                vehicle_share=by_area(tdoc.get("vehicle_share"), traffic.vehicle_share),
                density_weight=by_tod(tdoc.get("density_weight"), traffic.density_weight),
                request_rate_per_cell_s=by_tod(tdoc.get("request_rate_per_cell_s"), traffic.request_rate_per_cell_s),
            )

        bands = get("areas", "band_fractions", (0.20, 0.40, 0.55, 0.75))
        return ScenarioConfig(
            inter_site_distance_m=float(get("geometry", "inter_site_distance_m", 500.0)),
            macro_count=int(get("geometry", "macro_count", 57)),
            micros_per_cell=int(get("geometry", "micros_per_cell", 4)),
            micro_radius_m=float(get("geometry", "micro_radius_m", 60.0)),
            micro_placement_retries=int(get("geometry", "micro_placement_retries", 1000)),
            tile_side_m=float(get("tiles", "side_m", 68.0)),
            grid_nx=get("tiles", "grid_nx", None),
            grid_ny=get("tiles", "grid_ny", None),
            grid_margin_m=float(get("tiles", "margin_m", 250.0)),
            macro_max_w=float(get("power", "macro_max_w", 20.0)),
            micro_max_w=float(get("power", "micro_max_w", 1.0)),
            carriers=carriers,
            power_levels=levels,
            traffic=traffic,
            area_band_fractions=tuple(float(b) for b in bands),
        )

    def to_dict(self) -> dict:
        return {
            "geometry": {
                "inter_site_distance_m": self.inter_site_distance_m,
                "macro_count": self.macro_count,
                "micros_per_cell": self.micros_per_cell,
                "micro_radius_m": self.micro_radius_m,
                "micro_placement_retries": self.micro_placement_retries,
            },
            "tiles": {
                "side_m": self.tile_side_m,
                "grid_nx": self.grid_nx,
                "grid_ny": self.grid_ny,
                "margin_m": self.grid_margin_m,
            },
            "carriers": [
                {"id": c.id, "freq_hz": c.center_frequency_hz, "bandwidth_hz": c.bandwidth_hz}
                for c in self.carriers
            ],
            "power": {
                "levels": list(self.power_levels.fractions),
                "macro_max_w": self.macro_max_w,
                "micro_max_w": self.micro_max_w,
            },
            "traffic": {
                "base_density_ue_m2": {a.value: v for a, v in self.traffic.base_density_ue_m2.items()},
                "vehicle_share": {a.value: v for a, v in self.traffic.vehicle_share.items()},
                "density_weight": {
                    t.value: {a.value: v for a, v in sub.items()} for t, sub in self.traffic.density_weight.items()
                },
                "request_rate_per_cell_s": {
                    t.value: {a.value: v for a, v in sub.items()}
                    for t, sub in self.traffic.request_rate_per_cell_s.items()
                },
            },
            "areas": {"band_fractions": list(self.area_band_fractions)},
        }


# The paper-scale default: 57 macros on a hex spiral with a 76x60 grid of
# 68 m tiles (4560 tiles) covering every PoA.
PAPER_DEFAULT_CONFIG = ScenarioConfig(grid_nx=76, grid_ny=60)


def load_config(path: str | Path) -> ScenarioConfig:
    """Load a JSON or YAML config document."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        doc = yaml.safe_load(text) or {}
    else:
        doc = json.loads(text or "{}")
    if not isinstance(doc, Mapping):
        raise InvalidConfig("config document must be a mapping")
    return ScenarioConfig.from_dict(doc)


@dataclass(frozen=True)
class Scenario:
    """Immutable network snapshot. Safe to share read-only across threads."""

    carriers: tuple[Carrier, ...]
    locations: tuple[Location, ...]
    tiles: tuple[Tile, ...]
    teams: tuple[Team, ...]
    power_levels: PowerLevelSet
    traffic: TrafficProfile
    grid_origin: tuple[float, float]
    grid_shape: tuple[int, int]  # (nx, ny)
    tile_side_m: float
    time_of_day: TimeOfDay | None = None
    micro_boost_radius_m: float = 60.0  # 4x UE densification zone around micros

    # -- derived array views (cached; arrays are set read-only) --

    def _frozen_array(self, values, dtype=float) -> np.ndarray:
        arr = np.asarray(values, dtype=dtype)
        arr.setflags(write=False)
        return arr

    @cached_property
    def loc_positions(self) -> np.ndarray:
        return self._frozen_array([l.position for l in self.locations])

    @cached_property
    def loc_max_w(self) -> np.ndarray:
        return self._frozen_array([l.max_power_w for l in self.locations])

    @cached_property
    def loc_team(self) -> np.ndarray:
        return self._frozen_array([l.team_id for l in self.locations], dtype=np.int64)

    @cached_property
    def loc_is_macro(self) -> np.ndarray:
        return self._frozen_array([l.kind is PoAKind.MACRO for l in self.locations], dtype=bool)

    @cached_property
    def tile_centers(self) -> np.ndarray:
        return self._frozen_array([t.center for t in self.tiles])

    @cached_property
    def tile_serving(self) -> np.ndarray:
        return self._frozen_array([t.serving_location_id for t in self.tiles], dtype=np.int64)

    @cached_property
    def tile_ue(self) -> np.ndarray:
        return self._frozen_array([t.ue_count for t in self.tiles], dtype=np.int64)

    @cached_property
    def team_locations(self) -> tuple[np.ndarray, ...]:
        """Location indices per team, leader (macro) first."""
        return tuple(
            self._frozen_array(team.member_location_ids, dtype=np.int64) for team in self.teams
        )

    @cached_property
    def team_tiles(self) -> tuple[np.ndarray, ...]:
        return tuple(self._frozen_array(team.tile_ids, dtype=np.int64) for team in self.teams)

    @cached_property
    def location_tiles(self) -> tuple[np.ndarray, ...]:
        """Tile indices served by each location."""
        served: list[list[int]] = [[] for _ in self.locations]
        for t in self.tiles:
            served[t.serving_location_id].append(t.id)
        return tuple(self._frozen_array(s, dtype=np.int64) for s in served)

    def team_ue_count(self, team_id: int) -> int:
        return int(self.tile_ue[self.team_tiles[team_id]].sum())

    def location_ue_count(self, location_id: int) -> int:
        return int(self.tile_ue[self.location_tiles[location_id]].sum())

    @property
    def locations_per_team(self) -> int:
        return len(self.teams[0].member_location_ids)

    def carrier_index(self, carrier_id: int) -> int:
        for i, c in enumerate(self.carriers):
            if c.id == carrier_id:
                return i
        raise KeyError(f"no carrier with id {carrier_id}")

    @property
    def reference_carrier_index(self) -> int:
        """Lowest-frequency carrier, used for association and edge detection."""
        return int(np.argmin([c.center_frequency_hz for c in self.carriers]))

    @cached_property
    def carrier_order_desc_freq(self) -> tuple[int, ...]:
        freqs = [c.center_frequency_hz for c in self.carriers]
        return tuple(int(i) for i in np.argsort(freqs)[::-1])


def _hex_spiral(count: int, isd: float) -> np.ndarray:
    """First `count` points of a hexagonal lattice spiral around the origin."""
    pts = [(0.0, 0.0)]
    dirs = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
    ring = 1
    while len(pts) < count:
        q, r = 0, -ring
        for d in range(6):
            for _ in range(ring):
                pts.append((isd * (q + r / 2.0), isd * (math.sqrt(3) / 2.0) * r))
                dq, dr = dirs[d]
                q += dq
                r += dr
        ring += 1
    return np.array(pts[:count])


def _place_micros(
    rng: np.random.Generator, center: np.ndarray, cell_radius: float, count: int, min_dist: float, retries: int
) -> list[tuple[float, float]]:
    placed: list[np.ndarray] = []
    for _ in range(count):
        for _attempt in range(retries):
            r = cell_radius * math.sqrt(rng.random())
            theta = 2.0 * math.pi * rng.random()
            p = center + np.array([r * math.cos(theta), r * math.sin(theta)])
            if all(np.hypot(*(p - q)) >= min_dist for q in placed):
                placed.append(p)
                break
        else:
            raise GeometryError(
                f"could not place {count} micros with pairwise distance >= {min_dist} m "
                f"in a cell of radius {cell_radius} m after {retries} retries"
            )
    return [(float(p[0]), float(p[1])) for p in placed]


def _area_type_for(center: tuple[float, float], grid_center: tuple[float, float], r_max: float,
                   bands: tuple[float, float, float, float]) -> AreaType:
    if r_max <= 0:
        return AreaType.CITY_CENTRE
    r = math.hypot(center[0] - grid_center[0], center[1] - grid_center[1]) / r_max
    for frac, area in zip(bands, _AREA_ORDER[:4]):
        if r <= frac:
            return area
    return AreaType.RESIDENTIAL


def build_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Construct a scenario deterministically from (config, seed).

    Micros are rejection-sampled uniformly inside their macrocell with a
    minimum pairwise spacing of twice the micro radius. Tiles are associated
    by strongest zero-shadowing reference power on the lowest-frequency
    carrier (ties to the lower location id).
    """
    from . import propagation  # deferred: propagation imports our enums

    rng = np.random.default_rng(seed)
    isd = config.inter_site_distance_m
    macro_pos = _hex_spiral(config.macro_count, isd)

    locations: list[Location] = []
    teams_members: list[list[int]] = []
    next_id = 0
    for t in range(config.macro_count):
        members = [next_id]
        locations.append(
            Location(next_id, PoAKind.MACRO, (float(macro_pos[t, 0]), float(macro_pos[t, 1])),
                     config.macro_max_w, t)
        )
        next_id += 1
        micro_positions = _place_micros(
            rng, macro_pos[t], isd / 2.0, config.micros_per_cell,
            2.0 * config.micro_radius_m, config.micro_placement_retries,
        )
        for pos in micro_positions:
            members.append(next_id)
            locations.append(Location(next_id, PoAKind.MICRO, pos, config.micro_max_w, t))
            next_id += 1
        teams_members.append(members)

    # Tile grid: explicit shape if configured, else the padded PoA bounding
    # box rounded up to whole tiles. Either way the grid defines the network
    # area, so tiles partition it exactly.
    side = config.tile_side_m
    all_pos = np.array([l.position for l in locations])
    x0, y0 = all_pos.min(axis=0)
    x1, y1 = all_pos.max(axis=0)
    if config.grid_nx is not None and config.grid_ny is not None:
        nx, ny = int(config.grid_nx), int(config.grid_ny)
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        origin = (cx - nx * side / 2.0, cy - ny * side / 2.0)
    else:
        m = config.grid_margin_m
        nx = math.ceil((x1 - x0 + 2 * m) / side)
        ny = math.ceil((y1 - y0 + 2 * m) / side)
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        origin = (cx - nx * side / 2.0, cy - ny * side / 2.0)
    for l in locations:
        if not (origin[0] <= l.position[0] <= origin[0] + nx * side
                and origin[1] <= l.position[1] <= origin[1] + ny * side):
            raise InvalidConfig(
                f"tiles.grid_nx/grid_ny too small: location {l.id} at {l.position} "
                f"falls outside the tile grid"
            )

    centers = np.empty((nx * ny, 2))
    for j in range(ny):
        for i in range(nx):
            centers[j * nx + i] = (origin[0] + (i + 0.5) * side, origin[1] + (j + 0.5) * side)

    # Association on the reference carrier, zero shadowing.
    model = propagation.PropagationModel.default()
    ref_freq = min(c.center_frequency_hz for c in config.carriers)
    max_w = np.array([l.max_power_w for l in locations])
    rx = np.empty((len(locations), nx * ny))
    for li, loc in enumerate(locations):
        d = np.hypot(centers[:, 0] - loc.position[0], centers[:, 1] - loc.position[1])
        rx[li] = max_w[li] * propagation.path_gain_array(model, loc.kind, d, ref_freq)
    serving = np.argmax(rx, axis=0)  # np.argmax takes the first (lowest id) on ties

    grid_center = (origin[0] + nx * side / 2.0, origin[1] + ny * side / 2.0)
    r_max = float(np.max(np.hypot(centers[:, 0] - grid_center[0], centers[:, 1] - grid_center[1])))
    tiles = tuple(
        Tile(
            id=z,
            x=centers[z, 0] - side / 2.0,
            y=centers[z, 1] - side / 2.0,
            side_m=side,
            area_type=_area_type_for((centers[z, 0], centers[z, 1]), grid_center, r_max,
                                     config.area_band_fractions),
            serving_location_id=int(serving[z]),
        )
        for z in range(nx * ny)
    )

    teams = tuple(
        Team(
            id=t,
            leader_location_id=members[0],
            member_location_ids=tuple(members),
            tile_ids=tuple(int(z) for z in np.flatnonzero(np.isin(serving, members))),
        )
        for t, members in enumerate(teams_members)
    )

    return Scenario(
        carriers=config.carriers,
        locations=tuple(locations),
        tiles=tiles,
        teams=teams,
        power_levels=config.power_levels,
        traffic=config.traffic,
        grid_origin=origin,
        grid_shape=(nx, ny),
        tile_side_m=side,
        micro_boost_radius_m=config.micro_radius_m,
    )


def populate_ues(scenario: Scenario, time_of_day: TimeOfDay, seed: int) -> Scenario:
    """Draw per-tile UE counts for a time of day.

    Counts are Poisson with mean density(area) x weight(area, tod) x tile
    area, quadrupled for tiles within the micro radius of a micro PoA; the
    pedestrian/vehicular split is binomial with the per-area vehicle share.
    """
    rng = np.random.default_rng(seed)
    micro_pos = np.array([l.position for l in scenario.locations if l.kind is PoAKind.MICRO])
    centers = scenario.tile_centers
    if len(micro_pos):
        d2 = ((centers[:, None, :] - micro_pos[None, :, :]) ** 2).sum(-1)
        near_micro = (d2.min(axis=1) <= scenario.micro_boost_radius_m ** 2)
    else:
        near_micro = np.zeros(len(centers), dtype=bool)

    profile = scenario.traffic
    new_tiles = []
    for tile, boosted in zip(scenario.tiles, near_micro):
        mean = profile.expected_density(tile.area_type, time_of_day) * tile.area_m2
        if boosted:
            mean *= 4.0
        n = int(rng.poisson(mean)) if mean > 0 else 0
        veh = int(rng.binomial(n, profile.vehicle_share[tile.area_type])) if n else 0
        new_tiles.append(replace(tile, ue_count_pedestrian=n - veh, ue_count_vehicular=veh))
    return replace(scenario, tiles=tuple(new_tiles), time_of_day=time_of_day)


def validate_scenario(scenario: Scenario, propagation_model=None) -> list[str]:
    """Return invariant violations (empty list means the scenario is valid).

    The association invariant is only checked when a propagation model is
    supplied, since it depends on the path-loss parameters used at build
    time.
    """
    violations: list[str] = []

    ids = [c.id for c in scenario.carriers]
    freqs = [c.center_frequency_hz for c in scenario.carriers]
    if len(set(ids)) != len(ids):
        violations.append("carriers: duplicate ids")
    if len(set(freqs)) != len(freqs):
        violations.append("carriers: duplicate center frequencies")

    nx, ny = scenario.grid_shape
    side = scenario.tile_side_m
    ox, oy = scenario.grid_origin
    if len(scenario.tiles) != nx * ny:
        violations.append("tiles: count does not match grid shape")
    for t in scenario.tiles:
        if abs(t.side_m - side) > 1e-12:
            violations.append(f"tile {t.id}: side differs from grid side")
        i = round((t.x - ox) / side)
        j = round((t.y - oy) / side)
        if not (0 <= i < nx and 0 <= j < ny) or abs(ox + i * side - t.x) > 1e-9 or abs(oy + j * side - t.y) > 1e-9:
            violations.append(f"tile {t.id}: not aligned with the tile grid")
        if t.ue_count_pedestrian < 0 or t.ue_count_vehicular < 0:
            violations.append(f"tile {t.id}: negative UE count")

    seen_cells = {(round((t.x - ox) / side), round((t.y - oy) / side)) for t in scenario.tiles}
    if len(seen_cells) != len(scenario.tiles):
        violations.append("tiles: grid cells overlap")

    for loc in scenario.locations:
        x, y = loc.position
        if not (ox <= x <= ox + nx * side and oy <= y <= oy + ny * side):
            violations.append(f"location {loc.id}: outside the network bounding box")
        if loc.max_power_w <= 0:
            violations.append(f"location {loc.id}: non-positive max power")

    owner: dict[int, int] = {}
    for team in scenario.teams:
        macros = [l for l in team.member_location_ids if scenario.locations[l].kind is PoAKind.MACRO]
        if len(macros) != 1:
            violations.append(f"team {team.id}: one Macro per team (found {len(macros)})")
        elif macros[0] != team.leader_location_id:
            violations.append(f"team {team.id}: leader is not the Macro")
        for l in team.member_location_ids:
            if scenario.locations[l].team_id != team.id:
                violations.append(f"team {team.id}: location {l} has mismatched team_id")
            if l in owner:
                violations.append(f"location {l}: belongs to more than one team")
            owner[l] = team.id
        e_t = sum(scenario.tiles[z].ue_count for z in team.tile_ids)
        e_z = sum(
            scenario.tiles[t.id].ue_count
            for t in scenario.tiles
            if scenario.tiles[t.id].serving_location_id in team.member_location_ids
        )
        e_l = sum(scenario.location_ue_count(l) for l in team.member_location_ids)
        if not (e_t == e_z == e_l):
            violations.append(f"team {team.id}: UE accounting (E_t = sum E_z = sum E_l) violated")
        declared = set(team.tile_ids)
        actual = {t.id for t in scenario.tiles if t.serving_location_id in team.member_location_ids}
        if declared != actual:
            violations.append(f"team {team.id}: tile_ids do not match serving assignments")

    for t in scenario.tiles:
        if t.serving_location_id not in owner:
            violations.append(f"tile {t.id}: serving location not owned by any team")

    if propagation_model is not None:
        from . import propagation

        ref_freq = min(c.center_frequency_hz for c in scenario.carriers)
        centers = scenario.tile_centers
        rx = np.empty((len(scenario.locations), len(scenario.tiles)))
        for li, loc in enumerate(scenario.locations):
            d = np.hypot(centers[:, 0] - loc.position[0], centers[:, 1] - loc.position[1])
            rx[li] = loc.max_power_w * propagation.path_gain_array(propagation_model, loc.kind, d, ref_freq)
        best = np.argmax(rx, axis=0)
        for t in scenario.tiles:
            if rx[t.serving_location_id, t.id] < rx[best[t.id], t.id] * (1 - 1e-12):
                violations.append(f"tile {t.id}: not served by the strongest reference power")

    return violations


# -- CSV export / import ------------------------------------------------

_FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


def export_scenario(scenario: Scenario, out_dir: str | Path) -> None:
    """Write tiles.csv, locations.csv and scenario.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "locations.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "kind", "x", "y", "max_w", "team"])
        for l in scenario.locations:
            w.writerow([l.id, l.kind.value, _fmt(l.position[0]), _fmt(l.position[1]),
                        _fmt(l.max_power_w), l.team_id])

    with open(out / "tiles.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "x", "y", "side", "area_type", "serving_location", "ue_ped", "ue_veh"])
        for t in scenario.tiles:
            w.writerow([t.id, _fmt(t.x), _fmt(t.y), _fmt(t.side_m), t.area_type.value,
                        t.serving_location_id, t.ue_count_pedestrian, t.ue_count_vehicular])

    meta = {
        "carriers": [
            {"id": c.id, "freq_hz": c.center_frequency_hz, "bandwidth_hz": c.bandwidth_hz}
            for c in scenario.carriers
        ],
        "power_levels": list(scenario.power_levels.fractions),
        "grid_origin": list(scenario.grid_origin),
        "grid_shape": list(scenario.grid_shape),
        "tile_side_m": scenario.tile_side_m,
        "micro_boost_radius_m": scenario.micro_boost_radius_m,
        "time_of_day": scenario.time_of_day.value if scenario.time_of_day else None,
        "traffic": ScenarioConfig(traffic=scenario.traffic).to_dict()["traffic"],
    }
    (out / "scenario.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def import_scenario(in_dir: str | Path) -> Scenario:
    """Rebuild a Scenario from the files written by export_scenario."""
    src = Path(in_dir)
    meta = json.loads((src / "scenario.json").read_text())
    carriers = tuple(
        Carrier(int(c["id"]), float(c["freq_hz"]), float(c["bandwidth_hz"])) for c in meta["carriers"]
    )

    locations: list[Location] = []
    with open(src / "locations.csv", newline="") as f:
        for row in csv.DictReader(f):
            locations.append(
                Location(int(row["id"]), PoAKind(row["kind"]), (float(row["x"]), float(row["y"])),
                         float(row["max_w"]), int(row["team"]))
            )
    locations.sort(key=lambda l: l.id)

    tiles: list[Tile] = []
    with open(src / "tiles.csv", newline="") as f:
        for row in csv.DictReader(f):
            tiles.append(
                Tile(int(row["id"]), float(row["x"]), float(row["y"]), float(row["side"]),
                     AreaType(row["area_type"]), int(row["serving_location"]),
                     int(row["ue_ped"]), int(row["ue_veh"]))
            )
    tiles.sort(key=lambda t: t.id)

    members: dict[int, list[int]] = {}
    for l in locations:
        members.setdefault(l.team_id, []).append(l.id)
    served: dict[int, list[int]] = {t: [] for t in members}
    for tile in tiles:
        served[locations[tile.serving_location_id].team_id].append(tile.id)
    teams = tuple(
        Team(
            id=t,
            leader_location_id=next(l for l in members[t] if locations[l].kind is PoAKind.MACRO),
            member_location_ids=tuple(members[t]),
            tile_ids=tuple(served[t]),
        )
        for t in sorted(members)
    )

    tdoc = meta["traffic"]
    traffic = TrafficProfile(
        base_density_ue_m2={AreaType(k): v for k, v in tdoc["base_density_ue_m2"].items()},
        vehicle_share={AreaType(k): v for k, v in tdoc["vehicle_share"].items()},
        density_weight={
            TimeOfDay(k): {AreaType(a): v for a, v in sub.items()} for k, sub in tdoc["density_weight"].items()
        },
        request_rate_per_cell_s={
            TimeOfDay(k): {AreaType(a): v for a, v in sub.items()}
            for k, sub in tdoc["request_rate_per_cell_s"].items()
        },
    )

    return Scenario(
        carriers=carriers,
        locations=tuple(locations),
        tiles=tuple(tiles),
        teams=teams,
        power_levels=PowerLevelSet(tuple(meta["power_levels"])),
        traffic=traffic,
        grid_origin=tuple(meta["grid_origin"]),
        grid_shape=tuple(meta["grid_shape"]),
        tile_side_m=meta["tile_side_m"],
        time_of_day=TimeOfDay(meta["time_of_day"]) if meta["time_of_day"] else None,
        micro_boost_radius_m=meta.get("micro_boost_radius_m", 60.0),
    )
