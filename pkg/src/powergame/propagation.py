"""Log-distance path loss with log-normal shadowing.

Produces the attenuation tensor a[l, z, c] in [0, 1] (linear power gain
between every location and every tile on every carrier) consumed by the
power-setting game. The model is a configurable stand-in for full urban
channel models: PL(d, f) = A + 10 n log10(d) + 20 log10(f / f_ref), plus a
per-(location, tile) shadowing draw reused across carriers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .scenario import PoAKind, Scenario


class InvalidDistance(ValueError):
    """Distance must be positive."""


class EmptyTileSet(ValueError):
    """Average attenuation needs at least one served tile."""


@dataclass(frozen=True)
class KindParams:
    path_loss_exponent: float  # n
    intercept_db: float        # A, loss at 1 m and f_ref
    shadowing_std_db: float

    def __post_init__(self):
        if self.path_loss_exponent < 2:
            raise ValueError("path loss exponent must be >= 2")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing std-dev must be >= 0")


@dataclass(frozen=True)
class PropagationModel:
    by_kind: Mapping[PoAKind, KindParams]
    reference_frequency_hz: float = 1e9
    min_distance_m: float = 10.0
    vehicular_fast_fading: bool = False
    fast_fading_std_db: float = 3.0

    @staticmethod
    def default() -> "PropagationModel":
        return PropagationModel(
            by_kind={
                PoAKind.MACRO: KindParams(3.5, 13.5, 6.0),
                PoAKind.MICRO: KindParams(3.67, 30.5, 4.0),
            }
        )


@dataclass(frozen=True)
class AttenuationTensor:
    """Dense linear gains indexed (location, tile, carrier)."""

    gains: np.ndarray
    carrier_ids: tuple[int, ...]

    def __post_init__(self):
        g = self.gains
        if g.ndim != 3:
            raise ValueError("gains must be a (location, tile, carrier) array")
        if not np.all(np.isfinite(g)) or g.min() < 0 or g.max() > 1:
            raise ValueError("gains must be finite and within [0, 1]")
        g.setflags(write=False)

    @property
    def n_locations(self) -> int:
        return self.gains.shape[0]

    @property
    def n_tiles(self) -> int:
        return self.gains.shape[1]

    @property
    def n_carriers(self) -> int:
        return self.gains.shape[2]


def path_gain(model: PropagationModel, kind: PoAKind, distance_m: float,
              frequency_hz: float, shadow_db: float = 0.0) -> float:
    """Linear power gain for one link; distances below min_distance_m clamp."""
    if distance_m <= 0:
        raise InvalidDistance(f"distance must be > 0, got {distance_m}")
    return float(path_gain_array(model, kind, np.array([distance_m]), frequency_hz,
                                 np.array([shadow_db]))[0])


def path_gain_array(model: PropagationModel, kind: PoAKind, distances_m: np.ndarray,
                    frequency_hz: float, shadow_db: np.ndarray | float = 0.0) -> np.ndarray:
    if frequency_hz <= 0:
        raise ValueError("frequency must be > 0")
    p = model.by_kind[kind]
    d = np.maximum(np.asarray(distances_m, dtype=float), model.min_distance_m)
    pl_db = (p.intercept_db
             + 10.0 * p.path_loss_exponent * np.log10(d)
             + 20.0 * np.log10(frequency_hz / model.reference_frequency_hz))
    gain = 10.0 ** ((-pl_db + np.asarray(shadow_db, dtype=float)) / 10.0)
    return np.minimum(gain, 1.0)


def build_attenuation_tensor(scenario: Scenario, model: PropagationModel, seed: int) -> AttenuationTensor:
    """Gains for every (location, tile, carrier); deterministic in the seed.

    One shadowing draw per (location, tile), reused across carriers.
    """
    rng = np.random.default_rng(seed)
    n_loc = len(scenario.locations)
    n_tile = len(scenario.tiles)
    n_car = len(scenario.carriers)
    centers = scenario.tile_centers

    gains = np.empty((n_loc, n_tile, n_car))
    for li, loc in enumerate(scenario.locations):
        sigma = model.by_kind[loc.kind].shadowing_std_db
        shadow = rng.normal(0.0, sigma, size=n_tile) if sigma > 0 else np.zeros(n_tile)
        d = np.hypot(centers[:, 0] - loc.position[0], centers[:, 1] - loc.position[1])
        for ci, carrier in enumerate(scenario.carriers):
            gains[li, :, ci] = path_gain_array(model, loc.kind, d, carrier.center_frequency_hz, shadow)
    return AttenuationTensor(gains=gains, carrier_ids=tuple(c.id for c in scenario.carriers))


def average_attenuation(tensor: AttenuationTensor, scenario: Scenario,
                        location_id: int, carrier_index: int,
                        served_tiles: np.ndarray | None = None) -> float:
    """UE-weighted mean gain over the tiles served by a location.

    Falls back to the unweighted mean when no UEs populate the served tiles
    (the cost term still needs a finite link quality there).
    """
    tiles = scenario.location_tiles[location_id] if served_tiles is None else np.asarray(served_tiles)
    if len(tiles) == 0:
        raise EmptyTileSet(f"location {location_id} serves no tiles")
    g = tensor.gains[location_id, tiles, carrier_index]
    ue = scenario.tile_ue[tiles].astype(float)
    total = ue.sum()
    if total > 0:
        return float(np.dot(ue / total, g))
    return float(g.mean())


def average_attenuation_matrix(tensor: AttenuationTensor, scenario: Scenario) -> np.ndarray:
    """a-bar for every (location, carrier); zero rows for tile-less locations.

    A location serving no tiles never radiates usefully; its cost weight is
    set to 0 so the game still prices the rest of the team.
    """
    n_loc, _, n_car = tensor.gains.shape
    abar = np.zeros((n_loc, n_car))
    for l in range(n_loc):
        tiles = scenario.location_tiles[l]
        if len(tiles) == 0:
            continue
        for c in range(n_car):
            abar[l, c] = average_attenuation(tensor, scenario, l, c, tiles)
    return abar


_FLOAT_FMT = "%.17g"


def export_attenuation(tensor: AttenuationTensor, scenario: Scenario, path: str | Path) -> None:
    """Row-major (location, tile, carrier) CSV, lossless at 17 digits."""
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["location_id", "tile_id", "carrier_id", "gain"])
        n_loc, n_tile, n_car = tensor.gains.shape
        for l in range(n_loc):
            for z in range(n_tile):
                for c in range(n_car):
                    w.writerow([l, z, tensor.carrier_ids[c], _FLOAT_FMT % tensor.gains[l, z, c]])


def import_attenuation(path: str | Path, scenario: Scenario) -> AttenuationTensor:
    n_loc = len(scenario.locations)
    n_tile = len(scenario.tiles)
    n_car = len(scenario.carriers)
    id_to_idx = {c.id: i for i, c in enumerate(scenario.carriers)}
    gains = np.empty((n_loc, n_tile, n_car))
    with open(Path(path), newline="") as f:
        for row in csv.DictReader(f):
            gains[int(row["location_id"]), int(row["tile_id"]), id_to_idx[int(row["carrier_id"])]] = float(row["gain"])
    return AttenuationTensor(gains=gains, carrier_ids=tuple(c.id for c in scenario.carriers))
