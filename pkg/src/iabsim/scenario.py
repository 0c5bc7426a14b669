"""Deterministic-given-seed deployment generation: hexagonal macro sites,
random outdoor small cells, one office with ceiling-mounted indoor cells per
site, and per-macrocell UE drops.

Hexagons are flat-topped with circumradius ISD/sqrt(3), so neighbor sites sit
across hexagon edges at exactly one ISD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .config import ArchMode, ConfigError, ScenarioConfig


class BsRole(IntEnum):
    MACRO_GNB = 0
    OUTDOOR_IAB_NODE = 1
    INDOOR_IAB_NODE = 2
    VMR = 3


class UeKind(IntEnum):
    UE = 0
    MT = 1


@dataclass(frozen=True)
class BaseStation:
    id: int
    role: BsRole
    position: tuple[float, float, float]
    tx_power: float
    antenna_elements: int
    donor_flag: bool = False
    site: int = -1


@dataclass(frozen=True)
class UeDevice:
    id: int
    kind: UeKind
    position: tuple[float, float, float]
    indoor: bool
    serving_bs: int | None = None
    site: int = -1


@dataclass(frozen=True)
class Office:
    """Axis-aligned box: (xmin, ymin) .. (xmax, ymax), floor at z=0."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float
    height: float

    def contains_xy(self, x, y) -> np.ndarray:
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)


def hexagon_circumradius(isd: float) -> float:
    return isd / math.sqrt(3.0)


def in_hexagon(x, y, center: tuple[float, float], circumradius: float):
    """Point-in-flat-topped-hexagon test (array friendly, boundary inclusive)."""
    dx = np.abs(np.asarray(x, dtype=float) - center[0])
    dy = np.abs(np.asarray(y, dtype=float) - center[1])
    r = circumradius
    eps = 1e-9 * max(r, 1.0)
    return (dy <= math.sqrt(3.0) / 2.0 * r + eps) & (math.sqrt(3.0) * dx + dy <= math.sqrt(3.0) * r + eps)


def generate_hex_sites(config: ScenarioConfig) -> np.ndarray:
    """Macro site positions: origin plus concentric hexagonal rings.

    Ring k holds 6k sites; neighbor sites are one ISD apart. Deterministic and
    seed independent.
    """
    isd = config.macro_isd
    n = config.num_macro_sites
    sites = [(0.0, 0.0)]
    # Neighbor directions point across flat-top hexagon edges.
    angles = [math.radians(30.0 + 60.0 * j) for j in range(6)]
    dirs = [(isd * math.cos(a), isd * math.sin(a)) for a in angles]
    k = 1
    while len(sites) < n:
        # walk the ring: start at k * dirs[0], then k steps along each of the
        # six successive directions (offset by two to turn along the ring)
        cx, cy = k * dirs[0][0], k * dirs[0][1]
        for j in range(6):
            step = dirs[(j + 2) % 6]
            for _ in range(k):
                sites.append((cx, cy))
                cx += step[0]
                cy += step[1]
        # ring walk appends the start position first and ends back at it
        k += 1
    return np.array(sites[:n], dtype=np.float64)


def _sample_in_hexagon(rng: np.random.Generator, center, circumradius: float,
                       n: int, reject_office: Office | None = None) -> np.ndarray:
    """Uniform points inside a hexagon by rejection from the bounding box."""
    out = np.empty((n, 2))
    half_h = math.sqrt(3.0) / 2.0 * circumradius
    filled = 0
    while filled < n:
        x = center[0] + rng.uniform(-circumradius, circumradius)
        y = center[1] + rng.uniform(-half_h, half_h)
        if not in_hexagon(x, y, center, circumradius):
            continue
        if reject_office is not None and reject_office.contains_xy(x, y):
            continue
        out[filled, 0] = x
        out[filled, 1] = y
        filled += 1
    return out


def _place_office(rng: np.random.Generator, center, circumradius: float,
                  dims: tuple[float, float, float]) -> Office:
    """Uniform axis-aligned placement with the full footprint inside the hexagon."""
    hx, hy = dims[0] / 2.0, dims[1] / 2.0
    for _ in range(10_000):
        c = _sample_in_hexagon(rng, center, circumradius, 1)[0]
        corners_x = np.array([c[0] - hx, c[0] + hx, c[0] - hx, c[0] + hx])
        corners_y = np.array([c[1] - hy, c[1] - hy, c[1] + hy, c[1] + hy])
        if np.all(in_hexagon(corners_x, corners_y, center, circumradius)):
            return Office(c[0] - hx, c[1] - hy, c[0] + hx, c[1] + hy, dims[2])
    raise AssertionError("office cannot fit inside the site hexagon; check office_dims vs macro_isd")


@dataclass
class Deployment:
    """One generated drop: all base stations, offices, and UEs as flat arrays."""

    config: ScenarioConfig
    sites: np.ndarray                 # (S, 2)
    offices: list[Office]
    bs_pos: np.ndarray                # (B, 3)
    bs_role: np.ndarray               # (B,) BsRole codes
    bs_site: np.ndarray               # (B,)
    bs_tx_dbm: np.ndarray             # (B,)
    bs_elements: np.ndarray           # (B,)
    bs_donor: np.ndarray              # (B,) bool
    ue_pos: np.ndarray                # (U, 3)
    ue_indoor: np.ndarray             # (U,) bool
    ue_site: np.ndarray               # (U,)
    donor_order: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def num_bs(self) -> int:
        return self.bs_pos.shape[0]

    @property
    def num_ue(self) -> int:
        return self.ue_pos.shape[0]

    @property
    def num_gnb(self) -> int:
        return int(np.sum(self.bs_role == BsRole.MACRO_GNB))

    def base_stations(self) -> list[BaseStation]:
        return [BaseStation(i, BsRole(int(self.bs_role[i])), tuple(self.bs_pos[i]),
                            float(self.bs_tx_dbm[i]), int(self.bs_elements[i]),
                            bool(self.bs_donor[i]), int(self.bs_site[i]))
                for i in range(self.num_bs)]

    def ue_devices(self) -> list[UeDevice]:
        return [UeDevice(i, UeKind.UE, tuple(self.ue_pos[i]), bool(self.ue_indoor[i]),
                         None, int(self.ue_site[i]))
                for i in range(self.num_ue)]

    def bs_indoor(self) -> np.ndarray:
        return self.bs_role == BsRole.INDOOR_IAB_NODE


def drop_small_cells(config: ScenarioConfig, sites: np.ndarray,
                     rng: np.random.Generator) -> tuple[list[Office], np.ndarray, np.ndarray, np.ndarray]:
    """Per site: outdoor IAB nodes uniform in the hexagon, one office, and a
    centered row of ceiling cells along the office long axis.

    Returns (offices, outdoor_positions, indoor_positions, cell_site_index);
    positions carry the configured antenna heights.
    """
    r = hexagon_circumradius(config.macro_isd)
    h = config.antenna_height
    offices: list[Office] = []
    outdoor = []
    indoor = []
    site_of_outdoor = []
    site_of_indoor = []
    for s, center in enumerate(sites):
        office = _place_office(rng, center, r, config.office_dims)
        offices.append(office)
        pts = _sample_in_hexagon(rng, center, r, config.outdoor_cells_per_site)
        for p in pts:
            outdoor.append((p[0], p[1], h.outdoor_iab))
            site_of_outdoor.append(s)
        cx = (office.xmin + office.xmax) / 2.0
        cy = (office.ymin + office.ymax) / 2.0
        k = config.indoor_cells_per_site
        offsets = (np.arange(k) - (k - 1) / 2.0) * config.indoor_cell_isd
        long_x = (office.xmax - office.xmin) >= (office.ymax - office.ymin)
        for off in offsets:
            x = cx + off if long_x else cx
            y = cy if long_x else cy + off
            indoor.append((x, y, h.indoor_iab))
            site_of_indoor.append(s)
    outdoor_arr = np.array(outdoor, dtype=np.float64).reshape(-1, 3)
    indoor_arr = np.array(indoor, dtype=np.float64).reshape(-1, 3)
    return offices, outdoor_arr, indoor_arr, np.array(site_of_outdoor + site_of_indoor, dtype=np.int64)


def drop_ues(config: ScenarioConfig, sites: np.ndarray, offices: list[Office],
             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per macrocell: floor(N * indoor_fraction) UEs uniform in the office,
    the rest uniform outdoors (inside the hexagon, outside the office)."""
    r = hexagon_circumradius(config.macro_isd)
    n = config.ues_per_macrocell
    n_in = int(math.floor(n * config.indoor_ue_fraction))
    h_ue = config.antenna_height.ue
    pos = []
    indoor_flags = []
    site_idx = []
    for s, center in enumerate(sites):
        office = offices[s]
        xs = rng.uniform(office.xmin, office.xmax, size=n_in)
        ys = rng.uniform(office.ymin, office.ymax, size=n_in)
        for x, y in zip(xs, ys):
            pos.append((x, y, h_ue))
            indoor_flags.append(True)
            site_idx.append(s)
        pts = _sample_in_hexagon(rng, center, r, n - n_in, reject_office=office)
        for p in pts:
            pos.append((p[0], p[1], h_ue))
            indoor_flags.append(False)
            site_idx.append(s)
    return (np.array(pos, dtype=np.float64).reshape(-1, 3),
            np.array(indoor_flags, dtype=bool),
            np.array(site_idx, dtype=np.int64))


def select_donors(config: ScenarioConfig, num_sites: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Random per-run donor ordering of the macro gNBs.

    The first num_donors entries are this run's donors; using a permutation
    prefix keeps donor sets nested across num_donors sweeps on a shared seed.
    """
    if config.num_donors > num_sites:
        raise ConfigError(f"num_donors ({config.num_donors}) exceeds gNB count ({num_sites})")
    return rng.permutation(num_sites)


def build_deployment(config: ScenarioConfig, rng_drops: np.random.Generator,
                     rng_donor: np.random.Generator | None = None) -> Deployment:
    """Generate the full drop. In 3gpp mode rng_donor picks the donor subset;
    in proposed mode every gNB is a valid anchor and no donors are flagged."""
    sites = generate_hex_sites(config)
    offices, outdoor, indoor, cell_sites = drop_small_cells(config, sites, rng_drops)
    ue_pos, ue_indoor, ue_site = drop_ues(config, sites, offices, rng_drops)

    s = len(sites)
    h = config.antenna_height
    macro_pos = np.column_stack([sites, np.full(s, h.macro)])
    bs_pos = np.vstack([macro_pos, outdoor, indoor])
    bs_role = np.concatenate([
        np.full(s, BsRole.MACRO_GNB, dtype=np.int64),
        np.full(len(outdoor), BsRole.OUTDOOR_IAB_NODE, dtype=np.int64),
        np.full(len(indoor), BsRole.INDOOR_IAB_NODE, dtype=np.int64),
    ])
    bs_site = np.concatenate([np.arange(s, dtype=np.int64), cell_sites])
    p = config.tx_power
    e = config.antenna_elements
    power_by_role = np.array([p.macro, p.outdoor_iab, p.indoor_iab, p.vmr])
    elems_by_role = np.array([e.macro, e.outdoor_iab, e.indoor_iab, e.vmr], dtype=np.int64)
    bs_tx_dbm = power_by_role[bs_role]
    bs_elements = elems_by_role[bs_role]

    bs_donor = np.zeros(len(bs_role), dtype=bool)
    donor_order = np.empty(0, dtype=np.int64)
    if config.arch_mode is ArchMode.THREE_GPP:
        if rng_donor is None:
            raise ValueError("3gpp mode requires a donor-selection RNG stream")
        donor_order = select_donors(config, s, rng_donor)
        bs_donor[donor_order[:config.num_donors]] = True

    return Deployment(config, sites, offices, bs_pos, bs_role, bs_site,
                      bs_tx_dbm, bs_elements, bs_donor,
                      ue_pos, ue_indoor, ue_site, donor_order)
