"""Link budgets: pathloss, LOS state, O2I penetration, shadow fading,
beamforming gain, SNR composition and the SNR -> spectral-efficiency map.

All numeric coefficients (pathloss / LOS-probability / shadow-fading /
O2I material models, and the MCS table) live in versioned TSV files under
``iabsim/data`` so tests can pin them; the formulas here only give the
coefficients their structure.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources

import numpy as np

from ._jit import maybe_njit

SPEED_OF_LIGHT = 3.0e8  # m/s, as used by the channel-model breakpoint formulas

MODEL_UMA = 0
MODEL_UMI = 1
MODEL_INH = 2


class ChannelModel(IntEnum):
    UMA = MODEL_UMA
    UMI_STREET_CANYON = MODEL_UMI
    INH = MODEL_INH


# ---------------------------------------------------------------------------
# coefficient table
# ---------------------------------------------------------------------------

# Order must match data/channel_params.tsv; checked at import time.
_PARAM_KEYS = (
    "uma.losp.near_dist", "uma.losp.decay",
    "umi.losp.near_dist", "umi.losp.decay",
    "inh.losp.near_dist", "inh.losp.mid_dist",
    "inh.losp.decay1", "inh.losp.decay2", "inh.losp.floor",
    "uma.los.a", "uma.los.b1", "uma.los.b2", "uma.los.c", "uma.los.bp_corr",
    "uma.nlos.a", "uma.nlos.b", "uma.nlos.c", "uma.nlos.hut_corr",
    "uma.sigma_los", "uma.sigma_nlos", "uma.min_d2d",
    "umi.los.a", "umi.los.b1", "umi.los.b2", "umi.los.c", "umi.los.bp_corr",
    "umi.nlos.a", "umi.nlos.b", "umi.nlos.c", "umi.nlos.hut_corr",
    "umi.sigma_los", "umi.sigma_nlos", "umi.min_d2d",
    "inh.los.a", "inh.los.b", "inh.los.c",
    "inh.nlos.a", "inh.nlos.b", "inh.nlos.c",
    "inh.sigma_los", "inh.sigma_nlos", "inh.min_d3d",
    "bp.h_env",
    "o2i.glass.a", "o2i.glass.b", "o2i.irrglass.a", "o2i.irrglass.b",
    "o2i.concrete.a", "o2i.concrete.b",
    "o2i.low.glass_frac", "o2i.high.irrglass_frac",
    "o2i.low.sigma", "o2i.high.sigma",
    "o2i.indoor_depth_max", "o2i.indoor_loss_per_m", "o2i.tw_base",
)

P_UMA_LOSP_NEAR = 0
P_UMA_LOSP_DECAY = 1
P_UMI_LOSP_NEAR = 2
P_UMI_LOSP_DECAY = 3
P_INH_LOSP_NEAR = 4
P_INH_LOSP_MID = 5
P_INH_LOSP_DECAY1 = 6
P_INH_LOSP_DECAY2 = 7
P_INH_LOSP_FLOOR = 8
# UMa and UMi blocks share one layout so the pathloss kernel can index by a
# per-model base offset: +0 los.a, +1 los.b1, +2 los.b2, +3 los.c,
# +4 bp_corr, +5 nlos.a, +6 nlos.b, +7 nlos.c, +8 hut_corr,
# +9 sigma_los, +10 sigma_nlos, +11 min_d2d
P_UMA_BLOCK = 9
P_UMI_BLOCK = 21
P_INH_LOS_A = 33
P_INH_LOS_B = 34
P_INH_LOS_C = 35
P_INH_NLOS_A = 36
P_INH_NLOS_B = 37
P_INH_NLOS_C = 38
P_INH_SIGMA_LOS = 39
P_INH_SIGMA_NLOS = 40
P_INH_MIN_D3D = 41
P_BP_HENV = 42
P_O2I_GLASS_A = 43
P_O2I_GLASS_B = 44
P_O2I_IRRGLASS_A = 45
P_O2I_IRRGLASS_B = 46
P_O2I_CONCRETE_A = 47
P_O2I_CONCRETE_B = 48
P_O2I_LOW_FRAC = 49
P_O2I_HIGH_FRAC = 50
P_O2I_LOW_SIGMA = 51
P_O2I_HIGH_SIGMA = 52
P_O2I_DEPTH_MAX = 53
P_O2I_LOSS_PER_M = 54
P_O2I_TW_BASE = 55


def _data_text(name: str) -> tuple[str, str]:
    raw = resources.files("iabsim.data").joinpath(name).read_bytes()
    return raw.decode("utf-8"), hashlib.sha256(raw).hexdigest()


def _load_channel_params() -> tuple[np.ndarray, str]:
    text, digest = _data_text("channel_params.tsv")
    values: dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("key\t"):
            continue
        key, value = line.split("\t")
        values[key] = float(value)
    if set(values) != set(_PARAM_KEYS):
        missing = set(_PARAM_KEYS) - set(values)
        extra = set(values) - set(_PARAM_KEYS)
        raise RuntimeError(f"channel_params.tsv mismatch: missing={missing}, extra={extra}")
    return np.array([values[k] for k in _PARAM_KEYS], dtype=np.float64), digest


@dataclass(frozen=True)
class McsTable:
    """SNR -> spectral-efficiency step table, thresholds strictly increasing."""

    mcs_index: np.ndarray
    modulation_order: np.ndarray
    code_rate_x1024: np.ndarray
    spectral_efficiency: np.ndarray
    required_snr_db: np.ndarray
    sha256: str

    @property
    def max_se(self) -> float:
        return float(self.spectral_efficiency[-1])


def load_mcs_table() -> McsTable:
    text, digest = _data_text("mcs_table.tsv")
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("mcs_index"):
            continue
        rows.append([float(x) for x in line.split("\t")])
    arr = np.array(rows, dtype=np.float64)
    table = McsTable(
        mcs_index=arr[:, 0].astype(np.int64),
        modulation_order=arr[:, 1].astype(np.int64),
        code_rate_x1024=arr[:, 2],
        spectral_efficiency=arr[:, 3],
        required_snr_db=arr[:, 4],
        sha256=digest,
    )
    if not np.all(np.diff(table.required_snr_db) > 0):
        raise RuntimeError("MCS required SNR thresholds must be strictly increasing")
    return table


CHANNEL_PARAMS, CHANNEL_PARAMS_SHA256 = _load_channel_params()
MCS_TABLE = load_mcs_table()


# ---------------------------------------------------------------------------
# scalar kernels (shared by matrix building and the mobility slot loop)
# ---------------------------------------------------------------------------

@maybe_njit
def _los_probability(ch, model, d2d):
    if model == MODEL_UMA:
        near = ch[P_UMA_LOSP_NEAR]
        if d2d <= near:
            return 1.0
        r = near / d2d
        return r + math.exp(-d2d / ch[P_UMA_LOSP_DECAY]) * (1.0 - r)
    if model == MODEL_UMI:
        near = ch[P_UMI_LOSP_NEAR]
        if d2d <= near:
            return 1.0
        r = near / d2d
        return r + math.exp(-d2d / ch[P_UMI_LOSP_DECAY]) * (1.0 - r)
    near = ch[P_INH_LOSP_NEAR]
    if d2d <= near:
        return 1.0
    mid = ch[P_INH_LOSP_MID]
    if d2d <= mid:
        return math.exp(-(d2d - near) / ch[P_INH_LOSP_DECAY1])
    return ch[P_INH_LOSP_FLOOR] * math.exp(-(d2d - mid) / ch[P_INH_LOSP_DECAY2])


@maybe_njit
def _pathloss_db(ch, model, los, d2d, d3d, fc_ghz, h_bs, h_ut):
    lf = math.log10(fc_ghz)
    if model == MODEL_INH:
        dmin = ch[P_INH_MIN_D3D]
        if d3d < dmin:
            d3d = dmin
        ld = math.log10(d3d)
        pl_los = ch[P_INH_LOS_A] + ch[P_INH_LOS_B] * ld + ch[P_INH_LOS_C] * lf
        if los:
            return pl_los
        pl_nlos = ch[P_INH_NLOS_A] + ch[P_INH_NLOS_B] * ld + ch[P_INH_NLOS_C] * lf
        return max(pl_los, pl_nlos)

    base = P_UMA_BLOCK if model == MODEL_UMA else P_UMI_BLOCK
    dh = h_bs - h_ut
    dmin = ch[base + 11]
    if d2d < dmin:
        d2d = dmin
        d3d = math.sqrt(dmin * dmin + dh * dh)
    ld = math.log10(d3d)
    h_env = ch[P_BP_HENV]
    dbp = 4.0 * (h_bs - h_env) * (h_ut - h_env) * fc_ghz * 1e9 / SPEED_OF_LIGHT
    if d2d <= dbp:
        pl_los = ch[base + 0] + ch[base + 1] * ld + ch[base + 3] * lf
    else:
        pl_los = (ch[base + 0] + ch[base + 2] * ld + ch[base + 3] * lf
                  - ch[base + 4] * math.log10(dbp * dbp + dh * dh))
    if los:
        return pl_los
    pl_nlos = (ch[base + 5] + ch[base + 6] * ld + ch[base + 7] * lf
               - ch[base + 8] * (h_ut - 1.5))
    return max(pl_los, pl_nlos)


@maybe_njit
def _shadow_sigma_db(ch, model, los):
    if model == MODEL_INH:
        return ch[P_INH_SIGMA_LOS] if los else ch[P_INH_SIGMA_NLOS]
    base = P_UMA_BLOCK if model == MODEL_UMA else P_UMI_BLOCK
    return ch[base + 9] if los else ch[base + 10]


@maybe_njit
def _o2i_wall_loss_db(ch, high_loss, fc_ghz):
    l_concrete = ch[P_O2I_CONCRETE_A] + ch[P_O2I_CONCRETE_B] * fc_ghz
    if high_loss:
        l_glass = ch[P_O2I_IRRGLASS_A] + ch[P_O2I_IRRGLASS_B] * fc_ghz
        frac = ch[P_O2I_HIGH_FRAC]
    else:
        l_glass = ch[P_O2I_GLASS_A] + ch[P_O2I_GLASS_B] * fc_ghz
        frac = ch[P_O2I_LOW_FRAC]
    mix = frac * 10.0 ** (-l_glass / 10.0) + (1.0 - frac) * 10.0 ** (-l_concrete / 10.0)
    return ch[P_O2I_TW_BASE] - 10.0 * math.log10(mix)


@maybe_njit
def _se_for_snr(snr_db, required_snr_db, se_values):
    se = 0.0
    for i in range(required_snr_db.shape[0]):
        if snr_db >= required_snr_db[i]:
            se = se_values[i]
        else:
            break
    return se


@maybe_njit
def _link_matrix(ch, fc_ghz, tx_x, tx_y, tx_z, tx_model, tx_dbm, tx_gain_db,
                 rx_x, rx_y, rx_z, rx_gain_db, rx_noise_dbm,
                 los_uniform, shadow_normal, o2i_db, out_snr, out_los):
    """Fill SNR and frozen LOS flags for every (tx BS, rx node) pair.

    Self links (coincident positions) get -inf SNR so argmax attachment
    never selects them.
    """
    for i in range(tx_x.shape[0]):
        for j in range(rx_x.shape[0]):
            dx = tx_x[i] - rx_x[j]
            dy = tx_y[i] - rx_y[j]
            dz = tx_z[i] - rx_z[j]
            d2d = math.sqrt(dx * dx + dy * dy)
            d3d = math.sqrt(d2d * d2d + dz * dz)
            if d3d < 1e-9:
                out_snr[i, j] = -np.inf
                out_los[i, j] = True
                continue
            los = los_uniform[i, j] < _los_probability(ch, tx_model[i], d2d)
            pl = _pathloss_db(ch, tx_model[i], los, d2d, d3d, fc_ghz, tx_z[i], rx_z[j])
            sf = shadow_normal[i, j] * _shadow_sigma_db(ch, tx_model[i], los)
            out_snr[i, j] = (tx_dbm[i] + tx_gain_db[i] + rx_gain_db[j]
                             - pl - o2i_db[i, j] - sf - rx_noise_dbm[j])
            out_los[i, j] = los


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinkGeometry:
    tx_position: tuple[float, float, float]
    rx_position: tuple[float, float, float]
    model: ChannelModel
    rx_indoor: bool = False

    @property
    def distance_2d(self) -> float:
        return math.hypot(self.tx_position[0] - self.rx_position[0],
                          self.tx_position[1] - self.rx_position[1])

    @property
    def distance_3d(self) -> float:
        return math.hypot(self.distance_2d, self.tx_position[2] - self.rx_position[2])


@dataclass
class LinkState:
    los: bool
    shadow_fading: float
    pathloss: float
    o2i_loss: float
    snr: float
    spectral_efficiency: float


def los_probability(model: ChannelModel, distance_2d: float) -> float:
    if distance_2d < 0:
        raise ValueError("distance must be non-negative")
    return float(_los_probability(CHANNEL_PARAMS, int(model), float(distance_2d)))


def pathloss_db(geometry: LinkGeometry, los: bool, carrier_frequency: float) -> float:
    """Pathloss in dB; distances below the model minimum are clamped."""
    return float(_pathloss_db(
        CHANNEL_PARAMS, int(geometry.model), bool(los),
        geometry.distance_2d, geometry.distance_3d,
        carrier_frequency / 1e9, geometry.tx_position[2], geometry.rx_position[2]))


def shadow_sigma_db(model: ChannelModel, los: bool) -> float:
    return float(_shadow_sigma_db(CHANNEL_PARAMS, int(model), bool(los)))


def o2i_penetration_db(rng: np.random.Generator, high_loss: bool,
                       carrier_frequency: float) -> float:
    """One frozen per-device O2I draw: wall loss + indoor depth + normal spread.

    The indoor 2-D depth is the minimum of two uniform draws, per the
    low/high-loss building penetration model.
    """
    ch = CHANNEL_PARAMS
    tw = _o2i_wall_loss_db(ch, bool(high_loss), carrier_frequency / 1e9)
    u = rng.random(2)
    depth = min(u[0], u[1]) * ch[P_O2I_DEPTH_MAX]
    sigma = ch[P_O2I_HIGH_SIGMA] if high_loss else ch[P_O2I_LOW_SIGMA]
    return float(tw + ch[P_O2I_LOSS_PER_M] * depth + rng.standard_normal() * sigma)


def beamforming_gain_db(tx_elements: int, rx_elements: int) -> float:
    """Idealized array gain for perfectly aligned beams."""
    if tx_elements < 1 or rx_elements < 1:
        raise ValueError("element counts must be >= 1")
    return 10.0 * math.log10(tx_elements) + 10.0 * math.log10(rx_elements)


def noise_power_dbm(bandwidth: float, noise_density: float, noise_margin: float) -> float:
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return noise_density + 10.0 * math.log10(bandwidth) + noise_margin


def link_snr_db(tx_power: float, bf_gain: float, pathloss: float,
                o2i: float, shadow: float, noise_power: float) -> float:
    return tx_power + bf_gain - pathloss - o2i - shadow - noise_power


def spectral_efficiency(snr_db: float, table: McsTable | None = None) -> float:
    """Highest MCS spectral efficiency whose required SNR is <= snr_db."""
    t = table if table is not None else MCS_TABLE
    return float(_se_for_snr(float(snr_db), t.required_snr_db, t.spectral_efficiency))
