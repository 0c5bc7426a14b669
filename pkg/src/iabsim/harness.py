"""Monte Carlo orchestration: named per-run RNG substreams, run execution for
both scenario types, metric aggregation, and file emission.

Seeding uses one substream per concern (drops, LOS, shadow, O2I, waypoints,
donor selection) derived from (base_seed, run_index, stream), so paired
architecture-mode comparisons see identical scenario draws and adding draws
in one concern never perturbs another.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._jit import backend_name
from .channel import (CHANNEL_PARAMS, CHANNEL_PARAMS_SHA256, MCS_TABLE,
                      MODEL_INH, MODEL_UMA, MODEL_UMI, _link_matrix,
                      _shadow_sigma_db, noise_power_dbm, o2i_penetration_db)
from .config import ArchMode, ConfigError, ScenarioConfig
from .mac import build_mac_state, cell_edge_percentile, throughput_report
from .mobility import (MobilityRunResult, MobilityTimers, MotionRegion,
                       VmrRadio, run_mobility)
from .scenario import BsRole, Deployment, build_deployment
from .topology import TopologyGraph, attach_all, topology_dump

STREAM_DROPS = 0
STREAM_LOS = 1
STREAM_SHADOW = 2
STREAM_O2I = 3
STREAM_WAYPOINT = 4
STREAM_DONOR = 5

SCENARIO_KINDS = ("throughput", "mobility")

# pathloss model keyed by transmitter role (macro, outdoor, indoor, vmr)
MODEL_BY_ROLE = np.array([MODEL_UMA, MODEL_UMI, MODEL_INH, MODEL_UMI], dtype=np.int64)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def run_seed_label(base_seed: int, run_index: int) -> int:
    return splitmix64((base_seed & 0xFFFFFFFFFFFFFFFF) ^ splitmix64(run_index))


def substream_seed(base_seed: int, run_index: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(run_index, stream))


def substream(base_seed: int, run_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(substream_seed(base_seed, run_index, stream))


# ---------------------------------------------------------------------------
# per-run radio environment
# ---------------------------------------------------------------------------

@dataclass
class RadioEnvironment:
    """Frozen per-run draws for every link: SNR matrices for backhaul (MT
    receivers) and access (UE receivers), plus the relay column."""

    snr_bs_to_mt: np.ndarray   # (B, B)
    snr_bs_to_ue: np.ndarray   # (B, U)
    los_bs_to_mt: np.ndarray
    los_bs_to_ue: np.ndarray
    node_o2i_db: np.ndarray    # (B + U + 1,)
    vmr_los: np.ndarray        # (B,)
    vmr_shadow_db: np.ndarray  # (B,)
    vmr_o2i_db: np.ndarray     # (B,)


def build_radio_environment(dep: Deployment, rng_los: np.random.Generator,
                            rng_shadow: np.random.Generator,
                            rng_o2i: np.random.Generator,
                            vmr_pos: tuple[float, float, float] | None) -> RadioEnvironment:
    cfg = dep.config
    n_bs, n_ue = dep.num_bs, dep.num_ue
    n_rx = n_bs + n_ue + 1
    fc_ghz = cfg.carrier_frequency / 1e9

    los_uniform = rng_los.random((n_bs, n_rx))
    shadow_normal = rng_shadow.standard_normal((n_bs, n_rx))

    # one frozen O2I draw per device (UEs, relay MTs, the VMR); building type
    # low/high picked at drop time
    n_nodes = n_bs + n_ue + 1
    high_loss = rng_o2i.random(n_nodes) >= cfg.o2i_low_loss_fraction
    node_o2i = np.array([o2i_penetration_db(rng_o2i, bool(h), cfg.carrier_frequency)
                         for h in high_loss])

    bs_indoor = dep.bs_indoor()
    node_indoor = np.concatenate([bs_indoor, dep.ue_indoor, [False]])
    tx_ind = bs_indoor[:, None]
    rx_ind = node_indoor[None, :]
    tx_o2i = np.broadcast_to(node_o2i[:n_bs, None], (n_bs, n_rx))
    rx_o2i = np.broadcast_to(node_o2i[None, :], (n_bs, n_rx))
    # a wall is crossed iff exactly one endpoint is indoor; losses come from
    # the indoor endpoint's frozen draw
    o2i_link = np.where(tx_ind & ~rx_ind, tx_o2i, 0.0) + np.where(~tx_ind & rx_ind, rx_o2i, 0.0)

    if vmr_pos is None:
        vmr_pos = (1e9, 1e9, cfg.antenna_height.vmr)  # placeholder; column unused

    rx_x = np.concatenate([dep.bs_pos[:, 0], dep.ue_pos[:, 0], [vmr_pos[0]]])
    rx_y = np.concatenate([dep.bs_pos[:, 1], dep.ue_pos[:, 1], [vmr_pos[1]]])
    rx_z = np.concatenate([dep.bs_pos[:, 2], dep.ue_pos[:, 2], [vmr_pos[2]]])

    elems = cfg.antenna_elements
    gain = lambda n: 10.0 * math.log10(n)
    tx_gain = 10.0 * np.log10(dep.bs_elements.astype(np.float64))
    rx_gain = np.concatenate([10.0 * np.log10(dep.bs_elements.astype(np.float64)),
                              np.full(n_ue, gain(elems.ue)), [gain(elems.vmr)]])
    noise_bs = noise_power_dbm(cfg.system_bandwidth, cfg.noise_density, cfg.noise_margin_bs)
    noise_ue = noise_power_dbm(cfg.system_bandwidth, cfg.noise_density, cfg.noise_margin_ue)
    # relay MTs are base-station hardware, so BS-grade noise margin applies
    rx_noise = np.concatenate([np.full(n_bs, noise_bs), np.full(n_ue, noise_ue), [noise_bs]])

    model = MODEL_BY_ROLE[dep.bs_role]
    out_snr = np.empty((n_bs, n_rx))
    out_los = np.empty((n_bs, n_rx), dtype=np.bool_)
    _link_matrix(CHANNEL_PARAMS, fc_ghz, dep.bs_pos[:, 0], dep.bs_pos[:, 1],
                 dep.bs_pos[:, 2], model, dep.bs_tx_dbm.astype(np.float64), tx_gain,
                 rx_x, rx_y, rx_z, rx_gain, rx_noise,
                 los_uniform, shadow_normal, o2i_link, out_snr, out_los)

    vmr_col = n_bs + n_ue
    vmr_los = out_los[:, vmr_col].copy()
    vmr_sigma = np.array([_shadow_sigma_db(CHANNEL_PARAMS, int(model[b]), bool(vmr_los[b]))
                          for b in range(n_bs)])
    return RadioEnvironment(
        snr_bs_to_mt=out_snr[:, :n_bs].copy(),
        snr_bs_to_ue=out_snr[:, n_bs:n_bs + n_ue].copy(),
        los_bs_to_mt=out_los[:, :n_bs].copy(),
        los_bs_to_ue=out_los[:, n_bs:n_bs + n_ue].copy(),
        node_o2i_db=node_o2i,
        vmr_los=vmr_los,
        vmr_shadow_db=shadow_normal[:, vmr_col] * vmr_sigma,
        vmr_o2i_db=o2i_link[:, vmr_col].copy(),
    )


def build_vmr_radio(dep: Deployment, graph: TopologyGraph,
                    env: RadioEnvironment) -> VmrRadio:
    """Frozen radio view plus the legal anchor set for the moving relay.

    The relay hands over between anchor base stations: every wired gNB in
    proposed mode, only the IAB-donors in 3gpp mode. Fixed relays keep the
    wider donor-rooted parent rule used during topology formation.
    """
    cfg = dep.config
    tx_gain = 10.0 * np.log10(dep.bs_elements.astype(np.float64))
    rx_gain = 10.0 * math.log10(cfg.antenna_elements.vmr)
    noise = noise_power_dbm(cfg.system_bandwidth, cfg.noise_density, cfg.noise_margin_bs)
    budget = (dep.bs_tx_dbm + tx_gain + rx_gain
              - env.vmr_o2i_db - env.vmr_shadow_db - noise)
    legal = (dep.bs_role == BsRole.MACRO_GNB) & graph.bs_attached
    if cfg.arch_mode is ArchMode.THREE_GPP:
        legal = legal & dep.bs_donor
    anchor = graph.bs_root.copy()
    return VmrRadio(
        budget_const=budget.astype(np.float64),
        los=env.vmr_los.astype(np.bool_),
        legal=legal.astype(np.bool_),
        cu_owner=graph.cu_owner.astype(np.int64),
        anchor_root=anchor.astype(np.int64),
        bs_x=dep.bs_pos[:, 0].copy(), bs_y=dep.bs_pos[:, 1].copy(),
        bs_z=dep.bs_pos[:, 2].copy(),
        bs_model=MODEL_BY_ROLE[dep.bs_role],
        vmr_z=cfg.antenna_height.vmr,
        fc_ghz=cfg.carrier_frequency / 1e9)


# ---------------------------------------------------------------------------
# per-run execution
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    run_id: int
    seed: int
    scenario: str
    topology_text: str
    # throughput fields
    per_ue_bps: np.ndarray | None = None
    ue_indoor: np.ndarray | None = None
    ue_serving: np.ndarray | None = None
    ue_hops: np.ndarray | None = None
    avg_throughput_bps: float | None = None
    cell_edge_bps: float | None = None
    # mobility fields
    outage_rate_pct: float | None = None
    hfr_pct: float | None = None
    handover_attempts: int | None = None
    handover_failures: int | None = None
    onboard_handovers: int | None = None
    donor_crossings: int | None = None
    trace: np.ndarray | None = None


def run_single(cfg: ScenarioConfig, scenario: str, run_index: int,
               trace: bool = False, timers: MobilityTimers | None = None) -> RunRecord:
    if scenario not in SCENARIO_KINDS:
        raise ConfigError(f"scenario must be one of {SCENARIO_KINDS}, got {scenario!r}")
    rng_drops = substream(cfg.base_seed, run_index, STREAM_DROPS)
    rng_donor = None
    if cfg.arch_mode is ArchMode.THREE_GPP:
        rng_donor = substream(cfg.base_seed, run_index, STREAM_DONOR)
    dep = build_deployment(cfg, rng_drops, rng_donor)

    vmr_pos = None
    region = None
    wp_seed = substream_seed(cfg.base_seed, run_index, STREAM_WAYPOINT)
    if scenario == "mobility":
        region = MotionRegion.from_sites(dep.sites)
        pos0 = region.sample(np.random.default_rng(wp_seed))
        vmr_pos = (float(pos0[0]), float(pos0[1]), cfg.antenna_height.vmr)

    env = build_radio_environment(
        dep,
        substream(cfg.base_seed, run_index, STREAM_LOS),
        substream(cfg.base_seed, run_index, STREAM_SHADOW),
        substream(cfg.base_seed, run_index, STREAM_O2I),
        vmr_pos)
    graph = attach_all(dep, env.snr_bs_to_mt, env.snr_bs_to_ue)
    record = RunRecord(run_id=run_index, seed=run_seed_label(cfg.base_seed, run_index),
                       scenario=scenario, topology_text=topology_dump(dep, graph))

    if scenario == "throughput":
        mac = build_mac_state(dep, graph, env.snr_bs_to_mt, env.snr_bs_to_ue)
        mac.run(cfg.slots_per_run)
        finite = np.isfinite(mac.departed)
        if not np.all(mac.delivered[finite] <= mac.departed[finite] + 1.0):
            raise RuntimeError("flow conservation violated in MAC loop")
        rep = throughput_report(mac.delivered, cfg.slots_per_run * cfg.slot_duration)
        record.per_ue_bps = rep.per_ue_bps
        record.ue_indoor = dep.ue_indoor.copy()
        record.ue_serving = graph.ue_parent.copy()
        hops = np.where(graph.ue_parent >= 0, graph.bs_hop[graph.ue_parent] + 1, 0)
        record.ue_hops = hops.astype(np.int64)
        record.avg_throughput_bps = rep.average_bps
        record.cell_edge_bps = rep.cell_edge_bps
    else:
        radio = build_vmr_radio(dep, graph, env)
        res: MobilityRunResult = run_mobility(
            radio, region, cfg.slots_per_run, cfg.slot_duration,
            timers or MobilityTimers(), wp_seed, cfg.onboard_ues,
            cfg.arch_mode is ArchMode.PROPOSED, trace=trace)
        record.outage_rate_pct = res.outage_rate_pct
        record.hfr_pct = res.hfr_pct
        record.handover_attempts = res.handover_attempts
        record.handover_failures = res.handover_failures
        record.onboard_handovers = res.onboard_handovers
        record.donor_crossings = res.donor_crossings
        record.trace = res.trace
    return record


# ---------------------------------------------------------------------------
# aggregation and reporting
# ---------------------------------------------------------------------------

METRIC_FIELDS = ("avg_throughput_bps", "cell_edge_bps", "outage_rate_pct",
                 "hfr_pct", "onboard_handovers", "donor_crossings")


@dataclass
class MetricsReport:
    scenario: str
    config: ScenarioConfig
    records: list[RunRecord]
    aggregate: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def pooled_rates_bps(self) -> np.ndarray:
        rates = [r.per_ue_bps for r in self.records if r.per_ue_bps is not None]
        return np.concatenate(rates) if rates else np.empty(0)

    def per_run_rows(self) -> list[dict]:
        rows = []
        for r in self.records:
            rows.append({"run_id": r.run_id, "seed": r.seed,
                         "avg_throughput_bps": r.avg_throughput_bps,
                         "cell_edge_bps": r.cell_edge_bps,
                         "outage_rate_pct": r.outage_rate_pct,
                         "hfr_pct": r.hfr_pct,
                         "onboard_handovers": r.onboard_handovers,
                         "donor_crossings": r.donor_crossings})
        return rows


def aggregate(rows: list[dict], pooled_rates: np.ndarray | None = None) -> dict:
    """Mean / sample std / 95% normal CI half-width per metric; the pooled
    cell edge is the 5th percentile over all per-UE rates, not a mean of
    per-run percentiles."""
    if not rows:
        raise ValueError("aggregate needs at least one run row")
    out: dict = {"num_runs": len(rows)}
    for name in METRIC_FIELDS:
        values = [r[name] for r in rows if r[name] is not None]
        if not values:
            continue
        arr = np.array(values, dtype=np.float64)
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        out[name] = {"mean": float(np.mean(arr)), "std": std,
                     "ci95_halfwidth": 1.96 * std / math.sqrt(arr.size)}
    if pooled_rates is not None and pooled_rates.size:
        out["pooled_cell_edge_bps"] = cell_edge_percentile(pooled_rates)
    return out


def _env_workers() -> int:
    return max(1, int(os.environ.get("IABSIM_WORKERS", "1")))


def _run_single_star(args):
    return run_single(*args)


def run_experiment(cfg: ScenarioConfig, scenario: str, trace: bool = False,
                   timers: MobilityTimers | None = None) -> MetricsReport:
    """All Monte Carlo runs for one (config, scenario) cell. Runs are
    independent given (base_seed, run_index); worker-pool size comes from
    IABSIM_WORKERS and does not affect results."""
    if scenario not in SCENARIO_KINDS:
        raise ConfigError(f"scenario must be one of {SCENARIO_KINDS}, got {scenario!r}")
    args = [(cfg, scenario, i, trace, timers) for i in range(cfg.num_runs)]
    workers = _env_workers()
    if workers > 1 and cfg.num_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_single_star, args))
    else:
        records = [run_single(*a) for a in args]
    records.sort(key=lambda r: r.run_id)
    report = MetricsReport(scenario=scenario, config=cfg, records=records)
    pooled = report.pooled_rates_bps if scenario == "throughput" else None
    report.aggregate = aggregate(report.per_run_rows(), pooled)
    report.provenance = {
        "config_sha256": cfg.sha256(),
        "mcs_table_sha256": MCS_TABLE.sha256,
        "channel_params_sha256": CHANNEL_PARAMS_SHA256,
        "code_version": __version__,
        "backend": backend_name(),
    }
    return report


@dataclass(frozen=True)
class ExperimentMatrix:
    """Paired-seed comparison grid: proposed mode plus 3gpp cells per donor
    count; every cell reuses the identical per-run seed sequence."""

    base: ScenarioConfig
    donor_counts: tuple[int, ...] = ()

    def cells(self) -> list[tuple[str, ScenarioConfig]]:
        out = [("proposed", self.base.replace(arch_mode=ArchMode.PROPOSED))]
        for nd in self.donor_counts:
            out.append((f"3gpp_nd{nd}",
                        self.base.replace(arch_mode=ArchMode.THREE_GPP, num_donors=nd)))
        return out


def run_matrix(matrix: ExperimentMatrix, scenario: str, trace: bool = False) -> dict[str, MetricsReport]:
    return {label: run_experiment(cell_cfg, scenario, trace=trace)
            for label, cell_cfg in matrix.cells()}


# ---------------------------------------------------------------------------
# output emission
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


PER_RUN_COLUMNS = ("run_id", "seed", "avg_throughput_bps", "cell_edge_bps",
                   "outage_rate_pct", "hfr_pct", "onboard_handovers", "donor_crossings")
PER_UE_COLUMNS = ("run_id", "ue_id", "indoor", "serving_bs", "hops", "rate_bps")
TRACE_COLUMNS = ("run_id", "slot", "event", "serving", "target", "snr_db")


def emit_outputs(report: MetricsReport, out_dir: str | Path) -> list[Path]:
    """Write the pinned output files; rewriting with identical inputs yields
    byte-identical files."""
    from .mobility import EVENT_NAMES

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "per_run_metrics.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PER_RUN_COLUMNS)
        for row in report.per_run_rows():
            w.writerow([_fmt(row[c]) for c in PER_RUN_COLUMNS])
    written.append(path)

    if report.scenario == "throughput":
        path = out / "per_ue_throughput.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PER_UE_COLUMNS)
            for r in report.records:
                for u in range(r.per_ue_bps.shape[0]):
                    w.writerow([r.run_id, u, int(r.ue_indoor[u]), int(r.ue_serving[u]),
                                int(r.ue_hops[u]), repr(float(r.per_ue_bps[u]))])
        written.append(path)

    if any(r.trace is not None for r in report.records):
        path = out / "trace.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in report.records:
                if r.trace is None:
                    continue
                for row in r.trace:
                    w.writerow([r.run_id, int(row.slot), EVENT_NAMES[int(row.event)],
                                int(row.serving), int(row.target), repr(float(row.snr))])
        written.append(path)

    for r in report.records:
        path = out / f"topology_run{r.run_id}.tsv"
        path.write_text(r.topology_text, encoding="utf-8")
        written.append(path)

    summary = {
        "scenario": report.scenario,
        "config": report.config.to_dict(),
        "aggregate": report.aggregate,
        "per_run": report.per_run_rows(),
        "provenance": report.provenance,
    }
    path = out / "summary.json"
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    written.append(path)
    return written
