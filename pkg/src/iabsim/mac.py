"""Slot-level half-duplex TDM downlink scheduling.

Static TDM by hop parity: in even-indexed slots the odd-hop base stations
(wired gNBs and donors are hop 1) transmit, in odd-indexed slots the even-hop
ones do. Each transmitting base station grants the whole slot to one child in
persistent round-robin order, skipping children whose flows are all empty.
Backhaul grants drain per-flow backlogs round-robin and credit the child's
queue; wired gNBs hold an infinite (full-buffer) backlog per descendant flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._jit import maybe_njit
from .channel import MCS_TABLE, McsTable, _se_for_snr
from .scenario import Deployment
from .topology import PARENT_ROOT, TopologyGraph


class SlotPhase(Enum):
    ODD_HOP_TRANSMIT = "odd_hop_transmit"
    EVEN_HOP_TRANSMIT = "even_hop_transmit"


def phase_of(slot_index: int) -> SlotPhase:
    """Slots 0, 2, 4, ... serve hop levels 1, 3, ..."""
    if slot_index < 0:
        raise ValueError("slot_index must be >= 0")
    return SlotPhase.ODD_HOP_TRANSMIT if slot_index % 2 == 0 else SlotPhase.EVEN_HOP_TRANSMIT


@dataclass
class ForwardingQueue:
    owner_bs: int
    per_flow_backlog: dict[int, float]


@maybe_njit
def _mac_loop(n_slots, start_slot, bs_hop, bs_active, bs_is_root,
              child_ptr, entry_is_ue, entry_target, entry_cap,
              flow_ptr, flow_ue, rr_child, rr_flow,
              backlog, delivered, departed, delivered_per_entry):
    n_bs = bs_hop.shape[0]
    for s in range(n_slots):
        slot = start_slot + s
        for b in range(n_bs):
            if not bs_active[b]:
                continue
            # transmit iff hop parity matches the slot phase
            if (bs_hop[b] + slot) % 2 != 1:
                continue
            c0 = child_ptr[b]
            n_children = child_ptr[b + 1] - c0
            if n_children == 0:
                continue
            chosen = -1
            for i in range(n_children):
                e = c0 + (rr_child[b] + i) % n_children
                for f in range(flow_ptr[e], flow_ptr[e + 1]):
                    if backlog[b, flow_ue[f]] > 0.0:
                        chosen = e
                        break
                if chosen >= 0:
                    rr_child[b] = (rr_child[b] + i + 1) % n_children
                    break
            if chosen < 0:
                continue  # all children empty; slot idles (work conservation)
            e = chosen
            cap = entry_cap[e]
            if entry_is_ue[e]:
                u = entry_target[e]
                amt = min(backlog[b, u], cap)
                if amt > 0.0:
                    backlog[b, u] -= amt
                    delivered[u] += amt
                    if bs_is_root[b]:
                        departed[u] += amt
                    delivered_per_entry[e] += amt
            else:
                c = entry_target[e]
                rem = cap
                nf = flow_ptr[e + 1] - flow_ptr[e]
                f_base = flow_ptr[e]
                served_last = -1
                for k in range(nf):
                    if rem <= 0.0:
                        break
                    fi = f_base + (rr_flow[e] + k) % nf
                    u = flow_ue[fi]
                    avail = backlog[b, u]
                    if avail <= 0.0:
                        continue
                    amt = min(avail, rem)
                    backlog[b, u] -= amt
                    backlog[c, u] += amt
                    if bs_is_root[b]:
                        departed[u] += amt
                    rem -= amt
                    served_last = k
                if served_last >= 0:
                    rr_flow[e] = (rr_flow[e] + served_last + 1) % nf
                    delivered_per_entry[e] += cap - rem


@dataclass
class MacState:
    """Flattened queue/topology structure driven by the slot-loop kernel."""

    bs_hop: np.ndarray
    bs_active: np.ndarray
    bs_is_root: np.ndarray
    child_ptr: np.ndarray        # (B+1,)
    entry_is_ue: np.ndarray      # (E,)
    entry_target: np.ndarray     # (E,) child bs id or ue id
    entry_cap: np.ndarray        # (E,) bits per granted slot
    flow_ptr: np.ndarray         # (E+1,)
    flow_ue: np.ndarray
    backlog: np.ndarray          # (B, U) bits; inf rows at wired gNBs
    rr_child: np.ndarray
    rr_flow: np.ndarray
    delivered: np.ndarray        # (U,) bits at UEs
    departed: np.ndarray         # (U,) bits that left a wired gNB
    delivered_per_entry: np.ndarray
    next_slot: int = 0

    @property
    def num_ue(self) -> int:
        return self.delivered.shape[0]

    def run(self, n_slots: int) -> None:
        _mac_loop(n_slots, self.next_slot, self.bs_hop, self.bs_active,
                  self.bs_is_root, self.child_ptr, self.entry_is_ue,
                  self.entry_target, self.entry_cap, self.flow_ptr, self.flow_ue,
                  self.rr_child, self.rr_flow, self.backlog, self.delivered,
                  self.departed, self.delivered_per_entry)
        self.next_slot += n_slots

    def serve_slot(self) -> np.ndarray:
        """Advance one slot; returns bits delivered per link entry this slot."""
        before = self.delivered_per_entry.copy()
        self.run(1)
        return self.delivered_per_entry - before

    def queue_view(self, bs_id: int) -> ForwardingQueue:
        flows = {int(u): float(self.backlog[bs_id, u])
                 for u in range(self.backlog.shape[1]) if self.backlog[bs_id, u] > 0.0}
        return ForwardingQueue(bs_id, flows)


def link_capacity_bits(snr_db: float, bandwidth: float, slot_duration: float,
                       table: McsTable | None = None) -> float:
    t = table if table is not None else MCS_TABLE
    return _se_for_snr(float(snr_db), t.required_snr_db, t.spectral_efficiency) \
        * bandwidth * slot_duration


def build_mac_state(deployment: Deployment, graph: TopologyGraph,
                    snr_bs_to_mt: np.ndarray, snr_bs_to_ue: np.ndarray,
                    table: McsTable | None = None) -> MacState:
    cfg = deployment.config
    n_bs = deployment.num_bs
    n_ue = deployment.num_ue
    bw, slot = cfg.system_bandwidth, cfg.slot_duration

    # UEs whose serving chain reaches a wired gNB, registered on every hop
    subtree_ues: list[list[int]] = [[] for _ in range(n_bs)]
    for u in range(n_ue):
        chain = []
        b = int(graph.ue_parent[u])
        ok = b >= 0
        while b >= 0:
            chain.append(b)
            p = int(graph.bs_parent[b])
            if p == PARENT_ROOT:
                break
            if p < 0:
                ok = False
                break
            b = p
        if ok:
            for bs in chain:
                subtree_ues[bs].append(u)

    child_ptr = np.zeros(n_bs + 1, dtype=np.int64)
    entry_is_ue: list[bool] = []
    entry_target: list[int] = []
    entry_cap: list[float] = []
    entry_flows: list[list[int]] = []
    for b in range(n_bs):
        kids: list[tuple[int, bool, int]] = []
        for c in np.where(graph.bs_parent == b)[0]:
            kids.append((int(c), False, int(c)))
        for u in np.where(graph.ue_parent == b)[0]:
            kids.append((n_bs + int(u), True, int(u)))
        kids.sort()
        for _, is_ue, target in kids:
            entry_is_ue.append(is_ue)
            entry_target.append(target)
            if is_ue:
                entry_cap.append(link_capacity_bits(snr_bs_to_ue[b, target], bw, slot, table))
                entry_flows.append([target])
            else:
                entry_cap.append(link_capacity_bits(snr_bs_to_mt[b, target], bw, slot, table))
                entry_flows.append(sorted(subtree_ues[target]))
        child_ptr[b + 1] = len(entry_is_ue)

    flow_ptr = np.zeros(len(entry_is_ue) + 1, dtype=np.int64)
    flow_ue: list[int] = []
    for e, flows in enumerate(entry_flows):
        flow_ue.extend(flows)
        flow_ptr[e + 1] = len(flow_ue)

    backlog = np.zeros((n_bs, n_ue), dtype=np.float64)
    is_root = graph.bs_parent == PARENT_ROOT
    for r in np.where(is_root)[0]:
        for u in subtree_ues[r]:
            backlog[r, u] = np.inf

    n_entries = len(entry_is_ue)
    return MacState(
        bs_hop=graph.bs_hop.astype(np.int64),
        bs_active=graph.bs_attached.astype(np.bool_),
        bs_is_root=is_root.astype(np.bool_),
        child_ptr=child_ptr,
        entry_is_ue=np.array(entry_is_ue, dtype=np.bool_),
        entry_target=np.array(entry_target, dtype=np.int64),
        entry_cap=np.array(entry_cap, dtype=np.float64),
        flow_ptr=flow_ptr,
        flow_ue=np.array(flow_ue, dtype=np.int64),
        backlog=backlog,
        rr_child=np.zeros(n_bs, dtype=np.int64),
        rr_flow=np.zeros(n_entries, dtype=np.int64),
        delivered=np.zeros(n_ue, dtype=np.float64),
        departed=np.zeros(n_ue, dtype=np.float64),
        delivered_per_entry=np.zeros(n_entries, dtype=np.float64),
    )


@dataclass
class ThroughputReport:
    per_ue_bps: np.ndarray
    average_bps: float = field(init=False)
    cell_edge_bps: float = field(init=False)

    def __post_init__(self):
        if self.per_ue_bps.size == 0:
            raise ValueError("throughput report needs at least one UE")
        self.average_bps = float(np.mean(self.per_ue_bps))
        self.cell_edge_bps = cell_edge_percentile(self.per_ue_bps)


def cell_edge_percentile(rates_bps: np.ndarray) -> float:
    """5th percentile with linear interpolation between order statistics."""
    return float(np.percentile(np.asarray(rates_bps, dtype=np.float64), 5.0,
                               method="linear"))


def throughput_report(delivered_bits: np.ndarray, sim_duration: float) -> ThroughputReport:
    if sim_duration <= 0:
        raise ValueError("sim_duration must be positive")
    return ThroughputReport(np.asarray(delivered_bits, dtype=np.float64) / sim_duration)
