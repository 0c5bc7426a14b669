"""Attachment-tree formation, hop levels, anchoring rules per architecture
mode, and handover classification.

In proposed (flat-IP) mode every IAB-node is a DU of one edge-cloud CU,
so relays may anchor through any gNB; in 3gpp mode relays may anchor only
through IAB-donors, and each relay's CU is its anchoring donor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .config import ArchMode
from .scenario import BsRole, Deployment

PARENT_NONE = -2      # unattached
PARENT_ROOT = -1      # wired gNB
CU_EDGE = -1          # the single edge-cloud CU of proposed mode
CU_NONE = -2


class HandoverKind(Enum):
    INTER_DU = "inter_du"
    INTER_CU = "inter_cu"


@dataclass
class TopologyGraph:
    """Attachment forest over base stations and UEs.

    bs_parent uses PARENT_ROOT for wired gNBs and PARENT_NONE for nodes that
    found no legal parent; hop level 1 denotes a wired gNB.
    """

    mode: ArchMode
    bs_parent: np.ndarray     # (B,)
    bs_hop: np.ndarray        # (B,) 0 for unattached
    bs_root: np.ndarray       # (B,) anchoring wired gNB, -1 if unattached
    cu_owner: np.ndarray      # (B,)
    bs_attached: np.ndarray   # (B,) bool
    mt_snr: np.ndarray        # (B,) serving backhaul SNR, NaN for gNBs
    ue_parent: np.ndarray     # (U,)
    ue_snr: np.ndarray        # (U,)

    @property
    def num_bs(self) -> int:
        return self.bs_parent.shape[0]

    def descendants(self, bs_id: int) -> np.ndarray:
        """All base stations strictly below bs_id in the tree."""
        below = np.zeros(self.num_bs, dtype=bool)
        frontier = [bs_id]
        while frontier:
            nxt = []
            for b in frontier:
                kids = np.where(self.bs_parent == b)[0]
                for k in kids:
                    if not below[k]:
                        below[k] = True
                        nxt.append(int(k))
            frontier = nxt
        return np.where(below)[0]

    def subtree_ues(self, bs_id: int) -> np.ndarray:
        members = set([bs_id] + list(self.descendants(bs_id)))
        return np.where(np.isin(self.ue_parent, list(members)))[0]

    def classify_handover(self, serving_bs: int, target_bs: int) -> HandoverKind:
        if self.cu_owner[serving_bs] == self.cu_owner[target_bs]:
            return HandoverKind.INTER_DU
        return HandoverKind.INTER_CU


def classify_handover(graph: TopologyGraph, serving_bs: int, target_bs: int) -> HandoverKind:
    return graph.classify_handover(serving_bs, target_bs)


def onboard_handover_count(mode: ArchMode, anchor_changed: bool, n_onboard: int) -> int:
    """Simultaneous onboard-UE handovers triggered by one completed VMR handover."""
    if mode is ArchMode.PROPOSED:
        return 0
    return n_onboard if anchor_changed else 0


def donor_rooted(deployment: Deployment, graph: TopologyGraph) -> np.ndarray:
    """Base stations whose anchoring root is an IAB-donor."""
    rooted = graph.bs_root >= 0
    out = np.zeros(graph.num_bs, dtype=bool)
    out[rooted] = deployment.bs_donor[graph.bs_root[rooted]]
    return out


def legal_parent_mask(deployment: Deployment, graph: TopologyGraph, mode: ArchMode,
                      for_mt: bool, max_hop_depth: int,
                      exclude_subtree_of: int | None = None) -> np.ndarray:
    """Candidate-parent mask for one attaching node.

    MTs in 3gpp mode may use only donors and donor-rooted relays; UEs may use
    any attached base station in either mode. Parents at the hop cap are
    excluded so relay chains stay within max_hop_depth.
    """
    mask = graph.bs_attached.copy()
    if for_mt:
        mask &= graph.bs_hop < max_hop_depth
        if mode is ArchMode.THREE_GPP:
            mask &= donor_rooted(deployment, graph)
    if exclude_subtree_of is not None:
        mask[exclude_subtree_of] = False
        mask[graph.descendants(exclude_subtree_of)] = False
    return mask


def candidate_parents(deployment: Deployment, graph: TopologyGraph, mode: ArchMode,
                      node_bs_id: int | None, max_hop_depth: int) -> np.ndarray:
    """Candidate parent ids for a node: a base-station id for an MT (its own
    subtree excluded), or None for a plain UE."""
    mask = legal_parent_mask(deployment, graph, mode, for_mt=node_bs_id is not None,
                             max_hop_depth=max_hop_depth,
                             exclude_subtree_of=node_bs_id)
    return np.where(mask)[0]


def attach_all(deployment: Deployment, snr_bs_to_mt: np.ndarray,
               snr_bs_to_ue: np.ndarray) -> TopologyGraph:
    """Form the attachment tree: relay MTs first (closest-to-a-gNB first),
    then UEs, each to its argmax-SNR legal candidate; ties break to the
    lowest base-station id."""
    cfg = deployment.config
    mode = cfg.arch_mode
    n_bs = deployment.num_bs
    n_ue = deployment.num_ue
    is_gnb = deployment.bs_role == BsRole.MACRO_GNB

    bs_parent = np.full(n_bs, PARENT_NONE, dtype=np.int64)
    bs_hop = np.zeros(n_bs, dtype=np.int64)
    bs_root = np.full(n_bs, -1, dtype=np.int64)
    mt_snr = np.full(n_bs, np.nan)
    gnb_ids = np.where(is_gnb)[0]
    bs_parent[gnb_ids] = PARENT_ROOT
    bs_hop[gnb_ids] = 1
    bs_root[gnb_ids] = gnb_ids
    bs_attached = is_gnb.copy()

    graph = TopologyGraph(mode, bs_parent, bs_hop, bs_root,
                          np.full(n_bs, CU_NONE, dtype=np.int64), bs_attached,
                          mt_snr, np.full(n_ue, PARENT_NONE, dtype=np.int64),
                          np.full(n_ue, np.nan))

    # relay attachment order: ascending distance to the nearest wired gNB
    iab_ids = np.where(~is_gnb)[0]
    if iab_ids.size:
        d = np.min(
            np.linalg.norm(deployment.bs_pos[iab_ids, None, :2]
                           - deployment.bs_pos[None, gnb_ids, :2], axis=2),
            axis=1)
        order = iab_ids[np.lexsort((iab_ids, d))]
        for j in order:
            mask = legal_parent_mask(deployment, graph, mode, for_mt=True,
                                     max_hop_depth=cfg.max_hop_depth)
            cand = np.where(mask)[0]
            if cand.size == 0:
                continue  # stays unattached, flagged by PARENT_NONE
            snrs = snr_bs_to_mt[cand, j]
            best = cand[int(np.argmax(snrs))]
            bs_parent[j] = best
            bs_hop[j] = bs_hop[best] + 1
            bs_root[j] = bs_root[best]
            bs_attached[j] = True
            mt_snr[j] = snrs.max()

    cu = np.full(n_bs, CU_NONE, dtype=np.int64)
    cu[gnb_ids] = gnb_ids
    relays = bs_attached & ~is_gnb
    if mode is ArchMode.PROPOSED:
        cu[relays] = CU_EDGE
    else:
        cu[relays] = bs_root[relays]
    graph.cu_owner = cu

    for u in range(n_ue):
        cand = np.where(bs_attached)[0]
        snrs = snr_bs_to_ue[cand, u]
        best = cand[int(np.argmax(snrs))]
        graph.ue_parent[u] = best
        graph.ue_snr[u] = snrs.max()

    return graph


_ROLE_NAMES = {BsRole.MACRO_GNB: "macro_gnb", BsRole.OUTDOOR_IAB_NODE: "outdoor_iab",
               BsRole.INDOOR_IAB_NODE: "indoor_iab", BsRole.VMR: "vmr"}


def topology_dump(deployment: Deployment, graph: TopologyGraph) -> str:
    """Tab-separated inspection dump: one row per base station then per UE."""
    lines = ["node_id\trole\tparent\thop_level\tcu_owner\tserving_snr_db"]
    for b in range(graph.num_bs):
        snr = graph.mt_snr[b]
        snr_s = "" if np.isnan(snr) else f"{snr:.6f}"
        lines.append(f"{b}\t{_ROLE_NAMES[BsRole(int(deployment.bs_role[b]))]}\t"
                     f"{int(graph.bs_parent[b])}\t{int(graph.bs_hop[b])}\t"
                     f"{int(graph.cu_owner[b])}\t{snr_s}")
    n_bs = graph.num_bs
    for u in range(graph.ue_parent.shape[0]):
        p = int(graph.ue_parent[u])
        hop = int(graph.bs_hop[p]) + 1 if p >= 0 else 0
        cu = int(graph.cu_owner[p]) if p >= 0 else CU_NONE
        snr = graph.ue_snr[u]
        snr_s = "" if np.isnan(snr) else f"{snr:.6f}"
        lines.append(f"{n_bs + u}\tue\t{p}\t{hop}\t{cu}\t{snr_s}")
    return "\n".join(lines) + "\n"


def write_topology_dump(deployment: Deployment, graph: TopologyGraph, path: str | Path) -> None:
    Path(path).write_text(topology_dump(deployment, graph), encoding="utf-8")
