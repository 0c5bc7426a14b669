import math

import numpy as np
import pytest

from iabsim.config import ArchMode, ScenarioConfig
from iabsim.mac import (MacState, SlotPhase, build_mac_state, cell_edge_percentile,
                        phase_of, throughput_report)
from iabsim.scenario import BsRole, Deployment
from iabsim.topology import PARENT_NONE, PARENT_ROOT, TopologyGraph
from brute_oracle import BruteSim

BW = 1e9
SLOT = 1e-3


def make_state(parents, ue_parent, cap, cfg=None) -> MacState:
    """Hand-built MacState for synthetic trees; capacities injected directly."""
    cfg = cfg or ScenarioConfig()
    n_bs = len(parents)
    n_ue = len(ue_parent)
    bs_parent = np.array([PARENT_ROOT if p is None else p for p in parents], dtype=np.int64)
    hop = np.zeros(n_bs, dtype=np.int64)
    root = np.zeros(n_bs, dtype=np.int64)
    for b in range(n_bs):
        h, node = 1, b
        while parents[node] is not None:
            node = parents[node]
            h += 1
        hop[b] = h
        root[b] = node
    role = np.where(bs_parent == PARENT_ROOT, BsRole.MACRO_GNB, BsRole.OUTDOOR_IAB_NODE)
    dep = Deployment(
        config=cfg, sites=np.zeros((1, 2)), offices=[],
        bs_pos=np.zeros((n_bs, 3)), bs_role=role.astype(np.int64),
        bs_site=np.zeros(n_bs, dtype=np.int64),
        bs_tx_dbm=np.zeros(n_bs), bs_elements=np.ones(n_bs, dtype=np.int64),
        bs_donor=np.zeros(n_bs, dtype=bool),
        ue_pos=np.zeros((n_ue, 3)), ue_indoor=np.zeros(n_ue, dtype=bool),
        ue_site=np.zeros(n_ue, dtype=np.int64))
    graph = TopologyGraph(
        mode=ArchMode.PROPOSED, bs_parent=bs_parent, bs_hop=hop, bs_root=root,
        cu_owner=np.full(n_bs, -1, dtype=np.int64),
        bs_attached=np.ones(n_bs, dtype=bool),
        mt_snr=np.full(n_bs, np.nan),
        ue_parent=np.array(ue_parent, dtype=np.int64),
        ue_snr=np.zeros(n_ue))
    state = build_mac_state(dep, graph, np.full((n_bs, n_bs), -100.0),
                            np.full((n_bs, n_ue), -100.0))
    for e in range(state.entry_target.shape[0]):
        b = int(np.searchsorted(state.child_ptr, e, side="right")) - 1
        key = ("ue" if state.entry_is_ue[e] else "bs", int(state.entry_target[e]))
        state.entry_cap[e] = cap[(b,) + key]
    return state


class TestPhase:
    def test_slot0_serves_odd_hops(self):
        assert phase_of(0) is SlotPhase.ODD_HOP_TRANSMIT

    def test_slot1_serves_even_hops(self):
        assert phase_of(1) is SlotPhase.EVEN_HOP_TRANSMIT

    def test_parity_counts(self):
        n = 10_000
        odd = sum(phase_of(s) is SlotPhase.ODD_HOP_TRANSMIT for s in range(n))
        assert odd == n // 2

    def test_negative_slot_rejected(self):
        with pytest.raises(ValueError):
            phase_of(-1)


class TestSingleLink:
    def test_closed_form_rate(self):
        cap = 2.4063 * BW * SLOT
        st = make_state([None], [0], {(0, "ue", 0): cap})
        n = 1001
        st.run(n)
        serving_slots = math.ceil(n / 2)  # slots 0, 2, 4, ...
        assert st.delivered[0] == pytest.approx(cap * serving_slots, abs=cap)
        rate = st.delivered[0] / (n * SLOT)
        assert rate == pytest.approx(2.4063 * BW / 2, rel=2e-3)

    def test_two_equal_ues_split_evenly(self):
        cap = 1e6
        st = make_state([None], [0, 0], {(0, "ue", 0): cap, (0, "ue", 1): cap})
        st.run(8)  # 4 serving slots, alternating
        assert st.delivered[0] == st.delivered[1] == 2 * cap

    def test_departed_equals_delivered_at_root(self):
        st = make_state([None], [0], {(0, "ue", 0): 5e5})
        st.run(100)
        assert st.departed[0] == st.delivered[0] > 0


class TestTwoHopChain:
    def test_equal_link_se_rate(self):
        cap = 7e6
        st = make_state([None, 0], [1],
                        {(0, "bs", 1): cap, (1, "ue", 0): cap})
        n = 1000
        st.run(n)
        # backhaul fills even slots, access drains odd slots: cap per 2 slots
        assert st.delivered[0] == pytest.approx(cap * (n // 2), abs=cap)
        rate = st.delivered[0] / (n * SLOT)
        assert rate == pytest.approx(cap / SLOT / 2, rel=2e-3)

    def test_access_bottleneck_at_half_backhaul(self):
        cap_b = 7e6
        st = make_state([None, 0], [1],
                        {(0, "bs", 1): cap_b, (1, "ue", 0): cap_b / 2})
        n = 1000
        st.run(n)
        assert st.delivered[0] == pytest.approx(cap_b / 2 * (n // 2), abs=cap_b)

    def test_four_slot_period_hand_simulation(self):
        cap = 1e6
        st = make_state([None, 0], [1], {(0, "bs", 1): cap, (1, "ue", 0): cap})
        per_slot = [st.serve_slot().sum() for _ in range(4)]
        # slot 0: backhaul cap; slot 1: access cap; repeat
        assert per_slot == [cap, cap, cap, cap]
        assert st.delivered[0] == 2 * cap


class TestSkipEmptyChildren:
    def test_intermediate_serves_backlogged_child_only(self):
        # relay 1 serves UEs 0 (fed) and 1 (starved: zero backhaul share)
        cap = 1e6
        st = make_state([None, 0], [1, 1],
                        {(0, "bs", 1): cap, (1, "ue", 0): cap, (1, "ue", 1): cap})
        # starve UE 1 by zeroing its backlog share manually after each feed
        st.run(1)   # backhaul slot feeds flows of relay 1 (round-robin: ue0 whole cap)
        delta = st.serve_slot()
        ue_entries = np.where(st.entry_is_ue)[0]
        served = {int(st.entry_target[e]): delta[e] for e in ue_entries}
        assert served[0] == cap and served[1] == 0.0


def random_tree(rng):
    n_bs = rng.integers(1, 4)
    parents = [None]
    for b in range(1, n_bs):
        parents.append(int(rng.integers(0, b)) if rng.random() < 0.7 else None)
    n_ue = int(rng.integers(1, 7 - n_bs))
    ue_parent = [int(rng.integers(0, n_bs)) for _ in range(n_ue)]
    cap = {}
    choices = np.array([0.0, 0.3e6, 1e6, 2.5e6, 7e6])
    for b in range(n_bs):
        if parents[b] is not None:
            cap[(parents[b], "bs", b)] = float(rng.choice(choices))
    for u, p in enumerate(ue_parent):
        cap[(p, "ue", u)] = float(rng.choice(choices))
    return parents, ue_parent, cap


class TestAgainstBruteOracle:
    @pytest.mark.parametrize("case_seed", range(40))
    def test_randomized_small_topologies(self, case_seed):
        rng = np.random.default_rng(1000 + case_seed)
        parents, ue_parent, cap = random_tree(rng)
        st = make_state(parents, ue_parent, cap)
        oracle = BruteSim(dict(enumerate(parents)), dict(enumerate(ue_parent)), cap)
        n = 60
        st.run(n)
        oracle.run(n)
        for u in range(len(ue_parent)):
            assert st.delivered[u] == oracle.delivered[u], (parents, ue_parent, cap, u)
            assert st.departed[u] == oracle.departed[u]
        for b in range(len(parents)):
            for u in range(len(ue_parent)):
                expect = oracle.backlog[b].get(u, 0.0)
                assert st.backlog[b, u] == expect or (
                    math.isinf(expect) and math.isinf(st.backlog[b, u]))

    @pytest.mark.parametrize("case_seed", range(15))
    def test_conservation(self, case_seed):
        rng = np.random.default_rng(2000 + case_seed)
        parents, ue_parent, cap = random_tree(rng)
        st = make_state(parents, ue_parent, cap)
        st.run(101)
        assert np.all(st.delivered <= st.departed + 1e-6)

    @pytest.mark.parametrize("case_seed", range(15))
    def test_removing_a_ue_never_hurts_others(self, case_seed):
        rng = np.random.default_rng(3000 + case_seed)
        parents, ue_parent, cap = random_tree(rng)
        if len(ue_parent) < 2:
            pytest.skip("needs two UEs")
        st = make_state(parents, ue_parent, cap)
        st.run(80)
        removed = len(ue_parent) - 1
        kept_parents = ue_parent[:-1]
        kept_cap = {k: v for k, v in cap.items() if k[1] != "ue" or k[2] != removed}
        st2 = make_state(parents, kept_parents, kept_cap)
        st2.run(80)
        for u in range(len(kept_parents)):
            assert st2.delivered[u] >= st.delivered[u] - 1e-9


class TestThroughputReport:
    def test_degenerate_distribution(self):
        rep = throughput_report(np.full(10, 3e6), 1.0)
        assert rep.average_bps == rep.cell_edge_bps == 3e6

    def test_percentile_interpolation(self):
        rates = np.arange(1.0, 101.0)
        assert cell_edge_percentile(rates) == pytest.approx(5.95)

    def test_pooling_identical_runs_invariant(self):
        rates = np.arange(1.0, 101.0)
        pooled = np.concatenate([rates, rates, rates])
        assert cell_edge_percentile(pooled) == pytest.approx(cell_edge_percentile(rates))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            throughput_report(np.array([]), 1.0)
        with pytest.raises(ValueError):
            throughput_report(np.array([1.0]), 0.0)


class TestHalfDuplexByConstruction:
    def test_no_bs_transmits_and_receives_same_slot(self):
        # transmit set = matching hop parity; a child's parent always has the
        # opposite parity, so credits only flow into silent nodes
        st = make_state([None, 0, 1], [2],
                        {(0, "bs", 1): 1e6, (1, "bs", 2): 1e6, (2, "ue", 0): 1e6})
        for slot in range(6):
            before = st.backlog.copy()
            st.serve_slot()
            changed = np.where(np.any(st.backlog != before, axis=1))[0]
            for b in changed:
                gained = np.any(st.backlog[b] > before[b])
                if gained:
                    assert (st.bs_hop[b] + slot) % 2 != 1  # receiver was silent
