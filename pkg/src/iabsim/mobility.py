"""Vehicle-mounted relay mobility: random-waypoint motion at constant speed
plus the handover / radio-link-failure state machine.

Handover trigger: a candidate must exceed the serving cell by the A3 offset
continuously for the time-to-trigger. RLF window: starts when serving SNR
drops below the enter threshold, keeps running inside the hysteresis band,
and resets only when SNR reaches the exit threshold; at expiry the relay
re-establishes after a fixed recovery time. A slot counts as outage while in
recovery or while serving SNR is below the enter threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import maybe_njit
from .channel import CHANNEL_PARAMS, _pathloss_db

VMR_SPEED_KMPH = 120.0
VMR_SPEED_MPS = VMR_SPEED_KMPH / 3.6
REGION_MARGIN_M = 50.0

# fsm state-vector slots
(F_STATE, F_TTT, F_PREP, F_EXEC, F_WINDOW, F_RECOVERY, F_SERVING, F_TARGET,
 F_PREP_TOTAL, F_EXEC_TOTAL, F_ATTEMPTS, F_FAILURES, F_CROSSINGS, F_OUTAGE) = range(14)
F_COUNT = 14

ST_CONNECTED = 0
ST_TTT_RUNNING = 1
ST_PREPARING = 2
ST_EXECUTING = 3
ST_RLF_RECOVERY = 4

STATE_NAMES = {ST_CONNECTED: "connected", ST_TTT_RUNNING: "ttt_running",
               ST_PREPARING: "preparing", ST_EXECUTING: "executing",
               ST_RLF_RECOVERY: "rlf_recovery"}

EV_TTT_START = 1
EV_HO_PREP = 2
EV_HO_EXEC = 4
EV_HO_SUCCESS = 8
EV_HO_FAIL = 16
EV_RLF = 32
EV_RECOVERED = 64
EVENT_NAMES = {EV_TTT_START: "TTT_START", EV_HO_PREP: "HO_PREP", EV_HO_EXEC: "HO_EXEC",
               EV_HO_SUCCESS: "HO_SUCCESS", EV_HO_FAIL: "HO_FAIL", EV_RLF: "RLF",
               EV_RECOVERED: "RECOVERED"}

# timer-vector slots (all in whole slots)
(T_TTT, T_PREP_DU, T_PREP_CU, T_EXEC_DU, T_EXEC_CU, T_WINDOW, T_RECOVERY) = range(7)


@dataclass(frozen=True)
class MobilityTimers:
    a3_offset_db: float = 3.0
    ttt_ms: float = 80.0
    prep_ms_inter_du: float = 20.0
    prep_ms_inter_cu: float = 40.0
    exec_ms_inter_du: float = 25.0
    exec_ms_inter_cu: float = 50.0
    rlf_enter_snr_db: float = 2.0
    rlf_exit_snr_db: float = 5.0
    rlf_window_ms: float = 1000.0
    recovery_ms: float = 100.0

    def __post_init__(self):
        for name in ("ttt_ms", "prep_ms_inter_du", "prep_ms_inter_cu",
                     "exec_ms_inter_du", "exec_ms_inter_cu", "rlf_window_ms",
                     "recovery_ms", "a3_offset_db"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.rlf_exit_snr_db < self.rlf_enter_snr_db:
            raise ValueError("rlf_exit_snr_db must be >= rlf_enter_snr_db")

    def slot_counts(self, slot_duration_s: float) -> np.ndarray:
        dt_ms = slot_duration_s * 1e3
        ms = (self.ttt_ms, self.prep_ms_inter_du, self.prep_ms_inter_cu,
              self.exec_ms_inter_du, self.exec_ms_inter_cu,
              self.rlf_window_ms, self.recovery_ms)
        return np.array([max(1, round(m / dt_ms)) for m in ms], dtype=np.int64)


# ---------------------------------------------------------------------------
# motion region and random waypoint
# ---------------------------------------------------------------------------

def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns CCW vertices without repetition."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _dist_point_segment(px, py, ax, ay, bx, by) -> float:
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / L2))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


@dataclass
class MotionRegion:
    """Convex hull of the macro sites inflated by a fixed margin."""

    vertices: np.ndarray
    margin: float
    _bounds: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        xs, ys = self.vertices[:, 0], self.vertices[:, 1]
        self._bounds = (float(xs.min() - self.margin), float(xs.max() + self.margin),
                        float(ys.min() - self.margin), float(ys.max() + self.margin))

    @classmethod
    def from_sites(cls, sites: np.ndarray, margin: float = REGION_MARGIN_M) -> "MotionRegion":
        return cls(_convex_hull(np.asarray(sites, dtype=np.float64)), margin)

    def contains(self, x: float, y: float) -> bool:
        v = self.vertices
        n = v.shape[0]
        if n >= 3:
            inside = True
            for i in range(n):
                ax, ay = v[i]
                bx, by = v[(i + 1) % n]
                if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0.0:
                    inside = False
                    break
            if inside:
                return True
            return self._boundary_distance(x, y) <= self.margin
        return self._boundary_distance(x, y) <= self.margin

    def _boundary_distance(self, x: float, y: float) -> float:
        v = self.vertices
        n = v.shape[0]
        if n == 1:
            return math.hypot(x - v[0, 0], y - v[0, 1])
        return min(_dist_point_segment(x, y, v[i, 0], v[i, 1],
                                       v[(i + 1) % n, 0], v[(i + 1) % n, 1])
                   for i in range(n if n >= 3 else n - 1))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        x0, x1, y0, y1 = self._bounds
        while True:
            x = rng.uniform(x0, x1)
            y = rng.uniform(y0, y1)
            if self.contains(x, y):
                return np.array([x, y])


@dataclass
class WaypointState:
    position: np.ndarray          # (2,)
    waypoint: np.ndarray          # (2,)
    speed_mps: float = VMR_SPEED_MPS


def step_waypoint(state: WaypointState, dt: float, rng: np.random.Generator,
                  region: MotionRegion) -> WaypointState:
    """Advance speed*dt toward the waypoint; on arrival draw a fresh uniform
    waypoint with zero pause (residual motion within the slot is dropped)."""
    step = state.speed_mps * dt
    dx = state.waypoint[0] - state.position[0]
    dy = state.waypoint[1] - state.position[1]
    d = math.hypot(dx, dy)
    if d <= step:
        pos = state.waypoint.copy()
        wp = region.sample(rng)
    else:
        pos = state.position + np.array([dx, dy]) * (step / d)
        wp = state.waypoint.copy()
    return WaypointState(pos, wp, state.speed_mps)


# ---------------------------------------------------------------------------
# handover / RLF state machine
# ---------------------------------------------------------------------------

@maybe_njit
def _fsm_step(state, serving_snr, best_id, best_snr, target_available,
              cu_owner, anchor_root, a3_offset, rlf_enter, rlf_exit, timers):
    """One slot of the handover FSM; mutates state, returns an event bitmask."""
    ev = 0
    st = state[F_STATE]

    if st == ST_RLF_RECOVERY:
        state[F_OUTAGE] += 1
        state[F_RECOVERY] += 1
        if state[F_RECOVERY] >= timers[T_RECOVERY] and best_id >= 0:
            state[F_SERVING] = best_id
            state[F_STATE] = ST_CONNECTED
            state[F_TTT] = 0
            state[F_WINDOW] = 0
            ev |= EV_RECOVERED
        return ev

    outage = serving_snr < rlf_enter
    if serving_snr < rlf_enter:
        state[F_WINDOW] += 1
    elif serving_snr >= rlf_exit:
        state[F_WINDOW] = 0
    elif state[F_WINDOW] > 0:
        # hysteresis band: a running window keeps running
        state[F_WINDOW] += 1

    if state[F_WINDOW] >= timers[T_WINDOW]:
        if st == ST_PREPARING or st == ST_EXECUTING:
            state[F_FAILURES] += 1
            ev |= EV_HO_FAIL
        ev |= EV_RLF
        state[F_STATE] = ST_RLF_RECOVERY
        state[F_RECOVERY] = 0
        state[F_SERVING] = -1
        state[F_TARGET] = -1
        state[F_TTT] = 0
        state[F_WINDOW] = 0
        state[F_OUTAGE] += 1
        return ev

    if st == ST_CONNECTED or st == ST_TTT_RUNNING:
        if best_id >= 0 and best_snr >= serving_snr + a3_offset:
            if state[F_TTT] == 0:
                ev |= EV_TTT_START
            state[F_TTT] += 1
            state[F_STATE] = ST_TTT_RUNNING
            if state[F_TTT] >= timers[T_TTT]:
                serving = state[F_SERVING]
                if cu_owner[serving] == cu_owner[best_id]:
                    state[F_PREP_TOTAL] = timers[T_PREP_DU]
                    state[F_EXEC_TOTAL] = timers[T_EXEC_DU]
                else:
                    state[F_PREP_TOTAL] = timers[T_PREP_CU]
                    state[F_EXEC_TOTAL] = timers[T_EXEC_CU]
                state[F_TARGET] = best_id
                state[F_PREP] = 0
                state[F_EXEC] = 0
                state[F_TTT] = 0
                state[F_STATE] = ST_PREPARING
                state[F_ATTEMPTS] += 1
                ev |= EV_HO_PREP
        else:
            state[F_TTT] = 0
            state[F_STATE] = ST_CONNECTED
    elif st == ST_PREPARING:
        if target_available == 0:
            state[F_FAILURES] += 1
            state[F_TARGET] = -1
            state[F_STATE] = ST_CONNECTED
            ev |= EV_HO_FAIL
        else:
            state[F_PREP] += 1
            if state[F_PREP] >= state[F_PREP_TOTAL]:
                state[F_STATE] = ST_EXECUTING
                ev |= EV_HO_EXEC
    else:  # ST_EXECUTING
        if target_available == 0:
            state[F_FAILURES] += 1
            state[F_TARGET] = -1
            state[F_STATE] = ST_CONNECTED
            ev |= EV_HO_FAIL
        else:
            state[F_EXEC] += 1
            if state[F_EXEC] >= state[F_EXEC_TOTAL]:
                serving = state[F_SERVING]
                tgt = state[F_TARGET]
                if anchor_root[serving] != anchor_root[tgt]:
                    state[F_CROSSINGS] += 1
                state[F_SERVING] = tgt
                state[F_TARGET] = -1
                state[F_STATE] = ST_CONNECTED
                state[F_TTT] = 0
                state[F_WINDOW] = 0
                ev |= EV_HO_SUCCESS

    if outage:
        state[F_OUTAGE] += 1
    return ev


class HandoverFsm:
    """Python-facing wrapper around the FSM state vector (tests, traces)."""

    def __init__(self, serving_bs: int):
        self.data = np.zeros(F_COUNT, dtype=np.int64)
        self.data[F_SERVING] = serving_bs
        self.data[F_TARGET] = -1

    def step(self, serving_snr: float, best_id: int, best_snr: float,
             cu_owner: np.ndarray, anchor_root: np.ndarray, timers: np.ndarray,
             a3_offset: float = 3.0, rlf_enter: float = 2.0, rlf_exit: float = 5.0,
             target_available: bool = True) -> int:
        return int(_fsm_step(self.data, float(serving_snr), int(best_id), float(best_snr),
                             1 if target_available else 0,
                             cu_owner, anchor_root,
                             float(a3_offset), float(rlf_enter), float(rlf_exit), timers))

    @property
    def state(self) -> str:
        code = int(self.data[F_STATE])
        if code in (ST_CONNECTED, ST_TTT_RUNNING) and self.data[F_WINDOW] > 0:
            return "rlf_pending"
        return STATE_NAMES[code]

    @property
    def serving(self) -> int:
        return int(self.data[F_SERVING])

    @property
    def counters(self) -> dict[str, int]:
        return {"handover_attempts": int(self.data[F_ATTEMPTS]),
                "handover_failures": int(self.data[F_FAILURES]),
                "donor_crossings": int(self.data[F_CROSSINGS]),
                "outage_slots": int(self.data[F_OUTAGE])}


# ---------------------------------------------------------------------------
# slot loop
# ---------------------------------------------------------------------------

@maybe_njit
def _vmr_snr(ch, fc_ghz, px, py, vmr_z, bs_x, bs_y, bs_z, bs_model,
             budget_const, bs_los, out):
    """SNR from every base station to the relay at (px, py): the frozen
    per-link budget constant minus pathloss at the current distance."""
    for b in range(bs_x.shape[0]):
        dx = bs_x[b] - px
        dy = bs_y[b] - py
        dz = bs_z[b] - vmr_z
        d2d = math.sqrt(dx * dx + dy * dy)
        d3d = math.sqrt(d2d * d2d + dz * dz)
        if d3d < 1e-9:
            out[b] = -np.inf
            continue
        pl = _pathloss_db(ch, bs_model[b], bs_los[b], d2d, d3d, fc_ghz, bs_z[b], vmr_z)
        out[b] = budget_const[b] - pl


@maybe_njit
def _mobility_loop(n_slots, ch, fc_ghz, bs_x, bs_y, bs_z, bs_model,
                   budget_const, bs_los, legal, cu_owner, anchor_root,
                   vmr_z, step_m, a3_offset, rlf_enter, rlf_exit, timers,
                   state, pos, wp, wp_pool, wp_next, snr_buf,
                   trace_on, tr_slot, tr_event, tr_serving, tr_target, tr_snr):
    n_bs = bs_x.shape[0]
    n_trace = 0
    for slot in range(n_slots):
        dx = wp[0] - pos[0]
        dy = wp[1] - pos[1]
        d = math.sqrt(dx * dx + dy * dy)
        if d <= step_m:
            pos[0] = wp[0]
            pos[1] = wp[1]
            if wp_next >= wp_pool.shape[0]:
                return 1, wp_next, n_trace  # waypoint pool exhausted; retry bigger
            wp[0] = wp_pool[wp_next, 0]
            wp[1] = wp_pool[wp_next, 1]
            wp_next += 1
        else:
            pos[0] += dx / d * step_m
            pos[1] += dy / d * step_m

        _vmr_snr(ch, fc_ghz, pos[0], pos[1], vmr_z, bs_x, bs_y, bs_z, bs_model,
                 budget_const, bs_los, snr_buf)
        serving = state[F_SERVING]
        serving_snr = snr_buf[serving] if serving >= 0 else -np.inf
        include_serving = state[F_STATE] == ST_RLF_RECOVERY
        best_id = -1
        best_snr = -np.inf
        for b in range(n_bs):
            if not legal[b]:
                continue
            if b == serving and not include_serving:
                continue
            if snr_buf[b] > best_snr:
                best_snr = snr_buf[b]
                best_id = b
        tgt = state[F_TARGET]
        target_available = 1
        if tgt >= 0 and not legal[tgt]:
            target_available = 0
        ev = _fsm_step(state, serving_snr, best_id, best_snr, target_available,
                       cu_owner, anchor_root, a3_offset, rlf_enter, rlf_exit, timers)
        if trace_on and ev != 0:
            for code in range(7):
                bit = 1 << code
                if ev & bit:
                    tr_slot[n_trace] = slot
                    tr_event[n_trace] = bit
                    tr_serving[n_trace] = state[F_SERVING]
                    tr_target[n_trace] = state[F_TARGET]
                    tr_snr[n_trace] = serving_snr
                    n_trace += 1
    return 0, wp_next, n_trace


@dataclass
class VmrRadio:
    """Frozen per-run radio view from every base station to the relay."""
    budget_const: np.ndarray   # tx + beam gains - o2i - shadow - noise, dB
    los: np.ndarray            # bool, drawn once at run start
    legal: np.ndarray          # mode-legal candidate parents
    cu_owner: np.ndarray
    anchor_root: np.ndarray
    bs_x: np.ndarray
    bs_y: np.ndarray
    bs_z: np.ndarray
    bs_model: np.ndarray
    vmr_z: float
    fc_ghz: float


@dataclass
class MobilityRunResult:
    total_slots: int
    outage_slots: int
    handover_attempts: int
    handover_failures: int
    donor_crossings: int
    onboard_handovers: int
    outage_rate_pct: float
    hfr_pct: float
    initial_serving: int
    final_serving: int
    trace: np.ndarray | None = None   # structured rows (slot, event, serving, target, snr)


def outage_and_hfr(outage_slots: int, total_slots: int,
                   handover_failures: int, handover_attempts: int) -> tuple[float, float]:
    if total_slots <= 0:
        raise ValueError("total_slots must be positive")
    outage = 100.0 * outage_slots / total_slots
    hfr = 100.0 * handover_failures / handover_attempts if handover_attempts else 0.0
    return outage, hfr


def vmr_snr_vector(radio: VmrRadio, x: float, y: float) -> np.ndarray:
    out = np.empty(radio.bs_x.shape[0])
    _vmr_snr(CHANNEL_PARAMS, radio.fc_ghz, float(x), float(y), radio.vmr_z,
             radio.bs_x, radio.bs_y, radio.bs_z, radio.bs_model,
             radio.budget_const, radio.los, out)
    return out


def run_mobility(radio: VmrRadio, region: MotionRegion, n_slots: int,
                 slot_duration: float, timers: MobilityTimers,
                 waypoint_seed: np.random.SeedSequence, n_onboard: int,
                 proposed_mode: bool, trace: bool = False,
                 speed_mps: float = VMR_SPEED_MPS) -> MobilityRunResult:
    """One mobility run. Waypoints are drawn from a pre-sampled pool; if a
    trajectory consumes the pool the run restarts deterministically with a
    doubled pool, so results do not depend on the initial pool size."""
    timer_slots = timers.slot_counts(slot_duration)
    step_m = speed_mps * slot_duration
    diag = math.hypot(radio.bs_x.max() - radio.bs_x.min() + 2 * REGION_MARGIN_M,
                      radio.bs_y.max() - radio.bs_y.min() + 2 * REGION_MARGIN_M)
    expected_legs = max(1.0, n_slots * step_m / max(diag / 4.0, 1.0))
    pool_size = int(expected_legs * 4) + 64

    legal_ids = np.where(radio.legal)[0]
    if legal_ids.size == 0:
        raise ValueError("no legal candidate parent for the relay")

    while True:
        rng = np.random.default_rng(waypoint_seed)
        pos = region.sample(rng)
        wp = region.sample(rng)
        pool = np.empty((pool_size, 2))
        for i in range(pool_size):
            pool[i] = region.sample(rng)

        snr0 = vmr_snr_vector(radio, pos[0], pos[1])
        snr0_legal = np.where(radio.legal, snr0, -np.inf)
        serving0 = int(np.argmax(snr0_legal))

        state = np.zeros(F_COUNT, dtype=np.int64)
        state[F_SERVING] = serving0
        state[F_TARGET] = -1

        if trace:
            cap = 3 * n_slots + 8
            tr_slot = np.zeros(cap, dtype=np.int64)
            tr_event = np.zeros(cap, dtype=np.int64)
            tr_serving = np.zeros(cap, dtype=np.int64)
            tr_target = np.zeros(cap, dtype=np.int64)
            tr_snr = np.zeros(cap, dtype=np.float64)
        else:
            tr_slot = np.zeros(1, dtype=np.int64)
            tr_event = np.zeros(1, dtype=np.int64)
            tr_serving = np.zeros(1, dtype=np.int64)
            tr_target = np.zeros(1, dtype=np.int64)
            tr_snr = np.zeros(1, dtype=np.float64)

        snr_buf = np.empty(radio.bs_x.shape[0])
        status, _, n_trace = _mobility_loop(
            n_slots, CHANNEL_PARAMS, radio.fc_ghz,
            radio.bs_x, radio.bs_y, radio.bs_z, radio.bs_model,
            radio.budget_const, radio.los, radio.legal,
            radio.cu_owner, radio.anchor_root,
            radio.vmr_z, step_m,
            timers.a3_offset_db, timers.rlf_enter_snr_db, timers.rlf_exit_snr_db,
            timer_slots, state, pos, wp, pool, 0, snr_buf,
            trace, tr_slot, tr_event, tr_serving, tr_target, tr_snr)
        if status == 0:
            break
        pool_size *= 2

    attempts = int(state[F_ATTEMPTS])
    failures = int(state[F_FAILURES])
    crossings = int(state[F_CROSSINGS])
    outage_slots = int(state[F_OUTAGE])
    outage_pct, hfr_pct = outage_and_hfr(outage_slots, n_slots, failures, attempts)
    onboard = 0 if proposed_mode else n_onboard * crossings
    trace_rows = None
    if trace:
        trace_rows = np.rec.fromarrays(
            [tr_slot[:n_trace], tr_event[:n_trace], tr_serving[:n_trace],
             tr_target[:n_trace], tr_snr[:n_trace]],
            names=("slot", "event", "serving", "target", "snr"))
    return MobilityRunResult(
        total_slots=n_slots, outage_slots=outage_slots,
        handover_attempts=attempts, handover_failures=failures,
        donor_crossings=crossings, onboard_handovers=onboard,
        outage_rate_pct=outage_pct, hfr_pct=hfr_pct,
        initial_serving=serving0, final_serving=int(state[F_SERVING]),
        trace=trace_rows)
