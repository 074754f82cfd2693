"""RAT steering controller: measurement ingestion, per-node inference,
prediction-conditioned handover triggers, and the simulated handover
execution state machine.

The trigger compares forecast signal quality of each candidate against the
serving node: the margin at horizon h is the candidate's predicted dB value
minus the serving node's, and a handover fires when the margin meets the
configured threshold on the first horizon (soft mode) or on all of the first
N horizons (hysteresis mode). Soft is exactly hysteresis with N = 1.
"""

from __future__ import annotations

import csv
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import FULL_FEATURES, _FEATURE_ATTR
from .models.regressor import SequenceRegressor
from .simengine import MeasurementTuple, Trace, best_server_timeline
from .topology import NodeId, NodeKind

DEFAULT_ADMISSION_CAPACITY = 8
PING_PONG_WINDOW_STEPS = 3


class MeasurementGapError(ValueError):
    pass


class MeasurementStore:
    """Per-node ring buffers of contiguous measurement tuples for one UE."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buffers: dict[NodeId, deque[MeasurementTuple]] = {}

    def ingest(self, tup: MeasurementTuple):
        buf = self._buffers.setdefault(tup.node, deque(maxlen=self.capacity))
        if buf and tup.step != buf[-1].step + 1:
            raise MeasurementGapError(
                f"out-of-order or gapped step {tup.step} after {buf[-1].step} "
                f"for node {tup.node}")
        buf.append(tup)

    def length(self, node: NodeId) -> int:
        return len(self._buffers.get(node, ()))

    def window_db(self, node: NodeId, window: int,
                  feature_names: tuple[str, ...] = FULL_FEATURES
                  ) -> np.ndarray | None:
        """Last `window` raw measurement rows, or None when not ready."""
        buf = self._buffers.get(node)
        if buf is None or len(buf) < window:
            return None
        rows = list(buf)[-window:]
        cols = {"rssi": "rssi_dbm", "sq": "sig_quality_db",
                "tp": "throughput_bps"}
        return np.array([[getattr(t, cols[name]) for name in feature_names]
                         for t in rows])


class TriggerMode(Enum):
    SOFT = "soft"
    HYSTERESIS = "hysteresis"


@dataclass(frozen=True)
class TriggerConfig:
    delta_qos_db: float
    mode: TriggerMode = TriggerMode.SOFT
    n_steps: int = 1                   # consecutive horizons, hysteresis only

    def __post_init__(self):
        if self.delta_qos_db < 0:
            raise ValueError("delta_qos_db must be >= 0")
        if self.mode == TriggerMode.HYSTERESIS and self.n_steps < 1:
            # N = 1 is permitted and is exactly the soft trigger; N >= 2 is
            # the usual hysteresis setting.
            raise ValueError("hysteresis mode needs n_steps >= 1")

    @property
    def effective_n(self) -> int:
        return self.n_steps if self.mode == TriggerMode.HYSTERESIS else 1


class Action(Enum):
    STAY = "stay"
    HANDOVER = "handover"


@dataclass
class SteeringDecision:
    step: int
    serving: NodeId
    target: NodeId | None
    action: Action
    predictions_db: dict[NodeId, np.ndarray]   # per-candidate, horizons 1..H
    delta_qos_db: dict[NodeId, np.ndarray]
    reason: str


def decide(store: MeasurementStore,
           predictors: dict[NodeKind, SequenceRegressor],
           serving: NodeId, cfg: TriggerConfig, step: int,
           feature_names: tuple[str, ...] = FULL_FEATURES) -> SteeringDecision:
    """Evaluate the prediction-conditioned trigger for every candidate node."""
    n_req = cfg.effective_n
    for model in predictors.values():
        if model.output_dim < n_req:
            raise ValueError("predictor horizon shorter than hysteresis depth")

    nodes = sorted(store._buffers.keys())
    preds: dict[NodeId, np.ndarray] = {}
    for node in nodes:
        model = predictors[node.kind]
        win = store.window_db(node, model.window, feature_names)
        if win is None:
            return SteeringDecision(step=step, serving=serving, target=None,
                                    action=Action.STAY, predictions_db={},
                                    delta_qos_db={},
                                    reason=f"not ready: {node}")
        preds[node] = model.predict_direct(win, node=node, k=step).values_db

    serving_pred = preds[serving]
    deltas = {node: preds[node] - serving_pred for node in nodes}
    candidates = [node for node in nodes if node != serving
                  and bool(np.all(deltas[node][:n_req] >= cfg.delta_qos_db))]
    if not candidates:
        return SteeringDecision(step=step, serving=serving, target=None,
                                action=Action.STAY, predictions_db=preds,
                                delta_qos_db=deltas, reason="no trigger")
    # Best candidate by next-step prediction; candidate list is already in
    # ascending NodeId order, so the first max wins ties among candidates.
    best = max(candidates, key=lambda n: (preds[n][0], -n.kind, -n.index))
    if preds[best][0] == serving_pred[0]:
        return SteeringDecision(step=step, serving=serving, target=None,
                                action=Action.STAY, predictions_db=preds,
                                delta_qos_db=deltas,
                                reason="tie with serving")
    return SteeringDecision(step=step, serving=serving, target=best,
                            action=Action.HANDOVER, predictions_db=preds,
                            delta_qos_db=deltas,
                            reason=f"trigger met for {best}")


# ---------------------------------------------------------------------------
# handover execution state machine

class HandoverState(Enum):
    REQUESTED = "Requested"
    ADMISSION_CHECKED = "AdmissionChecked"
    ACKED = "Acked"
    RRC_RECONFIGURED = "RrcReconfigured"
    SYNCED = "Synced"
    STATUS_TRANSFERRED = "StatusTransferred"
    COMPLETE = "Complete"


HANDOVER_STATE_ORDER = list(HandoverState)


@dataclass
class HandoverEvent:
    step: int
    source: NodeId
    target: NodeId
    states: list[HandoverState]
    failure_reason: str | None = None

    @property
    def complete(self) -> bool:
        return self.failure_reason is None and (
            self.states and self.states[-1] == HandoverState.COMPLETE)


class AdmissionController:
    """Atomic check-and-increment admission over per-node UE counts."""

    def __init__(self, capacity: int = DEFAULT_ADMISSION_CAPACITY):
        self.capacity = capacity
        self._counts: dict[NodeId, int] = {}
        self._lock = threading.Lock()

    def occupy(self, node: NodeId):
        with self._lock:
            self._counts[node] = self._counts.get(node, 0) + 1

    def release(self, node: NodeId):
        with self._lock:
            self._counts[node] = max(self._counts.get(node, 0) - 1, 0)

    def count(self, node: NodeId) -> int:
        with self._lock:
            return self._counts.get(node, 0)

    def try_admit(self, node: NodeId) -> bool:
        with self._lock:
            if self._counts.get(node, 0) >= self.capacity:
                return False
            self._counts[node] = self._counts.get(node, 0) + 1
            return True


def execute_handover(decision: SteeringDecision,
                     admission: AdmissionController) -> HandoverEvent:
    """Advance the state machine; admission rejection keeps the UE on the
    source node."""
    if decision.action != Action.HANDOVER or decision.target is None:
        raise ValueError("execute_handover requires a handover decision")
    states = [HandoverState.REQUESTED, HandoverState.ADMISSION_CHECKED]
    if not admission.try_admit(decision.target):
        return HandoverEvent(step=decision.step, source=decision.serving,
                             target=decision.target, states=states,
                             failure_reason="AdmissionRejected")
    states += [HandoverState.ACKED, HandoverState.RRC_RECONFIGURED,
               HandoverState.SYNCED, HandoverState.STATUS_TRANSFERRED,
               HandoverState.COMPLETE]
    admission.release(decision.serving)
    return HandoverEvent(step=decision.step, source=decision.serving,
                         target=decision.target, states=states)


# ---------------------------------------------------------------------------
# episode replay

@dataclass
class EpisodeMetrics:
    handover_count: int
    pingpong_count: int
    mean_dwell_steps: float
    oracle_agreement: float


@dataclass
class EpisodeResult:
    decisions: list[SteeringDecision]
    events: list[HandoverEvent]
    serving_timeline: list[tuple[int, NodeId]]  # (step, serving) per decided step
    metrics: EpisodeMetrics


def _count_pingpongs(timeline: list[NodeId],
                     window: int = PING_PONG_WINDOW_STEPS) -> int:
    # A -> B -> A with dwell on B of at most `window` steps.
    segments: list[tuple[NodeId, int]] = []
    for node in timeline:
        if segments and segments[-1][0] == node:
            segments[-1] = (node, segments[-1][1] + 1)
        else:
            segments.append((node, 1))
    count = 0
    for i in range(1, len(segments) - 1):
        prev_node, _ = segments[i - 1]
        mid_node, mid_len = segments[i]
        next_node, _ = segments[i + 1]
        if prev_node == next_node and mid_len <= window:
            count += 1
    return count


def run_episode(trace: Trace, predictors: dict[NodeKind, SequenceRegressor],
                cfg: TriggerConfig,
                feature_names: tuple[str, ...] = FULL_FEATURES,
                admission_capacity: int = DEFAULT_ADMISSION_CAPACITY
                ) -> EpisodeResult:
    """Replay a trace through ingest -> assemble -> decide -> execute."""
    max_window = max(m.window for m in predictors.values())
    store = MeasurementStore(capacity=max(max_window,
                                          max(m.window for m in
                                              predictors.values())))
    admission = AdmissionController(capacity=admission_capacity)
    oracle = best_server_timeline(trace)

    serving: NodeId | None = None
    decisions: list[SteeringDecision] = []
    events: list[HandoverEvent] = []
    timeline: list[tuple[int, NodeId]] = []

    for k in range(trace.n_steps):
        for node in trace.nodes:
            store.ingest(trace.tuple_at(node, k))
        ready = all(store.length(node) >= predictors[node.kind].window
                    for node in trace.nodes)
        if not ready:
            continue
        if serving is None:
            serving = oracle[k]        # initial association: best actual server
            admission.occupy(serving)
        decision = decide(store, predictors, serving, cfg, step=k,
                          feature_names=feature_names)
        decisions.append(decision)
        if decision.action == Action.HANDOVER:
            event = execute_handover(decision, admission)
            events.append(event)
            if event.complete:
                serving = event.target
        timeline.append((k, serving))

    serving_nodes = [node for _, node in timeline]
    completed = sum(1 for e in events if e.complete)
    segments = []
    for node in serving_nodes:
        if segments and segments[-1][0] == node:
            segments[-1][1] += 1
        else:
            segments.append([node, 1])
    mean_dwell = (float(np.mean([length for _, length in segments]))
                  if segments else 0.0)
    agreement = (float(np.mean([serving_nodes[i] == oracle[timeline[i][0]]
                                for i in range(len(timeline))]))
                 if timeline else 0.0)
    metrics = EpisodeMetrics(
        handover_count=completed,
        pingpong_count=_count_pingpongs(serving_nodes),
        mean_dwell_steps=mean_dwell,
        oracle_agreement=agreement,
    )
    return EpisodeResult(decisions=decisions, events=events,
                         serving_timeline=timeline, metrics=metrics)


# ---------------------------------------------------------------------------
# logs

def export_decision_log_csv(decisions: list[SteeringDecision], path):
    nodes = sorted({n for d in decisions for n in d.predictions_db})
    horizon = 0
    for d in decisions:
        for v in d.predictions_db.values():
            horizon = max(horizon, len(v))
    cols = ["step", "serving", "target", "action"]
    for node in nodes:
        for h in range(1, horizon + 1):
            cols.append(f"pred_{node}_h{h}")
        for h in range(1, horizon + 1):
            cols.append(f"dqos_{node}_h{h}")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(cols)
        for d in decisions:
            row = [d.step, str(d.serving),
                   str(d.target) if d.target else "", d.action.value]
            for node in nodes:
                pred = d.predictions_db.get(node)
                delta = d.delta_qos_db.get(node)
                for arr in (pred, delta):
                    if arr is None:
                        row += [""] * horizon
                    else:
                        row += [format(v, ".17g") for v in arr]
            writer.writerow(row)


def export_event_log_csv(events: list[HandoverEvent], path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "source", "target", "final_state",
                         "failure_reason", "states"])
        for e in events:
            final = (e.states[-1].value if e.failure_reason is None
                     else f"Failed({e.failure_reason})")
            writer.writerow([e.step, str(e.source), str(e.target), final,
                             e.failure_reason or "",
                             "|".join(s.value for s in e.states)])
