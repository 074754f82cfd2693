"""Trace generation: walk each UE along each trajectory and record per-node
measurements (RSSI, SINR/SNR in dB, Shannon throughput) at every step.

Fading randomness flows from per-(trajectory, BS) substreams of the master
seed, so traces are reproducible and adding a trajectory to a campaign never
perturbs the others.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import channel
from .channel import DEFAULT_NOISE_DENSITY_W_PER_HZ, NoiseModel
from .topology import NetworkTopology, NodeId, NodeKind, Trajectory


@dataclass(frozen=True)
class RadioDefaults:
    noise_density_w_per_hz: float = DEFAULT_NOISE_DENSITY_W_PER_HZ


@dataclass(frozen=True)
class MeasurementTuple:
    """Per-node, per-step measurement record."""

    traj_id: int
    step: int
    node: NodeId
    rssi_dbm: float
    sig_quality_db: float              # SINR for BS nodes, SNR for AP nodes
    throughput_bps: float


@dataclass
class Trace:
    """Time-aligned measurement series for every node along one trajectory."""

    traj_id: int
    nodes: list[NodeId]                # canonical (kind, index) order
    rssi_dbm: np.ndarray               # (n_nodes, n_steps)
    sig_quality_db: np.ndarray         # (n_nodes, n_steps)
    throughput_bps: np.ndarray         # (n_nodes, n_steps)

    @property
    def n_steps(self) -> int:
        return self.rssi_dbm.shape[1]

    def node_row(self, node: NodeId) -> int:
        return self.nodes.index(node)

    def tuple_at(self, node: NodeId, step: int) -> MeasurementTuple:
        r = self.node_row(node)
        return MeasurementTuple(
            traj_id=self.traj_id, step=step, node=node,
            rssi_dbm=float(self.rssi_dbm[r, step]),
            sig_quality_db=float(self.sig_quality_db[r, step]),
            throughput_bps=float(self.throughput_bps[r, step]),
        )


def _distances(positions: np.ndarray, point: tuple[float, float]) -> np.ndarray:
    return np.linalg.norm(positions - np.asarray(point), axis=1)


def simulate_trace(topology: NetworkTopology, trajectory: Trajectory,
                   radio: RadioDefaults | None = None, seed: int = 0) -> Trace:
    """Evaluate every candidate node at every trajectory step."""
    radio = radio or RadioDefaults()
    nodes = topology.nodes()
    if not nodes:
        raise ValueError("topology has no nodes")
    pts = trajectory.points
    n_steps = len(pts)
    n_bs = topology.n_bs
    n_ap = topology.n_ap

    # Per-(trajectory, BS link) fading streams derived from the master seed.
    fading_power = np.empty((n_bs, n_steps))
    for b, bs in enumerate(topology.bs_list):
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=seed, spawn_key=(trajectory.id, b)))
        fading_power[b] = channel.draw_rician_powers(
            bs.rician_k_factor_db, n_steps, rng)

    # Received power per BS link at every step.
    bs_rx = np.empty((n_bs, n_steps))
    for b, bs in enumerate(topology.bs_list):
        d = _distances(pts, bs.position)
        gain = bs.pathloss_scale * np.maximum(d, channel.CELL_MIN_DISTANCE_M) ** (
            -bs.pathloss_exponent)
        bs_rx[b] = bs.tx_power_w * gain * fading_power[b]

    n_nodes = n_bs + n_ap
    rssi = np.empty((n_nodes, n_steps))
    sq_db = np.empty((n_nodes, n_steps))
    tp = np.empty((n_nodes, n_steps))

    total_bs_rx = bs_rx.sum(axis=0)
    for b, bs in enumerate(topology.bs_list):
        noise_power = radio.noise_density_w_per_hz * bs.bandwidth_hz
        interference = total_bs_rx - bs_rx[b]
        sinr = bs_rx[b] / (interference + noise_power)
        rssi[b] = 10.0 * np.log10(np.maximum(bs_rx[b] / 1e-3, 1e-300))
        sq_db[b] = 10.0 * np.log10(np.maximum(sinr, 1e-300))
        tp[b] = bs.bandwidth_hz * np.log2(1.0 + sinr)

    for a, ap in enumerate(topology.ap_list):
        row = n_bs + a
        d = _distances(pts, ap.position)
        d_eff = np.maximum(d, ap.ref_distance_m)
        pl_db = (ap.ref_loss_db
                 + 10.0 * ap.indoor_exponent * np.log10(d_eff / ap.ref_distance_m)
                 + sum(ap.obstacle_losses_db))
        rx = ap.tx_power_w * 10.0 ** (-pl_db / 10.0)
        noise_power = radio.noise_density_w_per_hz * ap.bandwidth_hz
        snr = rx / noise_power
        rssi[row] = 10.0 * np.log10(np.maximum(rx / 1e-3, 1e-300))
        sq_db[row] = 10.0 * np.log10(np.maximum(snr, 1e-300))
        tp[row] = ap.bandwidth_hz * np.log2(1.0 + snr)

    rssi = np.maximum(rssi, channel.RSSI_FLOOR_DBM)
    sq_db = np.maximum(sq_db, channel.DB_FLOOR)
    return Trace(traj_id=trajectory.id, nodes=nodes, rssi_dbm=rssi,
                 sig_quality_db=sq_db, throughput_bps=tp)


def simulate_campaign(topology: NetworkTopology, trajectories: list[Trajectory],
                      radio: RadioDefaults | None = None,
                      seed: int = 0) -> list[Trace]:
    """One trace per trajectory, on isolated rng substreams."""
    if not trajectories:
        raise ValueError("no trajectories to simulate")
    return [simulate_trace(topology, traj, radio=radio, seed=seed)
            for traj in trajectories]


def best_server_timeline(trace: Trace) -> list[NodeId]:
    """Per-step argmax of signal quality; ties go to the lowest (kind, index)."""
    if trace.n_steps == 0:
        raise ValueError("empty trace")
    # Nodes are stored in canonical order, so argmax's first-max rule
    # implements the tie-break.
    idx = np.argmax(trace.sig_quality_db, axis=0)
    return [trace.nodes[i] for i in idx]


TRACE_CSV_COLUMNS = ["traj_id", "step", "node_kind", "node_index",
                     "rssi_dbm", "sig_quality_db", "throughput_bps"]


def export_traces_csv(traces: list[Trace], bs_path, ap_path):
    """Write campaign measurements, BS rows and AP rows in separate files."""
    writers = {}
    files = []
    try:
        for kind, path in ((NodeKind.CELLULAR_BS, bs_path),
                           (NodeKind.WIFI_AP, ap_path)):
            f = open(path, "w", newline="")
            files.append(f)
            w = csv.writer(f)
            w.writerow(TRACE_CSV_COLUMNS)
            writers[kind] = w
        for trace in traces:
            for r, node in enumerate(trace.nodes):
                w = writers[node.kind]
                for k in range(trace.n_steps):
                    w.writerow([
                        trace.traj_id, k, node.kind.name, node.index,
                        format(trace.rssi_dbm[r, k], ".17g"),
                        format(trace.sig_quality_db[r, k], ".17g"),
                        format(trace.throughput_bps[r, k], ".17g"),
                    ])
    finally:
        for f in files:
            f.close()
