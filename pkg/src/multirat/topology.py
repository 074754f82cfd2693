"""Multi-RAT deployment geometry and randomized UE trajectories.

A topology holds cellular base stations (BSs) and WiFi access points (APs)
inside a rectangular area. UE paths are random-waypoint walks smoothed with a
centripetal spline and resampled at constant speed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq

TOPOLOGY_FORMAT_VERSION = 1

# RSSI floor that defines the edge of a BS coverage disc (dBm).
COVERAGE_FLOOR_DBM = -100.0


class NodeKind(IntEnum):
    CELLULAR_BS = 0
    WIFI_AP = 1


@dataclass(frozen=True, order=True)
class NodeId:
    """Identifies one transmitter; ordering is (kind, index) ascending."""

    kind: NodeKind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("node index must be non-negative")

    def __str__(self):
        prefix = "BS" if self.kind == NodeKind.CELLULAR_BS else "AP"
        return f"{prefix}{self.index}"


@dataclass
class BsConfig:
    """Cellular BS radio parameters (power-law path loss, Rician fading)."""

    position: tuple[float, float]
    tx_power_w: float = 10.0           # 40 dBm
    carrier_freq_hz: float = 3.5e9
    bandwidth_hz: float = 20e6
    pathloss_exponent: float = 3.5
    pathloss_scale: float = 8.84e-6    # gives RSSI ~ -70 dBm at 50 m
    rician_k_factor_db: float = 12.0

    def validate(self):
        if self.tx_power_w <= 0:
            raise ValueError("tx_power_w must be > 0")
        if self.pathloss_exponent <= 0:
            raise ValueError("pathloss_exponent must be > 0")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be > 0")


@dataclass
class ApConfig:
    """WiFi AP radio parameters (log-distance path loss, no fading)."""

    position: tuple[float, float]
    tx_power_w: float = 0.1            # 20 dBm
    carrier_freq_hz: float = 2.4e9
    bandwidth_hz: float = 20e6
    # Breakpoint-style reference: loss is flat inside ref_distance_m, which
    # bounds the otherwise extreme near-field SNR peaks on close approaches.
    # 71.6 dB at 8 m matches 40 dB at 1 m with exponent 3.5 in the far field.
    ref_loss_db: float = 71.6          # path loss at the reference distance
    ref_distance_m: float = 8.0
    indoor_exponent: float = 3.5
    obstacle_losses_db: tuple[float, ...] = ()
    channel_index: int = 0

    def validate(self):
        if self.ref_distance_m <= 0:
            raise ValueError("ref_distance_m must be > 0")
        if self.indoor_exponent <= 0:
            raise ValueError("indoor_exponent must be > 0")
        if any(l < 0 for l in self.obstacle_losses_db):
            raise ValueError("obstacle losses must be >= 0")


@dataclass
class NetworkTopology:
    """BS/AP placement inside a rectangular area with origin (0, 0)."""

    bs_list: list[BsConfig]
    ap_list: list[ApConfig]
    area: tuple[float, float]          # (width_m, height_m)
    ap_parent_bs: list[int] = field(default_factory=list)

    def validate(self):
        if not self.bs_list:
            raise ValueError("topology needs at least one BS")
        for cfg in self.bs_list:
            cfg.validate()
        for cfg in self.ap_list:
            cfg.validate()
        w, h = self.area
        for cfg in list(self.bs_list) + list(self.ap_list):
            x, y = cfg.position
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise ValueError(f"node position {cfg.position} outside area")
        # Every AP must sit inside the coverage disc of at least one BS.
        for j, ap in enumerate(self.ap_list):
            radii = [coverage_radius(bs) for bs in self.bs_list]
            dists = [math.dist(ap.position, bs.position) for bs in self.bs_list]
            if not any(d <= r for d, r in zip(dists, radii)):
                raise ValueError(f"AP {j} lies outside every BS coverage disc")
        # Co-located APs under one parent BS use orthogonal channels.
        if self.ap_parent_bs:
            seen: dict[int, set[int]] = {}
            for j, ap in enumerate(self.ap_list):
                parent = self.ap_parent_bs[j]
                chans = seen.setdefault(parent, set())
                if ap.channel_index in chans:
                    raise ValueError(
                        f"duplicate AP channel {ap.channel_index} under BS {parent}"
                    )
                chans.add(ap.channel_index)

    @property
    def n_bs(self) -> int:
        return len(self.bs_list)

    @property
    def n_ap(self) -> int:
        return len(self.ap_list)

    def nodes(self) -> list[NodeId]:
        """All node ids in canonical (kind, index) order."""
        out = [NodeId(NodeKind.CELLULAR_BS, i) for i in range(self.n_bs)]
        out += [NodeId(NodeKind.WIFI_AP, i) for i in range(self.n_ap)]
        return out

    def node_config(self, node: NodeId):
        if node.kind == NodeKind.CELLULAR_BS:
            return self.bs_list[node.index]
        return self.ap_list[node.index]


def coverage_radius(bs: BsConfig, floor_dbm: float = COVERAGE_FLOOR_DBM) -> float:
    """Distance at which mean received power drops to the RSSI floor."""
    floor_w = 10.0 ** (floor_dbm / 10.0) * 1e-3
    ratio = bs.tx_power_w * bs.pathloss_scale / floor_w
    if ratio <= 1.0:
        return 1.0
    return ratio ** (1.0 / bs.pathloss_exponent)


def build_default_topology(seed: int, area: tuple[float, float] = (360.0, 360.0)) -> NetworkTopology:
    """Two overlapping 3.5 GHz BSs, each hosting two 2.4 GHz APs on
    orthogonal channels. Deterministic for a given seed."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xB5,)))
    w, h = area
    bs_list = [
        BsConfig(position=(0.30 * w, 0.50 * h)),
        BsConfig(position=(0.70 * w, 0.50 * h)),
    ]
    ap_list: list[ApConfig] = []
    ap_parent: list[int] = []
    for b, bs in enumerate(bs_list):
        radius = min(0.25 * coverage_radius(bs), 0.22 * min(w, h))
        for c in range(2):
            # Rejection-sample an offset that stays inside the area.
            for _ in range(1000):
                ang = rng.uniform(0.0, 2.0 * math.pi)
                dist = rng.uniform(0.3 * radius, radius)
                x = bs.position[0] + dist * math.cos(ang)
                y = bs.position[1] + dist * math.sin(ang)
                if 0.0 <= x <= w and 0.0 <= y <= h:
                    break
            ap_list.append(ApConfig(position=(x, y), channel_index=c))
            ap_parent.append(b)
    topo = NetworkTopology(bs_list=bs_list, ap_list=ap_list, area=area,
                           ap_parent_bs=ap_parent)
    topo.validate()
    return topo


@dataclass
class Trajectory:
    """Time-sampled 2D UE path with constant-speed spacing."""

    id: int
    points: np.ndarray                 # (N, 2) meters
    sample_interval: float             # seconds
    speed: float                       # m/s

    @property
    def n_steps(self) -> int:
        return len(self.points)

    def validate(self, area: tuple[float, float] | None = None,
                 rel_tol: float = 1e-6):
        gaps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        target = self.speed * self.sample_interval
        if gaps.size and np.max(np.abs(gaps - target)) > rel_tol * target:
            raise ValueError("trajectory spacing is not uniform")
        if area is not None:
            w, h = area
            x, y = self.points[:, 0], self.points[:, 1]
            if (x < 0).any() or (x > w).any() or (y < 0).any() or (y > h).any():
                raise ValueError("trajectory exits the area")


class DegenerateGeometryError(ValueError):
    """Waypoint draws kept producing paths that exit the area."""


def _spline_through(waypoints: np.ndarray):
    """Centripetal-parameterized interpolating spline through waypoints."""
    deltas = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
    keep = np.concatenate(([True], deltas > 1e-12))
    pts = waypoints[keep]
    if len(pts) < 2:
        raise ValueError("zero-length path: waypoints are coincident")
    u = np.concatenate(([0.0], np.cumsum(np.sqrt(
        np.linalg.norm(np.diff(pts, axis=0), axis=1)))))
    k = min(3, len(pts) - 1)
    return make_interp_spline(u, pts, k=k, axis=0), u[-1]


def _resample_constant_speed(spline, u_max: float, step: float,
                             dense_per_unit: float = 8.0) -> np.ndarray:
    """Walk the spline placing points at exact Euclidean spacing `step`."""
    n_dense = max(200, int(dense_per_unit * u_max / max(step, 1e-9)) * 4)
    u_dense = np.linspace(0.0, u_max, n_dense)
    p_dense = spline(u_dense)

    points = [p_dense[0]]
    u_cur = 0.0
    i = 0
    while True:
        prev = points[-1]
        # First dense sample beyond u_cur at distance >= step brackets the root.
        j = i + 1
        while j < n_dense:
            if u_dense[j] > u_cur and np.linalg.norm(p_dense[j] - prev) >= step:
                break
            j += 1
        if j >= n_dense:
            break
        lo = max(u_cur, u_dense[j - 1])

        def gap(u):
            return float(np.linalg.norm(spline(u) - prev)) - step

        u_next = brentq(gap, lo, u_dense[j], xtol=1e-10 * max(1.0, u_max))
        points.append(spline(u_next))
        u_cur = u_next
        i = j - 1
    return np.asarray(points)


def generate_trajectory(topology: NetworkTopology, id: int, n_waypoints: int = 6,
                        speed: float = 3.0, sample_interval: float = 1.0,
                        seed: int = 0, max_steps: int | None = None,
                        waypoints: np.ndarray | None = None) -> Trajectory:
    """Random-waypoint path: uniform waypoints in the area, smooth spline,
    arc-length resampling at spacing speed * sample_interval.

    Redraws the waypoints up to 100 times if the interpolant exits the area;
    deterministic per (id, seed). An explicit waypoint array bypasses the
    random draw (single attempt).
    """
    if n_waypoints < 2:
        raise ValueError("n_waypoints must be >= 2")
    if speed <= 0 or sample_interval <= 0:
        raise ValueError("speed and sample_interval must be > 0")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(id,)))
    w, h = topology.area
    step = speed * sample_interval
    last_err: Exception | None = None
    attempts = 1 if waypoints is not None else 100
    for _ in range(attempts):
        if waypoints is not None:
            waypoints_try = np.asarray(waypoints, dtype=float)
        else:
            waypoints_try = rng.uniform([0.0, 0.0], [w, h],
                                        size=(n_waypoints, 2))
        try:
            spline, u_max = _spline_through(waypoints_try)
        except ValueError as err:
            last_err = err
            if n_waypoints == 2 or waypoints is not None:
                raise
            continue
        pts = _resample_constant_speed(spline, u_max, step)
        if max_steps is not None:
            pts = pts[:max_steps]
        traj = Trajectory(id=id, points=pts, sample_interval=sample_interval,
                          speed=speed)
        try:
            traj.validate(area=topology.area)
        except ValueError as err:
            last_err = err
            continue
        if traj.n_steps >= 2:
            return traj
        last_err = ValueError("path too short")
    raise DegenerateGeometryError(
        f"no in-area trajectory after 100 waypoint redraws: {last_err}")


def generate_trajectory_set(topology: NetworkTopology, n_trajectories: int,
                            seed: int = 0, n_waypoints: int = 6,
                            speed: float = 3.0, sample_interval: float = 1.0,
                            max_steps: int | None = None) -> list[Trajectory]:
    """N trajectories with ids 0..N-1, each on its own seed substream so that
    adding or removing one never perturbs the others."""
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    return [
        generate_trajectory(topology, id=i, n_waypoints=n_waypoints,
                            speed=speed, sample_interval=sample_interval,
                            seed=seed, max_steps=max_steps)
        for i in range(n_trajectories)
    ]


# ---------------------------------------------------------------------------
# serialization

def topology_to_dict(topology: NetworkTopology) -> dict:
    return {
        "format_version": TOPOLOGY_FORMAT_VERSION,
        "area": list(topology.area),
        "bs_list": [vars(b) | {"position": list(b.position)} for b in topology.bs_list],
        "ap_list": [vars(a) | {"position": list(a.position),
                               "obstacle_losses_db": list(a.obstacle_losses_db)}
                    for a in topology.ap_list],
        "ap_parent_bs": list(topology.ap_parent_bs),
    }


def topology_from_dict(data: dict) -> NetworkTopology:
    version = data.get("format_version")
    if version != TOPOLOGY_FORMAT_VERSION:
        raise ValueError(f"unsupported topology format_version: {version!r}")
    bs_list = [BsConfig(**{**d, "position": tuple(d["position"])})
               for d in data["bs_list"]]
    ap_list = [ApConfig(**{**d, "position": tuple(d["position"]),
                           "obstacle_losses_db": tuple(d["obstacle_losses_db"])})
               for d in data["ap_list"]]
    topo = NetworkTopology(bs_list=bs_list, ap_list=ap_list,
                           area=tuple(data["area"]),
                           ap_parent_bs=list(data.get("ap_parent_bs", [])))
    topo.validate()
    return topo


def save_topology(topology: NetworkTopology, path):
    with open(path, "w") as f:
        json.dump(topology_to_dict(topology), f, indent=2)
        f.write("\n")


def load_topology(path) -> NetworkTopology:
    with open(path) as f:
        return topology_from_dict(json.load(f))


def export_trajectories_csv(trajectories: list[Trajectory], path):
    """CSV columns: traj_id, step, x_m, y_m."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["traj_id", "step", "x_m", "y_m"])
        for traj in trajectories:
            for k, (x, y) in enumerate(traj.points):
                writer.writerow([traj.id, k, format(x, ".17g"), format(y, ".17g")])
