"""Supervised window/target datasets built from measurement traces.

A window sample pairs W consecutive per-node measurement rows with the next H
signal-quality values of the same node. Windows from all nodes of one RAT kind
are pooled into a per-RAT dataset, shuffled deterministically, split
train/test, and z-score normalized with statistics fitted on the training
portion only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .simengine import Trace
from .topology import NodeId, NodeKind

DATASET_FORMAT_VERSION = 1

FULL_FEATURES = ("rssi", "sq", "tp")
SQ_ONLY_FEATURES = ("sq",)

_FEATURE_ATTR = {"rssi": "rssi_dbm", "sq": "sig_quality_db",
                 "tp": "throughput_bps"}


class TraceTooShortError(ValueError):
    pass


@dataclass
class WindowSet:
    """Raw (unnormalized) window samples from one or more (trace, node) pairs."""

    features: np.ndarray               # (n, W, F)
    targets: np.ndarray                # (n, H) signal quality, dB
    traj_id: np.ndarray                # (n,)
    node_kind: np.ndarray              # (n,)
    node_index: np.ndarray             # (n,)
    k: np.ndarray                      # (n,) last feature step per sample
    feature_names: tuple[str, ...] = FULL_FEATURES

    def __len__(self) -> int:
        return len(self.features)

    @property
    def window(self) -> int:
        return self.features.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    def take(self, idx: np.ndarray) -> "WindowSet":
        return WindowSet(self.features[idx], self.targets[idx],
                         self.traj_id[idx], self.node_kind[idx],
                         self.node_index[idx], self.k[idx], self.feature_names)


def concat_window_sets(sets: list[WindowSet]) -> WindowSet:
    if not sets:
        raise ValueError("no window sets to concatenate")
    names = sets[0].feature_names
    if any(s.feature_names != names for s in sets):
        raise ValueError("mismatched feature names")
    return WindowSet(
        np.concatenate([s.features for s in sets]),
        np.concatenate([s.targets for s in sets]),
        np.concatenate([s.traj_id for s in sets]),
        np.concatenate([s.node_kind for s in sets]),
        np.concatenate([s.node_index for s in sets]),
        np.concatenate([s.k for s in sets]),
        names,
    )


@dataclass
class NormStats:
    """Per-feature z-score statistics fitted on the training split."""

    mean: np.ndarray                   # (F,)
    std: np.ndarray                    # (F,)
    feature_names: tuple[str, ...]

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if (self.std <= 0).any():
            raise ValueError("degenerate feature: std must be > 0")

    @property
    def sq_index(self) -> int:
        return self.feature_names.index("sq")

    def normalize_features(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def denormalize_features(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    def normalize_targets(self, y: np.ndarray) -> np.ndarray:
        i = self.sq_index
        return (y - self.mean[i]) / self.std[i]

    def denormalize_targets(self, y: np.ndarray) -> np.ndarray:
        i = self.sq_index
        return y * self.std[i] + self.mean[i]


def fit_norm_stats(windows: WindowSet) -> NormStats:
    flat = windows.features.reshape(-1, windows.features.shape[2])
    return NormStats(mean=flat.mean(axis=0), std=flat.std(axis=0),
                     feature_names=windows.feature_names)


@dataclass
class DatasetSplit:
    train: WindowSet
    test: WindowSet
    norm: NormStats
    window: int
    horizon: int
    split_ratio: float

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.train.feature_names

    def train_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalized (X, y) for training."""
        return (self.norm.normalize_features(self.train.features),
                self.norm.normalize_targets(self.train.targets))

    def test_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.norm.normalize_features(self.test.features),
                self.norm.normalize_targets(self.test.targets))


def make_windows(trace: Trace, node: NodeId, window: int, horizon: int,
                 feature_names: tuple[str, ...] = FULL_FEATURES) -> WindowSet:
    """All overlapping windows for one node of one trace.

    Yields exactly L - W - H + 1 samples for a trace of length L.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    length = trace.n_steps
    min_len = window + horizon
    if length < min_len:
        raise TraceTooShortError(
            f"trace length {length} < required minimum {min_len} (W={window}, H={horizon})")
    row = trace.node_row(node)
    series = np.stack([getattr(trace, _FEATURE_ATTR[name])[row]
                       for name in feature_names], axis=1)  # (L, F)
    n = length - window - horizon + 1
    feats = np.stack([series[i:i + window] for i in range(n)])
    sq = trace.sig_quality_db[row]
    targets = np.stack([sq[i + window:i + window + horizon] for i in range(n)])
    last_k = np.arange(window - 1, window - 1 + n)
    return WindowSet(
        features=feats, targets=targets,
        traj_id=np.full(n, trace.traj_id, dtype=int),
        node_kind=np.full(n, int(node.kind), dtype=int),
        node_index=np.full(n, node.index, dtype=int),
        k=last_k, feature_names=feature_names,
    )


def split_windows(pool: WindowSet, split_ratio: float, seed: int,
                  window: int, horizon: int) -> DatasetSplit:
    """Deterministic shuffle then train/test partition at the window level."""
    if not (0.0 < split_ratio < 1.0):
        raise ValueError("split_ratio must be in (0, 1)")
    if len(pool) == 0:
        raise ValueError("empty window pool")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0x5B,)))
    perm = rng.permutation(len(pool))
    n_train = int(round(split_ratio * len(pool)))
    n_train = min(max(n_train, 1), len(pool) - 1)
    train = pool.take(perm[:n_train])
    test = pool.take(perm[n_train:])
    norm = fit_norm_stats(train)
    return DatasetSplit(train=train, test=test, norm=norm, window=window,
                        horizon=horizon, split_ratio=split_ratio)


def build_dataset(traces: list[Trace], kind: NodeKind, window: int,
                  horizon: int, split_ratio: float = 0.8, seed: int = 0,
                  feature_names: tuple[str, ...] = FULL_FEATURES,
                  max_windows: int | None = None) -> DatasetSplit:
    """Pool windows from every node of one RAT kind across all traces."""
    sets = []
    for trace in traces:
        for node in trace.nodes:
            if node.kind == kind:
                sets.append(make_windows(trace, node, window, horizon,
                                         feature_names))
    if not sets:
        raise ValueError(f"no nodes of kind {kind.name} in the traces")
    pool = concat_window_sets(sets)
    if max_windows is not None and len(pool) > max_windows:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(0x5C,)))
        keep = np.sort(rng.choice(len(pool), size=max_windows, replace=False))
        pool = pool.take(keep)
    return split_windows(pool, split_ratio, seed, window, horizon)


def build_per_rat_datasets(traces: list[Trace], window_bs: int, window_ap: int,
                           horizon: int, split_ratio: float = 0.8,
                           seed: int = 0,
                           feature_names: tuple[str, ...] = FULL_FEATURES,
                           max_windows: int | None = None,
                           ) -> tuple[DatasetSplit, DatasetSplit]:
    """One dataset per RAT kind: BS windows of length window_bs, AP windows of
    length window_ap, both with the same horizon."""
    bs = build_dataset(traces, NodeKind.CELLULAR_BS, window_bs, horizon,
                       split_ratio, seed, feature_names, max_windows)
    ap = build_dataset(traces, NodeKind.WIFI_AP, window_ap, horizon,
                       split_ratio, seed, feature_names, max_windows)
    return bs, ap


# ---------------------------------------------------------------------------
# CSV round-trip

def _columns(feature_names, window, horizon):
    cols = ["split", "traj_id", "node_kind", "node_index", "k"]
    for i in range(window):
        for name in feature_names:
            cols.append(f"f{i}_{name}")
    for tau in range(1, horizon + 1):
        cols.append(f"y_{tau}")
    return cols


def export_csv(split: DatasetSplit, path):
    """Write a dataset split with a sidecar manifest at <path>.manifest.json.

    Floats use 17-significant-digit decimals so import is bit-exact.
    """
    cols = _columns(split.feature_names, split.window, split.horizon)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(cols)
        for label, ws in (("train", split.train), ("test", split.test)):
            for i in range(len(ws)):
                row = [label, ws.traj_id[i], ws.node_kind[i],
                       ws.node_index[i], ws.k[i]]
                row += [format(v, ".17g") for v in ws.features[i].ravel()]
                row += [format(v, ".17g") for v in ws.targets[i]]
                writer.writerow(row)
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "window": split.window,
        "horizon": split.horizon,
        "split_ratio": split.split_ratio,
        "feature_names": list(split.feature_names),
        "norm_mean": [format(v, ".17g") for v in split.norm.mean],
        "norm_std": [format(v, ".17g") for v in split.norm.std],
    }
    with open(str(path) + ".manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


class SchemaError(ValueError):
    pass


def import_csv(path) -> DatasetSplit:
    with open(str(path) + ".manifest.json") as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise SchemaError(f"unsupported dataset format_version: {version!r}")
    feature_names = tuple(manifest["feature_names"])
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    # Horizon and window are inferred from the header.
    y_cols = [c for c in header if c.startswith("y_")]
    horizon = len(y_cols)
    n_feat_cols = sum(1 for c in header if c.startswith("f"))
    window = n_feat_cols // len(feature_names)
    expected = _columns(feature_names, window, horizon)
    if header != expected:
        missing = sorted(set(expected) - set(header))
        raise SchemaError(f"dataset CSV schema mismatch; missing/odd columns: "
                          f"{missing or header}")
    if window != manifest["window"] or horizon != manifest["horizon"]:
        raise SchemaError("header disagrees with manifest window/horizon")

    buckets: dict[str, list[list[str]]] = {"train": [], "test": []}
    for row in rows:
        buckets[row[0]].append(row)

    def parse(bucket) -> WindowSet:
        n = len(bucket)
        feats = np.empty((n, window, len(feature_names)))
        targets = np.empty((n, horizon))
        traj = np.empty(n, dtype=int)
        nk = np.empty(n, dtype=int)
        ni = np.empty(n, dtype=int)
        kk = np.empty(n, dtype=int)
        for i, row in enumerate(bucket):
            traj[i], nk[i], ni[i], kk[i] = (int(row[1]), int(row[2]),
                                            int(row[3]), int(row[4]))
            vals = np.array([float(v) for v in row[5:]])
            feats[i] = vals[:window * len(feature_names)].reshape(
                window, len(feature_names))
            targets[i] = vals[window * len(feature_names):]
        return WindowSet(feats, targets, traj, nk, ni, kk, feature_names)

    norm = NormStats(mean=np.array([float(v) for v in manifest["norm_mean"]]),
                     std=np.array([float(v) for v in manifest["norm_std"]]),
                     feature_names=feature_names)
    return DatasetSplit(train=parse(buckets["train"]), test=parse(buckets["test"]),
                        norm=norm, window=window, horizon=horizon,
                        split_ratio=manifest["split_ratio"])
