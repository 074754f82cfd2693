"""Recurrent sequence regressors for per-RAT signal-quality forecasting.

Two architectures:

* ``bilstm_bs`` — two stacked bidirectional LSTM layers (32 units per
  direction) feeding a dense 32 -> 16 -> H head with ReLU and dropout; used
  for cellular BS links.
* ``lite_lstm_ap`` — a single 16-unit LSTM layer with one dense output layer;
  used for WiFi AP links.

Training minimizes MSE on normalized targets with Adam and backpropagation
through time, all hand-rolled in float64 numpy so gradients can be verified
against finite differences.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from ..dataset import DatasetSplit, NormStats, WindowSet
from ..topology import NodeId
from .lstm import (bidir_backward, bidir_forward, init_lstm_params,
                   lstm_backward, lstm_forward)

CHECKPOINT_FORMAT_VERSION = 1

BILSTM_BS = "bilstm_bs"
LITE_LSTM_AP = "lite_lstm_ap"


class TrainingDivergedError(RuntimeError):
    pass


class NotTrainedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    dropout: float = 0.2
    patience: int = 10
    val_fraction: float = 0.15
    clip_norm: float = 0.0             # 0 disables gradient clipping
    lr_decay: float = 1.0              # final-epoch lr as a fraction of peak
    seed: int = 0


@dataclass
class ForecastResult:
    """Denormalized dB forecasts for horizons 1..H from one window."""

    node: NodeId | None
    k: int | None
    values_db: np.ndarray
    mode: str                          # "direct" | "recursive"


def _relu(x):
    return np.maximum(x, 0.0)


class SequenceRegressor:
    """One predictor model (architecture + parameters + norm stats)."""

    def __init__(self, kind: str, window: int, input_dim: int,
                 output_dim: int, seed: int = 0,
                 hidden: int | None = None, dense: tuple[int, int] = (32, 16)):
        if kind not in (BILSTM_BS, LITE_LSTM_AP):
            raise ValueError(f"unknown model kind: {kind}")
        self.kind = kind
        self.window = window
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.dense = dense
        self.hidden = hidden if hidden is not None else (
            32 if kind == BILSTM_BS else 16)
        self.seed = seed
        self.norm: NormStats | None = None
        self.trained = False
        self.train_manifest: dict = {}
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(0x11,)))
        self.params = self._init_params(rng)

    def _init_params(self, rng) -> dict[str, np.ndarray]:
        h = self.hidden
        p: dict[str, np.ndarray] = {}

        def dense_init(din, dout):
            bound = np.sqrt(6.0 / (din + dout))
            return (rng.uniform(-bound, bound, size=(din, dout)),
                    np.zeros(dout))

        if self.kind == BILSTM_BS:
            for name, din in (("l0f", self.input_dim), ("l0b", self.input_dim),
                              ("l1f", 2 * h), ("l1b", 2 * h)):
                layer = init_lstm_params(din, h, rng)
                p[f"{name}_w"], p[f"{name}_u"], p[f"{name}_b"] = (
                    layer["w"], layer["u"], layer["b"])
            d0, d1 = self.dense
            p["d0_w"], p["d0_b"] = dense_init(2 * h, d0)
            p["d1_w"], p["d1_b"] = dense_init(d0, d1)
            p["out_w"], p["out_b"] = dense_init(d1, self.output_dim)
        else:
            layer = init_lstm_params(self.input_dim, h, rng)
            p["l0_w"], p["l0_u"], p["l0_b"] = (layer["w"], layer["u"],
                                               layer["b"])
            p["out_w"], p["out_b"] = dense_init(h, self.output_dim)
        return p

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False,
                dropout_rng: np.random.Generator | None = None,
                dropout: float = 0.0):
        """x: (B, W, F) normalized. Returns (y (B, H), cache)."""
        p = self.params
        if self.kind == BILSTM_BS:
            pf0 = {"w": p["l0f_w"], "u": p["l0f_u"], "b": p["l0f_b"]}
            pb0 = {"w": p["l0b_w"], "u": p["l0b_u"], "b": p["l0b_b"]}
            pf1 = {"w": p["l1f_w"], "u": p["l1f_u"], "b": p["l1f_b"]}
            pb1 = {"w": p["l1b_w"], "u": p["l1b_u"], "b": p["l1b_b"]}
            out0, c0 = bidir_forward(pf0, pb0, x)
            out1, c1 = bidir_forward(pf1, pb1, out0)
            h = self.hidden
            # Final states of each direction of the top layer.
            feat = np.concatenate([out1[:, -1, :h], out1[:, 0, h:]], axis=1)
            a0 = _relu(feat @ p["d0_w"] + p["d0_b"])
            m0 = self._mask(a0.shape, train, dropout, dropout_rng)
            a0d = a0 * m0
            a1 = _relu(a0d @ p["d1_w"] + p["d1_b"])
            m1 = self._mask(a1.shape, train, dropout, dropout_rng)
            a1d = a1 * m1
            y = a1d @ p["out_w"] + p["out_b"]
            cache = (x, c0, out0, c1, out1, feat, a0, m0, a0d, a1, m1, a1d)
            return y, cache
        else:
            pl = {"w": p["l0_w"], "u": p["l0_u"], "b": p["l0_b"]}
            hs, c = lstm_forward(pl, x)
            feat = hs[:, -1]
            m = self._mask(feat.shape, train, dropout, dropout_rng)
            featd = feat * m
            y = featd @ p["out_w"] + p["out_b"]
            return y, (x, c, hs, feat, m, featd)

    @staticmethod
    def _mask(shape, train, dropout, rng):
        if not train or dropout <= 0.0:
            return 1.0
        keep = 1.0 - dropout
        return (rng.random(shape) < keep) / keep

    def backward(self, cache, dy: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        g: dict[str, np.ndarray] = {}
        if self.kind == BILSTM_BS:
            (x, c0, out0, c1, out1, feat, a0, m0, a0d, a1, m1, a1d) = cache
            g["out_w"] = a1d.T @ dy
            g["out_b"] = dy.sum(axis=0)
            da1 = (dy @ p["out_w"].T) * m1 * (a1 > 0)
            g["d1_w"] = a0d.T @ da1
            g["d1_b"] = da1.sum(axis=0)
            da0 = (da1 @ p["d1_w"].T) * m0 * (a0 > 0)
            g["d0_w"] = feat.T @ da0
            g["d0_b"] = da0.sum(axis=0)
            dfeat = da0 @ p["d0_w"].T
            h = self.hidden
            dout1 = np.zeros_like(out1)
            dout1[:, -1, :h] = dfeat[:, :h]
            dout1[:, 0, h:] = dfeat[:, h:]
            pf1 = {"w": p["l1f_w"], "u": p["l1f_u"], "b": p["l1f_b"]}
            pb1 = {"w": p["l1b_w"], "u": p["l1b_u"], "b": p["l1b_b"]}
            dout0, gf1, gb1 = bidir_backward(pf1, pb1, c1, dout1)
            pf0 = {"w": p["l0f_w"], "u": p["l0f_u"], "b": p["l0f_b"]}
            pb0 = {"w": p["l0b_w"], "u": p["l0b_u"], "b": p["l0b_b"]}
            _, gf0, gb0 = bidir_backward(pf0, pb0, c0, dout0)
            for name, grads in (("l1f", gf1), ("l1b", gb1),
                                ("l0f", gf0), ("l0b", gb0)):
                g[f"{name}_w"] = grads["w"]
                g[f"{name}_u"] = grads["u"]
                g[f"{name}_b"] = grads["b"]
            return g
        else:
            x, c, hs, feat, m, featd = cache
            g["out_w"] = featd.T @ dy
            g["out_b"] = dy.sum(axis=0)
            dfeat = (dy @ p["out_w"].T) * m
            dh_seq = np.zeros_like(hs)
            dh_seq[:, -1] = dfeat
            pl = {"w": p["l0_w"], "u": p["l0_u"], "b": p["l0_b"]}
            _, gl = lstm_backward(pl, c, dh_seq)
            g["l0_w"], g["l0_u"], g["l0_b"] = gl["w"], gl["u"], gl["b"]
            return g

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, train: bool = False,
                       dropout_rng=None, dropout: float = 0.0):
        pred, cache = self.forward(x, train=train, dropout_rng=dropout_rng,
                                   dropout=dropout)
        err = pred - y
        loss = float(np.mean(err ** 2))
        dy = 2.0 * err / err.size
        return loss, self.backward(cache, dy)

    def relu_signature(self, cache) -> bytes:
        """Activation sign pattern of the ReLU units for a forward cache.

        Used by the gradient checker to detect finite-difference probes that
        straddle a ReLU kink. The lite model has no ReLU units and always
        returns an empty signature.
        """
        if self.kind == BILSTM_BS:
            a0, a1 = cache[6], cache[9]
            return (a0 > 0).tobytes() + (a1 > 0).tobytes()
        return b""

    # -- training -----------------------------------------------------------

    def fit(self, split: DatasetSplit, cfg: TrainConfig | None = None):
        """Train on the normalized split; returns per-epoch loss history."""
        cfg = cfg or TrainConfig()
        if split.horizon != self.output_dim:
            raise ValueError("dataset horizon does not match model output_dim")
        x_train, y_train = split.train_arrays()
        if len(x_train) == 0:
            raise ValueError("empty training set")
        # Hold out the tail of the (already shuffled) training pool for early
        # stopping so the test set never influences model selection.
        n_val = int(round(len(x_train) * cfg.val_fraction))
        if 0 < n_val < len(x_train):
            x_val, y_val = x_train[-n_val:], y_train[-n_val:]
            x_train, y_train = x_train[:-n_val], y_train[:-n_val]
        else:
            x_val, y_val = x_train, y_train
        self.norm = split.norm

        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=cfg.seed, spawn_key=(0x22,)))
        adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        history: list[dict] = []
        best_loss = np.inf
        best_params = None
        best_epoch = -1
        n = len(x_train)
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            running = 0.0
            # Cosine decay from the peak rate down to lr_decay * peak.
            if cfg.epochs > 1:
                frac = 0.5 * (1.0 + np.cos(np.pi * epoch / (cfg.epochs - 1)))
            else:
                frac = 1.0
            lr_epoch = cfg.learning_rate * (
                cfg.lr_decay + (1.0 - cfg.lr_decay) * frac)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grads = self.loss_and_grads(
                    x_train[idx], y_train[idx], train=True,
                    dropout_rng=rng, dropout=cfg.dropout)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}")
                if cfg.clip_norm > 0.0:
                    gnorm = np.sqrt(sum(float(np.sum(g * g))
                                        for g in grads.values()))
                    if gnorm > cfg.clip_norm:
                        scale = cfg.clip_norm / gnorm
                        grads = {k: g * scale for k, g in grads.items()}
                running += loss * len(idx)
                step += 1
                lr_t = lr_epoch * np.sqrt(1.0 - beta2 ** step) / (
                    1.0 - beta1 ** step)
                for key, grad in grads.items():
                    adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * grad
                    adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * grad ** 2
                    self.params[key] -= lr_t * adam_m[key] / (
                        np.sqrt(adam_v[key]) + eps)
            train_loss = running / n
            pred, _ = self.forward(x_val)
            val_loss = float(np.mean((pred - y_val) ** 2))
            history.append({"epoch": epoch, "train_mse": train_loss,
                            "val_mse": val_loss})
            if val_loss < best_loss - 1e-12:
                best_loss = val_loss
                best_params = {k: v.copy() for k, v in self.params.items()}
                best_epoch = epoch
            elif epoch - best_epoch >= cfg.patience:
                break
        if best_params is not None:
            self.params = best_params
        self.trained = cfg.epochs > 0 or self.trained
        if cfg.epochs > 0:
            self.train_manifest = {
                "config": asdict(cfg), "epochs_run": len(history),
                "best_epoch": best_epoch, "best_val_mse": best_loss,
                "n_train": int(n), "n_val": int(len(x_val)),
            }
        return history

    # -- inference ----------------------------------------------------------

    def predict_norm(self, x: np.ndarray) -> np.ndarray:
        """Deterministic (dropout-free) forward pass on normalized windows."""
        single = x.ndim == 2
        if single:
            x = x[None]
        y, _ = self.forward(x)
        return y[0] if single else y

    def predict_direct(self, window_db: np.ndarray, node: NodeId | None = None,
                       k: int | None = None) -> ForecastResult:
        """One pass emitting all H horizon values, denormalized to dB."""
        if not self.trained or self.norm is None:
            raise NotTrainedError("model has not been trained")
        x = self.norm.normalize_features(np.asarray(window_db, dtype=float))
        y = self.predict_norm(x)
        return ForecastResult(node=node, k=k,
                              values_db=self.norm.denormalize_targets(y),
                              mode="direct")

    def predict_recursive(self, window_db: np.ndarray, tau: int,
                          node: NodeId | None = None,
                          k: int | None = None) -> ForecastResult:
        """Iterate a one-step model, feeding predictions back into the window.

        Only valid for models trained on the signal-quality-only feature mode,
        since future RSSI/throughput are unknown at feedback time.
        """
        if not self.trained or self.norm is None:
            raise NotTrainedError("model has not been trained")
        if self.input_dim != 1 or self.output_dim != 1:
            raise ValueError("recursive prediction needs an F=1, H=1 model")
        if tau < 1:
            raise ValueError("tau must be >= 1")
        x = self.norm.normalize_features(np.asarray(window_db, dtype=float))
        out = np.empty(tau)
        for i in range(tau):
            y = self.predict_norm(x)[0]
            out[i] = y
            x = np.concatenate([x[1:], [[y]]], axis=0)
        return ForecastResult(node=node, k=k,
                              values_db=self.norm.denormalize_targets(out),
                              mode="recursive")

    def predict_recursive_batch(self, windows_db: np.ndarray,
                                tau: int) -> np.ndarray:
        """Vectorized recursive replay over (n, W, 1) raw windows.

        Returns an (n, tau) array of denormalized dB forecasts.
        """
        if not self.trained or self.norm is None:
            raise NotTrainedError("model has not been trained")
        if self.input_dim != 1 or self.output_dim != 1:
            raise ValueError("recursive prediction needs an F=1, H=1 model")
        x = self.norm.normalize_features(np.asarray(windows_db, dtype=float))
        out = np.empty((len(x), tau))
        for i in range(tau):
            y = self.predict_norm(x)
            out[:, i] = y[:, 0]
            x = np.concatenate([x[:, 1:], y[:, :, None]], axis=1)
        return self.norm.denormalize_targets(out)

    def predict_db(self, windows: WindowSet) -> np.ndarray:
        """Batch direct prediction, denormalized, for evaluation."""
        if not self.trained or self.norm is None:
            raise NotTrainedError("model has not been trained")
        x = self.norm.normalize_features(windows.features)
        y = self.predict_norm(x)
        return self.norm.denormalize_targets(y)


def evaluate_rmse(model, test: WindowSet) -> np.ndarray:
    """Per-horizon RMSE in dB between predictions and actual targets."""
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = model.predict_db(test)
    return np.sqrt(np.mean((pred - test.targets) ** 2, axis=0))


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(model: SequenceRegressor, path):
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": model.kind,
        "window": model.window,
        "input_dim": model.input_dim,
        "output_dim": model.output_dim,
        "hidden": model.hidden,
        "dense": list(model.dense),
        "seed": model.seed,
        "trained": model.trained,
        "train_manifest": model.train_manifest,
        "feature_names": list(model.norm.feature_names) if model.norm else None,
    }
    arrays = {f"param_{k}": v for k, v in model.params.items()}
    if model.norm is not None:
        arrays["norm_mean"] = model.norm.mean
        arrays["norm_std"] = model.norm.std
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path) -> SequenceRegressor:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError("unsupported checkpoint format_version")
        model = SequenceRegressor(
            kind=meta["kind"], window=meta["window"],
            input_dim=meta["input_dim"], output_dim=meta["output_dim"],
            seed=meta["seed"], hidden=meta["hidden"],
            dense=tuple(meta["dense"]))
        model.params = {k[len("param_"):]: data[k].copy() for k in data.files
                        if k.startswith("param_")}
        if meta["feature_names"] is not None:
            model.norm = NormStats(mean=data["norm_mean"].copy(),
                                   std=data["norm_std"].copy(),
                                   feature_names=tuple(meta["feature_names"]))
        model.trained = meta["trained"]
        model.train_manifest = meta["train_manifest"]
    return model
