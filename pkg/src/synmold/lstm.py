"""From-scratch many-to-one LSTM binary classifier.

Three stacked LSTM layers (gate order i, f, g, o), inverted dropout after
each layer, a single sigmoid output unit, MSE loss, and Adam. Sequences of
different lengths are left-padded: masked steps leave the hidden and cell
state untouched, so the final step is the last valid step for every sample
and feeds the output head. Gradients are exact backpropagation through
time over the same dropout masks as the paired forward pass.

Everything is float64 and fully deterministic given (config, data, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .metrics import loss_mse
from .rng import CounterRng, mix64
from .schema import Dataset, Source

__all__ = [
    "ModelConfig",
    "LstmParams",
    "AdamState",
    "PaddedBatch",
    "make_padded_batch",
    "TrainingHistory",
    "ChannelStats",
    "TrainResult",
    "TrainingDivergedError",
    "init_params",
    "forward",
    "backward",
    "adam_step",
    "train",
    "predict",
    "loss_mse",
    "fit_channel_stats",
    "apply_channel_stats",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class ModelConfig:
    """Classifier hyperparameters; the defaults are the fixed experiment
    configuration and are not tuned per run."""

    learning_rate: float = 0.0001175
    input_dim: int = 34
    output_size: int = 1
    units: tuple[int, ...] = (100, 100, 100)
    dropout_inner: float = 0.1598
    dropout_final: float = 0.279
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    standardize: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout_inner < 1.0 and 0.0 <= self.dropout_final < 1.0):
            raise ValueError("dropout rates must be in [0, 1)")
        if self.input_dim <= 0 or self.output_size != 1:
            raise ValueError("input_dim must be positive and output_size must be 1")
        if any(u <= 0 for u in self.units):
            raise ValueError("all layer widths must be positive")
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "input_dim": self.input_dim,
            "output_size": self.output_size,
            "units": list(self.units),
            "dropout_inner": self.dropout_inner,
            "dropout_final": self.dropout_final,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        kwargs = dict(raw)
        if "units" in kwargs:
            kwargs["units"] = tuple(int(u) for u in kwargs["units"])
        return cls(**kwargs)


@dataclass(frozen=True)
class LstmParams:
    """All trainable weights. Gate rows are ordered (i, f, g, o); each
    layer's input matrix is (4H, F), recurrence (4H, H), bias (4H,).
    Gradient pytrees reuse this container (identical shapes)."""

    wx: tuple[np.ndarray, ...]
    wh: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    w_out: np.ndarray  # (1, H_last)
    b_out: np.ndarray  # (1,)

    def leaves(self) -> list[np.ndarray]:
        return [*self.wx, *self.wh, *self.b, self.w_out, self.b_out]

    def rebuild(self, leaves: Sequence[np.ndarray]) -> "LstmParams":
        n = len(self.wx)
        return LstmParams(
            wx=tuple(leaves[:n]),
            wh=tuple(leaves[n : 2 * n]),
            b=tuple(leaves[2 * n : 3 * n]),
            w_out=leaves[3 * n],
            b_out=leaves[3 * n + 1],
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(leaf).all() for leaf in self.leaves())


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, params: LstmParams) -> "AdamState":
        return cls(
            m=tuple(np.zeros_like(leaf) for leaf in params.leaves()),
            v=tuple(np.zeros_like(leaf) for leaf in params.leaves()),
        )


@dataclass(frozen=True)
class PaddedBatch:
    """Left-padded batch: mask row k is `T - lengths[k]` zeros then ones."""

    x: np.ndarray  # (B, T, F)
    mask: np.ndarray  # (B, T) of {0.0, 1.0}
    lengths: np.ndarray  # (B,)
    targets: np.ndarray  # (B, 1)

    def __post_init__(self) -> None:
        B, T = self.mask.shape
        for k in range(B):
            n = int(self.lengths[k])
            row = self.mask[k]
            if n < 1 or not (row[: T - n] == 0.0).all() or not (row[T - n :] == 1.0).all():
                raise ValueError(f"mask row {k} is not left-padded with {n} valid steps")


def make_padded_batch(
    arrays: Sequence[np.ndarray], targets: Sequence[float]
) -> PaddedBatch:
    if len(arrays) == 0:
        raise ValueError("cannot build an empty batch")
    if len(arrays) != len(targets):
        raise ValueError("arrays and targets differ in length")
    lengths = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    t_max = int(lengths.max())
    n_features = arrays[0].shape[1]
    x = np.zeros((len(arrays), t_max, n_features), dtype=np.float64)
    mask = np.zeros((len(arrays), t_max), dtype=np.float64)
    for k, a in enumerate(arrays):
        x[k, t_max - a.shape[0] :, :] = a
        mask[k, t_max - a.shape[0] :] = 1.0
    return PaddedBatch(
        x=x,
        mask=mask,
        lengths=lengths,
        targets=np.asarray(targets, dtype=np.float64).reshape(-1, 1),
    )


@dataclass(frozen=True)
class TrainingHistory:
    train_loss: tuple[float, ...]
    train_accuracy: tuple[float, ...]
    val_loss: tuple[float, ...]
    val_accuracy: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return {
            "train_loss": list(self.train_loss),
            "train_accuracy": list(self.train_accuracy),
            "val_loss": list(self.val_loss),
            "val_accuracy": list(self.val_accuracy),
        }


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel training-set mean and standard deviation. Channels with
    zero variance standardize to 0."""

    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class TrainResult:
    params: LstmParams
    history: TrainingHistory
    stats: Optional[ChannelStats]


class TrainingDivergedError(RuntimeError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(config: ModelConfig, seed: int) -> LstmParams:
    """Glorot-uniform weights, zero biases except the forget-gate slice,
    which starts at 1.0."""
    rng = CounterRng(seed)
    wx, wh, b = [], [], []
    fan_in = config.input_dim
    for units in config.units:
        a_x = np.sqrt(6.0 / (fan_in + units))
        wx.append(rng.uniform(4 * units * fan_in, -a_x, a_x).reshape(4 * units, fan_in))
        a_h = np.sqrt(6.0 / (units + units))
        wh.append(rng.uniform(4 * units * units, -a_h, a_h).reshape(4 * units, units))
        bias = np.zeros(4 * units)
        bias[units : 2 * units] = 1.0
        b.append(bias)
        fan_in = units
    h_last = config.units[-1]
    a_o = np.sqrt(6.0 / (h_last + 1))
    w_out = rng.uniform(h_last, -a_o, a_o).reshape(1, h_last)
    return LstmParams(
        wx=tuple(wx), wh=tuple(wh), b=tuple(b), w_out=w_out, b_out=np.zeros(1)
    )


@dataclass
class _LayerCache:
    x: np.ndarray  # layer input (B, T, F)
    gates: np.ndarray  # (B, T, 4H), post-activation, order (i, f, g, o)
    tanh_c: np.ndarray  # (B, T, H), tanh of the pre-freeze cell state
    c_post: np.ndarray  # (B, T, H), cell state after mask freeze
    h_post: np.ndarray  # (B, T, H), hidden state after mask freeze
    drop: Optional[np.ndarray]  # scaled dropout mask on h_post, or None


def _dropout_mask(rng: CounterRng, shape: tuple[int, ...], rate: float) -> np.ndarray:
    keep = 1.0 - rate
    u = rng.uniform(int(np.prod(shape))).reshape(shape)
    return (u >= rate).astype(np.float64) / keep


def _layer_forward(
    x: np.ndarray,
    mask: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
) -> _LayerCache:
    B, T, F = x.shape
    H = wh.shape[1]
    xp = (x.reshape(B * T, F) @ wx.T).reshape(B, T, 4 * H) + b
    valid = mask.astype(bool)

    gates = np.empty((B, T, 4 * H))
    tanh_c = np.empty((B, T, H))
    c_post = np.empty((B, T, H))
    h_post = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xp[:, t] + h @ wh.T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = valid[:, t, None]
        h = np.where(m, h_new, h)
        c = np.where(m, c_new, c)
        gates[:, t, :H] = i
        gates[:, t, H : 2 * H] = f
        gates[:, t, 2 * H : 3 * H] = g
        gates[:, t, 3 * H :] = o
        tanh_c[:, t] = tc
        c_post[:, t] = c
        h_post[:, t] = h
    return _LayerCache(x=x, gates=gates, tanh_c=tanh_c, c_post=c_post, h_post=h_post, drop=None)


def _forward_full(
    params: LstmParams,
    batch: PaddedBatch,
    config: ModelConfig,
    train_mode: bool,
    dropout_seed: int,
) -> tuple[np.ndarray, list[_LayerCache], np.ndarray, Optional[np.ndarray]]:
    """Returns (scores, layer caches, head input, final dropout mask)."""
    rng = CounterRng(dropout_seed) if train_mode else None
    n_layers = len(config.units)
    caches: list[_LayerCache] = []
    seq = batch.x
    for layer in range(n_layers):
        cache = _layer_forward(
            seq, batch.mask, params.wx[layer], params.wh[layer], params.b[layer]
        )
        if train_mode and layer < n_layers - 1 and config.dropout_inner > 0.0:
            cache.drop = _dropout_mask(rng, cache.h_post.shape, config.dropout_inner)
            seq = cache.h_post * cache.drop
        else:
            seq = cache.h_post
        caches.append(cache)

    h_last = caches[-1].h_post[:, -1, :]
    drop_final = None
    if train_mode and config.dropout_final > 0.0:
        drop_final = _dropout_mask(rng, h_last.shape, config.dropout_final)
        h_last = h_last * drop_final
    pre = h_last @ params.w_out.T + params.b_out
    return _sigmoid(pre), caches, h_last, drop_final


def forward(
    params: LstmParams,
    batch: PaddedBatch,
    config: ModelConfig,
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> np.ndarray:
    """Scores in (0, 1), shape (B, 1). Eval mode is dropout-free."""
    scores, _, _, _ = _forward_full(params, batch, config, train_mode, dropout_seed)
    return scores


def _layer_backward(
    cache: _LayerCache,
    wx: np.ndarray,
    wh: np.ndarray,
    mask: np.ndarray,
    dh_ext: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """BPTT through one layer given dL/dh_post per step; returns
    (dwx, dwh, db, dx)."""
    B, T, F = cache.x.shape
    H = wh.shape[1]
    dz_all = np.empty((B, T, 4 * H))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        m = mask[:, t, None]
        dh_total = dh + dh_ext[:, t]
        dh_new = m * dh_total
        dh_pass = (1.0 - m) * dh_total
        dc_in = m * dc
        dc_pass = (1.0 - m) * dc

        i = cache.gates[:, t, :H]
        f = cache.gates[:, t, H : 2 * H]
        g = cache.gates[:, t, 2 * H : 3 * H]
        o = cache.gates[:, t, 3 * H :]
        tc = cache.tanh_c[:, t]
        c_prev = cache.c_post[:, t - 1] if t > 0 else np.zeros((B, H))

        do = dh_new * tc
        dc_new = dh_new * o * (1.0 - tc * tc) + dc_in
        di = dc_new * g
        df = dc_new * c_prev
        dg = dc_new * i
        dc = dc_new * f + dc_pass

        dz = dz_all[:, t]
        dz[:, :H] = di * i * (1.0 - i)
        dz[:, H : 2 * H] = df * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dg * (1.0 - g * g)
        dz[:, 3 * H :] = do * o * (1.0 - o)

        dh = dz @ wh + dh_pass

    h_prev = np.concatenate(
        [np.zeros((B, 1, H)), cache.h_post[:, :-1]], axis=1
    )
    flat_dz = dz_all.reshape(B * T, 4 * H)
    dwx = flat_dz.T @ cache.x.reshape(B * T, F)
    dwh = flat_dz.T @ h_prev.reshape(B * T, H)
    db = flat_dz.sum(axis=(0, 1))
    dx = (flat_dz @ wx).reshape(B, T, F)
    return dwx, dwh, db, dx


def _forward_backward(
    params: LstmParams,
    batch: PaddedBatch,
    config: ModelConfig,
    train_mode: bool,
    dropout_seed: int,
) -> tuple[np.ndarray, LstmParams]:
    scores, caches, h_head, drop_final = _forward_full(
        params, batch, config, train_mode, dropout_seed
    )
    B = scores.shape[0]
    dscores = 2.0 * (scores - batch.targets) / B
    dpre = dscores * scores * (1.0 - scores)
    dw_out = dpre.T @ h_head
    db_out = dpre.sum(axis=0)
    dh_head = dpre @ params.w_out
    if drop_final is not None:
        dh_head = dh_head * drop_final

    n_layers = len(config.units)
    dwx: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    dwh: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]

    # top layer receives gradient only at the final step
    dh_ext = np.zeros_like(caches[-1].h_post)
    dh_ext[:, -1, :] = dh_head
    for layer in range(n_layers - 1, -1, -1):
        g_wx, g_wh, g_b, dx = _layer_backward(
            caches[layer], params.wx[layer], params.wh[layer], batch.mask, dh_ext
        )
        dwx[layer], dwh[layer], db[layer] = g_wx, g_wh, g_b
        if layer > 0:
            drop = caches[layer - 1].drop
            dh_ext = dx * drop if drop is not None else dx

    grads = LstmParams(
        wx=tuple(dwx), wh=tuple(dwh), b=tuple(db), w_out=dw_out, b_out=db_out
    )
    return scores, grads


def backward(
    params: LstmParams,
    batch: PaddedBatch,
    config: ModelConfig,
    train_mode: bool = True,
    dropout_seed: int = 0,
) -> LstmParams:
    """Exact gradients of the batch MSE loss w.r.t. every parameter,
    using the same dropout masks as forward() with the same seed."""
    _, grads = _forward_backward(params, batch, config, train_mode, dropout_seed)
    return grads


def adam_step(
    params: LstmParams,
    grads: LstmParams,
    state: AdamState,
    config: ModelConfig,
    t: int,
) -> tuple[LstmParams, AdamState]:
    """One bias-corrected Adam update; `t` is the 1-based step index."""
    if t < 1:
        raise ValueError("step index t must be >= 1")
    b1, b2, eps, lr = config.beta1, config.beta2, config.epsilon, config.learning_rate
    new_leaves, new_m, new_v = [], [], []
    for theta, g, m, v in zip(params.leaves(), grads.leaves(), state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_leaves.append(theta - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return params.rebuild(new_leaves), AdamState(m=tuple(new_m), v=tuple(new_v))


def fit_channel_stats(arrays: Sequence[np.ndarray]) -> ChannelStats:
    stacked = np.concatenate([a for a in arrays], axis=0)
    return ChannelStats(mean=stacked.mean(axis=0), std=stacked.std(axis=0))


def apply_channel_stats(array: np.ndarray, stats: Optional[ChannelStats]) -> np.ndarray:
    if stats is None:
        return array
    inv = np.zeros_like(stats.std)
    nonzero = stats.std > 0.0
    inv[nonzero] = 1.0 / stats.std[nonzero]
    return (array - stats.mean) * inv


def _dataset_arrays(dataset: Dataset) -> tuple[list[np.ndarray], np.ndarray]:
    arrays = [r.samples for r in dataset.records]
    targets = np.array([r.label.target for r in dataset.records], dtype=np.float64)
    return arrays, targets


def _predict_arrays(
    params: LstmParams,
    arrays: Sequence[np.ndarray],
    config: ModelConfig,
    chunk_size: int = 256,
) -> np.ndarray:
    scores = np.empty(len(arrays), dtype=np.float64)
    for start in range(0, len(arrays), chunk_size):
        part = arrays[start : start + chunk_size]
        batch = make_padded_batch(part, [0.0] * len(part))
        scores[start : start + len(part)] = forward(params, batch, config)[:, 0]
    return scores


def _accuracy(scores: np.ndarray, targets: np.ndarray) -> float:
    # threshold 0.5, ties predicted Good
    return float(np.mean((scores >= 0.5) == (targets == 1.0)))


def train(
    config: ModelConfig,
    train_ds: Dataset,
    val_ds: Dataset,
    seed: Optional[int] = None,
) -> TrainResult:
    """Full training run: seeded shuffles, fixed-size batches, one Adam
    step per batch, eval-mode train/val metrics after every epoch."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation datasets must be non-empty")
    if train_ds.schema.fingerprint() != val_ds.schema.fingerprint():
        raise ValueError("training and validation datasets use different schemas")
    for record in val_ds.records:
        if record.source is not Source.REAL:
            raise ValueError(
                f"validation must contain only real cycles; {record.cycle_id} "
                f"is {record.source.value}"
            )
    seed = config.seed if seed is None else seed

    raw_train, targets_train = _dataset_arrays(train_ds)
    raw_val, targets_val = _dataset_arrays(val_ds)
    stats = fit_channel_stats(raw_train) if config.standardize else None
    x_train = [apply_channel_stats(a, stats) for a in raw_train]
    x_val = [apply_channel_stats(a, stats) for a in raw_val]

    params = init_params(config, mix64(seed, 1))
    state = AdamState.zeros_like(params)
    step = 0
    n = len(x_train)
    hist_tl, hist_ta, hist_vl, hist_va = [], [], [], []
    for epoch in range(config.epochs):
        order = CounterRng(mix64(seed, 2, epoch)).permutation(n)
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            chunk = order[start : start + config.batch_size]
            batch = make_padded_batch(
                [x_train[i] for i in chunk], [targets_train[i] for i in chunk]
            )
            dropout_seed = mix64(seed, 3, epoch, batch_idx)
            _, grads = _forward_backward(params, batch, config, True, dropout_seed)
            if not grads.all_finite():
                raise TrainingDivergedError(
                    f"non-finite gradient at epoch {epoch}, batch {batch_idx}"
                )
            step += 1
            params, state = adam_step(params, grads, state, config, step)

        train_scores = _predict_arrays(params, x_train, config)
        val_scores = _predict_arrays(params, x_val, config)
        hist_tl.append(loss_mse(train_scores, targets_train))
        hist_ta.append(_accuracy(train_scores, targets_train))
        hist_vl.append(loss_mse(val_scores, targets_val))
        hist_va.append(_accuracy(val_scores, targets_val))

    if not params.all_finite():
        raise TrainingDivergedError("non-finite parameters after training")
    history = TrainingHistory(
        train_loss=tuple(hist_tl),
        train_accuracy=tuple(hist_ta),
        val_loss=tuple(hist_vl),
        val_accuracy=tuple(hist_va),
    )
    return TrainResult(params=params, history=history, stats=stats)


def predict(
    params: LstmParams,
    dataset: Dataset,
    config: ModelConfig,
    stats: Optional[ChannelStats] = None,
) -> np.ndarray:
    """Eval-mode scores for every record, in dataset order."""
    if dataset.records and dataset.records[0].samples.shape[1] != config.input_dim:
        raise ValueError(
            f"dataset has {dataset.records[0].samples.shape[1]} channels, "
            f"model expects {config.input_dim}"
        )
    arrays = [apply_channel_stats(r.samples, stats) for r in dataset.records]
    return _predict_arrays(params, arrays, config)


def save_model(
    path: Path | str,
    params: LstmParams,
    config: ModelConfig,
    stats: Optional[ChannelStats],
    schema_fingerprint: str,
) -> None:
    """Single-file .npz artifact embedding weights, config, normalization
    statistics, and the feature-schema fingerprint."""
    arrays: dict[str, np.ndarray] = {}
    n = len(params.wx)
    for layer in range(n):
        arrays[f"wx{layer}"] = params.wx[layer]
        arrays[f"wh{layer}"] = params.wh[layer]
        arrays[f"b{layer}"] = params.b[layer]
    arrays["w_out"] = params.w_out
    arrays["b_out"] = params.b_out
    if stats is not None:
        arrays["stats_mean"] = stats.mean
        arrays["stats_std"] = stats.std
    meta = {
        "config": config.to_dict(),
        "schema_fingerprint": schema_fingerprint,
        "n_layers": n,
        "standardized": stats is not None,
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_model(
    path: Path | str,
) -> tuple[LstmParams, ModelConfig, Optional[ChannelStats], str]:
    with np.load(path) as blob:
        meta = json.loads(bytes(blob["meta_json"]).decode("utf-8"))
        n = int(meta["n_layers"])
        params = LstmParams(
            wx=tuple(blob[f"wx{layer}"] for layer in range(n)),
            wh=tuple(blob[f"wh{layer}"] for layer in range(n)),
            b=tuple(blob[f"b{layer}"] for layer in range(n)),
            w_out=blob["w_out"],
            b_out=blob["b_out"],
        )
        stats = None
        if meta["standardized"]:
            stats = ChannelStats(mean=blob["stats_mean"], std=blob["stats_std"])
    config = ModelConfig.from_dict(meta["config"])
    return params, config, stats, meta["schema_fingerprint"]
