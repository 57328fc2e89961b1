# planning/neuralnet/core.py
"""
Costmap encoder + planning network, training with Adam on the per-trajectory
weighted squared error, and the TrainState checkpoint.

Encoder:  conv5x5(8) -> pool -> PReLU -> conv3x3(16) -> pool -> PReLU -> conv3x3(32) -> PReLU -> flatten
Planner:  [latent, current, goal] -> 5 x (linear -> PReLU [-> dropout on the first four]) -> linear -> tanh

Parameters are stored float32; every forward / backward pass runs in float64.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from kinoplan.errors import InvalidInputError, NonFiniteLossError, ShapeMismatchError
from kinoplan.log import get_logger
from planning.neuralnet import layers

_logger = get_logger("kinoplan.neuralnet")

Mode = Literal["train", "infer"]
CONV_SPECS: Tuple[Tuple[int, int], ...] = ((8, 5), (16, 3), (32, 3))
STATE_DIM = 4
MIN_WINDOW_L = 10


# ---- Configs ----
class NetworkConfig(BaseModel):
    hidden_widths: List[int] = Field(default_factory=lambda: [512, 384, 256, 128, 64])
    dropout_rate: float = 0.5
    inference_dropout: bool = True
    init_seed: int = 0

    model_config = {"extra": "ignore"}

    @model_validator(mode="after")
    def _check(self) -> "NetworkConfig":
        if len(self.hidden_widths) != 5 or any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden_widths must list five positive widths")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        return self


class TrainingConfig(BaseModel):
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    model_config = {"extra": "ignore"}

    @model_validator(mode="after")
    def _check(self) -> "TrainingConfig":
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr >= 0 are required")
        return self


# ---- Architecture ----
def encoder_sizes(l: int) -> List[int]:
    """Spatial side after each stage: input, conv1, pool1, conv2, pool2, conv3."""
    s = 2 * l
    sizes = [s]
    s -= 4
    sizes.append(s)
    s //= 2
    sizes.append(s)
    s -= 2
    sizes.append(s)
    s //= 2
    sizes.append(s)
    s -= 2
    sizes.append(s)
    return sizes


def latent_size(l: int) -> int:
    side = encoder_sizes(l)[-1]
    return CONV_SPECS[-1][0] * side * side


def architecture(l: int, hidden_widths: Sequence[int]) -> List[Tuple[str, Tuple[int, ...]]]:
    """(name, shape) for every tensor, in file / descriptor order."""
    if l < MIN_WINDOW_L:
        raise ShapeMismatchError(f"window l={l} leaves conv3 empty; l >= {MIN_WINDOW_L} is required")
    out: List[Tuple[str, Tuple[int, ...]]] = []
    cin = 1
    for i, (cout, k) in enumerate(CONV_SPECS, start=1):
        out += [(f"conv{i}_w", (cout, cin, k, k)), (f"conv{i}_b", (cout,)), (f"conv{i}_a", (cout,))]
        cin = cout
    fan_in = latent_size(l) + 2 * STATE_DIM
    for i, width in enumerate(list(hidden_widths) + [STATE_DIM], start=1):
        out += [(f"fc{i}_w", (width, fan_in)), (f"fc{i}_b", (width,))]
        if i <= len(hidden_widths):
            out.append((f"fc{i}_a", (width,)))
        fan_in = width
    return out


class NetworkParams(BaseModel):
    l: int
    hidden_widths: List[int]
    dropout_rate: float = 0.5
    inference_dropout: bool = True
    tensors: Dict[str, np.ndarray]

    model_config = {"arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def _chain(self) -> "NetworkParams":
        for name, shape in architecture(self.l, self.hidden_widths):
            t = self.tensors.get(name)
            if t is None:
                raise ShapeMismatchError(f"missing tensor {name}")
            if tuple(t.shape) != shape:
                raise ShapeMismatchError(f"tensor {name} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ShapeMismatchError(f"tensor {name} holds non-finite values")
        return self

    @classmethod
    def initialize(cls, l: int, config: NetworkConfig) -> "NetworkParams":
        rng = np.random.default_rng(config.init_seed)
        tensors: Dict[str, np.ndarray] = {}
        for name, shape in architecture(l, config.hidden_widths):
            if name.endswith("_w"):
                fan_in = int(np.prod(shape[1:]))
                t = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
            elif name.endswith("_a"):
                t = np.full(shape, 0.25)
            else:
                t = np.zeros(shape)
            tensors[name] = t.astype(np.float32)
        return cls(
            l=l, hidden_widths=list(config.hidden_widths), dropout_rate=config.dropout_rate,
            inference_dropout=config.inference_dropout, tensors=tensors,
        )

    def names(self) -> List[str]:
        return [n for n, _ in architecture(self.l, self.hidden_widths)]

    def clone(self, dtype=np.float32) -> "NetworkParams":
        return self.model_copy(update={"tensors": {k: np.array(v, dtype=dtype) for k, v in self.tensors.items()}})

    def f64(self) -> Dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=np.float64) for k, v in self.tensors.items()}


# ---- Forward / backward ----
def _check_inputs(params: NetworkParams, patch: np.ndarray, current: np.ndarray, goal: np.ndarray) -> None:
    side = 2 * params.l
    if patch.shape[1:] != (side, side):
        raise ShapeMismatchError(f"patch batch has shape {patch.shape}, expected (B, {side}, {side})")
    if current.shape != (patch.shape[0], STATE_DIM) or goal.shape != current.shape:
        raise ShapeMismatchError("current / goal must be (B, 4) matching the patch batch")
    if not (np.all(np.isfinite(patch)) and np.all(np.isfinite(current)) and np.all(np.isfinite(goal))):
        raise InvalidInputError("network inputs must be finite")


def _encode(t: Dict[str, np.ndarray], patch: np.ndarray, cache: Optional[dict]) -> np.ndarray:
    h = patch[:, None, :, :]
    for i in (1, 2, 3):
        z, windows = layers.conv2d_forward(h, t[f"conv{i}_w"], t[f"conv{i}_b"])
        if cache is not None:
            cache[f"conv{i}"] = (windows, h.shape)
        if i < 3:
            pooled, arg = layers.maxpool2_forward(z)
            if cache is not None:
                cache[f"pool{i}"] = (arg, z.shape)
            z = pooled
        if cache is not None:
            cache[f"prelu_c{i}"] = z
        h = layers.prelu_forward(z, t[f"conv{i}_a"])
    if cache is not None:
        cache["latent_shape"] = h.shape
    return h.reshape(h.shape[0], -1)


def _plan(
    t: Dict[str, np.ndarray],
    latent: np.ndarray,
    current: np.ndarray,
    goal: np.ndarray,
    n_hidden: int,
    masks: Optional[List[np.ndarray]],
    cache: Optional[dict],
) -> np.ndarray:
    h = np.concatenate([latent, current, goal], axis=1)
    for i in range(1, n_hidden + 2):
        if cache is not None:
            cache[f"fc{i}_in"] = h
        z = layers.linear_forward(h, t[f"fc{i}_w"], t[f"fc{i}_b"])
        if i == n_hidden + 1:
            y = layers.tanh_forward(z)
            if cache is not None:
                cache["out"] = y
            return y
        if cache is not None:
            cache[f"prelu_f{i}"] = z
        h = layers.prelu_forward(z, t[f"fc{i}_a"])
        if i <= n_hidden - 1 and masks is not None:
            h = layers.dropout_forward(h, masks[i - 1])
    raise AssertionError("unreachable")


def _dropout_active(params: NetworkParams, mode: Mode) -> bool:
    return params.dropout_rate > 0 and (mode == "train" or params.inference_dropout)


def draw_masks(params: NetworkParams, batch: int, rng: np.random.Generator) -> List[np.ndarray]:
    return [
        layers.dropout_mask((batch, w), params.dropout_rate, rng)
        for w in params.hidden_widths[:-1]
    ]


def forward(
    params: NetworkParams,
    patch: np.ndarray,
    current: np.ndarray,
    goal: np.ndarray,
    mode: Mode = "infer",
    rng: Optional[np.random.Generator] = None,
    masks: Optional[List[np.ndarray]] = None,
    keep_cache: bool = False,
) -> Tuple[np.ndarray, Optional[dict]]:
    """
    Batched network pass. Dropout masks are drawn from `rng` unless given
    explicitly; with dropout inactive no masks are applied.
    """
    patch = np.asarray(patch, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    _check_inputs(params, patch, current, goal)
    if masks is None and _dropout_active(params, mode):
        masks = draw_masks(params, patch.shape[0], rng if rng is not None else np.random.default_rng())
    t = params.f64()
    cache = {"masks": masks} if keep_cache else None
    latent = _encode(t, patch, cache)
    out = _plan(t, latent, current, goal, len(params.hidden_widths), masks, cache)
    return out, cache


def backward(params: NetworkParams, cache: dict, grad_out: np.ndarray) -> Dict[str, np.ndarray]:
    t = params.f64()
    n_hidden = len(params.hidden_widths)
    masks = cache["masks"]
    grads: Dict[str, np.ndarray] = {}

    g = layers.tanh_backward(grad_out, cache["out"])
    for i in range(n_hidden + 1, 0, -1):
        if i <= n_hidden:
            if i <= n_hidden - 1 and masks is not None:
                g = layers.dropout_backward(g, masks[i - 1])
            g, grads[f"fc{i}_a"] = layers.prelu_backward(g, cache[f"prelu_f{i}"], t[f"fc{i}_a"])
        g, grads[f"fc{i}_w"], grads[f"fc{i}_b"] = layers.linear_backward(g, cache[f"fc{i}_in"], t[f"fc{i}_w"])

    g = g[:, :latent_size(params.l)].reshape(cache["latent_shape"])
    for i in (3, 2, 1):
        g, grads[f"conv{i}_a"] = layers.prelu_backward(g, cache[f"prelu_c{i}"], t[f"conv{i}_a"])
        if i < 3:
            arg, z_shape = cache[f"pool{i}"]
            g = layers.maxpool2_backward(g, arg, z_shape)
        windows, _ = cache[f"conv{i}"]
        g, grads[f"conv{i}_w"], grads[f"conv{i}_b"] = layers.conv2d_backward(g, windows, t[f"conv{i}_w"])
    return grads


def encoder_forward(patch: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Latent vector for one (2l, 2l) patch, or a (B, latent) batch for (B, 2l, 2l)."""
    p = np.asarray(patch, dtype=np.float64)
    single = p.ndim == 2
    batch = p[None] if single else p
    side = 2 * params.l
    if batch.shape[1:] != (side, side):
        raise ShapeMismatchError(f"patch has shape {p.shape}, expected ({side}, {side})")
    latent = _encode(params.f64(), batch, None)
    return latent[0] if single else latent


def planner_forward(
    latent: np.ndarray,
    current: np.ndarray,
    goal: np.ndarray,
    params: NetworkParams,
    mode: Mode = "infer",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    lat = np.atleast_2d(np.asarray(latent, dtype=np.float64))
    cur = np.atleast_2d(np.asarray(current, dtype=np.float64))
    gl = np.atleast_2d(np.asarray(goal, dtype=np.float64))
    if lat.shape[1] != latent_size(params.l) or cur.shape[1] != STATE_DIM or gl.shape[1] != STATE_DIM:
        raise ShapeMismatchError("latent / state sizes do not match the network")
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(cur)) and np.all(np.isfinite(gl))):
        raise InvalidInputError("network inputs must be finite")
    masks = None
    if _dropout_active(params, mode):
        masks = draw_masks(params, lat.shape[0], rng if rng is not None else np.random.default_rng())
    out = _plan(params.f64(), lat, cur, gl, len(params.hidden_widths), masks, None)
    return out[0] if np.ndim(latent) == 1 else out


# ---- Loss ----
def _group_weights(n: int, trajectory_ids: Optional[np.ndarray]) -> np.ndarray:
    if trajectory_ids is None:
        return np.full(n, 1.0 / n)
    ids = np.asarray(trajectory_ids)
    _, inverse, counts = np.unique(ids, return_inverse=True, return_counts=True)
    return 1.0 / (len(counts) * counts[inverse])


def loss_and_grad(
    pred: np.ndarray, target: np.ndarray, trajectory_ids: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """
    (1/N) sum_j (1/T_j) sum_i ||pred - target||^2 over the N trajectories in
    the batch, T_j counting steps of trajectory j. Without ids the whole batch
    is one trajectory.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {pred.shape} and target {target.shape} differ")
    if pred.ndim != 2 or pred.shape[0] == 0:
        raise InvalidInputError("loss needs a non-empty (B, 4) batch")
    w = _group_weights(pred.shape[0], trajectory_ids)
    err = pred - target
    loss = float(np.sum(w * np.sum(err * err, axis=1)))
    return loss, 2.0 * w[:, None] * err


def loss_mse(pred: np.ndarray, target: np.ndarray, trajectory_ids: Optional[np.ndarray] = None) -> float:
    return loss_and_grad(pred, target, trajectory_ids)[0]


# ---- Training ----
class TrainState(BaseModel):
    params: NetworkParams
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    epoch: int = 0
    lr: float = 1e-3
    rng: np.random.Generator
    epoch_losses: List[float] = Field(default_factory=list)

    model_config = {"arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def _moments_match(self) -> "TrainState":
        for name, t in self.params.tensors.items():
            if self.m[name].shape != t.shape or self.v[name].shape != t.shape:
                raise ShapeMismatchError(f"Adam moments for {name} do not match the parameter shape")
        return self

    @classmethod
    def fresh(cls, params: NetworkParams, config: TrainingConfig) -> "TrainState":
        zeros = {k: np.zeros(v.shape) for k, v in params.tensors.items()}
        return cls(
            params=params.clone(), m=zeros, v={k: z.copy() for k, z in zeros.items()},
            lr=config.lr, rng=np.random.default_rng(config.seed),
        )


def adam_update(state: TrainState, grads: Dict[str, np.ndarray], config: TrainingConfig) -> None:
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        p = state.params.tensors[name].astype(np.float64)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
        state.params.tensors[name] = p.astype(np.float32)


def train_step(state: TrainState, batch: Dict[str, np.ndarray], config: TrainingConfig, batch_index: int = 0) -> float:
    out, cache = forward(
        state.params, batch["patch"], batch["current"], batch["goal"],
        mode="train", rng=state.rng, keep_cache=True,
    )
    ids = batch.get("trajectory_ids")
    if ids is not None and np.all(ids < 0):
        ids = None
    loss, grad = loss_and_grad(out, batch["target"], ids)
    if not math.isfinite(loss):
        raise NonFiniteLossError("non-finite training loss", state.lr, state.epoch, batch_index)
    adam_update(state, backward(state.params, cache, grad), config)
    return loss


def train(
    dataset,
    config: TrainingConfig,
    network: Optional[NetworkConfig] = None,
    state: Optional[TrainState] = None,
    checkpoint_dir: Optional[str | Path] = None,
) -> TrainState:
    """
    Minibatch Adam over `dataset` until state.epoch reaches config.epochs.
    Passing a restored `state` resumes exactly where it stopped.
    """
    if len(dataset) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if state is None:
        params = NetworkParams.initialize(dataset.l, network or NetworkConfig())
        state = TrainState.fresh(params, config)
    elif state.params.l != dataset.l:
        raise ShapeMismatchError(f"state was built for l={state.params.l}, dataset has l={dataset.l}")

    n = len(dataset)
    while state.epoch < config.epochs:
        order = state.rng.permutation(n)
        total, batches = 0.0, 0
        starts = range(0, n, config.batch_size)
        for b, s in enumerate(tqdm(starts, desc=f"epoch {state.epoch + 1}", leave=False)):
            idx = order[s:s + config.batch_size]
            batch = dataset.as_arrays(idx)
            total += train_step(state, batch, config, batch_index=b)
            batches += 1
        state.epoch += 1
        state.epoch_losses.append(total / batches)
        _logger.info("epoch %d/%d loss %.6f", state.epoch, config.epochs, state.epoch_losses[-1])
        if checkpoint_dir is not None:
            save_checkpoint(state, Path(checkpoint_dir) / f"epoch_{state.epoch:04d}.npz")
    return state


# ---- Checkpoints ----
def save_checkpoint(state: TrainState, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "l": state.params.l,
        "hidden_widths": state.params.hidden_widths,
        "dropout_rate": state.params.dropout_rate,
        "inference_dropout": state.params.inference_dropout,
        "step": state.step,
        "epoch": state.epoch,
        "lr": state.lr,
        "epoch_losses": state.epoch_losses,
        "rng_state": state.rng.bit_generator.state,
    }
    arrays = {"meta": np.array(json.dumps(meta))}
    for name, t in state.params.tensors.items():
        arrays[f"param__{name}"] = t
        arrays[f"m__{name}"] = state.m[name]
        arrays[f"v__{name}"] = state.v[name]
    with p.open("wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path: str | Path) -> TrainState:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        names = [n for n, _ in architecture(meta["l"], meta["hidden_widths"])]
        params = NetworkParams(
            l=meta["l"], hidden_widths=meta["hidden_widths"], dropout_rate=meta["dropout_rate"],
            inference_dropout=meta["inference_dropout"],
            tensors={n: np.array(data[f"param__{n}"]) for n in names},
        )
        m = {n: np.array(data[f"m__{n}"]) for n in names}
        v = {n: np.array(data[f"v__{n}"]) for n in names}
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(
        params=params, m=m, v=v, step=meta["step"], epoch=meta["epoch"], lr=meta["lr"],
        rng=rng, epoch_losses=meta["epoch_losses"],
    )


# ---- Proposers ----
class Proposer(Protocol):
    l: int

    def propose(self, current: np.ndarray, goal: np.ndarray, patch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ...


class MPNetModel:
    """Trained network used as a sample proposer; stateless apart from its params."""

    def __init__(self, params: NetworkParams):
        self.params = params
        self.l = params.l

    def propose(self, current: np.ndarray, goal: np.ndarray, patch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out, _ = forward(
            self.params, np.asarray(patch)[None], np.asarray(current)[None], np.asarray(goal)[None],
            mode="infer", rng=rng,
        )
        return out[0]


class RandomProposer:
    """Uniform proposals over the padded window; the untrained stand-in."""

    def __init__(self, l: int):
        self.l = l

    def propose(self, current: np.ndarray, goal: np.ndarray, patch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x, y = rng.uniform(-1.0, 1.0, size=2)
        th = rng.uniform(-math.pi, math.pi)
        return np.array([x, y, math.cos(th), math.sin(th)])
