"""Operator surrogate and baseline models with training and checkpointing.

The operator model pairs a branch network over the m sensor values with a
trunk network over the 2D query point; predictions are the dot product of the
two feature vectors plus a trainable scalar bias, all in the dataset's
normalized target space.  The baselines are conventional point regressors: a
fully connected net on coordinates (trained per source function) and a small
1D-convolutional encoder over the sensor vector with a dense head.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dataset import (
    CorpusEntry,
    CorpusView,
    NormalizationMeta,
    PointSubset,
    assemble_arrays,
    cell_center_points,
)
from .errors import ProtocolError, ShapeError, TrainingError
from .metrics import MetricsReport, compute_metrics
from .nets import (
    AdamState,
    MLPParams,
    adam_update_arrays,
    backward,
    forward,
    init_adam_arrays,
    init_params,
    pack_arrays,
    unpack_arrays,
)
from .rng import substream
from .transport import FluxField, TallyGrid

_TINY = 1e-300

# Baseline architecture constants (comparable parameter counts to the
# operator model, documented in the benchmark report).
FCN_LAYER_SIZES = (2, 64, 64, 64, 1)
CNN_KERNEL = 5
CNN_CHANNELS = (8, 16)
CNN_STRIDE = 2
CNN_HEAD_HIDDEN = 64


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by all three model families."""

    iterations: int = 10_000
    lr: float = 0.001
    batch_functions: int = 16
    points_per_function: int = 256
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.iterations < 0 or self.lr <= 0 or self.batch_functions < 1 \
                or self.points_per_function < 1 or self.log_every < 1:
            raise ShapeError(f"invalid training config: {self}")


# ----------------------------------------------------------------------
# Operator model
# ----------------------------------------------------------------------

@dataclass
class DeepONetModel:
    branch: MLPParams
    trunk: MLPParams
    output_bias: float
    norm_meta: NormalizationMeta

    @property
    def sensor_count(self) -> int:
        return self.branch.layer_sizes[0]


def init_deeponet(sensor_count: int, norm: NormalizationMeta, rng: np.random.Generator,
                  hidden: int = 80, features: int = 80,
                  trunk_hidden=None) -> DeepONetModel:
    # Branch head is linear so predictions inherit the input function's
    # linear structure; the trunk keeps its activation on the feature layer
    # (an identity-final trunk would collapse the basis to a single layer of
    # nonlinearity and starve the fit).  trunk_hidden widens/deepens the
    # coordinate network only; feature width stays shared with the branch.
    trunk_hidden = tuple(trunk_hidden) if trunk_hidden is not None else (hidden,)
    branch = init_params((sensor_count, hidden, features), "tanh", rng)
    trunk = init_params((2,) + trunk_hidden + (features,), "tanh", rng,
                        final_activation="tanh")
    return DeepONetModel(branch=branch, trunk=trunk, output_bias=0.0, norm_meta=norm)


def deeponet_predict(model: DeepONetModel, branch_input, trunk_points) -> np.ndarray:
    """Predictions in normalized target space for one input function.

    branch_input is the raw length-m sensor vector (standardized internally);
    trunk_points are already in the model's normalized coordinate system.
    The branch runs once and its feature vector is reused for every point.
    """
    u = np.asarray(branch_input, dtype=np.float64).ravel()
    if u.shape[0] != model.sensor_count:
        raise ShapeError(f"sensor vector length {u.shape[0]} != model m {model.sensor_count}")
    pts = np.atleast_2d(np.asarray(trunk_points, dtype=np.float64))
    g, _ = forward(model.branch, model.norm_meta.transform_branch(u))
    f, _ = forward(model.trunk, pts)
    return f @ g + model.output_bias


def _deeponet_loss_and_grads(branch, trunk, bias, branch_std, trunk_flat, targets):
    """Mean-squared-error training loss over a function-major batch.

    branch_std: (B, m) standardized sensor rows; trunk_flat: (B*k, 2)
    normalized points, function-major; targets: (B, k) normalized.  Returns
    (mse, mean L2 relative error metric, branch grads, trunk grads, dbias).
    """
    B, k = targets.shape
    g_out, g_cache = forward(branch, branch_std)
    f_out, f_cache = forward(trunk, trunk_flat)
    p = g_out.shape[1]
    f3 = f_out.reshape(B, k, p)
    pred = np.einsum("bkp,bp->bk", f3, g_out) + bias
    r = pred - targets
    loss = float((r * r).mean())
    rn = np.sqrt((r * r).sum(axis=1))
    tn = np.sqrt((targets * targets).sum(axis=1))
    rel_metric = float((rn / np.maximum(tn, _TINY)).mean())

    dpred = 2.0 * r / (B * k)
    dbias = float(dpred.sum())
    df = (dpred[:, :, None] * g_out[:, None, :]).reshape(B * k, p)
    dg = np.einsum("bk,bkp->bp", dpred, f3)
    branch_grads = backward(branch, g_cache, dg)
    trunk_grads = backward(trunk, f_cache, df)
    return loss, rel_metric, branch_grads, trunk_grads, dbias


def train_deeponet(train_view: CorpusView, norm: NormalizationMeta, config: TrainConfig,
                   subset: PointSubset | None = None,
                   hidden: int = 80, features: int = 80, trunk_hidden=None):
    """Train the operator model on a training view; returns (model, log).

    Mini-batches are function-major: every iteration draws batch_functions
    source functions and points_per_function of each function's available
    cells, keeping each function's points contiguous so metrics group per
    function.  The optimizer minimizes mean squared error in normalized
    target space; the log records (iteration, mse, mean L2 relative error)
    per interval.  Fully deterministic under config.seed.
    """
    data = assemble_arrays(train_view, norm, subset)
    branch_raw = data["branch_raw"]
    targets = data["targets_norm"]
    trunk_all = data["trunk_norm"]
    cells = data["cells"]
    F = len(branch_raw)
    if F == 0:
        raise ProtocolError("training view is empty")
    n_avail = len(cells[0])
    if any(len(c) != n_avail for c in cells):
        raise ShapeError("per-function cell lists must have equal lengths")
    cells_mat = np.stack(cells)

    branch_std = norm.transform_branch(branch_raw)
    model = init_deeponet(branch_raw.shape[1], norm, substream(config.seed, "init"),
                          hidden=hidden, features=features, trunk_hidden=trunk_hidden)
    bias = np.zeros(1, dtype=np.float64)
    values = (list(model.branch.weights) + list(model.branch.biases)
              + list(model.trunk.weights) + list(model.trunk.biases) + [bias])
    state = init_adam_arrays([v.shape for v in values], lr=config.lr)
    nb = len(model.branch.weights)
    nt = len(model.trunk.weights)

    rng = substream(config.seed, "batches")
    B = min(config.batch_functions, F)
    k = min(config.points_per_function, n_avail)
    log = []
    branch, trunk = model.branch, model.trunk
    for it in range(1, config.iterations + 1):
        funcs = rng.choice(F, size=B, replace=False)
        scores = rng.random((B, n_avail))
        pick = np.argpartition(scores, k - 1, axis=1)[:, :k] if k < n_avail \
            else np.tile(np.arange(n_avail), (B, 1))
        chosen = np.take_along_axis(cells_mat[funcs], pick, axis=1)
        t_batch = np.take_along_axis(targets[funcs], chosen, axis=1)
        trunk_batch = trunk_all[chosen.ravel()]

        loss, rel_metric, gb, gt, dbias = _deeponet_loss_and_grads(
            branch, trunk, float(bias[0]), branch_std[funcs], trunk_batch, t_batch)
        if not np.isfinite(loss):
            raise TrainingError(f"training loss became non-finite at iteration {it}",
                                iteration=it)
        grads = (list(gb.weight_grads) + list(gb.bias_grads)
                 + list(gt.weight_grads) + list(gt.bias_grads)
                 + [np.array([dbias])])
        values, state = adam_update_arrays(values, grads, state)
        branch = MLPParams(branch.layer_sizes, values[:nb], values[nb:2 * nb],
                           branch.activation, branch.final_activation)
        off = 2 * nb
        trunk = MLPParams(trunk.layer_sizes, values[off:off + nt],
                          values[off + nt:off + 2 * nt],
                          trunk.activation, trunk.final_activation)
        bias = values[-1]
        if it % config.log_every == 0 or it == config.iterations:
            log.append((it, loss, rel_metric))

    model = DeepONetModel(branch=branch, trunk=trunk, output_bias=float(bias[0]),
                          norm_meta=norm)
    return model, log


# ----------------------------------------------------------------------
# FCN baseline
# ----------------------------------------------------------------------

@dataclass
class FcnBaseline:
    net: MLPParams
    norm_meta: NormalizationMeta
    trained_spec_id: str = ""


def _collect_samples(samples):
    branch_by_id = {}
    coords_by_id = {}
    targets_by_id = {}
    for s in samples:
        branch_by_id.setdefault(s.spec_id, s.branch_input)
        coords_by_id.setdefault(s.spec_id, []).append(s.trunk_point)
        targets_by_id.setdefault(s.spec_id, []).append(s.target)
    out = {}
    for sid in branch_by_id:
        out[sid] = (np.asarray(branch_by_id[sid], dtype=np.float64),
                    np.asarray(coords_by_id[sid], dtype=np.float64),
                    np.asarray(targets_by_id[sid], dtype=np.float64))
    return out


def train_fcn(samples, norm: NormalizationMeta, config: TrainConfig,
              pooled: bool = False) -> FcnBaseline:
    """Fit the coordinate-to-flux regressor with mean-squared-error loss.

    The network sees coordinates only, so its natural protocol is a single
    source function; mixed-function input raises unless `pooled` is set, in
    which case all samples are regressed together (the traditional
    feature-target format, which can only learn the ensemble-average field).
    """
    grouped = _collect_samples(samples)
    if len(grouped) != 1 and not pooled:
        raise ProtocolError(
            f"fcn training requires exactly one source function, got {sorted(grouped)}")
    if pooled:
        spec_id = "pooled"
        coords = np.concatenate([grouped[s][1] for s in sorted(grouped)])
        targets = np.concatenate([grouped[s][2] for s in sorted(grouped)])
    else:
        (spec_id, (_, coords, targets)), = grouped.items()
    x = norm.transform_trunk(coords)
    net = init_params(FCN_LAYER_SIZES, "tanh", substream(config.seed, "init"))
    values = list(net.weights) + list(net.biases)
    state = init_adam_arrays([v.shape for v in values], lr=config.lr)
    nw = net.n_layers
    rng = substream(config.seed, "batches")
    P = len(targets)
    bsize = min(config.points_per_function, P)
    for it in range(1, config.iterations + 1):
        pick = rng.choice(P, size=bsize, replace=False)
        pred, cache = forward(net, x[pick])
        r = pred.ravel() - targets[pick]
        loss = float((r * r).mean())
        if not np.isfinite(loss):
            raise TrainingError(f"fcn loss became non-finite at iteration {it}", iteration=it)
        bundle = backward(net, cache, (2.0 * r / bsize)[:, None])
        values, state = adam_update_arrays(
            values, list(bundle.weight_grads) + list(bundle.bias_grads), state)
        net = MLPParams(net.layer_sizes, values[:nw], values[nw:],
                        net.activation, net.final_activation)
    return FcnBaseline(net=net, norm_meta=norm, trained_spec_id=spec_id)


# ----------------------------------------------------------------------
# CNN baseline
# ----------------------------------------------------------------------

@dataclass
class Conv1dParams:
    weight: np.ndarray   # (out_ch, in_ch, kernel)
    bias: np.ndarray     # (out_ch,)
    stride: int


def conv1d_output_length(length: int, stride: int) -> int:
    """Same-style padding: output length is ceil(input / stride)."""
    return -(-length // stride)


def _conv1d_forward(p: Conv1dParams, x: np.ndarray):
    batch, _, length = x.shape
    kernel = p.weight.shape[2]
    l_out = conv1d_output_length(length, p.stride)
    pad_total = max((l_out - 1) * p.stride + kernel - length, 0)
    pad_left = pad_total // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad_left, pad_total - pad_left)))
    starts = np.arange(l_out) * p.stride
    win_idx = starts[:, None] + np.arange(kernel)[None, :]
    win = xp[:, :, win_idx]                                  # (B, C_in, L_out, K)
    out = np.einsum("bclk,ock->bol", win, p.weight) + p.bias[None, :, None]
    cache = (win, starts, pad_left, length, xp.shape)
    return out, cache


def _conv1d_backward(p: Conv1dParams, cache, d_out: np.ndarray):
    win, starts, pad_left, length, xp_shape = cache
    kernel = p.weight.shape[2]
    d_weight = np.einsum("bclk,bol->ock", win, d_out)
    d_bias = d_out.sum(axis=(0, 2))
    taps = np.einsum("bol,ock->bclk", d_out, p.weight)
    d_xp = np.zeros(xp_shape, dtype=np.float64)
    for j in range(kernel):  # start positions are distinct within a tap
        d_xp[:, :, starts + j] += taps[:, :, :, j]
    d_x = d_xp[:, :, pad_left: pad_left + length]
    return d_weight, d_bias, d_x


@dataclass
class CnnBaseline:
    conv1: Conv1dParams
    conv2: Conv1dParams
    head: MLPParams
    norm_meta: NormalizationMeta
    sensor_count: int = 0


def cnn_feature_length(sensor_count: int) -> int:
    l1 = conv1d_output_length(sensor_count, CNN_STRIDE)
    l2 = conv1d_output_length(l1, CNN_STRIDE)
    return l2 * CNN_CHANNELS[1]


def init_cnn(sensor_count: int, norm: NormalizationMeta, rng: np.random.Generator) -> CnnBaseline:
    def conv_init(c_in, c_out):
        bound = np.sqrt(6.0 / (c_in * CNN_KERNEL + c_out * CNN_KERNEL))
        w = rng.uniform(-bound, bound, size=(c_out, c_in, CNN_KERNEL))
        return Conv1dParams(weight=w, bias=np.zeros(c_out), stride=CNN_STRIDE)

    conv1 = conv_init(1, CNN_CHANNELS[0])
    conv2 = conv_init(CNN_CHANNELS[0], CNN_CHANNELS[1])
    head = init_params((cnn_feature_length(sensor_count) + 2, CNN_HEAD_HIDDEN, 1),
                       "tanh", rng)
    return CnnBaseline(conv1=conv1, conv2=conv2, head=head, norm_meta=norm,
                       sensor_count=sensor_count)


def _cnn_encode(model: CnnBaseline, u_std: np.ndarray):
    x = u_std[None, None, :]
    z1, c1 = _conv1d_forward(model.conv1, x)
    a1 = np.tanh(z1)
    z2, c2 = _conv1d_forward(model.conv2, a1)
    a2 = np.tanh(z2)
    return a2.ravel(), (c1, a1, c2, a2)


def _cnn_encode_backward(model: CnnBaseline, enc_cache, d_feat: np.ndarray):
    c1, a1, c2, a2 = enc_cache
    da2 = d_feat.reshape(a2.shape)
    dz2 = da2 * (1.0 - a2 * a2)
    dw2, db2, da1 = _conv1d_backward(model.conv2, c2, dz2)
    dz1 = da1 * (1.0 - a1 * a1)
    dw1, db1, _ = _conv1d_backward(model.conv1, c1, dz1)
    return dw1, db1, dw2, db2


def _cnn_predict_norm(model: CnnBaseline, u_raw: np.ndarray, coords_norm: np.ndarray):
    feat, _ = _cnn_encode(model, model.norm_meta.transform_branch(u_raw))
    head_in = np.concatenate(
        [np.broadcast_to(feat, (len(coords_norm), feat.size)), coords_norm], axis=1)
    pred, _ = forward(model.head, head_in)
    return pred.ravel()


def train_cnn(samples, norm: NormalizationMeta, config: TrainConfig) -> CnnBaseline:
    """Fit the convolutional regressor on samples of one or many functions.

    Each iteration draws up to batch_functions functions and
    points_per_function points per function; the sensor vector is encoded once
    per function and the encoder gradient accumulates over that function's
    points.
    """
    grouped = _collect_samples(samples)
    if not grouped:
        raise ProtocolError("cnn training received no samples")
    sids = sorted(grouped)
    funcs = [grouped[s] for s in sids]
    m = len(funcs[0][0])
    model = init_cnn(m, norm, substream(config.seed, "init"))
    values = [model.conv1.weight, model.conv1.bias, model.conv2.weight, model.conv2.bias] \
        + list(model.head.weights) + list(model.head.biases)
    state = init_adam_arrays([v.shape for v in values], lr=config.lr)
    rng = substream(config.seed, "batches")
    nfuncs = len(funcs)
    B = min(config.batch_functions, nfuncs)
    u_std_all = [norm.transform_branch(u) for u, _, _ in funcs]
    coords_all = [norm.transform_trunk(c) for _, c, _ in funcs]
    targets_all = [t for _, _, t in funcs]

    for it in range(1, config.iterations + 1):
        chosen = rng.choice(nfuncs, size=B, replace=False)
        grads = [np.zeros_like(v) for v in values]
        loss = 0.0
        for fi in chosen:
            coords = coords_all[fi]
            targets = targets_all[fi]
            P = len(targets)
            bsize = min(config.points_per_function, P)
            pick = rng.choice(P, size=bsize, replace=False)
            feat, enc_cache = _cnn_encode(model, u_std_all[fi])
            head_in = np.concatenate(
                [np.broadcast_to(feat, (bsize, feat.size)), coords[pick]], axis=1)
            pred, cache = forward(model.head, head_in)
            r = pred.ravel() - targets[pick]
            loss += float((r * r).mean()) / B
            bundle = backward(model.head, cache, (2.0 * r / (bsize * B))[:, None])
            d_feat = bundle.input_grad[:, : feat.size].sum(axis=0)
            dw1, db1, dw2, db2 = _cnn_encode_backward(model, enc_cache, d_feat)
            for slot, g in enumerate([dw1, db1, dw2, db2]
                                     + list(bundle.weight_grads) + list(bundle.bias_grads)):
                grads[slot] += g
        if not np.isfinite(loss):
            raise TrainingError(f"cnn loss became non-finite at iteration {it}", iteration=it)
        values, state = adam_update_arrays(values, grads, state)
        nh = model.head.n_layers
        model = CnnBaseline(
            conv1=Conv1dParams(values[0], values[1], CNN_STRIDE),
            conv2=Conv1dParams(values[2], values[3], CNN_STRIDE),
            head=MLPParams(model.head.layer_sizes, values[4:4 + nh], values[4 + nh:],
                           model.head.activation, model.head.final_activation),
            norm_meta=norm, sensor_count=m)
    return model


# ----------------------------------------------------------------------
# Prediction and evaluation
# ----------------------------------------------------------------------

def predict_field(model, sensor_values, grid: TallyGrid) -> np.ndarray:
    """Raw-flux prediction over every cell of the grid, any model family."""
    norm = model.norm_meta
    pts = norm.transform_trunk(cell_center_points(grid))
    if isinstance(model, DeepONetModel):
        pred = deeponet_predict(model, sensor_values, pts)
    elif isinstance(model, FcnBaseline):
        out, _ = forward(model.net, pts)
        pred = out.ravel()
    elif isinstance(model, CnnBaseline):
        pred = _cnn_predict_norm(model, np.asarray(sensor_values, dtype=np.float64), pts)
    else:
        raise ShapeError(f"unknown model type {type(model)!r}")
    raw = norm.inverse_target(pred).reshape(grid.nx, grid.ny)
    return np.maximum(raw, 0.0)  # flux is non-negative by definition


def evaluate_on_function(model, entry: CorpusEntry, grid: TallyGrid):
    """Predict the full field for one function and score it against the tally.

    Metrics are computed in raw flux space after inverse-transforming the
    model output.  Returns (MetricsReport, predicted FluxField).
    """
    truth = entry.flux.values
    if truth.shape != (grid.nx, grid.ny):
        raise ShapeError(f"entry grid {truth.shape} != tally grid {(grid.nx, grid.ny)}")
    pred = predict_field(model, entry.sensors.values, grid)
    report = compute_metrics(pred.ravel(), truth.ravel())
    field = FluxField(values=pred, rel_error=np.zeros_like(pred),
                      spec_id=entry.spec_id)
    return report, field


def inference_timing(model, n_functions: int, grid: TallyGrid,
                     rng: np.random.Generator | None = None) -> float:
    """Mean wall-clock seconds per full-field prediction.

    Inputs are synthetic sensor vectors in raw units; prediction cost depends
    only on shapes, not content.
    """
    rng = rng or np.random.default_rng(0)
    norm = model.norm_meta
    m = len(norm.branch_mean)
    vectors = norm.branch_mean + norm.branch_std * rng.standard_normal((n_functions, m))
    predict_field(model, vectors[0], grid)  # warm-up outside the clock
    start = time.perf_counter()
    for u in vectors:
        predict_field(model, u, grid)
    return (time.perf_counter() - start) / n_functions


# ----------------------------------------------------------------------
# Checkpoints
# ----------------------------------------------------------------------

CHECKPOINT_KIND = "checkpoint"


def _mlp_meta(p: MLPParams) -> dict:
    return {"layer_sizes": list(p.layer_sizes), "activation": p.activation,
            "final_activation": p.final_activation}


def _mlp_arrays(prefix: str, p: MLPParams, arrays: dict) -> None:
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        arrays[f"{prefix}_w{i}"] = w
        arrays[f"{prefix}_b{i}"] = b


def _mlp_from(prefix: str, meta: dict, arrays: dict) -> MLPParams:
    sizes = tuple(meta["layer_sizes"])
    n = len(sizes) - 1
    return MLPParams(layer_sizes=sizes,
                     weights=[arrays[f"{prefix}_w{i}"] for i in range(n)],
                     biases=[arrays[f"{prefix}_b{i}"] for i in range(n)],
                     activation=meta["activation"],
                     final_activation=meta["final_activation"])


def save_checkpoint(path, model, opt_state: AdamState | None = None,
                    extra: dict | None = None) -> None:
    """Serialize any model family (plus optional optimizer state) atomically."""
    from .container import write_container

    arrays: dict = {}
    meta: dict = {"norm": model.norm_meta.to_dict(), "extra": extra or {}}
    if isinstance(model, DeepONetModel):
        meta["model_type"] = "deeponet"
        meta["branch"] = _mlp_meta(model.branch)
        meta["trunk"] = _mlp_meta(model.trunk)
        _mlp_arrays("branch", model.branch, arrays)
        _mlp_arrays("trunk", model.trunk, arrays)
        arrays["output_bias"] = np.array([model.output_bias])
    elif isinstance(model, FcnBaseline):
        meta["model_type"] = "fcn"
        meta["net"] = _mlp_meta(model.net)
        meta["trained_spec_id"] = model.trained_spec_id
        _mlp_arrays("net", model.net, arrays)
    elif isinstance(model, CnnBaseline):
        meta["model_type"] = "cnn"
        meta["head"] = _mlp_meta(model.head)
        meta["sensor_count"] = model.sensor_count
        meta["stride"] = model.conv1.stride
        arrays["conv1_w"] = model.conv1.weight
        arrays["conv1_b"] = model.conv1.bias
        arrays["conv2_w"] = model.conv2.weight
        arrays["conv2_b"] = model.conv2.bias
        _mlp_arrays("head", model.head, arrays)
    else:
        raise ShapeError(f"unknown model type {type(model)!r}")

    if opt_state is not None:
        meta["opt"] = {"step_count": opt_state.step_count, "lr": opt_state.lr,
                       "beta1": opt_state.beta1, "beta2": opt_state.beta2,
                       "eps_hat": opt_state.eps_hat, "n_slots": len(opt_state.m)}
        for i, (m, v) in enumerate(zip(opt_state.m, opt_state.v)):
            arrays[f"opt_m{i}"] = m
            arrays[f"opt_v{i}"] = v
    else:
        meta["opt"] = None
    write_container(path, CHECKPOINT_KIND, meta, arrays)


def load_checkpoint(path):
    """Load a checkpoint; returns (model, opt_state or None, extra dict)."""
    from .container import read_container

    _, meta, arrays = read_container(path, expected_kind=CHECKPOINT_KIND)
    norm = NormalizationMeta.from_dict(meta["norm"])
    mtype = meta["model_type"]
    if mtype == "deeponet":
        model = DeepONetModel(branch=_mlp_from("branch", meta["branch"], arrays),
                              trunk=_mlp_from("trunk", meta["trunk"], arrays),
                              output_bias=float(arrays["output_bias"][0]),
                              norm_meta=norm)
    elif mtype == "fcn":
        model = FcnBaseline(net=_mlp_from("net", meta["net"], arrays),
                            norm_meta=norm,
                            trained_spec_id=meta["trained_spec_id"])
    elif mtype == "cnn":
        stride = meta["stride"]
        model = CnnBaseline(conv1=Conv1dParams(arrays["conv1_w"], arrays["conv1_b"], stride),
                            conv2=Conv1dParams(arrays["conv2_w"], arrays["conv2_b"], stride),
                            head=_mlp_from("head", meta["head"], arrays),
                            norm_meta=norm, sensor_count=meta["sensor_count"])
    else:
        raise ShapeError(f"unknown checkpoint model type {mtype!r}")

    opt_state = None
    if meta["opt"] is not None:
        o = meta["opt"]
        opt_state = AdamState(m=[arrays[f"opt_m{i}"] for i in range(o["n_slots"])],
                              v=[arrays[f"opt_v{i}"] for i in range(o["n_slots"])],
                              step_count=o["step_count"], lr=o["lr"],
                              beta1=o["beta1"], beta2=o["beta2"], eps_hat=o["eps_hat"])
    return model, opt_state, meta["extra"]


# ----------------------------------------------------------------------
# Composite gradient checking (used by the CLI gradcheck command)
# ----------------------------------------------------------------------

def deeponet_loss_on_params(theta, shapes, branch_template, trunk_template,
                            branch_std, trunk_flat, targets) -> float:
    """Loss as a pure function of the packed parameter vector (for probing)."""
    arrays = unpack_arrays(theta, shapes)
    nb = branch_template.n_layers
    nt = trunk_template.n_layers
    branch = MLPParams(branch_template.layer_sizes, arrays[:nb], arrays[nb:2 * nb],
                       branch_template.activation, branch_template.final_activation)
    off = 2 * nb
    trunk = MLPParams(trunk_template.layer_sizes, arrays[off:off + nt],
                      arrays[off + nt:off + 2 * nt],
                      trunk_template.activation, trunk_template.final_activation)
    loss, _, _, _, _ = _deeponet_loss_and_grads(branch, trunk, float(arrays[-1][0]),
                                                branch_std, trunk_flat, targets)
    return loss


def _probe_packed(loss_fn, theta, grad_flat, rng, n_probes, h):
    worst = 0.0
    idx = rng.choice(len(theta), size=min(n_probes, len(theta)), replace=False)
    for i in idx:
        tp = theta.copy()
        tp[i] += h
        lp = loss_fn(tp)
        tp[i] -= 2 * h
        lm = loss_fn(tp)
        fd = (lp - lm) / (2 * h)
        scale = max(abs(grad_flat[i]), abs(fd), 1e-10)
        worst = max(worst, abs(grad_flat[i] - fd) / scale)
    return worst


def deeponet_gradient_probe(branch, trunk, bias, branch_std, trunk_flat, targets,
                            rng, n_probes: int = 200, h: float = 1e-5):
    """Compare analytic composite gradients with central finite differences.

    Returns the worst relative error over n_probes randomly selected
    parameters (with a small absolute floor to absorb finite-difference noise
    on near-zero entries).
    """
    _, _, gb, gt, dbias = _deeponet_loss_and_grads(branch, trunk, bias,
                                                   branch_std, trunk_flat, targets)
    values = (list(branch.weights) + list(branch.biases)
              + list(trunk.weights) + list(trunk.biases) + [np.array([bias])])
    grads = (list(gb.weight_grads) + list(gb.bias_grads)
             + list(gt.weight_grads) + list(gt.bias_grads) + [np.array([dbias])])
    shapes = [v.shape for v in values]

    def loss_fn(theta):
        return deeponet_loss_on_params(theta, shapes, branch, trunk,
                                       branch_std, trunk_flat, targets)

    return _probe_packed(loss_fn, pack_arrays(values), pack_arrays(grads),
                         rng, n_probes, h)


def _mlp_mse_probe(net: MLPParams, x, targets, rng, n_probes, h):
    """FD check of MSE gradients for a plain dense network."""
    pred, cache = forward(net, x)
    r = pred.ravel() - targets
    bundle = backward(net, cache, (2.0 * r / len(targets))[:, None])
    values = list(net.weights) + list(net.biases)
    grads = list(bundle.weight_grads) + list(bundle.bias_grads)
    shapes = [v.shape for v in values]

    def loss_fn(theta):
        arrays = unpack_arrays(theta, shapes)
        k = net.n_layers
        p = MLPParams(net.layer_sizes, arrays[:k], arrays[k:],
                      net.activation, net.final_activation)
        out, _ = forward(p, x)
        rr = out.ravel() - targets
        return float((rr * rr).mean())

    return _probe_packed(loss_fn, pack_arrays(values), pack_arrays(grads),
                         rng, n_probes, h)


def _cnn_loss_and_grads(model: CnnBaseline, u_std, coords, targets):
    feat, enc_cache = _cnn_encode(model, u_std)
    P = len(targets)
    head_in = np.concatenate([np.broadcast_to(feat, (P, feat.size)), coords], axis=1)
    pred, cache = forward(model.head, head_in)
    r = pred.ravel() - targets
    loss = float((r * r).mean())
    bundle = backward(model.head, cache, (2.0 * r / P)[:, None])
    d_feat = bundle.input_grad[:, : feat.size].sum(axis=0)
    dw1, db1, dw2, db2 = _cnn_encode_backward(model, enc_cache, d_feat)
    grads = [dw1, db1, dw2, db2] + list(bundle.weight_grads) + list(bundle.bias_grads)
    return loss, grads


def _cnn_probe(model: CnnBaseline, u_std, coords, targets, rng, n_probes, h):
    """FD check of the convolutional baseline's full composite gradient."""
    _, grads = _cnn_loss_and_grads(model, u_std, coords, targets)
    values = [model.conv1.weight, model.conv1.bias, model.conv2.weight,
              model.conv2.bias] + list(model.head.weights) + list(model.head.biases)
    shapes = [v.shape for v in values]
    nh = model.head.n_layers

    def loss_fn(theta):
        arrays = unpack_arrays(theta, shapes)
        m = CnnBaseline(conv1=Conv1dParams(arrays[0], arrays[1], model.conv1.stride),
                        conv2=Conv1dParams(arrays[2], arrays[3], model.conv2.stride),
                        head=MLPParams(model.head.layer_sizes, arrays[4:4 + nh],
                                       arrays[4 + nh:], model.head.activation,
                                       model.head.final_activation),
                        norm_meta=model.norm_meta, sensor_count=model.sensor_count)
        loss, _ = _cnn_loss_and_grads(m, u_std, coords, targets)
        return loss

    return _probe_packed(loss_fn, pack_arrays(values), pack_arrays(grads),
                         rng, n_probes, h)


def gradient_check_suite(seed: int = 0, n_probes: int = 200, h: float = 1e-5) -> dict:
    """Finite-difference spot checks of every trainable model family.

    Probes small randomly initialized instances of the operator composite
    (branch + trunk + dot product + loss), the dense baseline, and the
    convolutional baseline; returns the worst relative error per family.
    """
    from .dataset import NormalizationMeta

    rng = substream(seed, "gradcheck")
    m = 24
    norm = NormalizationMeta(target_mean=np.zeros(4), target_std=np.ones(4),
                             branch_mean=np.zeros(m), branch_std=np.ones(m),
                             trunk_lo=np.array([-1.0, -1.0]),
                             trunk_hi=np.array([1.0, 1.0]))
    results = {}

    don = init_deeponet(m, norm, rng, hidden=12, features=10)
    B, k = 3, 7
    results["deeponet"] = deeponet_gradient_probe(
        don.branch, don.trunk, 0.17,
        rng.standard_normal((B, m)),
        rng.uniform(-1, 1, (B * k, 2)),
        rng.standard_normal((B, k)),
        rng, n_probes=n_probes, h=h)

    fcn = init_params(FCN_LAYER_SIZES, "tanh", rng)
    results["fcn"] = _mlp_mse_probe(fcn, rng.uniform(-1, 1, (25, 2)),
                                    rng.standard_normal(25), rng, n_probes, h)

    cnn = init_cnn(m, norm, rng)
    results["cnn"] = _cnn_probe(cnn, rng.standard_normal(m),
                                rng.uniform(-1, 1, (9, 2)),
                                rng.standard_normal(9), rng, n_probes, h)
    return results
