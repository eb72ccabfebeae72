"""The mapping network: visual reducer, fusion trunk, semantic layer, and a
frozen class-vector output layer.

Training mode ends in a softmax over seen classes whose weight matrix
columns are the seen classes' class vectors (set at init, not trained by
default).  Inference "pops" that layer: `predict_semantic` returns the
semantic-layer activation, which is then matched against class vectors by
nearest-neighbor search.

All arithmetic is float32 with float64 accumulators for batch statistics;
`Model.astype(np.float64)` yields a double-precision copy for gradient
checking.
"""

from __future__ import annotations

import copy
import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, NumericError
from . import zslf
from .zslf import ClassVectorSet, FeatureTable

BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = momentum * running + (1 - momentum) * batch

CHECKPOINT_FORMAT = "zeroshot-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"  # relu | linear (softmax only via the output layer)
    has_batchnorm: bool = False
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ConfigError(f"layer dims must be positive: {self.in_dim}->{self.out_dim}")
        if self.activation not in ("relu", "linear"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class ModelConfig:
    """Architecture and init seed.  Defaults target 4096-dim visual and
    1024-dim textual inputs; shrink the widths for desk-scale data."""

    n1: int = 4096
    n2: int = 1024
    reducer_widths: tuple = (2048, 1536, 1024)  # last width is the reduced visual dim
    trunk_widths: tuple = (1536, 1024, 768, 512)
    sem_dim: int = 300
    semantic_activation: str = "relu"  # relu per the default recipe; linear optional
    reducer_dropout: float = 0.3
    trunk_dropout: float = 0.2
    reducer_batchnorm: bool = True
    train_output_layer: bool = False  # ablation only; default keeps it frozen
    seed: int = 0

    def __post_init__(self):
        self.reducer_widths = tuple(self.reducer_widths)
        self.trunk_widths = tuple(self.trunk_widths)
        if self.n1 <= 0 or self.n2 <= 0 or self.sem_dim <= 0:
            raise ConfigError("n1, n2 and sem_dim must be positive")
        if any(w <= 0 for w in self.reducer_widths + self.trunk_widths):
            raise ConfigError("all layer widths must be positive")
        if self.semantic_activation not in ("relu", "linear"):
            raise ConfigError("semantic_activation must be relu or linear")

    @property
    def reduced_dim(self) -> int:
        return self.reducer_widths[-1] if self.reducer_widths else self.n1

    def layer_specs(self) -> tuple[list[LayerSpec], list[LayerSpec]]:
        """Reducer and trunk LayerSpecs; the trunk ends with the semantic layer."""
        reducer = []
        d = self.n1
        for w in self.reducer_widths:
            reducer.append(
                LayerSpec(d, w, "relu", self.reducer_batchnorm, self.reducer_dropout)
            )
            d = w
        trunk = []
        d = self.reduced_dim + self.n2
        for w in self.trunk_widths:
            trunk.append(LayerSpec(d, w, "relu", False, self.trunk_dropout))
            d = w
        trunk.append(LayerSpec(d, self.sem_dim, self.semantic_activation, False, 0.0))
        return reducer, trunk


class _Dense:
    """One dense layer: z = aW + b, optional batchnorm, activation, dropout."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator):
        self.spec = spec
        limit = np.sqrt(6.0 / spec.in_dim)  # He-uniform for relu stability
        self.W = rng.uniform(-limit, limit, (spec.in_dim, spec.out_dim)).astype(np.float32)
        self.b = np.zeros(spec.out_dim, dtype=np.float32)
        if spec.has_batchnorm:
            self.gamma = np.ones(spec.out_dim, dtype=np.float32)
            self.beta = np.zeros(spec.out_dim, dtype=np.float32)
            self.running_mean = np.zeros(spec.out_dim, dtype=np.float32)
            self.running_var = np.ones(spec.out_dim, dtype=np.float32)

    @property
    def dtype(self):
        return self.W.dtype

    def params(self):
        out = {"W": self.W, "b": self.b}
        if self.spec.has_batchnorm:
            out.update(gamma=self.gamma, beta=self.beta)
        return out

    def state(self):
        out = self.params()
        if self.spec.has_batchnorm:
            out.update(running_mean=self.running_mean, running_var=self.running_var)
        return out

    def forward(self, a_prev, training, rng):
        dtype = self.dtype
        rec = {"a_prev": a_prev}
        z = a_prev @ self.W + self.b
        rec["z"] = z
        if self.spec.has_batchnorm:
            if training:
                mu = z.mean(axis=0, dtype=np.float64)
                var = z.var(axis=0, dtype=np.float64)
                self.running_mean[...] = (
                    BN_MOMENTUM * self.running_mean + (1.0 - BN_MOMENTUM) * mu
                ).astype(dtype)
                self.running_var[...] = (
                    BN_MOMENTUM * self.running_var + (1.0 - BN_MOMENTUM) * var
                ).astype(dtype)
            else:
                mu = self.running_mean.astype(np.float64)
                var = self.running_var.astype(np.float64)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = ((z - mu) * inv_std).astype(dtype)
            u = self.gamma * xhat + self.beta
            rec.update(xhat=xhat, inv_std=inv_std.astype(dtype))
        else:
            u = z
        rec["u"] = u
        a = np.maximum(u, 0) if self.spec.activation == "relu" else u
        if training and self.spec.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("training-mode forward with dropout requires an rng")
            keep = 1.0 - self.spec.dropout_rate
            mask = (rng.random(a.shape) < keep).astype(dtype) / dtype.type(keep)
            rec["mask"] = mask
            a = a * mask
        rec["out"] = a
        return a, rec

    def backward(self, d_out, rec, training, grads, prefix):
        mask = rec.get("mask")
        d_a = d_out * mask if mask is not None else d_out
        if self.spec.activation == "relu":
            d_u = d_a * (rec["u"] > 0)
        else:
            d_u = d_a
        if self.spec.has_batchnorm:
            grads[prefix + ".gamma"] = (d_u * rec["xhat"]).sum(axis=0)
            grads[prefix + ".beta"] = d_u.sum(axis=0)
            d_xhat = d_u * self.gamma
            if training:
                # Batch-statistics backward; mu/var both depend on z.
                B = d_u.shape[0]
                xhat, inv_std = rec["xhat"], rec["inv_std"]
                d_z = (
                    inv_std
                    / B
                    * (B * d_xhat - d_xhat.sum(axis=0) - xhat * (d_xhat * xhat).sum(axis=0))
                )
            else:
                d_z = d_xhat * rec["inv_std"]
        else:
            d_z = d_u
        grads[prefix + ".W"] = rec["a_prev"].T @ d_z
        grads[prefix + ".b"] = d_z.sum(axis=0)
        return d_z @ self.W.T


@dataclass
class ForwardTrace:
    """Everything backward needs about one forward pass."""

    training: bool
    x: np.ndarray
    t: np.ndarray
    layer_recs: list = field(default_factory=list)
    reduced: np.ndarray = None
    semantic: np.ndarray = None
    logits: np.ndarray = None
    probs: np.ndarray = None


class Model:
    """Layered network plus the frozen class-vector output matrix."""

    def __init__(self, config: ModelConfig, label_order: list[str], output_weights: np.ndarray):
        self.config = config
        self.label_order = list(label_order)
        if output_weights.shape != (config.sem_dim, len(label_order)):
            raise ConfigError(
                f"output_weights shape {output_weights.shape} != "
                f"({config.sem_dim}, {len(label_order)})"
            )
        self.output_weights = np.ascontiguousarray(output_weights, dtype=np.float32)
        reducer_specs, trunk_specs = config.layer_specs()
        self.n_reducer = len(reducer_specs)
        rng = np.random.Generator(np.random.PCG64(config.seed))
        self.layers = [_Dense(spec, rng) for spec in reducer_specs + trunk_specs]

    # --- structure -------------------------------------------------------

    @property
    def reducer_layers(self):
        return self.layers[: self.n_reducer]

    @property
    def trunk_layers(self):
        return self.layers[self.n_reducer :]

    def _layer_name(self, i: int) -> str:
        if i < self.n_reducer:
            return f"reducer{i}"
        return f"trunk{i - self.n_reducer}"

    def named_tensors(self, trainable_only=False):
        """Ordered (name, array) pairs; arrays are the live parameters."""
        out = []
        for i, layer in enumerate(self.layers):
            name = self._layer_name(i)
            source = layer.params() if trainable_only else layer.state()
            for pname, arr in source.items():
                out.append((f"{name}.{pname}", arr))
        if not trainable_only or self.config.train_output_layer:
            out.append(("output.W", self.output_weights))
        return out

    def trainable_tensors(self):
        return self.named_tensors(trainable_only=True)

    def num_parameters(self) -> int:
        return sum(a.size for _, a in self.trainable_tensors())

    def astype(self, dtype) -> "Model":
        """Deep copy with every float tensor cast to `dtype` (for grad checks)."""
        clone = copy.deepcopy(self)
        for layer in clone.layers:
            for attr in ("W", "b", "gamma", "beta", "running_mean", "running_var"):
                if hasattr(layer, attr):
                    setattr(layer, attr, getattr(layer, attr).astype(dtype))
        clone.output_weights = clone.output_weights.astype(dtype)
        return clone

    @property
    def dtype(self):
        return self.layers[0].dtype if self.layers else self.output_weights.dtype

    # --- forward ---------------------------------------------------------

    def _as_batch(self, arr, dim, what):
        arr = np.asarray(arr, dtype=self.dtype)
        squeeze = arr.ndim == 1
        if squeeze:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != dim:
            raise ValueError(f"{what} has shape {arr.shape}, expected (*, {dim})")
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite values in {what}")
        return arr, squeeze

    def class_probs_from_semantic(self, semantic):
        """softmax(output_weights^T . semantic); the popped layer's own math."""
        logits = semantic @ self.output_weights
        return _softmax(logits), logits


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def backward_targets_check(trace: ForwardTrace, targets) -> np.ndarray:
    """Validate class targets against a trace before backprop."""
    if trace.probs is None:
        raise RuntimeError("trace carries no forward outputs")
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    batch, n_classes = trace.probs.shape
    if targets.shape != (batch,):
        raise ValueError(f"expected {batch} targets, got shape {targets.shape}")
    if len(targets) and (targets.min() < 0 or targets.max() >= n_classes):
        raise ValueError(f"targets outside [0, {n_classes})")
    return targets


def init_model(cv_seen: ClassVectorSet, label_order: list[str], config: ModelConfig) -> Model:
    """Build a model whose output-layer columns are the seen class vectors."""
    if len(set(label_order)) != len(label_order):
        raise ValueError("label_order contains duplicates")
    missing = [l for l in label_order if l not in cv_seen]
    if missing:
        raise ValueError(f"labels without class vectors: {missing}")
    if cv_seen.dim != config.sem_dim:
        raise ConfigError(
            f"class vectors are {cv_seen.dim}-dim but config.sem_dim={config.sem_dim}"
        )
    output_weights = cv_seen.matrix(label_order).T  # (sem_dim, C_seen)
    return Model(config, label_order, output_weights)


def forward(model: Model, x, t, training: bool = False, rng=None):
    """Full forward pass; returns (probs, trace).

    `x` and `t` may be single vectors or (B, dim) batches.  Inference mode
    (training=False) is a pure function of (model, inputs): dropout is
    identity and batchnorm uses running statistics.
    """
    x, squeeze_x = model._as_batch(x, model.config.n1, "visual input")
    t, squeeze_t = model._as_batch(t, model.config.n2, "text input")
    if x.shape[0] != t.shape[0]:
        raise ValueError(f"batch mismatch: {x.shape[0]} visual vs {t.shape[0]} text rows")

    trace = ForwardTrace(training=training, x=x, t=t)
    a = x
    for layer in model.reducer_layers:
        a, rec = layer.forward(a, training, rng)
        trace.layer_recs.append(rec)
    trace.reduced = a
    a = np.concatenate([a, t], axis=1)
    for layer in model.trunk_layers:
        a, rec = layer.forward(a, training, rng)
        trace.layer_recs.append(rec)
    trace.semantic = a
    trace.probs, trace.logits = model.class_probs_from_semantic(a)
    probs = trace.probs[0] if (squeeze_x and squeeze_t) else trace.probs
    return probs, trace


def reduce_visual(model: Model, x, training: bool = False, rng=None):
    """Run only the visual reducer: n1 -> reduced_dim."""
    x, squeeze = model._as_batch(x, model.config.n1, "visual input")
    a = x
    for layer in model.reducer_layers:
        a, _ = layer.forward(a, training, rng)
    return a[0] if squeeze else a


def predict_semantic(model: Model, x, t):
    """Inference-mode semantic-layer activation (the popped-layer output)."""
    x_arr = np.asarray(x)
    _, trace = forward(model, x, t, training=False)
    return trace.semantic[0] if x_arr.ndim == 1 else trace.semantic


# --- checkpoint archive ---------------------------------------------------

_FIXED_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _zip_write(zf, name, payload):
    info = zipfile.ZipInfo(name, date_time=_FIXED_ZIP_DATE)
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_model(model: Model, path) -> None:
    """Write the checkpoint archive: config JSON + one ZSLF file per tensor.

    Byte-deterministic: fixed zip metadata, stored (uncompressed) entries,
    sorted tensor order.
    """
    tensors = dict(model.named_tensors())
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "label_order": model.label_order,
        "tensors": {name: list(arr.shape) for name, arr in tensors.items()},
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        _zip_write(zf, "config.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
        for name in sorted(tensors):
            flat = np.ascontiguousarray(tensors[name], dtype=np.float32).reshape(1, -1)
            table = FeatureTable(dim=flat.shape[1], ids=[name], vectors=flat)
            _zip_write(zf, f"tensors/{name}.zslf", zslf.to_bytes(table))


def load_model(path) -> Model:
    """Rebuild a model from a checkpoint archive, validating every shape."""
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, FileNotFoundError) as exc:
        raise FormatError(f"{path}: not a checkpoint archive ({exc})") from exc
    with zf:
        try:
            meta = json.loads(zf.read("config.json"))
        except KeyError:
            raise FormatError(f"{path}: missing config.json")
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unrecognized checkpoint format/version")
        config = ModelConfig(**meta["config"])
        model = Model(
            config,
            meta["label_order"],
            np.zeros((config.sem_dim, len(meta["label_order"])), np.float32),
        )
        live = dict(model.named_tensors())
        if set(live) != set(meta["tensors"]):
            raise ConfigError(
                f"{path}: tensor set mismatch between archive config and architecture"
            )
        for name, arr in live.items():
            shape = tuple(meta["tensors"][name])
            if arr.shape != shape:
                raise ConfigError(f"{path}: tensor {name} shape {shape} != {arr.shape}")
            try:
                payload = zf.read(f"tensors/{name}.zslf")
            except KeyError:
                raise ConfigError(f"{path}: archive is missing tensor {name}")
            table = zslf.from_bytes(payload, path=f"{path}:{name}")
            if table.ids != [name] or table.dim != arr.size:
                raise ConfigError(f"{path}: tensor payload mismatch for {name}")
            arr[...] = table.vectors.reshape(shape)
    return model
