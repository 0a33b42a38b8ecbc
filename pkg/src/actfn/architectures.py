"""Desk-scale builders for fNIRSNet, AbsoluteNet, MDNN and ShallowConvNet.

Each builder emits a declarative layer graph (a list of :class:`LayerSpec`,
where a ``concat`` spec holds two branch sub-lists) and instantiates it into a
:class:`Network`.  Every hidden activation slot uses the single
``NetworkConfig.activation``; the head is dense followed by softmax.

Kernel sizes, filter counts, pooling and dropout are declared defaults
kept small enough to train on a CPU.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import tensor as T
from .activations import ActivationSpec, act_forward
from .errors import ConfigError

ARCHITECTURES = ("fnirsnet", "absolutenet", "mdnn", "shallowconvnet")
DISPLAY_NAMES = {
    "fnirsnet": "fNIRSNet",
    "absolutenet": "AbsoluteNet",
    "mdnn": "MDNN",
    "shallowconvnet": "ShallowConvNet",
}

# Defaults per architecture: (branch/spatial filters, deep filters, batch norm)
_DEFAULTS = {
    "fnirsnet": (8, 16, False),
    "absolutenet": (6, 12, True),
    "mdnn": (8, 16, False),
    "shallowconvnet": (8, 8, True),
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("conv", "batchnorm", "activation", "avgpool", "dropout", "dense", "flatten", "concat")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")


@dataclass(frozen=True)
class NetworkConfig:
    architecture: str = "fnirsnet"
    channels: int = 28
    timepoints: int = 150
    activation: ActivationSpec = ActivationSpec("relu")
    dropout: float = 0.5
    n_classes: int = 2
    temporal_kernel: int = 11
    branch_filters: int | None = None
    deep_filters: int | None = None
    pool: tuple = (1, 5)
    batch_norm: bool | None = None
    seed: int = 0
    dtype: str = "float64"

    def resolved(self) -> "NetworkConfig":
        """Fill architecture-dependent defaults."""
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        bf, df, bn = _DEFAULTS[self.architecture]
        return replace(
            self,
            branch_filters=bf if self.branch_filters is None else self.branch_filters,
            deep_filters=df if self.deep_filters is None else self.deep_filters,
            batch_norm=bn if self.batch_norm is None else self.batch_norm,
        )


def _conv(in_ch, out_ch, kh, kw, pad=(0, 0)):
    return LayerSpec("conv", {"in": in_ch, "out": out_ch, "kernel": (kh, kw), "padding": pad})


def _conv_block(cfg, in_ch, out_ch, kh, kw, pad=(0, 0)):
    layers = [_conv(in_ch, out_ch, kh, kw, pad)]
    if cfg.batch_norm:
        layers.append(LayerSpec("batchnorm", {"channels": out_ch}))
    layers.append(LayerSpec("activation"))
    return layers


def _head(cfg, features: int, width: int):
    ph, pw = cfg.pool
    out_w = (width - pw) // pw + 1
    return [
        LayerSpec("avgpool", {"window": (ph, pw)}),
        LayerSpec("dropout", {"rate": cfg.dropout}),
        LayerSpec("flatten"),
        LayerSpec("dense", {"in": features * out_w, "out": cfg.n_classes}),
    ]


def _check_input(cfg):
    if cfg.channels < 1 or cfg.timepoints < cfg.temporal_kernel:
        raise ConfigError("input too small for the temporal kernel")
    if cfg.timepoints < cfg.pool[1]:
        raise ConfigError("input narrower than the pooling window")


def _dual_branch_graph(cfg):
    c, k = cfg.channels, cfg.temporal_kernel
    bf, df = cfg.branch_filters, cfg.deep_filters
    same = (0, k // 2)
    branch_a = _conv_block(cfg, 1, bf, c, 1) + _conv_block(cfg, bf, bf, 1, k, same)
    branch_b = _conv_block(cfg, 1, bf, 1, k, same) + _conv_block(cfg, bf, bf, c, 1)
    return (
        [LayerSpec("concat", {"branches": (branch_a, branch_b), "axis": 1})]
        + _conv_block(cfg, 2 * bf, df, 1, k, same)
        + _head(cfg, df, cfg.timepoints)
    )


def fnirsnet_graph(cfg: NetworkConfig) -> list:
    return _dual_branch_graph(cfg)


def absolutenet_graph(cfg: NetworkConfig) -> list:
    return _dual_branch_graph(cfg)


def mdnn_graph(cfg: NetworkConfig) -> list:
    c, k = cfg.channels, cfg.temporal_kernel
    sf, df = cfg.branch_filters, cfg.deep_filters
    same = (0, k // 2)
    return (
        _conv_block(cfg, 1, sf, c, 1)
        + _conv_block(cfg, sf, sf, 1, 1)
        + _conv_block(cfg, sf, df, 1, k, same)
        + _conv_block(cfg, df, df, 1, k, same)
        + _head(cfg, df, cfg.timepoints)
    )


def shallowconvnet_graph(cfg: NetworkConfig) -> list:
    c, k = cfg.channels, cfg.temporal_kernel
    f = cfg.branch_filters
    layers = [_conv(1, f, 1, k, (0, k // 2)), _conv(f, f, c, 1)]
    if cfg.batch_norm:
        layers.append(LayerSpec("batchnorm", {"channels": f}))
    layers.append(LayerSpec("activation"))
    return layers + _head(cfg, f, cfg.timepoints)


_GRAPHS = {
    "fnirsnet": fnirsnet_graph,
    "absolutenet": absolutenet_graph,
    "mdnn": mdnn_graph,
    "shallowconvnet": shallowconvnet_graph,
}


def iter_specs(graph):
    """Depth-first walk over a layer graph, descending into concat branches."""
    for spec in graph:
        yield spec
        if spec.kind == "concat":
            for branch in spec.params["branches"]:
                yield from iter_specs(branch)


def count_parameters(graph) -> int:
    """Closed-form trainable parameter count of a layer graph."""
    total = 0
    for spec in iter_specs(graph):
        p = spec.params
        if spec.kind == "conv":
            kh, kw = p["kernel"]
            total += p["out"] * p["in"] * kh * kw + p["out"]
        elif spec.kind == "dense":
            total += p["in"] * p["out"] + p["out"]
        elif spec.kind == "batchnorm":
            total += 2 * p["channels"]
    return total


class Network:
    """An instantiated layer graph with parameters and batch-norm buffers."""

    def __init__(self, cfg: NetworkConfig, graph: list):
        self.cfg = cfg
        self.graph = graph
        self.activation = cfg.activation
        self.dtype = np.dtype(cfg.dtype)
        self._params: list[tuple[str, T.Tensor]] = []
        self._buffers: list[tuple[str, T.RunningStats]] = []
        rng = np.random.default_rng(cfg.seed)
        self._program = self._compile(graph, rng, prefix="")

    # -- construction -------------------------------------------------
    def _new_param(self, name, value):
        t = T.Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True)
        self._params.append((name, t))
        return t

    def _compile(self, graph, rng, prefix) -> list:
        steps = []
        for i, spec in enumerate(graph):
            name = f"{prefix}{i}.{spec.kind}"
            steps.append(self._compile_one(spec, rng, name))
        return steps

    def _compile_one(self, spec, rng, name) -> Callable:
        p = spec.params
        if spec.kind == "conv":
            kh, kw = p["kernel"]
            fan_in = p["in"] * kh * kw
            bound = np.sqrt(6.0 / fan_in)
            w = self._new_param(name + ".weight", rng.uniform(-bound, bound, (p["out"], p["in"], kh, kw)))
            b = self._new_param(name + ".bias", np.zeros(p["out"]))
            pad = p["padding"]
            return lambda x, train, r: T.conv2d(x, w, b, padding=pad)
        if spec.kind == "dense":
            bound = np.sqrt(6.0 / p["in"])
            w = self._new_param(name + ".weight", rng.uniform(-bound, bound, (p["in"], p["out"])))
            b = self._new_param(name + ".bias", np.zeros(p["out"]))
            return lambda x, train, r: T.dense(x, w, b)
        if spec.kind == "batchnorm":
            gamma = self._new_param(name + ".gamma", np.ones(p["channels"]))
            beta = self._new_param(name + ".beta", np.zeros(p["channels"]))
            stats = T.RunningStats.initialized(p["channels"], self.dtype)
            self._buffers.append((name, stats))
            return lambda x, train, r: T.batch_norm(x, gamma, beta, stats, train)
        if spec.kind == "activation":
            act = self.activation
            return lambda x, train, r: act_forward(act, x)
        if spec.kind == "avgpool":
            window = p["window"]
            return lambda x, train, r: T.avg_pool2d(x, window)
        if spec.kind == "dropout":
            rate = p["rate"]
            return lambda x, train, r: T.dropout(x, rate, train, r)
        if spec.kind == "flatten":
            return lambda x, train, r: T.flatten(x)
        # concat
        branches = [
            self._compile(sub, rng, prefix=f"{name}.b{j}.") for j, sub in enumerate(p["branches"])
        ]
        axis = p.get("axis", 1)

        def run_branches(x, train, r):
            outs = []
            for prog in branches:
                h = x
                for step in prog:
                    h = step(h, train, r)
                outs.append(h)
            return T.concat(outs, axis=axis)

        return run_branches

    # -- inference ----------------------------------------------------
    def logits(self, x, train: bool = False, rng: np.random.Generator | None = None) -> T.Tensor:
        if not isinstance(x, T.Tensor):
            x = T.Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim == 3:
            x = T.Tensor(x.data[:, None])
        expected = (1, self.cfg.channels, self.cfg.timepoints)
        if x.shape[1:] != expected:
            raise ValueError(f"expected input (N, {expected}), got {x.shape}")
        h = x
        for step in self._program:
            h = step(h, train, rng)
        return h

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None) -> T.Tensor:
        """Class probabilities, shape (N, n_classes)."""
        return T.softmax(self.logits(x, train, rng))

    __call__ = forward

    # -- parameters ---------------------------------------------------
    def parameters(self) -> list[T.Tensor]:
        return [t for _, t in self._params]

    def named_parameters(self) -> list[tuple[str, T.Tensor]]:
        return list(self._params)

    def parameter_count(self) -> int:
        return int(sum(t.size for _, t in self._params))

    def zero_grad(self) -> None:
        for _, t in self._params:
            t.grad = None

    def state_dict(self) -> dict:
        """Deep copy of parameters and running statistics."""
        state = {name: t.data.copy() for name, t in self._params}
        for name, stats in self._buffers:
            state[name + ".running_mean"] = stats.mean.copy()
            state[name + ".running_var"] = stats.var.copy()
        return state

    def load_state_dict(self, state: dict) -> None:
        for name, t in self._params:
            t.data = state[name].copy()
        for name, stats in self._buffers:
            stats.mean = state[name + ".running_mean"].copy()
            stats.var = state[name + ".running_var"].copy()

    # -- introspection ------------------------------------------------
    def layer_specs(self) -> list[LayerSpec]:
        return list(iter_specs(self.graph))

    def activation_specs(self) -> list[ActivationSpec]:
        return [self.activation for s in self.layer_specs() if s.kind == "activation"]

    def conv_count(self) -> int:
        return sum(1 for s in self.layer_specs() if s.kind == "conv")


def build(cfg: NetworkConfig) -> Network:
    cfg = cfg.resolved()
    _check_input(cfg)
    return Network(cfg, _GRAPHS[cfg.architecture](cfg))


def _builder(arch):
    def build_arch(cfg: NetworkConfig | None = None, **overrides) -> Network:
        cfg = replace(cfg or NetworkConfig(), architecture=arch, **overrides)
        return build(cfg)

    build_arch.__name__ = f"build_{arch}"
    build_arch.__doc__ = f"Build {DISPLAY_NAMES[arch]} from ``cfg`` (architecture field is overridden)."
    return build_arch


build_fnirsnet = _builder("fnirsnet")
build_absolutenet = _builder("absolutenet")
build_mdnn = _builder("mdnn")
build_shallowconvnet = _builder("shallowconvnet")
