"""Central finite-difference checks for every activation, layer op and network.

Relative error between autodiff ``a`` and finite difference ``n`` is the worst
elementwise ``|a - n| / max(|a|, |n|, 1)``.  Steps are ``h = 1e-5 * max(1, |x|)``;
for kinked activations the step is capped at ``|x| / 2`` so both probes stay on
one branch, and points with ``|x| < 1e-6`` are skipped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .activations import MAF_SWEEP, NAMED_KINDS, ActivationSpec, act_backward, act_forward
from .architectures import ARCHITECTURES, NetworkConfig, build

SMOOTH_TOL = 1e-6
KINK_TOL = 1e-4
LAYER_TOL = 1e-4
NETWORK_TOL = 1e-3
KINK_EXCLUSION = 1e-6


@dataclass
class CheckResult:
    name: str
    worst_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.worst_error < self.tolerance)


def relative_error(a, n) -> float:
    a, n = np.asarray(a, float), np.asarray(n, float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)))


def step_size(x: np.ndarray, rel: float = 1e-5) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(x))


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, rel: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    hs = step_size(flat, rel)
    for i in range(flat.size):
        orig = flat[i]
        h = hs[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def default_activation_specs() -> list[ActivationSpec]:
    return [ActivationSpec(k) for k in NAMED_KINDS] + [ActivationSpec("maf", a) for a in MAF_SWEEP]


def check_activation(spec: ActivationSpec, n_points: int = 10_000, seed: int = 0) -> CheckResult:
    from .activations import _values

    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 4.0, n_points)
    if spec.kinked:
        x = x[np.abs(x) >= KINK_EXCLUSION]
    h = step_size(x)
    if spec.kinked:
        h = np.minimum(h, np.abs(x) / 2)
    numeric = (_values(spec, x + h) - _values(spec, x - h)) / (2 * h)
    analytic = act_backward(spec, x, np.ones_like(x))
    tol = KINK_TOL if spec.kinked else SMOOTH_TOL
    return CheckResult(f"act:{spec.name}", relative_error(analytic, numeric), tol)


def check_op(name: str, fn: Callable, inputs: list, seed: int = 0, tol: float = LAYER_TOL) -> CheckResult:
    """Compare autodiff and finite differences of ``sum(fn(*inputs) * R)`` for random ``R``."""
    rng = np.random.default_rng(seed)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    with T.no_grad():
        out_shape = fn(*[T.Tensor(x) for x in inputs]).shape
    weights = rng.standard_normal(out_shape)

    def scalar(*arrays):
        with T.no_grad():
            return float(np.sum(fn(*[T.Tensor(a) for a in arrays]).data * weights))

    tensors = [T.Tensor(x.copy(), requires_grad=True) for x in inputs]
    out = fn(*tensors)
    T.backward(T.tensor_sum(out * T.Tensor(weights)) if out.shape != () else out * T.Tensor(weights))
    worst = 0.0
    for i, (x, t) in enumerate(zip(inputs, tensors)):
        def f_i(xi, i=i):
            args = list(inputs)
            args[i] = xi
            return scalar(*args)
        numeric = numerical_gradient(f_i, x)
        analytic = np.zeros_like(x) if t.grad is None else t.grad
        worst = max(worst, relative_error(analytic, numeric))
    return CheckResult(name, worst, tol)


def _layer_checks(rng: np.random.Generator) -> dict:
    r = rng.standard_normal
    x4 = r((2, 2, 4, 6))
    stats = T.RunningStats(r(3) * 0.1, 1.0 + rng.random(3))
    labels = np.array([0, 2, 1, 1])

    def bn_train(x, g, b):
        return T.batch_norm(x, g, b, T.RunningStats.initialized(3), train=True)

    def bn_eval(x, g, b):
        return T.batch_norm(x, g, b, stats.copy(), train=False)

    def drop(x):
        return T.dropout(x, 0.3, True, np.random.default_rng(7))

    return {
        "add": lambda: check_op("add", lambda a, b: a + b, [r((3, 4)), r((4,))]),
        "sub": lambda: check_op("sub", lambda a, b: a - b, [r((3, 4)), r((3, 4))]),
        "mul": lambda: check_op("mul", lambda a, b: a * b, [r((2, 3, 4)), r((1, 4))]),
        "div": lambda: check_op("div", lambda a, b: a / b, [r((3, 4)), 2.0 + rng.random((3, 4))]),
        "conv2d": lambda: check_op(
            "conv2d", lambda x, k, b: T.conv2d(x, k, b), [x4, r((3, 2, 3, 2)), r(3)]
        ),
        "conv2d_strided_padded": lambda: check_op(
            "conv2d_strided_padded", lambda x, k, b: T.conv2d(x, k, b, stride=(2, 1), padding=(1, 2)),
            [x4, r((3, 2, 2, 3)), r(3)],
        ),
        "avg_pool2d": lambda: check_op("avg_pool2d", lambda x: T.avg_pool2d(x, (2, 3)), [x4]),
        "avg_pool2d_overlap": lambda: check_op("avg_pool2d_overlap", lambda x: T.avg_pool2d(x, (2, 2), (1, 2)), [x4]),
        "dense": lambda: check_op("dense", T.dense, [r((4, 5)), r((5, 3)), r(3)]),
        "batch_norm_train": lambda: check_op("batch_norm_train", bn_train, [r((4, 3, 2, 3)), 1.0 + r(3) * 0.1, r(3)]),
        "batch_norm_eval": lambda: check_op("batch_norm_eval", bn_eval, [r((4, 3, 2, 3)), r(3), r(3)]),
        "dropout": lambda: check_op("dropout", drop, [r((5, 6))]),
        "softmax": lambda: check_op("softmax", T.softmax, [r((4, 3))]),
        "softmax_cross_entropy": lambda: check_op(
            "softmax_cross_entropy", lambda z: T.softmax_cross_entropy(z, labels), [r((4, 3))]
        ),
        "concat": lambda: check_op("concat", lambda a, b: T.concat([a, b], axis=1), [r((2, 3, 4)), r((2, 1, 4))]),
        "flatten": lambda: check_op("flatten", T.flatten, [r((2, 3, 4))]),
        "sum": lambda: check_op("sum", T.tensor_sum, [r((3, 4))]),
        "mean": lambda: check_op("mean", T.tensor_mean, [r((3, 4))]),
        "activation_op": lambda: check_op(
            "activation_op", lambda x: act_forward(ActivationSpec("swish"), x), [r((3, 4))]
        ),
    }


def small_network_config(architecture: str, activation: ActivationSpec | None = None, seed: int = 0) -> NetworkConfig:
    return NetworkConfig(
        architecture=architecture, channels=4, timepoints=12, temporal_kernel=3, pool=(1, 3),
        branch_filters=2, deep_filters=3, activation=activation or ActivationSpec("tanh"), seed=seed,
    )


def check_network(architecture: str, activation: ActivationSpec | None = None, seed: int = 0) -> CheckResult:
    """Loss gradient of every parameter of a small network on a 2-trial batch, train mode."""
    net = build(small_network_config(architecture, activation, seed))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 1, net.cfg.channels, net.cfg.timepoints))
    y = np.array([0, 1])

    def loss_value():
        # fresh buffers and a fixed dropout mask make each evaluation identical
        saved = net.state_dict()
        loss = T.softmax_cross_entropy(net.logits(x, True, np.random.default_rng(99)), y)
        net.load_state_dict(saved)
        return loss

    net.zero_grad()
    T.backward(loss_value())
    worst = 0.0
    for _, p in net.named_parameters():
        analytic = p.grad.copy()

        def f(values, p=p):
            old = p.data
            p.data = values
            with T.no_grad():
                v = float(loss_value().data)
            p.data = old
            return v

        worst = max(worst, relative_error(analytic, numerical_gradient(f, p.data)))
    return CheckResult(f"network:{architecture}", worst, NETWORK_TOL)


def all_checks(seed: int = 0) -> dict[str, Callable[[], CheckResult]]:
    checks = {}
    for spec in default_activation_specs():
        checks[f"act:{spec.name}"] = lambda spec=spec: check_activation(spec, seed=seed)
    checks.update(_layer_checks(np.random.default_rng(seed)))
    for arch in ARCHITECTURES:
        checks[f"network:{arch}"] = lambda arch=arch: check_network(arch, seed=seed)
    return checks


def run_gradcheck(ops=None, seed: int = 0) -> list[CheckResult]:
    """Run every check, or those whose name equals or starts with an entry of ``ops``."""
    checks = all_checks(seed)
    if ops:
        unknown = [o for o in ops if not any(n == o or n.startswith(o + ":") or n.startswith(o + "_") for n in checks)]
        if unknown:
            raise KeyError(f"unknown gradcheck scope(s): {unknown}")
        names = [n for n in checks if any(n == o or n.startswith(o + ":") or n.startswith(o + "_") for o in ops)]
    else:
        names = list(checks)
    return [checks[n]() for n in names]
