"""The eight hidden-layer activation functions and their property metadata.

Each function is identified by an :class:`ActivationSpec`.  ``act_forward`` and
``act_backward`` work on plain arrays; passing a :class:`~actfn.tensor.Tensor`
to ``act_forward`` records the op on the tape so it can be differentiated.

Piecewise functions (ReLU, ELU, Absolute, MAF) take their derivative at
exactly 0 from the positive branch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NonFiniteError, ShapeError
from .tensor import Tensor, _make

KINDS = ("relu", "elu", "swish", "sigmoid", "tanh", "square", "abs", "maf")

# Table order and display names used in reports.
DISPLAY_NAMES = {
    "relu": "ReLU",
    "elu": "ELU",
    "swish": "Swish",
    "sigmoid": "Sigmoid",
    "tanh": "Tanh",
    "square": "Square",
    "abs": "Absolute",
    "maf": "MAF",
}
NAMED_KINDS = ("relu", "elu", "swish", "sigmoid", "tanh", "square", "abs")
MAF_SWEEP = (-2.0, -1.0, 0.0, 2.0)
KINKED = frozenset({"relu", "abs", "maf", "elu"})


@dataclass(frozen=True)
class ActivationSpec:
    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "elu":
            alpha = 1.0 if self.alpha is None else float(self.alpha)
            if not alpha > 0:
                raise ValueError(f"ELU alpha must be positive, got {alpha}")
            object.__setattr__(self, "alpha", alpha)
        elif self.kind == "maf":
            if self.alpha is None:
                raise ValueError("MAF needs an alpha")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ValueError(f"{self.kind} takes no alpha")

    @property
    def name(self) -> str:
        """Registry spelling, e.g. ``relu`` or ``maf:-1``."""
        if self.kind == "maf" or (self.kind == "elu" and self.alpha != 1.0):
            return f"{self.kind}:{self.alpha:g}"
        return self.kind

    @property
    def display_name(self) -> str:
        if self.kind == "maf":
            return f"MAF({self.alpha:g})"
        return DISPLAY_NAMES[self.kind]

    @property
    def parametric(self) -> bool:
        return self.kind in ("elu", "maf")

    @property
    def kinked(self) -> bool:
        """True if the derivative may jump at 0 (ELU only when alpha != 1)."""
        if self.kind == "elu":
            return self.alpha != 1.0
        return self.kind in ("relu", "abs", "maf")


def parse_activation(name: str) -> ActivationSpec:
    """Resolve a registry name: ``relu, elu, swish, sigmoid, tanh, square, abs, maf:<alpha>``."""
    text = name.strip()
    kind, sep, arg = text.partition(":")
    if kind not in KINDS:
        raise ValueError(f"unknown activation {name!r}")
    if not sep:
        if kind == "maf":
            raise ValueError("maf needs an alpha, e.g. maf:-1")
        return ActivationSpec(kind)
    if kind not in ("maf", "elu"):
        raise ValueError(f"{kind} takes no parameter")
    try:
        alpha = float(arg)
    except ValueError:
        raise ValueError(f"bad alpha in {name!r}") from None
    return ActivationSpec(kind, alpha)


def _values(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    k = spec.kind
    if k == "relu":
        # +0.0 turns -0.0 into 0.0 so relu and maf(0) agree bit for bit
        return np.maximum(x, 0.0) + 0.0
    if k == "sigmoid":
        return expit(x)
    if k == "swish":
        return x * expit(x)
    if k == "tanh":
        return np.tanh(x)
    if k == "elu":
        return np.where(x >= 0, x, spec.alpha * np.expm1(np.minimum(x, 0.0)))
    if k == "abs":
        return np.abs(x) + 0.0
    if k == "square":
        return x * x
    return np.where(x >= 0, x, spec.alpha * x) + 0.0


def derivative(spec: ActivationSpec, x) -> np.ndarray:
    """Closed-form f'(x)."""
    x = np.asarray(x)
    k = spec.kind
    one = np.ones((), dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    if k == "relu":
        return np.where(x >= 0, one, 0 * one)
    if k == "sigmoid":
        s = expit(x)
        return s * (1 - s)
    if k == "swish":
        s = expit(x)
        return s + x * s * (1 - s)
    if k == "tanh":
        t = np.tanh(x)
        return 1 - t * t
    if k == "elu":
        return np.where(x >= 0, one, spec.alpha * np.exp(np.minimum(x, 0.0)))
    if k == "abs":
        return np.where(x >= 0, one, -one)
    if k == "square":
        return 2 * x
    return np.where(x >= 0, one, spec.alpha * one)


def act_forward(spec: ActivationSpec, x):
    """Apply the activation elementwise; Tensor in, Tensor out (taped)."""
    if isinstance(x, Tensor):
        xd = x.data
        if not np.isfinite(xd).all():
            raise NonFiniteError(f"{spec.name}: non-finite input")
        out = _values(spec, xd).astype(xd.dtype, copy=False)
        return _make(out, spec.name, (x,), lambda g: (act_backward(spec, xd, g),))
    xd = np.asarray(x, dtype=float) if np.asarray(x).dtype.kind != "f" else np.asarray(x)
    if not np.isfinite(xd).all():
        raise NonFiniteError(f"{spec.name}: non-finite input")
    return _values(spec, xd)


def act_backward(spec: ActivationSpec, x, upstream) -> np.ndarray:
    """``upstream * f'(x)`` elementwise."""
    x = np.asarray(x)
    upstream = np.asarray(upstream)
    if x.shape != upstream.shape:
        raise ShapeError(f"act_backward: x {x.shape} vs upstream {upstream.shape}")
    return (upstream * derivative(spec, x)).astype(upstream.dtype, copy=False)


@dataclass(frozen=True)
class ActivationProperties:
    parametric: bool
    monotonic: bool
    smooth: bool
    bounded: bool
    symmetric: bool

    FIELDS = ("parametric", "monotonic", "smooth", "bounded", "symmetric")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)


# Reference property table, row for row.
REFERENCE_PROPERTIES = {
    "relu": ActivationProperties(False, True, False, False, False),
    "elu": ActivationProperties(True, True, True, False, False),
    "swish": ActivationProperties(False, False, True, False, False),
    "sigmoid": ActivationProperties(False, True, True, True, False),
    "tanh": ActivationProperties(False, True, True, True, True),
    "square": ActivationProperties(False, False, True, False, True),
    "abs": ActivationProperties(False, True, False, False, True),
}


def expected_properties(spec: ActivationSpec) -> ActivationProperties | None:
    """The tabulated row for a named function; None for MAF, which the table omits."""
    return REFERENCE_PROPERTIES.get(spec.kind)


def symmetric_grid(half_width: float = 20.0, n: int = 10_001) -> np.ndarray:
    """Odd-length grid on [-half_width, half_width], exactly mirror-symmetric and containing 0."""
    half = np.linspace(0.0, half_width, n // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


def check_properties(
    spec: ActivationSpec,
    grid: np.ndarray | None = None,
    *,
    slope_step: float = 1e-7,
    slope_tol: float = 1e-4,
    bound_tol: float = 1e-3,
) -> ActivationProperties:
    """Evaluate each property empirically on a dense symmetric grid.

    * symmetric: ``f(x) == f(-x)`` (even) or ``f(-x) == -f(x)`` (odd), to 1e-12
    * monotonic: never increases or never decreases over the sorted grid
    * bounded: ``max|f|`` on the full grid exceeds that on the inner half by
      no more than ``bound_tol * (1 + inner max)``, i.e. the range saturates
    * smooth: one-sided difference quotients agree to ``slope_tol`` at every
      grid point and at 0
    * parametric: read from the spec (the function takes an alpha)
    """
    if grid is None:
        grid = symmetric_grid()
    x = np.asarray(grid, dtype=np.float64)
    if x.ndim != 1 or x.size < 10_000:
        raise ValueError("grid must be 1-D with at least 10^4 points")
    if not np.all(np.diff(x) > 0):
        raise ValueError("grid must be strictly increasing")
    if not np.array_equal(x, -x[::-1]):
        raise ValueError("grid must be symmetric about 0")
    if x[-1] < 20.0:
        raise ValueError("grid must span at least [-20, 20]")

    f = _values(spec, x)
    f_mirror = f[::-1]  # f(-x)
    tol = 1e-12 * max(1.0, float(np.abs(f).max()))
    even = bool(np.all(np.abs(f - f_mirror) <= tol))
    odd = bool(np.all(np.abs(f + f_mirror) <= tol))

    d = np.diff(f)
    monotonic = bool(np.all(d >= 0) or np.all(d <= 0))

    inner = np.abs(x) <= x[-1] / 2
    inner_max = float(np.abs(f[inner]).max())
    bounded = float(np.abs(f).max()) - inner_max <= bound_tol * (1.0 + inner_max)

    probe = np.union1d(x, [0.0])
    h = slope_step
    right = (_values(spec, probe + h) - _values(spec, probe)) / h
    left = (_values(spec, probe) - _values(spec, probe - h)) / h
    scale = np.maximum(1.0, np.abs(right))
    smooth = bool(np.all(np.abs(right - left) <= slope_tol * scale))

    return ActivationProperties(
        parametric=spec.parametric,
        monotonic=monotonic,
        smooth=smooth,
        bounded=bool(bounded),
        symmetric=even or odd,
    )
