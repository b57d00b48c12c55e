"""Feedforward networks as plain tuples of affine layers.

A network is a nonempty sequence of ``(W, b)`` pairs with ``W`` of shape
``(l_k, l_{k-1})``.  Its realization alternates affine maps with a
componentwise activation; the final layer is affine only.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimMismatch,
    EmptyNetwork,
    ParseError,
    SchemaViolation,
    ShapeMismatch,
    UnsupportedActivation,
    ZeroWidthLayer,
)

FORMAT_TAG = "ann-v1"


class NonFiniteWeightWarning(UserWarning):
    """Issued when a loaded network contains NaN or infinite entries."""


# ---------------------------------------------------------------- activation


@dataclass(frozen=True)
class Activation:
    """Componentwise activation rule.

    ``kind`` is ``"rectifier"``, ``"leaky_rectifier"`` (with ``slope`` in
    (0, 1)) or ``"opaque"`` (with an array-valued ``fn``).  Only the first
    two admit identity networks and hence the sum/Euler constructions.
    """

    kind: str
    slope: float | None = None
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind == "rectifier":
            return
        if self.kind == "leaky_rectifier":
            if self.slope is None or not (0.0 < self.slope < 1.0):
                raise ValueError(f"leaky slope must lie in (0, 1), got {self.slope}")
            return
        if self.kind == "opaque":
            if self.fn is None:
                raise ValueError("opaque activation needs a function")
            return
        raise ValueError(f"unknown activation kind {self.kind!r}")

    @classmethod
    def rectifier(cls) -> Activation:
        return cls("rectifier")

    @classmethod
    def leaky(cls, slope: float) -> Activation:
        return cls("leaky_rectifier", slope=float(slope))

    @classmethod
    def opaque(cls, fn: Callable[[np.ndarray], np.ndarray]) -> Activation:
        return cls("opaque", fn=fn)

    @property
    def admits_identity(self) -> bool:
        return self.kind in ("rectifier", "leaky_rectifier")

    @property
    def hint(self) -> str | None:
        if self.kind == "rectifier":
            return "rectifier"
        if self.kind == "leaky_rectifier":
            return f"leaky_rectifier:{self.slope!r}"
        return None

    @classmethod
    def from_hint(cls, hint: str | None) -> Activation:
        if hint is None or hint == "rectifier":
            return cls.rectifier()
        if hint.startswith("leaky_rectifier:"):
            return cls.leaky(float(hint.split(":", 1)[1]))
        raise UnsupportedActivation(f"cannot reconstruct activation from hint {hint!r}")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "rectifier":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_rectifier":
            return np.where(z > 0.0, z, self.slope * z)
        out = np.asarray(self.fn(z), dtype=np.float64)
        if out.shape != z.shape:
            raise ShapeMismatch("opaque activation must act componentwise on arrays")
        return out


RELU = Activation.rectifier()


# ------------------------------------------------------------------- network


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


class Ann:
    """Immutable network value.  Build with :func:`make_ann`."""

    __slots__ = ("_layers",)

    def __init__(self, layers: tuple[tuple[np.ndarray, np.ndarray], ...]):
        # trusted constructor: callers hand over read-only, validated arrays
        self._layers = layers

    @property
    def layers(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        return self._layers

    @property
    def dims(self) -> tuple[int, ...]:
        return (self._layers[0][0].shape[1],) + tuple(W.shape[0] for W, _ in self._layers)

    @property
    def depth(self) -> int:
        return len(self._layers)

    @property
    def input_dim(self) -> int:
        return self._layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self._layers[-1][0].shape[0]

    def is_finite(self) -> bool:
        return all(np.isfinite(W).all() and np.isfinite(b).all() for W, b in self._layers)

    def __len__(self) -> int:
        return len(self._layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ann):
            return NotImplemented
        if self.dims != other.dims:
            return False
        return all(
            np.array_equal(W1, W2, equal_nan=True) and np.array_equal(b1, b2, equal_nan=True)
            for (W1, b1), (W2, b2) in zip(self._layers, other._layers)
        )

    __hash__ = None

    def bit_identical(self, other: Ann) -> bool:
        """Byte-level equality of every weight and bias (distinguishes -0.0)."""
        if self.dims != other.dims:
            return False
        return all(
            W1.tobytes() == W2.tobytes() and b1.tobytes() == b2.tobytes()
            for (W1, b1), (W2, b2) in zip(self._layers, other._layers)
        )

    def __repr__(self) -> str:
        return f"Ann(dims={self.dims})"


def make_ann(layers: Iterable[tuple[Sequence, Sequence]]) -> Ann:
    """Validate and freeze a list of ``(W, b)`` pairs."""
    frozen = []
    for k, (W, b) in enumerate(layers):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.ndim != 2:
            raise ShapeMismatch(f"layer {k}: weights must be a matrix, got shape {W.shape}")
        if b.ndim != 1:
            raise ShapeMismatch(f"layer {k}: bias must be a vector, got shape {b.shape}")
        if W.shape[0] == 0 or W.shape[1] == 0:
            raise ZeroWidthLayer(f"layer {k}: zero width, weights shape {W.shape}")
        if b.shape[0] != W.shape[0]:
            raise ShapeMismatch(f"layer {k}: bias length {b.shape[0]} != rows {W.shape[0]}")
        if frozen and W.shape[1] != frozen[-1][0].shape[0]:
            raise ShapeMismatch(
                f"layer {k}: {W.shape[1]} columns but previous layer has {frozen[-1][0].shape[0]} rows"
            )
        frozen.append((_frozen(W), _frozen(b)))
    if not frozen:
        raise EmptyNetwork("a network needs at least one layer")
    return Ann(tuple(frozen))


@dataclass(frozen=True)
class Architecture:
    dims: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def hidden_count(self) -> int:
        return self.depth - 1


def architecture(ann: Ann) -> Architecture:
    return Architecture(ann.dims)


def params_from_dims(dims: Sequence[int]) -> int:
    return sum(int(dims[k]) * (int(dims[k - 1]) + 1) for k in range(1, len(dims)))


def param_count(ann: Ann) -> int:
    return params_from_dims(ann.dims)


def norm(x: np.ndarray) -> np.ndarray:
    """Euclidean norm along the last axis."""
    return np.linalg.norm(np.asarray(x, dtype=np.float64), axis=-1)


def realize(ann: Ann, act: Activation, x) -> np.ndarray:
    """Evaluate the network at ``x`` of shape ``(l_0,)`` or ``(m, l_0)``."""
    z = np.asarray(x, dtype=np.float64)
    if z.ndim not in (1, 2) or z.shape[-1] != ann.input_dim:
        raise DimMismatch(f"input of shape {z.shape} does not match input dim {ann.input_dim}")
    last = len(ann.layers) - 1
    for k, (W, b) in enumerate(ann.layers):
        z = z @ W.T + b
        if k < last:
            z = act(z)
    return z


def affine_net(W, b) -> Ann:
    return make_ann([(W, b)])


def identity_net(d: int, act: Activation = RELU) -> Ann:
    """Width-2d network realizing the identity on R^d.

    Uses x = a(x) - a(-x) scaled by 1/(1+slope), which is exact for the
    rectifier (slope 0) and exact up to one rounding for leaky slopes.
    """
    if not act.admits_identity:
        raise UnsupportedActivation(f"{act.kind} activation has no identity network")
    if d < 1:
        raise ValueError("dimension must be positive")
    eye = np.eye(d)
    W1 = np.vstack([eye, -eye])
    W2 = np.hstack([eye, -eye])
    if act.kind == "leaky_rectifier":
        W2 = W2 / (1.0 + act.slope)
    return make_ann([(W1, np.zeros(2 * d)), (W2, np.zeros(d))])


# ------------------------------------------------------------- serialization


def _encode_float(v: float):
    if math.isfinite(v):
        return v
    if math.isnan(v):
        return "NaN"
    return "Infinity" if v > 0 else "-Infinity"


_SPECIAL = {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}


def _decode_float(v, where: str) -> float:
    if isinstance(v, bool):
        raise SchemaViolation(f"{where}: boolean where a number was expected")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str) and v in _SPECIAL:
        return _SPECIAL[v]
    raise SchemaViolation(f"{where}: expected a number, got {v!r}")


def to_document(ann: Ann, activation_hint: str | None = None) -> dict:
    return {
        "format": FORMAT_TAG,
        "activation_hint": activation_hint,
        "layers": [
            {
                "rows": int(W.shape[0]),
                "cols": int(W.shape[1]),
                "weights": [_encode_float(v) for v in W.ravel().tolist()],
                "bias": [_encode_float(v) for v in b.tolist()],
            }
            for W, b in ann.layers
        ],
    }


def save(ann: Ann, activation_hint: str | None = None) -> bytes:
    """Serialize to UTF-8 JSON.  Python's float repr is the shortest
    decimal string that round-trips, so reload is bit-exact."""
    return json.dumps(to_document(ann, activation_hint), allow_nan=False).encode("utf-8")


def from_document(doc) -> tuple[Ann, str | None]:
    if not isinstance(doc, dict):
        raise SchemaViolation("top level must be an object")
    if doc.get("format") != FORMAT_TAG:
        raise SchemaViolation(f"format must be {FORMAT_TAG!r}, got {doc.get('format')!r}")
    hint = doc.get("activation_hint")
    if hint is not None and not isinstance(hint, str):
        raise SchemaViolation("activation_hint must be a string or null")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise SchemaViolation("layers must be a list")
    layers = []
    for k, layer in enumerate(raw_layers):
        if not isinstance(layer, dict):
            raise SchemaViolation(f"layer {k} must be an object")
        for key in ("rows", "cols", "weights", "bias"):
            if key not in layer:
                raise SchemaViolation(f"layer {k} is missing {key!r}")
        rows, cols = layer["rows"], layer["cols"]
        if not (isinstance(rows, int) and isinstance(cols, int)) or isinstance(rows, bool):
            raise SchemaViolation(f"layer {k}: rows/cols must be integers")
        w, b = layer["weights"], layer["bias"]
        if not isinstance(w, list) or not isinstance(b, list):
            raise SchemaViolation(f"layer {k}: weights and bias must be lists")
        if len(w) != rows * cols or len(b) != rows:
            raise SchemaViolation(f"layer {k}: entry counts disagree with rows={rows}, cols={cols}")
        W = np.array([_decode_float(v, f"layer {k} weights") for v in w], dtype=np.float64)
        bias = np.array([_decode_float(v, f"layer {k} bias") for v in b], dtype=np.float64)
        layers.append((W.reshape(rows, cols), bias))
    try:
        ann = make_ann(layers)
    except (ShapeMismatch, ZeroWidthLayer, EmptyNetwork) as exc:
        raise SchemaViolation(str(exc)) from exc
    if not ann.is_finite():
        warnings.warn("network contains NaN or infinite weights", NonFiniteWeightWarning, stacklevel=3)
    return ann, hint


def load_document(data: bytes | str) -> tuple[Ann, str | None]:
    """Parse a serialized network and return it with its activation hint."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"not a JSON document: {exc}") from exc
    return from_document(doc)


def load(data: bytes | str) -> Ann:
    return load_document(data)[0]
