"""Network algebra: composition, padding, parallelization, sums, Euler steps.

Every construction returns a new immutable :class:`Ann`.  Parameter bounds
are computed and reported next to the result; they are never asserted at
construction time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ann_core import (
    RELU,
    Activation,
    Ann,
    affine_net,
    identity_net,
    param_count,
    params_from_dims,
)
from .errors import DimMismatch, EmptyChain, NotEndomorphic, TargetTooSmall, UnsupportedActivation

# width of the identity networks is 2d, so every bound below uses c = 2
IDENTITY_WIDTH_CONSTANT = 2


def _ro(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _fuse(outer: tuple[np.ndarray, np.ndarray], inner: tuple[np.ndarray, np.ndarray]):
    """Merge affine layer ``inner`` followed by ``outer`` into one layer."""
    W1, b1 = outer
    Wl, bl = inner
    return _ro(W1 @ Wl), _ro(W1 @ bl + b1)


def compose(f: Ann, g: Ann) -> Ann:
    """Network realizing ``f o g``: g's last layer is fused with f's first."""
    if f.input_dim != g.output_dim:
        raise DimMismatch(f"cannot compose: input dim {f.input_dim} != output dim {g.output_dim}")
    fused = _fuse(f.layers[0], g.layers[-1])
    return Ann(g.layers[:-1] + (fused,) + f.layers[1:])


@dataclass(frozen=True)
class CompositionReport:
    """Parameter bookkeeping for ``compose_chain``.

    ``exact_param_count`` is read off the composed dims.  ``identity_param_count``
    is the closed-form four-term expression in the per-factor widths; it
    agrees with the exact count whenever no interior factor has depth 1.
    ``upper_bound`` is ``2 * sum_k P(f_k) P(f_{k+1})`` (0 for a single factor).
    """

    exact_param_count: int
    identity_param_count: int
    upper_bound: int
    dims: tuple[int, ...]


def chain_dims(fs: Sequence[Ann]) -> tuple[int, ...]:
    """Dims of f_1 o ... o f_n from the factor dims alone."""
    out = list(fs[-1].dims[:-1])
    for f in reversed(fs[:-1]):
        out.extend(f.dims[1:-1])
    out.append(fs[0].output_dim)
    return tuple(out)


def chain_param_identity(fs: Sequence[Ann]) -> int:
    """Four-term closed form for the parameter count of a composition chain."""
    total = sum(param_count(f) for f in fs)
    for k in range(len(fs) - 1):
        fk, fk1 = fs[k].dims, fs[k + 1].dims
        total += fk[1] * (fk1[-2] + 1)
        total -= fk[1] * (fk[0] + 1)
        total -= fk1[-1] * (fk1[-2] + 1)
    return total


def chain_upper_bound(fs: Sequence[Ann]) -> int:
    P = [param_count(f) for f in fs]
    return 2 * sum(P[k] * P[k + 1] for k in range(len(P) - 1))


def compose_chain(fs: Sequence[Ann]) -> tuple[Ann, CompositionReport]:
    """Compose ``fs[0] o fs[1] o ... o fs[-1]`` as a left fold of :func:`compose`.

    Runs in time linear in the total number of layers; layer arrays of the
    factors are shared, not copied.
    """
    fs = list(fs)
    if not fs:
        raise EmptyChain("compose_chain needs at least one network")
    for k in range(len(fs) - 1):
        if fs[k].input_dim != fs[k + 1].output_dim:
            raise DimMismatch(
                f"factor {k} expects input dim {fs[k].input_dim}, factor {k + 1} outputs {fs[k + 1].output_dim}"
            )
    layers = deque(fs[0].layers)
    # repeated factors fuse the same operand pairs; share one result array
    fused: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    for g in fs[1:]:
        first, last = layers.popleft(), g.layers[-1]
        key = (id(first), id(last))
        if key not in fused:
            fused[key] = _fuse(first, last)
        layers.appendleft(fused[key])
        layers.extendleft(reversed(g.layers[:-1]))
    net = Ann(tuple(layers))
    dims = chain_dims(fs)
    report = CompositionReport(
        exact_param_count=params_from_dims(dims),
        identity_param_count=chain_param_identity(fs),
        upper_bound=chain_upper_bound(fs),
        dims=dims,
    )
    return net, report


def _need_identity(act: Activation):
    if not act.admits_identity:
        raise UnsupportedActivation(f"{act.kind} activation has no identity network")


def pad_depth(f: Ann, target_depth: int, act: Activation = RELU) -> Ann:
    """Append identity networks after ``f`` until it has ``target_depth`` layers."""
    _need_identity(act)
    if target_depth < f.depth:
        raise TargetTooSmall(f"target depth {target_depth} below current depth {f.depth}")
    missing = target_depth - f.depth
    if missing == 0:
        return f
    ident = identity_net(f.output_dim, act)
    return compose_chain([ident] * missing + [f])[0]


def _block_diag(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[: A.shape[0], : A.shape[1]] = A
    out[A.shape[0] :, A.shape[1] :] = B
    return out


def parallelize(f1: Ann, f2: Ann, act: Activation = RELU) -> Ann:
    """Network mapping ``(x, y)`` to ``(f1(x), f2(y))``.

    The shallower operand is padded with identity networks, then layers are
    stacked block-diagonally.
    """
    _need_identity(act)
    depth = max(f1.depth, f2.depth)
    g1, g2 = pad_depth(f1, depth, act), pad_depth(f2, depth, act)
    layers = tuple(
        (_ro(_block_diag(W1, W2)), _ro(np.concatenate([b1, b2])))
        for (W1, b1), (W2, b2) in zip(g1.layers, g2.layers)
    )
    return Ann(layers)


@dataclass(frozen=True)
class SumConstants:
    c_identity: int
    io_max: int
    declared_bound: int


def sum_bound(f1: Ann, f2: Ann, c: int = IDENTITY_WIDTH_CONSTANT) -> int:
    io_max = max(f1.input_dim, f1.output_dim)
    return 11 * max(1, c * c) * io_max**2 * (param_count(f1) + param_count(f2))


def linear_combination(
    lam1: float, f1: Ann, lam2: float, f2: Ann, act: Activation = RELU
) -> tuple[Ann, SumConstants]:
    """Network realizing ``lam1 * f1 + lam2 * f2``.

    Built as combiner o parallelize(f1, f2) o duplicator, with the two
    single-layer maps fused into their neighbours.
    """
    if f1.input_dim != f2.input_dim or f1.output_dim != f2.output_dim:
        raise DimMismatch(f"summands have dims {f1.dims} and {f2.dims}")
    _need_identity(act)
    d_in, d_out = f1.input_dim, f1.output_dim
    dup = affine_net(np.vstack([np.eye(d_in), np.eye(d_in)]), np.zeros(2 * d_in))
    comb = affine_net(np.hstack([lam1 * np.eye(d_out), lam2 * np.eye(d_out)]), np.zeros(d_out))
    h, _ = compose_chain([comb, parallelize(f1, f2, act), dup])
    consts = SumConstants(
        c_identity=IDENTITY_WIDTH_CONSTANT,
        io_max=max(d_in, d_out),
        declared_bound=sum_bound(f1, f2),
    )
    return h, consts


def euler_step_bound(f: Ann, c: int = IDENTITY_WIDTH_CONSTANT) -> int:
    return 44 * max(1, c**3) * f.input_dim**4 * param_count(f)


def euler_step_net(f: Ann, delta: float, act: Activation = RELU) -> Ann:
    """Network realizing ``x -> x + delta * f(x)``."""
    if f.input_dim != f.output_dim:
        raise NotEndomorphic(f"Euler step needs a map R^d -> R^d, got dims {f.dims}")
    h, _ = linear_combination(1.0, identity_net(f.input_dim, act), float(delta), f, act)
    return h
