import numpy as np
import pytest

from anncalc.ann_core import make_ann


def random_ann(rng, depth, d_in, d_out, max_width=8, integer=False, scale=1.0):
    """Random network with the given depth and io dims; hidden widths in 1..max_width."""
    dims = [d_in] + [int(rng.integers(1, max_width + 1)) for _ in range(depth - 1)] + [d_out]
    layers = []
    for k in range(1, len(dims)):
        shape = (dims[k], dims[k - 1])
        if integer:
            W = rng.integers(-3, 4, size=shape).astype(float)
            b = rng.integers(-3, 4, size=dims[k]).astype(float)
        else:
            W = scale * rng.standard_normal(shape)
            b = scale * rng.standard_normal(dims[k])
        layers.append((W, b))
    return make_ann(layers)


def random_chain(rng, n, max_depth=5, max_width=8, min_interior_depth=1, integer=False):
    """n composable networks f_1, ..., f_n (f_1 applied last)."""
    io = [int(rng.integers(1, max_width + 1)) for _ in range(n + 1)]
    nets = []
    for k in range(n):
        lo = min_interior_depth if 0 < k < n - 1 else 1
        depth = int(rng.integers(lo, max_depth + 1))
        # f_k maps R^{io[k+1]} -> R^{io[k]}
        nets.append(random_ann(rng, depth, io[k + 1], io[k], max_width, integer))
    return nets


def nested_realize(nets, act, x):
    from anncalc.ann_core import realize

    for f in reversed(nets):
        x = realize(f, act, x)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(42)
