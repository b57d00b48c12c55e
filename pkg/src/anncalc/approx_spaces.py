"""Function families, network-family builders and sampled membership
certificates for approximation spaces with polynomial parameter growth.

Membership is checked on a finite (index, accuracy) grid and a finite
sample of points; reports say so in their ``surrogate`` field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np

from ._parallel import ordered_map
from .ann_core import RELU, Activation, Ann, param_count, realize
from .ann_ops import compose_chain, euler_step_net, linear_combination
from .errors import DimMismatch, MissingLipschitz, NonFiniteNetwork, NonpositiveR, NotEndomorphic

Index = Hashable
UNBOUNDED = math.inf
SURROGATE_LABEL = "sampled surrogate: finite (index, eps) grid and finite point sample"

# relative slack for float rounding in the growth clause
_GROWTH_RTOL = 1e-12


@dataclass(frozen=True)
class WeightKappa:
    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa >= 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")

    def __call__(self, v):
        return 1.0 / (1.0 + np.asarray(v, dtype=np.float64) ** self.kappa)


def weight_value(wk: WeightKappa, v: float) -> float:
    if v < 0:
        raise ValueError("weight is defined for nonnegative arguments")
    return float(wk(v))


# ------------------------------------------------------------------ indexing


@dataclass(frozen=True)
class IndexGrid:
    """Finite index set with its dimension mapping and input/output dims."""

    indices: tuple
    dim_map: Mapping[Index, tuple[int, ...]]
    io_map: Mapping[Index, tuple[int, int]]

    def __post_init__(self):
        if not self.indices:
            raise ValueError("index grid must be nonempty")
        for i in self.indices:
            if i not in self.dim_map or i not in self.io_map:
                raise ValueError(f"index {i!r} missing from dimension or io map")
            if any(int(v) < 1 for v in self.dim_map[i]) or any(int(v) < 1 for v in self.io_map[i]):
                raise ValueError(f"index {i!r} has a nonpositive dimension")

    @classmethod
    def dimensions(cls, d_list: Sequence[int], out_dim: int | None = None) -> IndexGrid:
        """Index d with dimension vector (d,) and maps R^d -> R^d (or R^out_dim)."""
        ds = tuple(int(d) for d in d_list)
        return cls(ds, {d: (d,) for d in ds}, {d: (d, d if out_dim is None else out_dim) for d in ds})

    @property
    def N(self) -> int:
        return len(self.dim_map[self.indices[0]])

    def dims(self, i: Index) -> tuple[int, ...]:
        return tuple(self.dim_map[i])

    def io(self, i: Index) -> tuple[int, int]:
        return tuple(self.io_map[i])


def product_dim_map(g1: IndexGrid, g2: IndexGrid) -> IndexGrid:
    """Grid over pairs (i, j) whose dimension vector concatenates both maps.

    Input/output dims are taken from the first grid.
    """
    idx = tuple((i, j) for i in g1.indices for j in g2.indices)
    return IndexGrid(
        idx,
        {(i, j): g1.dims(i) + g2.dims(j) for i, j in idx},
        {(i, j): g1.io(i) for i, j in idx},
    )


@dataclass(frozen=True)
class FunctionFamily:
    """Indexed family of maps.  ``eval(i, X)`` acts on rows of ``X``."""

    eval: Callable[[Index, np.ndarray], np.ndarray]
    members: Mapping[Index, Callable] | None = None
    name: str = "family"

    @classmethod
    def from_members(cls, members: Mapping[Index, Callable], name: str = "family") -> FunctionFamily:
        members = dict(members)
        return cls(lambda i, x: members[i](x), members, name)

    def member(self, i: Index) -> Callable:
        if self.members is not None:
            return self.members[i]
        return lambda x: self.eval(i, x)

    def __call__(self, i: Index, x):
        return self.eval(i, x)


def compose_families(f: FunctionFamily, g: FunctionFamily) -> FunctionFamily:
    """Indexwise composition: member i is f_i o g_i."""
    return FunctionFamily(lambda i, x: f(i, g(i, x)), name=f"{f.name}*{g.name}")


def product_family(families_by_j: Mapping[Index, FunctionFamily]) -> FunctionFamily:
    """Family over pairs (i, j) whose member (i, j) is member i of family j."""
    fams = dict(families_by_j)
    members = None
    if all(f.members is not None for f in fams.values()):
        members = {(i, j): fam.members[i] for j, fam in fams.items() for i in fam.members}
    return FunctionFamily(lambda ij, x: fams[ij[1]](ij[0], x), members, "product")


# ------------------------------------------------------------------- budgets


@dataclass(frozen=True)
class GrowthBudget:
    """Parameter budget K * eps^{-r0} * prod_l d_l^{r_l}."""

    K: float
    r0: float
    r: tuple[float, ...]

    def value(self, eps: float, dims: Sequence[int]) -> float:
        if len(dims) != len(self.r):
            raise DimMismatch(f"budget has {len(self.r)} dimension exponents, index has {len(dims)}")
        out = self.K * eps ** (-self.r0)
        for d, r in zip(dims, self.r):
            out *= float(d) ** r
        return out


@dataclass(frozen=True)
class GrowthEnvelope:
    """Linear-growth envelope ||net(x)|| <= G(i, eps) * (H(i, eps) + ||x||).

    ``G`` or ``H`` returning :data:`UNBOUNDED` disables the growth clause.
    ``rho`` and ``beta`` declare how H^kappa grows in 1/eps and in the dims.
    """

    G: Callable[[Index, float], float]
    H: Callable[[Index, float], float]
    rho: float = 0.0
    beta: tuple[float, ...] = ()

    def bounded(self, i: Index, eps: float) -> bool:
        return math.isfinite(self.G(i, eps)) and math.isfinite(self.H(i, eps))

    def bound(self, i: Index, eps: float, x_norm):
        return self.G(i, eps) * (self.H(i, eps) + np.asarray(x_norm, dtype=np.float64))


def constant_envelope(G: float, H: float, rho: float = 0.0, beta: tuple[float, ...] = ()) -> GrowthEnvelope:
    return GrowthEnvelope(lambda i, eps: G, lambda i, eps: H, rho, beta)


@dataclass(frozen=True)
class NetworkFamilyBuilder:
    """Pure map (index, eps) -> Ann, memoized per (index, eps).

    ``info`` carries combinator-specific extras (for instance the step-count
    rule of a limit builder).
    """

    build_fn: Callable[[Index, float], Ann]
    activation: Activation = RELU
    envelope: GrowthEnvelope | None = None
    name: str = "builder"
    info: Mapping[str, Any] = field(default_factory=dict, compare=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def build(self, i: Index, eps: float) -> Ann:
        key = (i, float(eps))
        net = self._cache.get(key)
        if net is None:
            net = self.build_fn(i, float(eps))
            self._cache[key] = net
        return net


# --------------------------------------------------------------- sample plan


@lru_cache(maxsize=64)
def _plan_points(radius: float, n_random: int, radial_steps: int, seed: int, dim: int) -> np.ndarray:
    eye = np.eye(dim)
    dirs = [eye, -eye]
    if dim > 1:
        diag = np.ones((1, dim)) / math.sqrt(dim)
        dirs += [diag, -diag]
    dirs = np.vstack(dirs)
    radii = radius * np.arange(1, radial_steps + 1) / radial_steps
    grid = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    rng = np.random.default_rng([seed, dim])
    g = rng.standard_normal((n_random, dim))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    r = radius * rng.uniform(size=(n_random, 1)) ** (1.0 / dim)
    pts = np.vstack([np.zeros((1, dim)), grid, r * g])
    pts.flags.writeable = False
    return pts


@dataclass(frozen=True)
class SamplePlan:
    """Origin, a radial grid along the coordinate axes and the diagonals,
    and ``n_random`` uniform points in the ball of the given radius."""

    radius: float = 10.0
    n_random: int = 512
    seed: int = 0
    radial_steps: int = 8

    def points(self, dim: int) -> np.ndarray:
        return _plan_points(float(self.radius), int(self.n_random), int(self.radial_steps), int(self.seed), int(dim))

    def to_dict(self) -> dict:
        return {
            "kind": "origin+radial-grid+uniform-ball",
            "radius": float(self.radius),
            "n_random": int(self.n_random),
            "radial_steps": int(self.radial_steps),
            "seed": int(self.seed),
        }


# ------------------------------------------------------------- certification


@dataclass(frozen=True)
class CertRow:
    index: Index
    eps: float
    params: int
    budget: float
    weighted_error: float
    growth_ok: bool | None

    @property
    def ok(self) -> bool:
        return self.params <= self.budget and self.weighted_error <= self.eps and self.growth_ok is not False


def _flat_index(i: Index) -> list:
    if isinstance(i, tuple):
        out = []
        for v in i:
            out.extend(_flat_index(v))
        return out
    return [i]


@dataclass(frozen=True)
class CertReport:
    fitted_K: float
    rows: tuple[CertRow, ...]
    passed: bool
    worst_error: float
    sample_plan: dict
    seed: int
    surrogate: str = SURROGATE_LABEL

    def to_dict(self) -> dict:
        return {
            "fitted_K": self.fitted_K,
            "pass": self.passed,
            "worst_error": self.worst_error,
            "surrogate": self.surrogate,
            "rows": [
                {
                    "index": _flat_index(r.index),
                    "eps": r.eps,
                    "params": r.params,
                    "budget": r.budget,
                    "weighted_error": r.weighted_error,
                    "growth_ok": r.growth_ok,
                }
                for r in self.rows
            ],
            "sample_plan": self.sample_plan,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _sort_key(i: Index):
    return tuple(_flat_index(i))


def _family_values(family: FunctionFamily, i: Index, X: np.ndarray, out_dim: int) -> np.ndarray:
    Y = np.asarray(family(i, X), dtype=np.float64)
    if Y.ndim == 1 and out_dim == 1:
        Y = Y[:, None]
    if Y.shape != (X.shape[0], out_dim):
        raise DimMismatch(f"family member {i!r} returned shape {Y.shape}, expected {(X.shape[0], out_dim)}")
    return Y


def fitted_constant(params: int, eps: float, dims: Sequence[int], r0: float, r: Sequence[float]) -> float:
    """Smallest K with params <= K eps^{-r0} prod d^{r} at this grid point."""
    out = params * eps**r0
    for d, rl in zip(dims, r):
        out *= float(d) ** (-rl)
    return out


def check_membership(
    builder: NetworkFamilyBuilder,
    family: FunctionFamily,
    budget: GrowthBudget,
    wk: WeightKappa,
    grid: IndexGrid,
    eps_list: Sequence[float],
    sample_plan: SamplePlan | None = None,
    workers: int | None = None,
) -> CertReport:
    """Sampled check of the three membership clauses at every (index, eps).

    Clauses: params <= budget, max weighted error <= eps, and the growth
    envelope (skipped and reported as ``None`` when absent or unbounded).
    """
    plan = sample_plan or SamplePlan()
    eps_sorted = sorted({float(e) for e in eps_list})
    for e in eps_sorted:
        if not (0.0 < e <= 1.0):
            raise ValueError(f"accuracies must lie in (0, 1], got {e}")
    cells = [(i, e) for i in sorted(grid.indices, key=_sort_key) for e in eps_sorted]

    def run(cell) -> CertRow:
        i, eps = cell
        net = builder.build(i, eps)
        if not net.is_finite():
            raise NonFiniteNetwork(f"network for index {i!r}, eps {eps} has non-finite weights")
        d_in, d_out = grid.io(i)
        if (net.input_dim, net.output_dim) != (d_in, d_out):
            raise DimMismatch(f"builder produced dims {net.dims} for index {i!r}, expected io {(d_in, d_out)}")
        X = plan.points(d_in)
        Z = realize(net, builder.activation, X)
        Y = _family_values(family, i, X, d_out)
        xn = np.linalg.norm(X, axis=1)
        werr = float(np.max(wk(xn) * np.linalg.norm(Y - Z, axis=1)))
        growth = None
        env = builder.envelope
        if env is not None and env.bounded(i, eps):
            lim = env.bound(i, eps, xn)
            growth = bool(np.all(np.linalg.norm(Z, axis=1) <= lim * (1.0 + _GROWTH_RTOL)))
        P = param_count(net)
        return CertRow(i, eps, P, budget.value(eps, grid.dims(i)), werr, growth)

    rows = tuple(ordered_map(run, cells, workers))
    fitted = max(fitted_constant(r.params, r.eps, grid.dims(r.index), budget.r0, budget.r) for r in rows)
    return CertReport(
        fitted_K=float(fitted),
        rows=rows,
        passed=all(r.ok for r in rows),
        worst_error=max(r.weighted_error for r in rows),
        sample_plan=plan.to_dict(),
        seed=int(plan.seed),
    )


# --------------------------------------------------------------- combinators


def linear_family(f: FunctionFamily, g: FunctionFamily, lam: float) -> FunctionFamily:
    return FunctionFamily(lambda i, x: lam * np.asarray(f(i, x)) + np.asarray(g(i, x)), name="linear")


def combinator_linear(bf: NetworkFamilyBuilder, bg: NetworkFamilyBuilder, lam: float,
                      act: Activation | None = None) -> NetworkFamilyBuilder:
    """Builder for lam * f + g: f at eps/(2 max{|lam|,1}), g at eps/2."""
    act = act or bf.activation
    scale = 2.0 * max(abs(lam), 1.0)

    def build(i, eps):
        return linear_combination(lam, bf.build(i, eps / scale), 1.0, bg.build(i, eps / 2.0), act)[0]

    return NetworkFamilyBuilder(build, act, None, "linear", {"f_eps_divisor": scale, "g_eps_divisor": 2.0})


def limit_step_count(D: float, R: float, alpha: Sequence[float], dims: Sequence[int], delta: float) -> int:
    """Smallest n >= 1 with D n^{-R} prod d^{alpha} <= delta.

    Closed form ceil((D / delta * prod d^alpha)^{1/R}), nudged by at most a
    step in either direction to absorb float rounding in the root.
    """
    if R <= 0:
        raise NonpositiveR(f"rate R must be positive, got {R}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    dprod = 1.0
    for d, a in zip(dims, alpha):
        dprod *= float(d) ** a

    def dev(n: int) -> float:
        return D * n ** (-R) * dprod

    q = (D / delta * dprod) ** (1.0 / R) if D > 0 else 0.0
    n = max(1, math.ceil(q))
    while n > 1 and dev(n - 1) <= delta:
        n -= 1
    while dev(n) > delta:
        n += 1
    return n


def combinator_limit(builders_by_n: Callable[[int], NetworkFamilyBuilder], D: float, R: float,
                     alpha: Sequence[float], grid: IndexGrid, wk: WeightKappa | None = None,
                     act: Activation = RELU) -> NetworkFamilyBuilder:
    """Builder for the limit of families whose weighted deviation from the
    target is at most D n^{-R} prod d^alpha: half the accuracy goes to the
    step count, half to approximating the chosen member."""
    if R <= 0:
        raise NonpositiveR(f"rate R must be positive, got {R}")
    alpha = tuple(alpha)

    def step_count(i, delta):
        return limit_step_count(D, R, alpha, grid.dims(i), delta / 2.0)

    def build(i, delta):
        return builders_by_n(step_count(i, delta)).build(i, delta / 2.0)

    return NetworkFamilyBuilder(build, act, None, "limit", {"step_count": step_count, "wk": wk})


@dataclass(frozen=True)
class RateDeclaration:
    """Error rate K eps^R prod d^alpha with parameters K eps^{-r0} prod d^r."""

    K: float
    R: float
    alpha: tuple[float, ...]
    r0: float
    r: tuple[float, ...]


def implied_budget(rate: RateDeclaration) -> GrowthBudget:
    """Budget obtained from a declared (error rate, parameter rate) pair."""
    if rate.R <= 0:
        raise NonpositiveR(f"rate R must be positive, got {rate.R}")
    K, R, r0 = rate.K, rate.R, rate.r0
    K_impl = 2.0 ** (max(r0, 1.0) + r0 / R) * K * max(1.0, K) ** (r0 / R)
    r = tuple(rl + r0 * al / R for rl, al in zip(rate.r, rate.alpha))
    return GrowthBudget(K_impl, r0 / R, r)


def certify_from_rate(builder: NetworkFamilyBuilder, rate: RateDeclaration, family: FunctionFamily,
                      wk: WeightKappa, grid: IndexGrid, eps_list: Sequence[float],
                      sample_plan: SamplePlan | None = None,
                      workers: int | None = None) -> tuple[GrowthBudget, CertReport]:
    """Turn a rate declaration into a membership witness and certify it.

    The witness at accuracy delta is ``builder.build(i, 1/n)`` with n the
    limit step count for D = K.
    """
    budget = implied_budget(rate)

    def member(n):
        return NetworkFamilyBuilder(lambda i, eps: builder.build(i, 1.0 / n), builder.activation)

    witness = combinator_limit(member, rate.K, rate.R, rate.alpha, grid, wk, builder.activation)
    return budget, check_membership(witness, family, budget, wk, grid, eps_list, sample_plan, workers)


def combinator_compose_chain(step_builders: Sequence[NetworkFamilyBuilder], last_builder: NetworkFamilyBuilder,
                             lipschitz_consts: Sequence[float], wk: WeightKappa,
                             envelopes: Sequence[GrowthEnvelope | None] | None = None,
                             act: Activation | None = None) -> NetworkFamilyBuilder:
    """Builder for f^n o ... o f^1 with every factor built at the same eps.

    ``step_builders`` are f^1, ..., f^{n-1} in application order and
    ``last_builder`` is f^n.  ``lipschitz_consts`` are the constants of
    f^2, ..., f^n.  The returned builder's ``info["predicted_multiplier"]``
    gives M(i, eps, |x|) with |net(x) - f(x)| <= eps * M.
    """
    steps = list(step_builders)
    n = len(steps) + 1
    L = [float(v) for v in lipschitz_consts]
    if len(L) != n - 1:
        raise MissingLipschitz(f"need {n - 1} Lipschitz constants for a chain of {n} factors, got {len(L)}")
    envs = list(envelopes) if envelopes is not None else [b.envelope for b in steps]
    if len(envs) != n - 1:
        raise ValueError("one envelope per step builder is required")
    act = act or last_builder.activation
    # tail[k] = prod of L over factors k+2..n (0-based factor k)
    tail = [1.0] * n
    for k in range(n - 2, -1, -1):
        tail[k] = tail[k + 1] * L[k]

    def build(i, eps):
        nets = [last_builder.build(i, eps)] + [b.build(i, eps) for b in reversed(steps)]
        return compose_chain(nets)[0]

    def predicted_multiplier(i, eps, x_norm):
        B = np.asarray(x_norm, dtype=np.float64)
        total = np.zeros_like(B)
        for k in range(n):
            total = total + (1.0 + B**wk.kappa) * tail[k]
            if k < n - 1:
                env = envs[k]
                if env is None or not env.bounded(i, eps):
                    B = np.full_like(B, math.inf)
                else:
                    B = env.bound(i, eps, B)
        return total

    return NetworkFamilyBuilder(build, act, None, "chain", {"predicted_multiplier": predicted_multiplier})


def euler_family(f: FunctionFamily, T: float) -> FunctionFamily:
    """Family over (i, n): x -> x + (T/n) f_i(x)."""
    return FunctionFamily(lambda i_n, x: np.asarray(x) + (T / i_n[1]) * np.asarray(f(i_n[0], x)), name="euler")


def combinator_euler_family(bf: NetworkFamilyBuilder, T: float, c: float,
                            act: Activation | None = None) -> NetworkFamilyBuilder:
    """Builder over (i, n) of Euler-step networks for x + (T/n) f_i(x).

    The f-network is built at eps / max{T, 1}; the envelope becomes
    G = 1 + cT/n, H = H_f at the rescaled accuracy.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    act = act or bf.activation
    scale = max(T, 1.0)

    def build(i_n, eps):
        i, n = i_n
        net = bf.build(i, eps / scale)
        if net.input_dim != net.output_dim:
            raise NotEndomorphic(f"drift network for index {i!r} has dims {net.dims}")
        return euler_step_net(net, T / n, act)

    env_f = bf.envelope

    def H(i_n, eps):
        return UNBOUNDED if env_f is None else env_f.H(i_n[0], eps / scale)

    env = GrowthEnvelope(
        lambda i_n, eps: 1.0 + c * T / i_n[1],
        H,
        env_f.rho if env_f else 0.0,
        env_f.beta if env_f else (),
    )
    return NetworkFamilyBuilder(build, act, env, "euler")
