"""ReLU networks for u(T, x) = g(X^x_T), the solution of a first-order
transport equation, built as g-net o E o ... o E with E an Euler-step net.

Accuracy is split between time discretization (which fixes the number of
Euler steps) and network approximation of f and g.  Sweeps over dimension
and accuracy audit the polynomial growth of the parameter count.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._parallel import ordered_map
from .ann_core import RELU, Ann, affine_net, make_ann, param_count, realize
from .ann_ops import compose_chain, euler_step_net
from .approx_spaces import (
    NetworkFamilyBuilder,
    SamplePlan,
    WeightKappa,
    constant_envelope,
)
from .errors import CapExceeded, DegenerateFit, DimMismatch
from .ode_flow import (
    FlowProblem,
    decay_field,
    euler_error_bound,
    flow_operator_eval,
    loglog_fit,
    rotation_field,
)


@dataclass(frozen=True)
class FlowBuildConfig:
    T: float
    eps: float
    kappa: WeightKappa = WeightKappa(1.0)
    c: float = 1.0
    budget_split: tuple[float, float] = (0.5, 0.5)
    n_cap: int = 2**16
    sample_plan: SamplePlan = SamplePlan()
    reference_tol: float = 1e-10

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if not (0.0 < self.eps <= 1.0):
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        a, b = self.budget_split
        if not (0.0 < a < 1.0 and 0.0 < b < 1.0) or abs(a + b - 1.0) > 1e-12:
            raise ValueError("budget_split must be two fractions in (0, 1) summing to 1")
        if self.n_cap < 1:
            raise ValueError("n_cap must be positive")

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "eps": self.eps,
            "kappa": self.kappa.kappa,
            "c": self.c,
            "budget_split": list(self.budget_split),
            "n_cap": self.n_cap,
            "sample_plan": self.sample_plan.to_dict(),
            "reference_tol": self.reference_tol,
        }


# ------------------------------------------------------------ rate exponents


@dataclass(frozen=True)
class FlowRates:
    """Declared growth constants of the f- and g-families.

    r0, r: parameter exponents in 1/eps and in the dims; alpha, beta:
    dimension exponents of the Lipschitz/growth constants and of H^kappa;
    iota: exponents bounding the input dim; rho: eps-growth of H^kappa.
    """

    r0: float
    r: tuple[float, ...]
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    iota: tuple[float, ...]
    rho: float = 0.0


# exact affine drifts and exact g-nets indexed by d: params <= 2 d^2, no eps dependence
CANONICAL_RATES = FlowRates(r0=0.0, r=(2.0,), alpha=(0.0,), beta=(0.0,), iota=(1.0,), rho=0.0)


def declared_rate_exponents(rates: FlowRates, kappa: float) -> tuple[float, ...]:
    """(R_0, R_1, ..., R_N) for the composed flow family."""
    if not rates.rho < 1:
        raise ValueError("rho must be below 1")
    q = 2.0 * rates.r0 / (1.0 - rates.rho)
    R0 = 1.0 + q * (kappa + 2.0)
    Rk = tuple(
        a + 2.0 * r + 8.0 * io_ + q * (a * (kappa + 1.0) + b)
        for r, a, b, io_ in zip(rates.r, rates.alpha, rates.beta, rates.iota)
    )
    return (R0,) + Rk


def relu_flow_exponents(r0: float, r1: float, alpha: float, beta: float, rho: float,
                        kappa: float) -> tuple[float, float]:
    """(eps-exponent, d-exponent) of the parameter bound for ReLU nets on I = N."""
    if not rho * kappa < 1:
        raise ValueError("rho * kappa must be below 1")
    q = 2.0 * r0 / (1.0 - rho * kappa)
    return 1.0 + q * (kappa + 2.0), 8.0 + alpha + 2.0 * r1 + q * (alpha * (kappa + 1.0) + beta * kappa)


# ---------------------------------------------------------- step selection


def _slack(kappa: float) -> float:
    # sup_v (1+v)/(1+v^kappa): exactly 1 for kappa = 1, at most 2 for kappa > 1
    return 1.0 if kappa == 1.0 else 2.0


def choose_step_count(L: float, f0_norm: float, T: float, eps_disc: float, g_lipschitz: float,
                      kappa: float = 1.0, n_cap: int = 2**16) -> int:
    """Smallest n whose Euler error, pushed through g and weighted by
    1/(1+|x|^kappa), is at most ``eps_disc`` for every x in R^d."""
    if eps_disc <= 0:
        raise ValueError("eps_disc must be positive")
    C = g_lipschitz * euler_error_bound(L, f0_norm, T, 1, 0.0) * _slack(kappa)
    if C == 0.0:
        return 1

    def ok(n: int) -> bool:
        return g_lipschitz * euler_error_bound(L, f0_norm, T, n, 0.0) * _slack(kappa) <= eps_disc

    n = max(1, math.ceil(C / eps_disc))
    while n > 1 and ok(n - 1):
        n -= 1
    while not ok(n):
        n += 1
    if n > n_cap:
        raise CapExceeded(f"{n} Euler steps needed, cap is {n_cap}")
    return n


# ------------------------------------------------------------------- errors


def weighted_sup_error(net: Ann, oracle: Callable[[np.ndarray], np.ndarray], wk: WeightKappa,
                       sample_plan: SamplePlan, act=RELU) -> tuple[float, np.ndarray]:
    """Max over the sample plan of |oracle(x) - net(x)| / (1 + |x|^kappa),
    with the maximizing point."""
    X = sample_plan.points(net.input_dim)
    pred = realize(net, act, X)[:, 0]
    w = wk(np.linalg.norm(X, axis=1)) * np.abs(np.asarray(oracle(X)) - pred)
    k = int(np.argmax(w))
    return float(w[k]), X[k].copy()


# ------------------------------------------------------------------- build


@dataclass(frozen=True)
class PointRow:
    x_norm: float
    abs_error: float
    weighted_error: float


@dataclass(frozen=True)
class FlowBuildReport:
    n_chosen: int
    network: Ann
    params: int
    param_bound: int
    rate_exponents: tuple[float, ...] | None
    measured_weighted_error: float
    argmax_point: np.ndarray
    eps_f: float | None
    per_point: tuple[PointRow, ...] = field(repr=False)
    config: FlowBuildConfig | None = None

    @property
    def passed(self) -> bool:
        return self.config is None or self.measured_weighted_error <= self.config.eps

    def to_dict(self) -> dict:
        return {
            "n_chosen": self.n_chosen,
            "params": self.params,
            "param_bound": self.param_bound,
            "dims_depth": self.network.depth,
            "rate_exponents": list(self.rate_exponents) if self.rate_exponents else None,
            "measured_weighted_error": self.measured_weighted_error,
            "argmax_point": self.argmax_point.tolist(),
            "eps_f": self.eps_f,
            "pass": self.passed,
            "config": self.config.to_dict() if self.config else None,
            "per_point": [[p.x_norm, p.abs_error, p.weighted_error] for p in self.per_point],
        }


def build_flow_network(f_builder: NetworkFamilyBuilder, g_builder: NetworkFamilyBuilder, problem: FlowProblem,
                       cfg: FlowBuildConfig, index=None, rates: FlowRates | None = None,
                       measure: bool = True) -> FlowBuildReport:
    """Build and measure a network approximating x -> g(X^x_T)."""
    i = problem.field.dim if index is None else index
    d = problem.field.dim
    act = f_builder.activation
    kappa = cfg.kappa.kappa
    eps_disc = cfg.eps * cfg.budget_split[0]
    eps_net = cfg.eps * cfg.budget_split[1]
    T = cfg.T

    gnet = g_builder.build(i, eps_net / 2.0)
    if gnet.input_dim != d or gnet.output_dim != 1:
        raise DimMismatch(f"g-network has dims {gnet.dims}, expected R^{d} -> R")
    if T == 0:
        n, eps_f, factors = 0, None, [gnet]
    else:
        L = problem.field.lipschitz_L
        n = choose_step_count(L, problem.field.f0_norm, T, eps_disc, problem.g_lipschitz, kappa, cfg.n_cap)
        eps_f = eps_net / (2.0 * n * math.exp(cfg.c * T * (1.0 + kappa)) * max(T, 1.0))
        fnet = f_builder.build(i, eps_f)
        if (fnet.input_dim, fnet.output_dim) != (d, d):
            raise DimMismatch(f"f-network has dims {fnet.dims}, expected R^{d} -> R^{d}")
        E = euler_step_net(fnet, T / n, act)
        factors = [gnet] + [E] * n
    net, comp = compose_chain(factors)

    werr, argmax, rows = math.nan, np.zeros(d), ()
    if measure:
        X = cfg.sample_plan.points(d)
        truth = flow_operator_eval(problem, X, cfg.reference_tol)
        pred = realize(net, act, X)[:, 0]
        xn = np.linalg.norm(X, axis=1)
        ae = np.abs(truth - pred)
        we = cfg.kappa(xn) * ae
        k = int(np.argmax(we))
        werr, argmax = float(we[k]), X[k].copy()
        rows = tuple(PointRow(float(a), float(b), float(c)) for a, b, c in zip(xn, ae, we))

    return FlowBuildReport(
        n_chosen=n,
        network=net,
        params=param_count(net),
        param_bound=comp.upper_bound,
        rate_exponents=declared_rate_exponents(rates, kappa) if rates else None,
        measured_weighted_error=werr,
        argmax_point=argmax,
        eps_f=eps_f,
        per_point=rows,
        config=cfg,
    )


# ------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepRow:
    d: int
    eps: float
    n: int
    params: int
    param_bound: int
    weighted_error: float
    passed: bool


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("d,eps,n,params,param_bound,weighted_error,pass\n")
        for r in self.rows:
            buf.write(
                f"{r.d},{r.eps!r},{r.n},{r.params},{r.param_bound},{r.weighted_error!r},"
                f"{'true' if r.passed else 'false'}\n"
            )
        return buf.getvalue()

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def sweep(f_builder: NetworkFamilyBuilder, g_builder: NetworkFamilyBuilder,
          problem_for: Callable[[int], FlowProblem], d_list: Sequence[int], eps_list: Sequence[float],
          cfg: FlowBuildConfig, workers: int | None = None) -> SweepTable:
    """Build and measure one network per (d, eps) cell; rows sorted by (d, eps)."""
    if not d_list or not eps_list:
        raise ValueError("d_list and eps_list must be nonempty")
    cells = [(int(d), float(e)) for d in sorted(set(d_list)) for e in sorted(set(eps_list))]

    def run(cell):
        d, e = cell
        rep = build_flow_network(f_builder, g_builder, problem_for(d), replace(cfg, eps=e), index=d)
        return SweepRow(d, e, rep.n_chosen, rep.params, rep.param_bound, rep.measured_weighted_error,
                        rep.measured_weighted_error <= e)

    return SweepTable(tuple(ordered_map(run, cells, workers)))


@dataclass(frozen=True)
class ScalingFit:
    """Worst-case exponents over the per-row/per-column log-log fits."""

    eps_exponent: float
    d_exponent: float
    eps_fits: tuple[tuple[int, float, float], ...]
    d_fits: tuple[tuple[float, float, float], ...]

    @property
    def min_r_squared(self) -> float:
        return min(r2 for *_, r2 in self.eps_fits + self.d_fits)


def fit_scaling_exponents(rows: Sequence[SweepRow]) -> ScalingFit:
    """Slopes of log(params) against log(1/eps) at each d and against
    log(d) at each eps."""
    ds = sorted({r.d for r in rows})
    es = sorted({r.eps for r in rows})
    if len(ds) < 3 or len(es) < 3:
        raise DegenerateFit("need at least three distinct d and eps values")
    table = {(r.d, r.eps): r.params for r in rows}
    eps_fits, d_fits = [], []
    for d in ds:
        pts = [(1.0 / e, table[(d, e)]) for e in es if (d, e) in table]
        s, _, r2 = loglog_fit([p[0] for p in pts], [p[1] for p in pts])
        eps_fits.append((d, s, r2))
    for e in es:
        pts = [(d, table[(d, e)]) for d in ds if (d, e) in table]
        s, _, r2 = loglog_fit([p[0] for p in pts], [p[1] for p in pts])
        d_fits.append((e, s, r2))
    return ScalingFit(
        eps_exponent=max(s for _, s, _ in eps_fits),
        d_exponent=max(s for _, s, _ in d_fits),
        eps_fits=tuple(eps_fits),
        d_fits=tuple(d_fits),
    )


# -------------------------------------------------------- canonical problems


def _relu_sum_net(d: int) -> Ann:
    return make_ann([(np.eye(d), np.zeros(d)), (np.ones((1, d)), np.zeros(1))])


def _coord_net(d: int) -> Ann:
    W = np.zeros((1, d))
    W[0, 0] = 1.0
    return affine_net(W, np.zeros(1))


def relu_sum(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0).sum(axis=-1)


def first_coordinate(x: np.ndarray) -> np.ndarray:
    return np.asarray(x)[..., 0]


FIELDS = {"decay": decay_field, "rotation": rotation_field}
TERMINALS = {
    # name: (terminal function, exact net, Lipschitz constant as a function of d)
    "relu-sum-g": (relu_sum, _relu_sum_net, math.sqrt),
    "coord-g": (first_coordinate, _coord_net, lambda d: 1.0),
}
DEFAULT_TERMINAL = {"decay": "relu-sum-g", "rotation": "coord-g"}


@dataclass(frozen=True)
class CanonicalFamily:
    """Exactly representable drift/terminal pair indexed by dimension."""

    field_name: str
    terminal_name: str
    f_builder: NetworkFamilyBuilder
    g_builder: NetworkFamilyBuilder
    rates: FlowRates

    def problem(self, d: int, T: float) -> FlowProblem:
        g, _, lip = TERMINALS[self.terminal_name]
        return FlowProblem(FIELDS[self.field_name](d), g, T, lip(d), f"{self.field_name}+{self.terminal_name}")


def canonical_family(field_name: str, terminal_name: str | None = None) -> CanonicalFamily:
    if field_name not in FIELDS:
        raise KeyError(f"unknown field {field_name!r}; choose from {sorted(FIELDS)}")
    terminal_name = terminal_name or DEFAULT_TERMINAL[field_name]
    if terminal_name not in TERMINALS:
        raise KeyError(f"unknown terminal {terminal_name!r}; choose from {sorted(TERMINALS)}")
    make_field = FIELDS[field_name]
    make_g = TERMINALS[terminal_name][1]

    def build_f(d, eps):
        A = make_field(d).eval(np.eye(d)).T
        return affine_net(A, np.zeros(d))

    # |Ax| <= |x| for both drifts, so G = 1 with any H > 0
    f_b = NetworkFamilyBuilder(build_f, RELU, constant_envelope(1.0, 1.0), field_name)
    g_b = NetworkFamilyBuilder(lambda d, eps: make_g(d), RELU, None, terminal_name)
    return CanonicalFamily(field_name, terminal_name, f_b, g_b, CANONICAL_RATES)
