"""Reference solutions for x' = f(x): explicit Euler, RK4 reference flows,
the flow operator x -> g(X_T), and the global Euler error bound."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import BoundViolated, DimMismatch, NoConvergence

Array = np.ndarray


@dataclass(frozen=True)
class VectorField:
    """Globally Lipschitz drift on R^dim.

    ``eval`` must accept arrays of shape ``(..., dim)``.  ``lipschitz_L`` and
    ``f0_norm`` are declared by the caller.  ``exact_flow(x, T)``, when set,
    gives the analytic solution and is used only for cross-checks.
    """

    dim: int
    eval: Callable[[Array], Array]
    lipschitz_L: float
    f0_norm: float
    name: str = "field"
    exact_flow: Callable[[Array, float], Array] | None = dc_field(default=None, compare=False)

    def __call__(self, x: Array) -> Array:
        return self.eval(x)


def _linear_field(A: Array, name: str, flow) -> VectorField:
    A = np.array(A, dtype=np.float64)
    A.flags.writeable = False
    L = float(np.linalg.norm(A, 2)) if A.size else 0.0
    return VectorField(A.shape[0], lambda x: x @ A.T, L, 0.0, name, flow)


def decay_field(d: int) -> VectorField:
    """f(x) = -x."""
    return _linear_field(-np.eye(d), "decay", lambda x, T: np.exp(-T) * np.asarray(x, dtype=np.float64))


def rotation_generator(d: int) -> Array:
    """Block-diagonal generator of planar rotations in coordinate pairs
    (0,1), (2,3), ...; a trailing odd coordinate is left at rest."""
    A = np.zeros((d, d))
    for k in range(0, d - 1, 2):
        A[k, k + 1] = -1.0
        A[k + 1, k] = 1.0
    return A


def rotation_matrix(d: int, t: float) -> Array:
    R = np.eye(d)
    c, s = math.cos(t), math.sin(t)
    for k in range(0, d - 1, 2):
        R[k : k + 2, k : k + 2] = [[c, -s], [s, c]]
    return R


def rotation_field(d: int) -> VectorField:
    """Unit-speed rotation in each coordinate plane; Lipschitz constant 1
    (0 when d = 1, where the field vanishes)."""
    field = _linear_field(
        rotation_generator(d), "rotation", lambda x, T: np.asarray(x, dtype=np.float64) @ rotation_matrix(d, T).T
    )
    return field


def zero_field(d: int) -> VectorField:
    return VectorField(d, lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)), 0.0, 0.0, "zero",
                       lambda x, T: np.asarray(x, dtype=np.float64).copy())


def spot_check_lipschitz(field: VectorField, rng: np.random.Generator, pairs: int = 256,
                         radius: float = 10.0) -> bool:
    """Randomized check of the declared Lipschitz constant and of ||f(0)||."""
    x = rng.uniform(-radius, radius, size=(pairs, field.dim))
    y = rng.uniform(-radius, radius, size=(pairs, field.dim))
    lhs = np.linalg.norm(field(x) - field(y), axis=-1)
    ok = bool(np.all(lhs <= field.lipschitz_L * np.linalg.norm(x - y, axis=-1) + 1e-9))
    f0 = float(np.linalg.norm(field(np.zeros(field.dim))))
    return ok and abs(f0 - field.f0_norm) <= 1e-9 * max(1.0, f0)


def _as_points(field: VectorField, x0) -> Array:
    x = np.asarray(x0, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != field.dim:
        raise DimMismatch(f"point of shape {x.shape} does not match field dim {field.dim}")
    return x


def euler_scheme(field: VectorField, x0, T: float, n: int) -> Array:
    """Endpoint of n explicit Euler steps of size T/n (batched over rows)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    x = _as_points(field, x0).copy()
    h = T / n
    for _ in range(n):
        x = x + h * field(x)
    return x


def _rk4(field: VectorField, x: Array, T: float, n: int) -> Array:
    h = T / n
    for _ in range(n):
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def reference_flow(field: VectorField, x0, T: float, tol: float = 1e-10,
                   n_start: int = 8, cap: int = 2**20) -> Array:
    """High-accuracy X_T by classical RK4 with global step halving.

    Stops once two successive endpoints differ by less than ``tol`` in
    norm (worst row for batched input).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = _as_points(field, x0)
    if T == 0:
        return x.copy()
    n = n_start
    prev = _rk4(field, x, T, n)
    while True:
        n *= 2
        if n > cap:
            raise NoConvergence(f"reference flow did not reach tol={tol} within {cap} steps")
        cur = _rk4(field, x, T, n)
        if float(np.max(np.linalg.norm(cur - prev, axis=-1))) < tol:
            return cur
        prev = cur


@dataclass(frozen=True)
class FlowProblem:
    """Transport problem u(T, x) = g(X^x_T) with drift ``field`` and
    terminal functional ``terminal`` (arrays ``(..., d)`` to ``(...)``)."""

    field: VectorField
    terminal: Callable[[Array], Array]
    T: float
    g_lipschitz: float
    name: str = "problem"


def flow_operator_eval(problem: FlowProblem, x, tol: float = 1e-10) -> Array:
    return problem.terminal(reference_flow(problem.field, x, problem.T, tol))


def euler_error_bound(L: float, f0_norm: float, T: float, n: int, x_norm) -> float | Array:
    """(1/n) max{L,1} L T^2 (T+1) e^{2LT} max{||f(0)||,1} (1+||x||)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    C = max(L, 1.0) * L * T * T * (T + 1.0) * math.exp(2.0 * L * T) * max(f0_norm, 1.0)
    out = C / n * (1.0 + np.asarray(x_norm, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConvergenceRow:
    x_id: int
    n: int
    measured_error: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class EulerConvergenceReport:
    rows: tuple[ConvergenceRow, ...]
    slope: float
    r_squared: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x_id,n,measured_error,bound,ratio\n")
        for r in self.rows:
            buf.write(f"{r.x_id},{r.n},{r.measured_error!r},{r.bound!r},{r.ratio!r}\n")
        return buf.getvalue()


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through (log x, log y); returns (slope, intercept, R^2)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def verify_euler_convergence(field: VectorField, sample_points, T: float, n_list: Sequence[int],
                             tol: float = 1e-10) -> EulerConvergenceReport:
    """Measure Euler errors against the reference flow, check them against
    :func:`euler_error_bound`, and fit the log-log rate of the worst error."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing with at least two entries")
    pts = _as_points(field, sample_points)
    pts = pts.reshape(-1, field.dim)
    ref = reference_flow(field, pts, T, tol)
    norms = np.linalg.norm(pts, axis=-1)
    rows = []
    worst = []
    for n in n_list:
        err = np.linalg.norm(euler_scheme(field, pts, T, n) - ref, axis=-1)
        bound = euler_error_bound(field.lipschitz_L, field.f0_norm, T, n, norms)
        for i in range(len(pts)):
            if err[i] > bound[i]:
                raise BoundViolated(
                    f"Euler error {err[i]!r} exceeds bound {bound[i]!r} at x_id={i}, n={n}", point=pts[i]
                )
            ratio = float(err[i] / bound[i]) if bound[i] > 0 else 0.0
            rows.append(ConvergenceRow(i, n, float(err[i]), float(bound[i]), ratio))
        worst.append(float(err.max()))
    if min(worst) > 0:
        slope, _, r2 = loglog_fit(n_list, worst)
    else:
        slope, r2 = math.nan, math.nan
    return EulerConvergenceReport(tuple(rows), slope, r2)
