"""Energy checks, empirical rates and the fixed-point form of FoRB.

The energy used throughout is

    Phi_k = ||x_k - x*||^2 + 2 lam_{k-1} <B(x_k) - B(x_{k-1}), x* - x_k>
            + 0.5 ||x_k - x_{k-1}||^2

which, for monotone ``B`` with Lipschitz constant ``L`` and steps below
``1/(2L)``, satisfies ``Phi_{k+1} + eps ||x_{k+1} - x_k||^2 <= Phi_k`` with
``eps = 1/2 - lam L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DiagnosticUnavailable, FitError, ParameterError, ShapeError
from .operators import SplitInclusion, as_vector
from .splitting import SolverConfig, SolverRun, StepPlan, run_forb

__all__ = [
    "EnergyReport",
    "RateEstimate",
    "SLACK_TOL",
    "energy_forb",
    "energy_strong",
    "strong_constants",
    "fit_rate",
    "estimate_rate",
    "metric_series",
    "growth_factors",
    "fixed_point_iterates",
    "fixed_point_form_check",
    "lprime",
    "inertial_lprime",
]

SLACK_TOL = 1e-9
DEFAULT_WINDOW = (10, None)


@dataclass
class EnergyReport:
    """Per-iteration outcome of an energy inequality check.

    ``per_iteration[k]`` compares step ``k`` with step ``k + 1``. ``phi``
    is the energy at ``k``; ``slack`` is what is left of the inequality
    and must not drop below ``-tolerance``.
    """

    per_iteration: list
    epsilon_used: float
    violations: int
    tolerance: float = SLACK_TOL
    kind: str = "forb"
    contraction: Optional[float] = None
    lower_bound_violations: int = 0
    envelope_violations: int = 0

    @property
    def phi(self) -> np.ndarray:
        return np.array([r["phi"] for r in self.per_iteration])

    @property
    def slacks(self) -> np.ndarray:
        return np.array([r["slack"] for r in self.per_iteration])

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min()) if self.per_iteration else math.inf

    @property
    def ok(self) -> bool:
        return (self.violations == 0 and self.lower_bound_violations == 0
                and self.envelope_violations == 0)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon_used": self.epsilon_used,
            "contraction": self.contraction,
            "violations": self.violations,
            "lower_bound_violations": self.lower_bound_violations,
            "envelope_violations": self.envelope_violations,
            "min_slack": self.min_slack,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class RateEstimate:
    rho: float
    window: tuple
    r_squared: float
    metric: str
    slope: float = math.nan
    points: int = 0

    def as_dict(self) -> dict:
        return {"rho": self.rho, "window": list(self.window), "r_squared": self.r_squared,
                "metric": self.metric, "points": self.points}


# --------------------------------------------------------------------------
# energies
# --------------------------------------------------------------------------

def _full_trajectory(run: SolverRun, P: SplitInclusion):
    if P.reference_solution is None:
        raise DiagnosticUnavailable("the inclusion has no reference solution")
    if run.iterates is None:
        raise DiagnosticUnavailable("the run did not store iterates")
    idx = run.iterate_indices
    if idx != list(range(len(idx))):
        raise DiagnosticUnavailable("energy checks need every iterate (iterate_stride = 1)")
    xs = [as_vector(run.x_minus1)] + [as_vector(x) for x in run.iterates]
    if not all(np.all(np.isfinite(x)) for x in xs):
        raise DiagnosticUnavailable("the run contains non-finite iterates")
    lams = [run.lambda_minus1] + list(run.lambdas[:len(xs) - 2])
    return np.vstack(xs), np.asarray(lams, dtype=np.float64)


def _lipschitz_of(P: SplitInclusion) -> Optional[float]:
    return P.constants.L if P.constants.L is not None else P.B.lipschitz


def energy_forb(run: SolverRun, P: SplitInclusion, epsilon: Optional[float] = None,
                tol: float = SLACK_TOL) -> EnergyReport:
    """Check the FoRB energy decrease along a stored run.

    Parameters
    ----------
    run : SolverRun
        Run with every iterate stored. ``run.x_minus1`` and
        ``run.lambda_minus1`` seed the first energy.
    P : SplitInclusion
        Must carry a reference solution.
    epsilon : float, optional
        Margin in ``Phi_{k+1} + eps ||x_{k+1} - x_k||^2 <= Phi_k``. Defaults
        to ``1/2 - L max_k lam_k`` (clipped at zero), the largest value the
        step sizes allow.
    tol : float
        Allowed negative slack.

    Returns
    -------
    EnergyReport
        Also flags iterations where ``Phi_k`` falls below the bound
        ``||d||^2 + ||s||^2 / 2 - lam L (||d||^2 + ||s||^2)`` implied by the
        Lipschitz constant (``d = x_k - x*``, ``s = x_k - x_{k-1}``).
    """
    X, lams = _full_trajectory(run, P)
    ref = P.reference_solution
    B = np.vstack([P.B(x) for x in X])
    L = _lipschitz_of(P)
    if epsilon is None:
        if L is None:
            raise DiagnosticUnavailable("no Lipschitz constant to derive epsilon from")
        epsilon = max(0.0, 0.5 - L * float(lams.max()))

    # row j of X is x_{j-1}; Phi_k uses rows k+1 and k
    D = X[1:] - ref
    S = X[1:] - X[:-1]
    dB = B[1:] - B[:-1]
    d2 = np.einsum("ij,ij->i", D, D)
    s2 = np.einsum("ij,ij->i", S, S)
    cross = -np.einsum("ij,ij->i", dB, D)
    phi = d2 + 2.0 * lams * cross + 0.5 * s2

    records = []
    violations = lb_violations = 0
    for k in range(len(phi) - 1):
        slack = float(phi[k] - phi[k + 1] - epsilon * s2[k + 1])
        ok = slack >= -tol
        lb_ok = None
        if L is not None:
            bound = d2[k] + 0.5 * s2[k] - lams[k] * L * (d2[k] + s2[k])
            lb_ok = bool(phi[k] >= bound - tol)
            lb_violations += not lb_ok
        violations += not ok
        records.append({"k": k, "phi": float(phi[k]), "phi_next": float(phi[k + 1]),
                        "slack": slack, "decrease_ok": ok, "lower_bound_ok": lb_ok})
    return EnergyReport(records, float(epsilon), violations, tol, "forb",
                        lower_bound_violations=lb_violations)


def strong_constants(m: float, lam: float, L: float) -> tuple[float, float]:
    """``(eps, alpha)`` with ``eps = min(1/2 - lam L, 5 m lam)`` and
    ``alpha = min(1 + 4 m lam - 3 eps / 4, 1 + eps / 2)``."""
    eps = min(0.5 - lam * L, 5.0 * m * lam)
    return eps, min(1.0 + 4.0 * m * lam - 0.75 * eps, 1.0 + 0.5 * eps)


def energy_strong(run: SolverRun, P: SplitInclusion, m: Optional[float] = None,
                  tol: float = SLACK_TOL) -> EnergyReport:
    """Check ``alpha (a_{k+1} + b_{k+1}) <= a_k + b_k`` for strongly monotone ``A``.

    ``a_k = ||x_k - x*||^2 / 2`` and
    ``b_k = a_k + 2 lam <B(x_k) - B(x_{k-1}), x* - x_k> + ||x_k - x_{k-1}||^2 / 2``.
    Also checks ``b_k >= 0`` and the envelope
    ``||x_k - x*||^2 <= 2 (a_0 + b_0) / alpha^k``.
    """
    m = P.constants.m if m is None else m
    if m is None or not m > 0:
        raise DiagnosticUnavailable("a positive strong monotonicity modulus is required")
    L = _lipschitz_of(P)
    if L is None:
        raise DiagnosticUnavailable("no Lipschitz constant available")
    X, lams = _full_trajectory(run, P)
    lam = float(lams[0])
    if not np.all(lams == lam):
        raise DiagnosticUnavailable("energy_strong needs a constant step (including lambda_-1)")
    if not 0 < lam < 1.0 / (2.0 * L):
        raise ParameterError(f"step {lam:g} is outside (0, 1/(2L))")
    eps, alpha = strong_constants(m, lam, L)

    ref = P.reference_solution
    B = np.vstack([P.B(x) for x in X])
    D = X[1:] - ref
    S = X[1:] - X[:-1]
    d2 = np.einsum("ij,ij->i", D, D)
    s2 = np.einsum("ij,ij->i", S, S)
    cross = -np.einsum("ij,ij->i", B[1:] - B[:-1], D)
    a = 0.5 * d2
    b = 0.5 * d2 + 2.0 * lam * cross + 0.5 * s2
    total = a + b

    records = []
    violations = lb_violations = env_violations = 0
    for k in range(len(total)):
        env_ok = bool(d2[k] <= 2.0 * total[0] / alpha ** k * (1.0 + tol))
        env_violations += not env_ok
        lb_ok = bool(b[k] >= -tol)
        lb_violations += not lb_ok
        if k + 1 < len(total):
            slack = float(total[k] - alpha * total[k + 1])
            ok = slack >= -tol
            violations += not ok
            records.append({"k": k, "phi": float(total[k]), "phi_next": float(total[k + 1]),
                            "slack": slack, "decrease_ok": ok, "lower_bound_ok": lb_ok,
                            "envelope_ok": env_ok})
    return EnergyReport(records, float(eps), violations, tol, "strong", float(alpha),
                        lb_violations, env_violations)


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------

def fit_rate(values: Sequence[float], window: tuple = (0, None),
             metric: str = "custom") -> RateEstimate:
    """Least-squares fit of ``log(values[k])`` against ``k`` over ``window``.

    ``window = (start, stop)`` is half-open; ``stop=None`` means the end.
    NaN entries (skipped samples) are ignored.
    """
    v = np.asarray(values, dtype=np.float64)
    start, stop = window
    stop = len(v) if stop is None else stop
    if not 0 <= start < stop <= len(v):
        raise FitError(f"window {window} does not fit a series of length {len(v)}")
    k = np.arange(start, stop, dtype=np.float64)
    y = v[start:stop]
    keep = ~np.isnan(y)
    k, y = k[keep], y[keep]
    if len(y) < 2:
        raise FitError("need at least two samples in the window")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitError("metric must be positive and finite over the window")
    logy = np.log(y)
    kc = k - k.mean()
    slope = float(kc @ (logy - logy.mean()) / (kc @ kc))
    resid = logy - logy.mean() - slope * kc
    sst = float((logy - logy.mean()) @ (logy - logy.mean()))
    sse = float(resid @ resid)
    # residuals at rounding level mean an exact fit, even for a flat series
    noise = len(y) * (64 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(logy))))) ** 2
    r2 = 1.0 if sse <= noise else 1.0 - sse / sst
    r2 = min(1.0, max(0.0, r2))
    return RateEstimate(math.exp(slope), (start, stop), r2, metric, slope, len(y))


def metric_series(run: SolverRun, metric: str = "dist_to_solution") -> np.ndarray:
    """Values indexed by iterate number ``k = 0 .. iterations``.

    The natural residual of ``x_0`` is not recorded, so entry 0 is NaN for
    that metric.
    """
    if metric == "dist_to_solution":
        if run.distances is None:
            raise DiagnosticUnavailable("the run has no reference distances")
        return np.array([run.initial_distance] + list(run.distances), dtype=np.float64)
    if metric == "natural_residual":
        return np.array([math.nan] + list(run.residuals), dtype=np.float64)
    raise ParameterError(f"unknown metric {metric!r}")


def estimate_rate(run: SolverRun, metric: str = "dist_to_solution",
                  window: tuple = DEFAULT_WINDOW) -> RateEstimate:
    """Empirical linear rate ``rho = exp(slope)`` of ``log(metric_k)`` over ``window``."""
    return fit_rate(metric_series(run, metric), window, metric)


def growth_factors(run: SolverRun, metric: str = "dist_to_solution") -> np.ndarray:
    """Ratios ``metric_{k+1} / metric_k``."""
    v = metric_series(run, metric)
    with np.errstate(divide="ignore", invalid="ignore"):
        return v[1:] / v[:-1]


# --------------------------------------------------------------------------
# fixed-point form
# --------------------------------------------------------------------------

def fixed_point_iterates(P: SplitInclusion, lam: float, x0, u0=None, iters: int = 100,
                         x_minus1=None) -> tuple[np.ndarray, np.ndarray]:
    """Iterate ``(x, u) <- (J_{lam A}(x - 2 lam B x + lam u), B x)``.

    This is ``M o T`` with ``T(x, u) = (x - 2 lam B x + lam u, B x)`` and
    ``M = diag(J_{lam A}, I)``. ``u0`` defaults to ``B(x_{-1})``, and
    ``x_{-1}`` defaults to ``x0``. Returns the stacked ``x`` and ``u``
    sequences, each with ``iters + 1`` rows.
    """
    if not lam > 0:
        raise ParameterError("lam must be positive")
    n = P.dim
    x = as_vector(x0, n)
    xm1 = x if x_minus1 is None else as_vector(x_minus1, n)
    u = P.B(xm1) if u0 is None else as_vector(u0, n)

    def T(x, u):
        Bx = P.B(x)
        return x - 2.0 * lam * Bx + lam * u, Bx

    def M(v, w):
        return P.A(lam, v), w

    xs, us = [x], [u]
    for _ in range(iters):
        x, u = M(*T(x, u))
        xs.append(x)
        us.append(u)
    return np.vstack(xs), np.vstack(us)


def fixed_point_form_check(P: SplitInclusion, lam: float, x0, u0=None, iters: int = 100,
                           x_minus1=None) -> float:
    """Largest ``||x_k^fp - x_k^forb||`` over ``iters`` steps.

    The FoRB run starts from the same ``x0`` and ``x_{-1}``; ``u0`` should
    equal ``B(x_{-1})`` for the two sequences to coincide.
    """
    if P.C is not None:
        raise ShapeError("the fixed-point form covers two operators only")
    xs, _ = fixed_point_iterates(P, lam, x0, u0, iters, x_minus1)
    cfg = SolverConfig(x0=xs[0], step=StepPlan.constant(lam), x_minus1=x_minus1,
                       max_iters=iters, residual_tol=0.0)
    run = run_forb(P, cfg)
    ref = run.iterate_array()
    k = min(len(ref), len(xs))
    return float(np.max(np.linalg.norm(xs[:k] - ref[:k], axis=1)))


def lprime(op_class: str, L: float, rho: float) -> float:
    """Lipschitz constant of ``B - rho I`` for monotone ``B``.

    ``L + rho`` for an ``L``-Lipschitz ``B``; for a ``1/L``-cocoercive ``B`` it is
    ``L - rho`` when ``rho <= L/2`` and ``rho`` otherwise.
    """
    if not L > 0:
        raise ParameterError("L must be positive")
    if rho < 0:
        raise ParameterError("rho must be nonnegative")
    if op_class == "lipschitz":
        return L + rho
    if op_class == "cocoercive":
        return L - rho if rho <= L / 2 else rho
    raise ParameterError(f"unknown operator class {op_class!r}")


def inertial_lprime(op_class: str, L: float, alpha: float, lam: float) -> tuple[float, bool]:
    """``(L', flagged)`` for ``rho = alpha / lam``.

    ``flagged`` is true in the cocoercive class when ``rho > L/2``, where
    ``L'`` switches to the ``rho`` branch.
    """
    if not lam > 0:
        raise ParameterError("lam must be positive")
    rho = alpha / lam
    return lprime(op_class, L, rho), op_class == "cocoercive" and rho > L / 2
