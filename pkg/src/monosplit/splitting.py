"""Forward-reflected-backward splitting and baseline methods.

Every solver returns a :class:`SolverRun`. Oracle-call counters cover the
calls the method itself needs; the natural residual, distance and energy
recorded per iteration use separate, uncounted evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, NonFiniteError, ParameterError
from .operators import Constants, ForwardOracle, SplitInclusion, as_vector

__all__ = [
    "LinesearchParams",
    "StepPlan",
    "SolverConfig",
    "OracleCalls",
    "SolverRun",
    "SplitMix64",
    "run_forb",
    "run_forb_linesearch",
    "run_relaxed_inertial",
    "run_forb3",
    "run_stochastic_forb",
    "run_baseline",
    "max_stepsize",
    "BASELINES",
    "METHODS",
]

BASELINES = ("tseng", "forward_backward", "proximal_point",
             "projected_reflected_gradient", "popov")
METHODS = ("forb", "forb_linesearch", "relaxed_inertial", "forb3", "stochastic_forb") + BASELINES

DIVERGENCE_THRESHOLD = 1e12
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """64-bit SplitMix generator.

    ``state += 0x9E3779B97F4A7C15``, then the output mix
    ``z = (z ^ z>>30) * 0xBF58476D1CE4E5B9``,
    ``z = (z ^ z>>27) * 0x94D049BB133111EB``, ``z ^ z>>31`` (all mod 2^64).
    Indices in ``{0, ..., n-1}`` are drawn as ``(next * n) >> 64``.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed > _MASK64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        self.state = int(seed)

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        return (self.next_u64() * n) >> 64


@dataclass(frozen=True)
class LinesearchParams:
    delta: float = 0.9
    sigma: float = 0.5
    rho_policy: str = "always_increase"
    lambda0: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ParameterError("sigma must lie in (0, 1)")
        if self.rho_policy not in ("always_increase", "never_increase"):
            raise ConfigurationError(f"unknown rho_policy {self.rho_policy!r}")
        if not self.lambda0 > 0:
            raise ParameterError("lambda0 must be positive")
        if self.max_backtracks < 1:
            raise ParameterError("max_backtracks must be positive")

    @property
    def rho(self) -> float:
        return 1.0 / self.sigma if self.rho_policy == "always_increase" else 1.0


@dataclass(frozen=True)
class StepPlan:
    """Step-size policy.

    ``kind="schedule"`` uses ``schedule[k]`` at iteration ``k`` and repeats
    the last entry once the list is exhausted. ``eps_floor`` is the optional
    lower end of the admissible band used for warnings.
    """

    kind: str = "constant"
    lam: Optional[float] = None
    lambda_minus1: Optional[float] = None
    schedule: Optional[tuple] = None
    linesearch: Optional[LinesearchParams] = None
    eps_floor: Optional[float] = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.lam is None or not self.lam > 0:
                raise ParameterError("constant step needs lam > 0")
        elif self.kind == "schedule":
            if not self.schedule or any(not s > 0 for s in self.schedule):
                raise ParameterError("schedule must be a nonempty list of positive steps")
            object.__setattr__(self, "schedule", tuple(float(s) for s in self.schedule))
        elif self.kind == "linesearch":
            if self.linesearch is None:
                object.__setattr__(self, "linesearch", LinesearchParams())
        else:
            raise ConfigurationError(f"unknown step kind {self.kind!r}")
        if self.lambda_minus1 is not None and not self.lambda_minus1 > 0:
            raise ParameterError("lambda_minus1 must be positive")

    @classmethod
    def constant(cls, lam: float, lambda_minus1: Optional[float] = None) -> "StepPlan":
        return cls("constant", lam=lam, lambda_minus1=lambda_minus1)

    @classmethod
    def from_schedule(cls, values: Sequence[float], lambda_minus1: Optional[float] = None,
                      eps_floor: Optional[float] = None) -> "StepPlan":
        return cls("schedule", schedule=tuple(values), lambda_minus1=lambda_minus1,
                   eps_floor=eps_floor)

    @classmethod
    def with_linesearch(cls, lambda_minus1: Optional[float] = None, **kwargs) -> "StepPlan":
        return cls("linesearch", linesearch=LinesearchParams(**kwargs),
                   lambda_minus1=lambda_minus1)

    def at(self, k: int) -> float:
        if self.kind == "constant":
            return float(self.lam)
        if self.kind == "schedule":
            return self.schedule[min(k, len(self.schedule) - 1)]
        raise ConfigurationError("linesearch steps are chosen by run_forb_linesearch")

    def previous(self) -> float:
        """The step ``lambda_{-1}``; defaults to the first step."""
        if self.lambda_minus1 is not None:
            return float(self.lambda_minus1)
        if self.kind == "linesearch":
            return float(self.linesearch.lambda0)
        return self.at(0)

    def steps(self, count: int) -> list[float]:
        return [self.at(k) for k in range(count)]


@dataclass(frozen=True)
class SolverConfig:
    x0: np.ndarray
    step: StepPlan
    x_minus1: Optional[np.ndarray] = None
    max_iters: int = 1000
    residual_tol: float = 1e-10
    alpha: float = 0.0
    beta: float = 1.0
    seed: int = 0
    record_energy: bool = False
    store_iterates: bool = True
    iterate_stride: int = 1
    residual_stride: int = 1
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        x0 = as_vector(self.x0)
        object.__setattr__(self, "x0", x0)
        if self.x_minus1 is not None:
            object.__setattr__(self, "x_minus1", as_vector(self.x_minus1, x0.shape[0]))
        if self.max_iters < 1:
            raise ParameterError("max_iters must be positive")
        if self.residual_tol < 0:
            raise ParameterError("residual_tol must be nonnegative")
        if not 0 <= self.alpha < 1:
            raise ParameterError("alpha must lie in [0, 1)")
        if not 0 < self.beta <= 1:
            raise ParameterError("beta must lie in (0, 1]")
        if self.iterate_stride < 1 or self.residual_stride < 1:
            raise ParameterError("strides must be positive")
        if not 0 <= self.seed <= _MASK64:
            raise ParameterError("seed must be an unsigned 64-bit integer")

    @property
    def start_previous(self) -> np.ndarray:
        return self.x0.copy() if self.x_minus1 is None else self.x_minus1.copy()


@dataclass
class OracleCalls:
    resolvent: int = 0
    forward_B: int = 0
    forward_Bi: int = 0
    forward_C: int = 0

    @property
    def forward(self) -> int:
        return self.forward_B + self.forward_Bi + self.forward_C

    def as_dict(self) -> dict:
        return {"resolvent": self.resolvent, "forward_B": self.forward_B,
                "forward_Bi": self.forward_Bi, "forward_C": self.forward_C}


@dataclass
class SolverRun:
    """Trace of one solver run.

    Per-iteration lists are aligned: entry ``k`` describes the point
    ``x_{k+1}`` produced by iteration ``k`` (``lambdas[k]`` is the step
    used to produce it). ``iterates`` holds ``x_0`` followed by every
    ``iterate_stride``-th later point; ``iterate_indices`` gives their
    indices. Residual entries skipped by ``residual_stride`` are NaN.
    """

    method: str
    status: str
    final_point: np.ndarray
    residuals: list
    lambdas: list
    lambda_minus1: float
    x_minus1: np.ndarray
    oracle_calls: OracleCalls
    iterates: Optional[list] = None
    iterate_indices: Optional[list] = None
    distances: Optional[list] = None
    energies: Optional[list] = None
    initial_distance: Optional[float] = None
    initial_energy: Optional[float] = None
    forward_trace: list = field(default_factory=list)
    resolvent_trace: list = field(default_factory=list)
    aux_residuals: Optional[list] = None
    aux_iterates: Optional[list] = None
    backtracks: Optional[list] = None
    indices: Optional[list] = None
    warnings: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def final_residual(self) -> float:
        finite = [r for r in self.residuals if not math.isnan(r)]
        return finite[-1] if finite else math.nan

    def iterate_array(self) -> np.ndarray:
        """Stored iterates as a 2-D array (rows are points)."""
        if self.iterates is None:
            raise ValueError("iterates were not stored")
        return np.vstack(self.iterates)


# --------------------------------------------------------------------------
# shared bookkeeping
# --------------------------------------------------------------------------

class _Recorder:
    """Collects the per-iteration trace and decides when to stop."""

    def __init__(self, method: str, P: SplitInclusion, cfg: SolverConfig,
                 x0: np.ndarray, x_minus1: np.ndarray, lam_minus1: float,
                 energy: bool = False, aux: bool = False):
        self.method, self.P, self.cfg = method, P, cfg
        self.calls = OracleCalls()
        self.residuals: list[float] = []
        self.lambdas: list[float] = []
        self.warnings: list[str] = []
        self.ref = P.reference_solution
        self.distances = [] if self.ref is not None else None
        self.energy = energy and cfg.record_energy and self.ref is not None
        self.energies = [] if self.energy else None
        self.iterates = [x0.copy()] if cfg.store_iterates else None
        self.iterate_indices = [0] if cfg.store_iterates else None
        self.aux_residuals = [] if aux else None
        self.aux_iterates = [] if aux and cfg.store_iterates else None
        self.forward_trace: list[int] = []
        self.resolvent_trace: list[int] = []
        self.x_minus1 = x_minus1.copy()
        self.lam_minus1 = lam_minus1
        self.extra: dict = {}
        self.initial_distance = (float(np.linalg.norm(x0 - self.ref))
                                 if self.ref is not None else None)
        self.initial_energy = None
        if self.energy:
            B = P.B
            self.initial_energy = _forb_energy(x0, x_minus1, B(x0), B(x_minus1),
                                               lam_minus1, self.ref)

    # uncounted evaluations used only for diagnostics
    def _residual(self, x, lam, Bx=None):
        P = self.P
        Bx = P.B(x) if Bx is None else Bx
        v = x - lam * Bx
        if P.C is not None:
            v = v - lam * P.C(x)
        return float(np.linalg.norm(x - P.A(lam, v)))

    def record(self, k: int, x_next: np.ndarray, lam: float, x_cur: np.ndarray,
               Bx_cur: Optional[np.ndarray] = None, Bx_next: Optional[np.ndarray] = None,
               z_next: Optional[np.ndarray] = None) -> Optional[str]:
        cfg = self.cfg
        self.lambdas.append(float(lam))
        self.forward_trace.append(self.calls.forward)
        self.resolvent_trace.append(self.calls.resolvent)
        if self.iterates is not None and (k + 1) % cfg.iterate_stride == 0:
            self.iterates.append(x_next.copy())
            self.iterate_indices.append(k + 1)
            if self.aux_iterates is not None and z_next is not None:
                self.aux_iterates.append(z_next.copy())
        norm_x = float(np.linalg.norm(x_next))
        if not math.isfinite(norm_x):
            self.residuals.append(math.inf)
            self._append_diag(x_next, None, None, None, None)
            return "diverged"
        check = (k + 1) % cfg.residual_stride == 0 or k + 1 == cfg.max_iters
        if (self.energy or check) and Bx_next is None:
            Bx_next = self.P.B(x_next)
        r = self._residual(x_next, lam, Bx_next) if check else math.nan
        self.residuals.append(r)
        if self.aux_residuals is not None and z_next is not None:
            self.aux_residuals.append(self._residual(z_next, lam))
        self._append_diag(x_next, x_cur, Bx_next, Bx_cur, lam)
        if norm_x > cfg.divergence_threshold or (check and r > cfg.divergence_threshold):
            return "diverged"
        if check and r <= cfg.residual_tol:
            return "converged"
        return None

    def _append_diag(self, x_next, x_cur, Bx_next, Bx_cur, lam):
        if self.distances is not None:
            self.distances.append(float(np.linalg.norm(x_next - self.ref)))
        if self.energies is not None:
            if Bx_next is None or Bx_cur is None:
                self.energies.append(math.nan)
            else:
                self.energies.append(_forb_energy(x_next, x_cur, Bx_next, Bx_cur, lam, self.ref))

    def nonfinite(self, lam: float) -> str:
        self.lambdas.append(float(lam))
        self.forward_trace.append(self.calls.forward)
        self.resolvent_trace.append(self.calls.resolvent)
        self.residuals.append(math.inf)
        if self.distances is not None:
            self.distances.append(math.inf)
        if self.energies is not None:
            self.energies.append(math.nan)
        if self.aux_residuals is not None:
            self.aux_residuals.append(math.inf)
        return "diverged"

    def finish(self, status: str, x: np.ndarray) -> SolverRun:
        return SolverRun(
            method=self.method, status=status, final_point=np.array(x, copy=True),
            residuals=self.residuals, lambdas=self.lambdas, lambda_minus1=self.lam_minus1,
            x_minus1=self.x_minus1, oracle_calls=self.calls, iterates=self.iterates,
            iterate_indices=self.iterate_indices, distances=self.distances,
            energies=self.energies, initial_distance=self.initial_distance,
            initial_energy=self.initial_energy, forward_trace=self.forward_trace,
            resolvent_trace=self.resolvent_trace, aux_residuals=self.aux_residuals,
            aux_iterates=self.aux_iterates, warnings=self.warnings, **self.extra)

    # counted oracle wrappers
    def B(self, x):
        self.calls.forward_B += 1
        return self.P.B(x)

    def C(self, x):
        self.calls.forward_C += 1
        return self.P.C(x)

    def J(self, lam, x):
        self.calls.resolvent += 1
        return self.P.A(lam, x)


def _forb_energy(x, x_prev, Bx, Bx_prev, lam_prev, ref) -> float:
    """``||x - ref||^2 + 2 lam_prev <Bx - Bx_prev, ref - x> + 0.5 ||x - x_prev||^2``."""
    d = x - ref
    s = x - x_prev
    return float(d @ d + 2.0 * lam_prev * ((Bx - Bx_prev) @ (ref - x)) + 0.5 * (s @ s))


def _start(P: SplitInclusion, cfg: SolverConfig):
    x0 = as_vector(cfg.x0, P.dim).copy()
    return x0, as_vector(cfg.start_previous, P.dim)


def _lipschitz(P: SplitInclusion) -> Optional[float]:
    if P.constants.L is not None:
        return P.constants.L
    return P.B.lipschitz


def _check_forb_steps(rec: _Recorder, plan: StepPlan, L: Optional[float], count: int):
    if L is None or L == 0:
        return
    count = min(count, len(plan.schedule)) if plan.kind == "schedule" else 1
    steps = [plan.previous()] + plan.steps(count)
    floor = plan.eps_floor
    if floor is None:
        bad = [s for s in steps if s >= 1.0 / (2 * L)]
        if bad:
            rec.warnings.append(
                f"step {max(bad):.6g} is not below 1/(2L) = {1 / (2 * L):.6g}; "
                "convergence is not guaranteed")
    else:
        hi = (1 - 2 * floor) / (2 * L)
        bad = [s for s in steps if not floor <= s <= hi]
        if bad:
            rec.warnings.append(
                f"{len(bad)} step(s) fall outside [{floor:.6g}, {hi:.6g}]")


# --------------------------------------------------------------------------
# FoRB family
# --------------------------------------------------------------------------

def run_forb(P: SplitInclusion, cfg: SolverConfig) -> SolverRun:
    """Forward-reflected-backward iteration with a constant step or a schedule.

    ``x_{k+1} = J_{lam_k A}(x_k - lam_k B(x_k) - lam_{k-1}(B(x_k) - B(x_{k-1})))``

    ``B(x_{k-1})`` is cached, so each iteration costs one forward and one
    resolvent evaluation (plus one forward call overall for ``B(x_{-1})``).
    """
    if cfg.step.kind == "linesearch":
        raise ConfigurationError("use run_forb_linesearch for linesearch step plans")
    if P.C is not None:
        raise ConfigurationError("inclusion has a third operator; use run_forb3")
    x, x_prev = _start(P, cfg)
    lam_prev = cfg.step.previous()
    rec = _Recorder("forb", P, cfg, x, x_prev, lam_prev, energy=True)
    _check_forb_steps(rec, cfg.step, _lipschitz(P), cfg.max_iters)
    status, lam = "max_iters", lam_prev
    try:
        Bprev = rec.B(x_prev)
        for k in range(cfg.max_iters):
            lam = cfg.step.at(k)
            Bx = rec.B(x)
            x_next = rec.J(lam, x - lam * Bx - lam_prev * (Bx - Bprev))
            stop = rec.record(k, x_next, lam, x, Bx_cur=Bx)
            x_prev, x, Bprev, lam_prev = x, x_next, Bx, lam
            if stop:
                status = stop
                break
    except NonFiniteError:
        status = rec.nonfinite(lam)
    return rec.finish(status, x)


def run_forb_linesearch(P: SplitInclusion, cfg: SolverConfig) -> SolverRun:
    """FoRB with backtracking on the step size.

    At iteration ``k`` the trial steps are ``base * sigma**i`` for
    ``i = 0, 1, ...`` where ``base = lambda0`` for ``k = 0`` and
    ``rho * lam_{k-1}`` afterwards. The reflected term
    ``lam_{k-1}(B(x_k) - B(x_{k-1}))`` stays fixed during the search. The
    first trial with ``lam ||B(x_{k+1}) - B(x_k)|| <= (delta/2)||x_{k+1} - x_k||``
    is accepted. Exhausting ``max_backtracks`` ends the run with status
    ``linesearch_failed``.
    """
    if cfg.step.kind != "linesearch":
        raise ConfigurationError("run_forb_linesearch needs a linesearch step plan")
    if P.C is not None:
        raise ConfigurationError("linesearch variant handles two operators only")
    ls = cfg.step.linesearch
    x, x_prev = _start(P, cfg)
    lam_prev = cfg.step.previous()
    rec = _Recorder("forb_linesearch", P, cfg, x, x_prev, lam_prev, energy=True)
    backtracks: list[int] = []
    rec.extra["backtracks"] = backtracks
    status, lam = "max_iters", lam_prev
    half_delta = 0.5 * ls.delta
    try:
        Bprev = rec.B(x_prev)
        Bx = rec.B(x)
        for k in range(cfg.max_iters):
            base = ls.lambda0 if k == 0 else ls.rho * lam_prev
            shift = x - lam_prev * (Bx - Bprev)
            accepted = False
            for i in range(ls.max_backtracks + 1):
                lam = base * ls.sigma ** i
                x_next = rec.J(lam, shift - lam * Bx)
                Bnext = rec.B(x_next)
                if lam * np.linalg.norm(Bnext - Bx) <= half_delta * np.linalg.norm(x_next - x):
                    accepted = True
                    break
            if not accepted:
                status = "linesearch_failed"
                break
            backtracks.append(i)
            stop = rec.record(k, x_next, lam, x, Bx_cur=Bx, Bx_next=Bnext)
            x_prev, x, Bprev, Bx, lam_prev = x, x_next, Bx, Bnext, lam
            if stop:
                status = stop
                break
    except NonFiniteError:
        status = rec.nonfinite(lam)
    return rec.finish(status, x)


def run_relaxed_inertial(P: SplitInclusion, cfg: SolverConfig) -> SolverRun:
    """Relaxed inertial FoRB with constant step ``lam``.

    ::

        z_{k+1} = J_{lam A}(x_k - lam B(x_k) - (lam/beta)(B(x_k) - B(x_{k-1}))
                            + (alpha/beta)(x_k - x_{k-1}))
        x_{k+1} = (1 - beta) x_k + beta z_{k+1}

    With ``alpha = 0`` and ``beta = 1`` this is exactly :func:`run_forb`.
    Residuals of the ``z`` sequence go to ``aux_residuals``. A step at or
    above the admissible bound is recorded as a warning, not an error.
    """
    if cfg.step.kind != "constant":
        raise ConfigurationError("relaxed inertial variant needs a constant step")
    if P.C is not None:
        raise ConfigurationError("relaxed inertial variant handles two operators only")
    lam, alpha, beta = float(cfg.step.lam), cfg.alpha, cfg.beta
    x, x_prev = _start(P, cfg)
    rec = _Recorder("relaxed_inertial", P, cfg, x, x_prev, lam, aux=True)
    if P.B.cocoercivity:
        bound = max_stepsize("relaxed_inertial", Constants(L=1.0 / P.B.cocoercivity),
                             alpha, beta, "cocoercive")
    elif _lipschitz(P) is not None:
        bound = max_stepsize("relaxed_inertial", Constants(L=_lipschitz(P)), alpha, beta)
    else:
        bound = None
    if bound is not None and lam >= bound:
        rec.warnings.append(f"step {lam:.6g} is not below the admissible bound {bound:.6g}")
    if P.B.cocoercivity and alpha > 0 and alpha / lam > 0.5 / P.B.cocoercivity:
        # L' of B - (alpha/lam) I leaves the L - rho branch; reported, not resolved
        rec.warnings.append(f"alpha/lam = {alpha / lam:.6g} exceeds L/2 "
                            f"= {0.5 / P.B.cocoercivity:.6g}; L' = alpha/lam there")
    status = "max_iters"
    ratio, inertia = lam / beta, alpha / beta
    try:
        Bprev = rec.B(x_prev)
        for k in range(cfg.max_iters):
            Bx = rec.B(x)
            z = rec.J(lam, x - lam * Bx - ratio * (Bx - Bprev) + inertia * (x - x_prev))
            x_next = z if beta == 1.0 else (1.0 - beta) * x + beta * z
            stop = rec.record(k, x_next, lam, x, z_next=z)
            x_prev, x, Bprev = x, x_next, Bx
            if stop:
                status = stop
                break
    except NonFiniteError:
        status = rec.nonfinite(lam)
    return rec.finish(status, x)


def run_forb3(P: SplitInclusion, cfg: SolverConfig) -> SolverRun:
    """Three-operator variant for ``0 in (A + B + C)(x)`` with cocoercive ``C``.

    ``x_{k+1} = J_{lam A}(x_k - 2 lam B(x_k) + lam B(x_{k-1}) - lam C(x_k))``

    ``C`` only gets a plain forward step. Admissible steps are
    ``lam < 2/(4 L1 + L2)``; larger steps are recorded as a warning.
    """
    if P.C is None:
        raise ConfigurationError("run_forb3 needs an inclusion with a C operator")
    if cfg.step.kind != "constant":
        raise ConfigurationError("three-operator variant needs a constant step")
    lam = float(cfg.step.lam)
    x, x_prev = _start(P, cfg)
    lam_prev = cfg.step.previous()
    rec = _Recorder("forb3", P, cfg, x, x_prev, lam_prev)
    L1 = P.constants.L1 if P.constants.L1 is not None else P.B.lipschitz
    L2 = P.constants.L2
    if L2 is None and P.C.cocoercivity:
        L2 = 1.0 / P.C.cocoercivity
    if L1 is not None and L2 is not None:
        bound = max_stepsize("forb3", Constants(L1=L1, L2=L2))
        if lam >= bound:
            rec.warnings.append(f"step {lam:.6g} is not below 2/(4 L1 + L2) = {bound:.6g}")
    status = "max_iters"
    try:
        Bprev = rec.B(x_prev)
        for k in range(cfg.max_iters):
            Bx = rec.B(x)
            Cx = rec.C(x)
            x_next = rec.J(lam, x - lam * Bx - lam_prev * (Bx - Bprev) - lam * Cx)
            stop = rec.record(k, x_next, lam, x)
            x_prev, x, Bprev, lam_prev = x, x_next, Bx, lam
            if stop:
                status = stop
                break
    except NonFiniteError:
        status = rec.nonfinite(lam)
    return rec.finish(status, x)


def run_stochastic_forb(P: SplitInclusion, parts: Sequence[ForwardOracle],
                        cfg: SolverConfig) -> SolverRun:
    """FoRB with a randomly sampled reflection term.

    ``x_{k+1} = J_{lam A}(x_k - lam B(x_k) - lam(B_i(x_k) - B_i(x_{k-1})))``
    with ``i`` uniform on the parts, drawn from :class:`SplitMix64` seeded
    with ``cfg.seed``. ``B`` is expected to equal the average of the parts;
    a mismatch at ``x0`` is reported as a warning and nothing is rescaled.
    """
    parts = list(parts)
    if not parts:
        raise ConfigurationError("stochastic variant needs at least one part")
    if cfg.step.kind != "constant":
        raise ConfigurationError("stochastic variant needs a constant step")
    if P.C is not None:
        raise ConfigurationError("stochastic variant handles two operators only")
    n = len(parts)
    lam = float(cfg.step.lam)
    x, x_prev = _start(P, cfg)
    rec = _Recorder("stochastic_forb", P, cfg, x, x_prev, lam, energy=True)
    avg = sum(p(x) for p in parts) / n
    full = P.B(x)
    if np.linalg.norm(avg - full) > 1e-10 * (1.0 + np.linalg.norm(full)):
        rec.warnings.append("B(x0) differs from the average of the parts")
    lips = [p.lipschitz for p in parts]
    if all(v is not None for v in lips) and max(lips) > 0 and lam >= 1.0 / (2 * max(lips)):
        rec.warnings.append(f"step {lam:.6g} is not below 1/(2L) for the parts")
    rng = SplitMix64(cfg.seed)
    drawn: list[int] = []
    rec.extra["indices"] = drawn
    status = "max_iters"
    try:
        for k in range(cfg.max_iters):
            Bx = rec.B(x)
            i = rng.randbelow(n)
            drawn.append(i)
            rec.calls.forward_Bi += 2
            Bi_x, Bi_prev = parts[i](x), parts[i](x_prev)
            x_next = rec.J(lam, x - lam * Bx - lam * (Bi_x - Bi_prev))
            stop = rec.record(k, x_next, lam, x, Bx_cur=Bx)
            x_prev, x = x, x_next
            if stop:
                status = stop
                break
    except NonFiniteError:
        status = rec.nonfinite(lam)
    return rec.finish(status, x)


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------

def run_baseline(alg: str, P: SplitInclusion, cfg: SolverConfig) -> SolverRun:
    """Reference methods.

    ``tseng``
        ``y = J(x - lam B x)``, ``x+ = y - lam B y + lam B x`` (two forward calls).
    ``forward_backward``
        ``x+ = J(x - lam B x [- lam C x])``.
    ``proximal_point``
        ``x+ = J(x)``; ``B`` must be the zero operator.
    ``projected_reflected_gradient``
        ``x+ = P_C(x - lam B(2x - x_prev))``; ``A`` must be a normal cone.
    ``popov``
        ``y+ = y - lam B x``, ``x+ = y+ - lam B x`` with
        ``y_0 = x_0 + lam B(x_{-1})``; ``A`` must be zero.
    """
    if alg not in BASELINES:
        raise ConfigurationError(f"unknown baseline {alg!r}; known: {BASELINES}")
    if cfg.step.kind == "linesearch":
        raise ConfigurationError("baselines take a constant step or a schedule")
    if alg == "proximal_point" and not (P.B.is_zero and (P.C is None or P.C.is_zero)):
        raise ConfigurationError("proximal_point needs B = 0")
    if alg == "projected_reflected_gradient":
        if P.A.kind not in ("normal_cone", "zero"):
            raise ConfigurationError("projected_reflected_gradient needs A to be a normal cone")
        if P.C is not None:
            raise ConfigurationError("projected_reflected_gradient handles two operators only")
    if alg == "popov":
        if P.A.kind != "zero":
            raise ConfigurationError("popov needs A = 0")
        if P.C is not None:
            raise ConfigurationError("popov handles two operators only")
        if cfg.step.kind != "constant":
            raise ConfigurationError("popov needs a constant step")

    x, x_prev = _start(P, cfg)
    lam0 = cfg.step.previous()
    rec = _Recorder(alg, P, cfg, x, x_prev, lam0, aux=alg in ("tseng", "popov"))
    status, lam = "max_iters", lam0

    def F(v):
        out = rec.B(v)
        if P.C is not None:
            out = out + rec.C(v)
        return out

    try:
        if alg == "popov":
            y = x + lam0 * rec.B(x_prev)
        for k in range(cfg.max_iters):
            lam = cfg.step.at(k)
            z = None
            if alg == "tseng":
                Fx = F(x)
                z = rec.J(lam, x - lam * Fx)
                x_next = z - lam * F(z) + lam * Fx
            elif alg == "forward_backward":
                v = x - lam * rec.B(x)
                if P.C is not None:
                    v = v - lam * rec.C(x)
                x_next = rec.J(lam, v)
            elif alg == "proximal_point":
                x_next = rec.J(lam, x)
            elif alg == "projected_reflected_gradient":
                x_next = rec.J(lam, x - lam * rec.B(2.0 * x - x_prev))
            else:
                Bx = rec.B(x)
                y = y - lam * Bx
                x_next = y - lam * Bx
                z = y
            x_next = as_vector(x_next)
            stop = rec.record(k, x_next, lam, x, z_next=z)
            x_prev, x = x, x_next
            if stop:
                status = stop
                break
    except NonFiniteError:
        status = rec.nonfinite(lam)
    return rec.finish(status, x)


# --------------------------------------------------------------------------
# step-size bounds
# --------------------------------------------------------------------------

def _need(constants, name: str) -> float:
    value = constants.get(name) if isinstance(constants, dict) else getattr(constants, name)
    if value is None:
        raise ConfigurationError(f"constant {name} is required")
    value = float(value)
    if value < 0:
        raise ConfigurationError(f"constant {name} must be nonnegative")
    return value


def _inv(num: float, den: float) -> float:
    if num <= 0:
        return 0.0
    return math.inf if den == 0 else num / den


def max_stepsize(alg: str, constants, alpha: float = 0.0, beta: float = 1.0,
                 op_class: str = "lipschitz") -> float:
    """Supremum of admissible constant steps (exclusive bound).

    Returns ``0.0`` when ``(alpha, beta)`` admits no step at all.

    =========================================  ==========================================
    method                                     bound
    =========================================  ==========================================
    forb, stochastic_forb, popov,              ``1/(2L)``
    projected_reflected_gradient
    relaxed_inertial, lipschitz                ``min((2-b-ab-2a)/(2L), (1-a-ab)/(bL))``
    relaxed_inertial, cocoercive (B 1/L-coco)  ``min((2-b-ab+2a)/(2L), (1-a+ab)/(bL))``
                                               and needs ``a < (2-b)/(2+b)``
    forb3                                      ``2/(4 L1 + L2)``
    tseng                                      ``1/L``
    forward_backward                           ``2/L`` (cocoercive), none otherwise
    proximal_point                             unbounded
    =========================================  ==========================================
    """
    if op_class not in ("lipschitz", "cocoercive"):
        raise ConfigurationError(f"unknown operator class {op_class!r}")
    if alg in ("forb", "stochastic_forb", "popov", "projected_reflected_gradient"):
        return _inv(1.0, 2.0 * _need(constants, "L"))
    if alg == "relaxed_inertial":
        if not 0 <= alpha < 1:
            raise ParameterError("alpha must lie in [0, 1)")
        if not 0 < beta <= 1:
            raise ParameterError("beta must lie in (0, 1]")
        L = _need(constants, "L")
        a, b = alpha, beta
        if op_class == "lipschitz":
            first, second = 2 - b - a * b - 2 * a, 1 - a - a * b
        else:
            if not a < (2 - b) / (2 + b):
                return 0.0
            first, second = 2 - b - a * b + 2 * a, 1 - a + a * b
        if first <= 0 or second <= 0:
            return 0.0
        return min(_inv(first, 2 * L), _inv(second, b * L))
    if alg == "forb3":
        return _inv(2.0, 4.0 * _need(constants, "L1") + _need(constants, "L2"))
    if alg == "tseng":
        return _inv(1.0, _need(constants, "L"))
    if alg == "forward_backward":
        L = _need(constants, "L")
        return _inv(2.0, L) if op_class == "cocoercive" else 0.0
    if alg == "proximal_point":
        return math.inf
    raise ConfigurationError(f"unknown method {alg!r}")
