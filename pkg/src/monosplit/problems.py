"""Reproducible test problems with certified reference solutions.

Reference solutions always come from a method other than the ones under
test: projected (or proximal) extragradient for variational problems and
plain proximal gradient for composite minimization. Each is certified by a
componentwise optimality check before the instance is returned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ConstructionError, ParameterError
from .operators import (
    Constants,
    ForwardOracle,
    ResolventOracle,
    SplitInclusion,
    linear_forward,
    operator_norm,
    product_space_embed,
    prox_gallery,
    rotation_forward,
    shifted,
)

__all__ = [
    "ProblemInstance",
    "make_rotation",
    "make_split_rotation",
    "make_affine_vi",
    "make_strongly_monotone",
    "make_composite_min",
    "make_three_operator",
    "make_saddle_bilinear",
    "extragradient_solve",
    "box_kkt_residual",
    "PROBLEMS",
    "build_problem",
    "instance_to_dict",
    "instance_from_dict",
    "instance_to_json",
    "instance_from_json",
]

CERT_TOL = 1e-10
ORACLE_TOL = 1e-12
DEFAULT_BOX = 10.0


@dataclass(frozen=True)
class ProblemInstance:
    inclusion: SplitInclusion
    name: str
    dims: dict
    generator_seed: Optional[int] = None
    notes: str = ""
    params: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    x0: Optional[np.ndarray] = None
    parts: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return self.inclusion.dim

    @property
    def solution(self) -> Optional[np.ndarray]:
        return self.inclusion.reference_solution

    @property
    def constants(self) -> Constants:
        return self.inclusion.constants


def box_kkt_residual(x, Fx, lower, upper) -> float:
    """``max_i |x_i - clip(x_i - F_i, lower_i, upper_i)|``.

    Zero exactly when ``-F(x)`` lies in the normal cone of the box at ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    return float(np.max(np.abs(x - np.clip(x - np.asarray(Fx), lower, upper)), initial=0.0))


def extragradient_solve(A: ResolventOracle, F: Callable, x0, tau: float,
                        tol: float = ORACLE_TOL, max_iters: int = 2_000_000,
                        check_every: int = 10) -> tuple[np.ndarray, int]:
    """Extragradient with resolvent steps for ``0 in A(x) + F(x)``.

    ``y = J_{tau A}(x - tau F(x))``, ``x+ = J_{tau A}(x - tau F(y))``.
    Stops when the unit-scale natural residual drops to ``tol``. Used only to
    produce reference solutions.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    for k in range(max_iters):
        if k % check_every == 0:
            if np.max(np.abs(x - A(1.0, x - F(x))), initial=0.0) <= tol:
                return x, k
        y = A(tau, x - tau * F(x))
        x = A(tau, x - tau * F(y))
    raise ConstructionError(f"extragradient oracle did not reach {tol:g} in {max_iters} steps")


def _rng(seed) -> np.random.Generator:
    if seed is None:
        raise ParameterError("a generator seed is required")
    return np.random.default_rng(int(seed))


def _solve_box_vi(name, M, q, lo, hi) -> np.ndarray:
    """Reference solution of ``0 in N_box(x) + M x + q`` by extragradient, KKT-certified."""
    n = M.shape[0]
    LF = operator_norm(M)
    tau = 0.5 / LF if LF > 0 else 1.0
    proj = prox_gallery("box_indicator", {"lower": lo, "upper": hi})
    F = (lambda x: M @ x + q)
    x_ref, _ = extragradient_solve(proj, F, np.zeros(n), tau)
    kkt = box_kkt_residual(x_ref, F(x_ref), lo, hi)
    if kkt > CERT_TOL:
        raise ConstructionError(f"{name}: KKT residual {kkt:.3e} exceeds {CERT_TOL:g}")
    return x_ref


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def make_rotation(n: int = 1, seed=None) -> ProblemInstance:
    """``A = 0``, ``B(z1, z2) = (z2, -z1)`` on ``R^n x R^n``.

    ``B`` is skew, norm preserving and 1-Lipschitz; the origin is the unique
    solution. Forward-backward diverges on it for every step size.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    A = prox_gallery("zero", {"dim": 2 * n})
    inc = SplitInclusion(A, rotation_forward(n), None, np.zeros(2 * n), Constants(L=1.0))
    x0 = np.zeros(2 * n)
    x0[0] = 1.0
    notes = ("<z, B z> = 0 and ||B z|| = ||z||; Tseng contracts by sqrt(1 - lam^2 + lam^4) "
             "per step, forward-backward grows by sqrt(1 + lam^2)")
    return ProblemInstance(inc, "rotation", {"n": n, "dim": 2 * n}, None, notes, {"n": n},
                           {}, x0)


def make_split_rotation(n: int = 1, seed=None) -> ProblemInstance:
    """Rotation problem with ``B = (B_1 + B_2) / 2`` for the stochastic variant.

    ``B_1(z1, z2) = (2 z2, 0)`` and ``B_2(z1, z2) = (0, -2 z1)``; each part is
    2-Lipschitz. The parts are stored in ``instance.parts``.
    """
    base = make_rotation(n)

    def b1(z):
        return np.concatenate([2.0 * z[n:], np.zeros(n)])

    def b2(z):
        return np.concatenate([np.zeros(n), -2.0 * z[:n]])

    parts = (ForwardOracle(2 * n, b1, 2.0, None, None, "B1"),
             ForwardOracle(2 * n, b2, 2.0, None, None, "B2"))
    inc = SplitInclusion(base.inclusion.A, base.inclusion.B, None, base.solution,
                         Constants(L=2.0))
    return ProblemInstance(inc, "split_rotation", base.dims, None,
                           "rotation with B = (B1 + B2)/2, parts 2-Lipschitz", {"n": n}, {},
                           base.x0, parts)


def _monotone_matrix(rng, n, skew_weight):
    G = rng.standard_normal((n, n))
    S = 0.5 * (G - G.T)
    P = rng.standard_normal((n, n))
    return skew_weight * S + (1.0 - skew_weight) * (P.T @ P)


def make_affine_vi(seed=0, n: int = 4, skew_weight: float = 0.5, box: float = DEFAULT_BOX,
                   offset: bool = True) -> ProblemInstance:
    """Box-constrained affine VI: ``A = N_[-box, box]^n``, ``B(x) = M x + q``.

    ``M = w S + (1 - w) P^T P`` with ``S`` skew and ``P`` Gaussian, so ``B``
    is monotone. With ``offset=False`` the offset ``q`` is zero.
    """
    if n < 1:
        raise ParameterError("n must be positive")
    if not 0 <= skew_weight <= 1:
        raise ParameterError("skew_weight must lie in [0, 1]")
    rng = _rng(seed)
    M = _monotone_matrix(rng, n, skew_weight)
    q = 5.0 * rng.standard_normal(n)
    if not offset:
        q = np.zeros(n)
    x0 = rng.uniform(-1.0, 1.0, n)
    lo, hi = np.full(n, -float(box)), np.full(n, float(box))
    A = prox_gallery("box_indicator", {"lower": lo, "upper": hi})
    L = operator_norm(M)
    params = {"n": n, "skew_weight": skew_weight, "box": box, "offset": offset}
    x_ref = _solve_box_vi("affine_vi", M, q, lo, hi)
    inc = SplitInclusion(A, linear_forward(M, q, lipschitz=L), None, x_ref, Constants(L=L))
    return ProblemInstance(inc, "affine_vi", {"n": n}, seed, "monotone affine VI on a box",
                           params, {"M": M, "q": q, "lower": lo, "upper": hi}, x0)


def make_strongly_monotone(seed=0, n: int = 3, m: float = 0.5, L: float = 2.0,
                           skew_weight: float = 0.5, box: Optional[float] = DEFAULT_BOX,
                           offset: bool = True) -> ProblemInstance:
    """``A = N_box + m I`` (m-strongly monotone), ``B(x) = M x + q`` with ``||M|| = L``.

    The resolvent of ``A`` is evaluated through the shifted-resolvent
    identity. ``box=None`` drops the constraint.
    """
    if not 0 < m <= L:
        raise ParameterError("need 0 < m <= L")
    rng = _rng(seed)
    M = _monotone_matrix(rng, n, skew_weight)
    M = M * (L / operator_norm(M))
    q = 5.0 * rng.standard_normal(n) if offset else np.zeros(n)
    x0 = rng.uniform(-1.0, 1.0, n)
    if box is None:
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
        A = prox_gallery("scaled_identity_shift", {"m": m, "center": np.zeros(n)})
    else:
        lo, hi = np.full(n, -float(box)), np.full(n, float(box))
        A = shifted(prox_gallery("box_indicator", {"lower": lo, "upper": hi}), m)
    params = {"n": n, "m": m, "L": L, "skew_weight": skew_weight, "box": box, "offset": offset}
    B = linear_forward(M, q, lipschitz=L)
    # the shift m I is moved into the forward part for the oracle
    x_ref = _solve_box_vi("strongly_monotone", M + m * np.eye(n), q, lo, hi)
    inc = SplitInclusion(A, B, None, x_ref, Constants(L=float(L), m=float(m)))
    return ProblemInstance(inc, "strongly_monotone", {"n": n}, seed,
                           "m-strongly monotone A, monotone affine B", params,
                           {"M": M, "q": q, "lower": lo, "upper": hi}, x0)


def make_composite_min(seed=0, rows: int = 10, cols: int = 20, tau: float = 0.1,
                       zero_rhs: bool = False) -> ProblemInstance:
    """``min tau ||x||_1 + 0.5 ||P x - b||^2`` as ``0 in (d f + grad g)(x)``.

    The reference solution is computed by proximal gradient with step
    ``1/L``, ``L = ||P||^2``, run to a fixed-point residual of ``1e-12``.
    """
    if rows < 1 or cols < 1:
        raise ParameterError("rows and cols must be positive")
    if not tau > 0:
        raise ParameterError("tau must be positive")
    rng = _rng(seed)
    P = rng.standard_normal((rows, cols))
    b = np.zeros(rows) if zero_rhs else rng.standard_normal(rows)
    x0 = np.zeros(cols)
    L = operator_norm(P) ** 2
    H, h = P.T @ P, P.T @ b
    A = prox_gallery("l1_norm", {"weight": tau, "dim": cols})
    B = linear_forward(H, -h, "grad_least_squares", lipschitz=L, cocoercivity=1.0 / L)

    step = 1.0 / L
    x = np.zeros(cols)
    for _ in range(5_000_000):
        x_new = A(step, x - step * (H @ x - h))
        if np.max(np.abs(x_new - x)) <= ORACLE_TOL:
            x = x_new
            break
        x = x_new
    else:
        raise ConstructionError("proximal-gradient oracle did not converge")
    grad = H @ x - h
    kkt = float(np.max(np.abs(x - A(1.0, x - grad))))
    if kkt > CERT_TOL:
        raise ConstructionError(f"composite_min: optimality residual {kkt:.3e}")
    params = {"rows": rows, "cols": cols, "tau": tau, "zero_rhs": zero_rhs}
    inc = SplitInclusion(A, B, None, x, Constants(L=L))
    return ProblemInstance(inc, "composite_min", {"rows": rows, "cols": cols}, seed,
                           "l1-regularized least squares; B is (1/L)-cocoercive",
                           params, {"P": P, "b": b}, x0)


def make_three_operator(seed=0, n: int = 4, L1: float = 1.0, box: float = DEFAULT_BOX,
                        center=None) -> ProblemInstance:
    """``A = N_box``, ``B`` = rotation scaled to ``L1``, ``C(x) = Q (x - c)``.

    ``Q`` is symmetric positive definite, so ``C`` is ``1/L2``-cocoercive
    with ``L2 = ||Q||``. Passing ``center`` fixes ``c`` instead of drawing it.
    """
    if n < 2 or n % 2:
        raise ParameterError("n must be an even integer >= 2")
    if L1 < 0:
        raise ParameterError("L1 must be nonnegative")
    rng = _rng(seed)
    G = rng.standard_normal((n, n))
    Q = G.T @ G / n + np.eye(n)
    c = rng.uniform(-1.5 * box, 1.5 * box, n)
    if center is not None:
        c = np.broadcast_to(np.asarray(center, dtype=np.float64), (n,)).copy()
    x0 = rng.uniform(-1.0, 1.0, n)
    L2 = operator_norm(Q)
    if not 2.0 / (4 * L1 + L2) > 1.0 / (2 * (L1 + L2)):
        raise ConstructionError("three-operator bound does not improve on the two-operator one")
    lo, hi = np.full(n, -float(box)), np.full(n, float(box))
    A = prox_gallery("box_indicator", {"lower": lo, "upper": hi})
    half = n // 2
    R = np.block([[np.zeros((half, half)), np.eye(half)],
                  [-np.eye(half), np.zeros((half, half))]]) * L1
    B = rotation_forward(half, L1)
    C = linear_forward(Q, -Q @ c, "grad_quadratic", lipschitz=L2, cocoercivity=1.0 / L2)
    x_ref = _solve_box_vi("three_operator", R + Q, -Q @ c, lo, hi)
    params = {"n": n, "L1": L1, "box": box,
              "center": None if center is None else np.asarray(c).tolist()}
    inc = SplitInclusion(A, B, C, x_ref, Constants(L=L1 + L2, L1=L1, L2=L2))
    return ProblemInstance(inc, "three_operator", {"n": n}, seed,
                           "box + scaled rotation + cocoercive quadratic gradient", params,
                           {"Q": Q, "center": c, "lower": lo, "upper": hi}, x0)


def make_saddle_bilinear(seed=0, n1: int = 3, n2: int = 2, coupling: float = 1.0,
                         primal_center: bool = True, dual: str = "l1") -> ProblemInstance:
    """``min_x max_y g(x) + <K x, y> - f(y)``.

    ``g(x) = 0.5 ||x - a||^2`` (``a = 0`` when ``primal_center`` is false);
    ``f = ||.||_1`` for ``dual="l1"`` or ``0.5 ||.||^2`` for ``dual="quadratic"``.
    The reference saddle point comes from a long proximal extragradient run.
    """
    if n1 < 1 or n2 < 1:
        raise ParameterError("dimensions must be positive")
    if dual not in ("l1", "quadratic"):
        raise ConfigurationError(f"unknown dual regularizer {dual!r}")
    rng = _rng(seed)
    K = coupling * rng.standard_normal((n2, n1))
    a = rng.standard_normal(n1) if primal_center else np.zeros(n1)
    x0 = rng.uniform(-1.0, 1.0, n1 + n2)
    Ag = prox_gallery("quadratic", {"Q": 1.0, "c": a})
    Af = (prox_gallery("l1_norm", {"weight": 1.0, "dim": n2}) if dual == "l1"
          else prox_gallery("quadratic", {"Q": 1.0, "dim": n2}))
    emb = product_space_embed(Ag, Af, K)
    L = emb.constants.L
    tau = 0.5 / L if L > 0 else 1.0
    ref, _ = extragradient_solve(emb.A, emb.B, np.zeros(n1 + n2), tau)
    kkt = float(np.max(np.abs(ref - emb.A(1.0, ref - emb.B(ref)))))
    if kkt > CERT_TOL:
        raise ConstructionError(f"saddle_bilinear: optimality residual {kkt:.3e}")
    inc = SplitInclusion(emb.A, emb.B, None, ref, emb.constants)
    params = {"n1": n1, "n2": n2, "coupling": coupling, "primal_center": primal_center,
              "dual": dual}
    return ProblemInstance(inc, "saddle_bilinear", {"n1": n1, "n2": n2}, seed,
                           "bilinear saddle point; forward operator is skew",
                           params, {"K": K, "a": a}, x0)


PROBLEMS: dict[str, Callable[..., ProblemInstance]] = {
    "rotation": make_rotation,
    "split_rotation": make_split_rotation,
    "affine_vi": make_affine_vi,
    "strongly_monotone": make_strongly_monotone,
    "composite_min": make_composite_min,
    "three_operator": make_three_operator,
    "saddle_bilinear": make_saddle_bilinear,
}


def build_problem(name: str, params: Optional[dict] = None, seed=None) -> ProblemInstance:
    if name not in PROBLEMS:
        raise ConfigurationError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}")
    kwargs = dict(params or {})
    if seed is not None:
        kwargs["seed"] = seed
    try:
        return PROBLEMS[name](**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name!r}: {exc}") from None


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def instance_to_dict(inst: ProblemInstance) -> dict:
    """Plain-data view: matrices as row-major nested lists."""
    return {
        "name": inst.name,
        "seed": inst.generator_seed,
        "params": {k: _jsonable(v) for k, v in inst.params.items()},
        "dims": dict(inst.dims),
        "constants": inst.constants.as_dict(),
        "data": {k: _jsonable(v) for k, v in inst.data.items()},
        "reference_solution": _jsonable(inst.solution),
        "x0": _jsonable(inst.x0),
        "notes": inst.notes,
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    """Regenerate from name, params and seed, then verify the stored data bit for bit."""
    params = dict(d.get("params") or {})
    if d["name"] in ("rotation", "split_rotation"):
        inst = build_problem(d["name"], params)
    else:
        inst = build_problem(d["name"], params, d.get("seed"))
    for key, stored in (d.get("data") or {}).items():
        ours = inst.data.get(key)
        if ours is None or not np.array_equal(np.asarray(ours), np.asarray(stored)):
            raise ConstructionError(f"regenerated {key!r} differs from the stored document")
    return inst


def instance_to_json(inst: ProblemInstance, **kwargs) -> str:
    return json.dumps(instance_to_dict(inst), **kwargs)


def instance_from_json(text: str) -> ProblemInstance:
    return instance_from_dict(json.loads(text))
