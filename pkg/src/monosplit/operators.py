"""Oracle abstractions for monotone operators.

A set-valued operator ``A`` is only ever touched through its resolvent
``J_{lam A} = (I + lam A)^{-1}``; a single-valued operator ``B`` is touched
through plain evaluation. Both oracles validate shapes and finiteness at
the boundary so that a NaN surfaces where it is produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConfigurationError,
    ConstructionError,
    NonFiniteError,
    ParameterError,
    SamplingError,
    ShapeError,
)

__all__ = [
    "ResolventOracle",
    "ForwardOracle",
    "Constants",
    "SplitInclusion",
    "as_vector",
    "resolvent_eval",
    "prox_gallery",
    "GALLERY",
    "shifted_resolvent",
    "shifted",
    "moreau_conjugate",
    "block_resolvent",
    "zero_forward",
    "linear_forward",
    "rotation_forward",
    "product_space_embed",
    "saddle_operator",
    "operator_norm",
    "estimate_lipschitz",
    "natural_residual",
]

POWER_MAX_ITERS = 10_000
POWER_RTOL = 1e-10
POWER_SEED = 20190101


def as_vector(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ShapeError(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.isfinite(v).all():
        raise NonFiniteError("vector contains NaN or Inf")
    return v


def _check_out(out, dim: int, label: str) -> np.ndarray:
    out = np.asarray(out, dtype=np.float64)
    if out.shape != (dim,):
        raise ShapeError(f"{label}: oracle returned shape {out.shape}, expected ({dim},)")
    if not np.isfinite(out).all():
        raise NonFiniteError(f"{label}: oracle returned a non-finite value")
    return out


@dataclass(frozen=True)
class ResolventOracle:
    """Maximally monotone ``A`` exposed through ``(lam, x) -> J_{lam A}(x)``.

    ``kind`` is a structural tag used by methods with preconditions:
    ``"zero"`` for the zero operator, ``"normal_cone"`` when the resolvent is
    a metric projection (independent of ``lam``), ``"general"`` otherwise.
    """

    dim: int
    fn: Callable[[float, np.ndarray], np.ndarray]
    label: str = "A"
    kind: str = "general"
    formula: str = ""

    def __call__(self, lam: float, x) -> np.ndarray:
        if not lam > 0:
            raise ParameterError(f"{self.label}: resolvent scale must be positive, got {lam}")
        x = as_vector(x, self.dim)
        return _check_out(self.fn(float(lam), x), self.dim, self.label)


@dataclass(frozen=True)
class ForwardOracle:
    """Single-valued monotone ``B`` with advisory structural constants.

    The constants are trusted by solvers and step-size rules; they are not
    proved here. Use :func:`estimate_lipschitz` to spot-check them.
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: Optional[float] = None
    cocoercivity: Optional[float] = None
    strong_monotonicity: Optional[float] = None
    label: str = "B"
    is_zero: bool = False

    def __call__(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        return _check_out(self.fn(x), self.dim, self.label)


@dataclass(frozen=True)
class Constants:
    L: Optional[float] = None
    L1: Optional[float] = None
    L2: Optional[float] = None
    m: Optional[float] = None

    def as_dict(self) -> dict:
        return {"L": self.L, "L1": self.L1, "L2": self.L2, "m": self.m}


def natural_residual(A: ResolventOracle, B: ForwardOracle, x, lam: float = 1.0,
                     C: Optional[ForwardOracle] = None) -> float:
    """``||x - J_{lam A}(x - lam B(x) - lam C(x))||``; zero exactly at solutions."""
    x = as_vector(x, A.dim)
    v = x - lam * B(x)
    if C is not None:
        v = v - lam * C(x)
    return float(np.linalg.norm(x - A(lam, v)))


@dataclass(frozen=True)
class SplitInclusion:
    """The inclusion ``0 in (A + B [+ C])(x)``.

    When ``reference_solution`` is given it is certified at construction:
    the natural residual (unit scale) must not exceed ``1e-8``.
    """

    A: ResolventOracle
    B: ForwardOracle
    C: Optional[ForwardOracle] = None
    reference_solution: Optional[np.ndarray] = None
    constants: Constants = field(default_factory=Constants)

    def __post_init__(self):
        dims = {self.A.dim, self.B.dim} | ({self.C.dim} if self.C is not None else set())
        if len(dims) != 1:
            raise ShapeError(f"component dimensions differ: {sorted(dims)}")
        if self.reference_solution is not None:
            ref = as_vector(self.reference_solution, self.A.dim)
            ref.setflags(write=False)
            object.__setattr__(self, "reference_solution", ref)
            r = natural_residual(self.A, self.B, ref, 1.0, self.C)
            if r > 1e-8:
                raise ConstructionError(
                    f"reference solution has natural residual {r:.3e} > 1e-8")

    @property
    def dim(self) -> int:
        return self.A.dim

    def residual(self, x, lam: float = 1.0) -> float:
        return natural_residual(self.A, self.B, x, lam, self.C)


def resolvent_eval(A: ResolventOracle, lam: float, x) -> np.ndarray:
    """Evaluate ``J_{lam A}(x)``.

    Raises :class:`ParameterError` for ``lam <= 0`` and :class:`ShapeError`
    when ``x`` does not match ``A.dim``.
    """
    return A(lam, x)


# --------------------------------------------------------------------------
# resolvent gallery
# --------------------------------------------------------------------------

def _param_dim(params: dict, *arrays) -> int:
    for a in arrays:
        a = np.asarray(a)
        if a.ndim >= 1:
            return a.shape[0]
    if "dim" not in params:
        raise ParameterError("'dim' is required when all parameters are scalars")
    dim = int(params["dim"])
    if dim < 1:
        raise ParameterError(f"dim must be positive, got {dim}")
    return dim


def _zero(params: dict) -> ResolventOracle:
    """A = 0, so J_{lam A} = I."""
    dim = _param_dim(params)
    return ResolventOracle(dim, lambda lam, x: x.copy(), "zero", "zero", "J(x) = x")


def _l1_norm(params: dict) -> ResolventOracle:
    """A = d(w ||.||_1): soft thresholding at level lam * w."""
    w = np.asarray(params.get("weight", 1.0), dtype=np.float64)
    dim = _param_dim(params, w)
    if np.any(w < 0):
        raise ParameterError("l1 weight must be nonnegative")

    def fn(lam, x):
        return np.sign(x) * np.maximum(np.abs(x) - lam * w, 0.0)

    return ResolventOracle(dim, fn, "l1_norm", "general",
                           "J(x) = sign(x) * max(|x| - lam*w, 0)")


def _box_indicator(params: dict) -> ResolventOracle:
    """A = N_[lo, hi]: clipping, independent of lam."""
    lo = np.asarray(params.get("lower", -np.inf), dtype=np.float64)
    hi = np.asarray(params.get("upper", np.inf), dtype=np.float64)
    dim = _param_dim(params, lo, hi)
    lo = np.broadcast_to(lo, (dim,)).copy()
    hi = np.broadcast_to(hi, (dim,)).copy()
    if np.any(lo > hi):
        raise ParameterError("box lower bound exceeds upper bound")
    return ResolventOracle(dim, lambda lam, x: np.clip(x, lo, hi), "box_indicator",
                           "normal_cone", "J(x) = clip(x, lower, upper)")


def _halfspace_indicator(params: dict) -> ResolventOracle:
    """A = N_{x : <a, x> <= b}: projection onto the halfspace."""
    a = np.asarray(params["normal"], dtype=np.float64)
    b = float(params.get("offset", 0.0))
    dim = _param_dim(params, a)
    aa = float(a @ a)
    if aa == 0.0:
        raise ParameterError("halfspace normal must be nonzero")

    def fn(lam, x):
        excess = float(a @ x) - b
        return x - (excess / aa) * a if excess > 0 else x.copy()

    return ResolventOracle(dim, fn, "halfspace_indicator", "normal_cone",
                           "J(x) = x - max(<a,x> - b, 0) a / ||a||^2")


def _quadratic(params: dict) -> ResolventOracle:
    """A(x) = Q x - c with Q symmetric PSD; J solves (I + lam Q) u = x + lam c."""
    Q = np.asarray(params.get("Q", 1.0), dtype=np.float64)
    c = params.get("c")
    dim = _param_dim(params, *([Q] if Q.ndim == 2 else []), *([] if c is None else [c]))
    if Q.ndim == 0:
        Q = float(Q) * np.eye(dim)
    if Q.shape != (dim, dim):
        raise ShapeError(f"Q has shape {Q.shape}, expected ({dim}, {dim})")
    if not np.allclose(Q, Q.T):
        raise ParameterError("Q must be symmetric")
    if np.linalg.eigvalsh(Q).min() < -1e-12:
        raise ParameterError("Q must be positive semidefinite")
    c = np.zeros(dim) if c is None else as_vector(c, dim)
    Q = Q.copy()
    eye = np.eye(dim)

    def fn(lam, x):
        return np.linalg.solve(eye + lam * Q, x + lam * c)

    return ResolventOracle(dim, fn, "quadratic", "general",
                           "J(x) = (I + lam Q)^{-1} (x + lam c)")


def _scaled_identity_shift(params: dict) -> ResolventOracle:
    """A(x) = m (x - center); J(x) = (x + lam m center) / (1 + lam m)."""
    m = float(params["m"])
    if m < 0:
        raise ParameterError("m must be nonnegative")
    center = params.get("center", 0.0)
    center = np.asarray(center, dtype=np.float64)
    dim = _param_dim(params, center)
    center = np.broadcast_to(center, (dim,)).copy()

    def fn(lam, x):
        return (x + lam * m * center) / (1.0 + lam * m)

    return ResolventOracle(dim, fn, "scaled_identity_shift", "general",
                           "J(x) = (x + lam*m*center) / (1 + lam*m)")


GALLERY: dict[str, Callable[[dict], ResolventOracle]] = {
    "zero": _zero,
    "l1_norm": _l1_norm,
    "box_indicator": _box_indicator,
    "halfspace_indicator": _halfspace_indicator,
    "quadratic": _quadratic,
    "scaled_identity_shift": _scaled_identity_shift,
}


def prox_gallery(name: str, params: Optional[dict] = None) -> ResolventOracle:
    """Build a closed-form resolvent by name.

    Parameters
    ----------
    name : str
        One of ``zero``, ``l1_norm``, ``box_indicator``,
        ``halfspace_indicator``, ``quadratic``, ``scaled_identity_shift``.
    params : dict
        Entry-specific parameters. Scalars broadcast to ``params["dim"]``.

        - ``l1_norm``: ``weight`` (scalar or vector, default 1)
        - ``box_indicator``: ``lower``, ``upper``
        - ``halfspace_indicator``: ``normal`` (vector a), ``offset`` (b)
        - ``quadratic``: ``Q`` (matrix or scalar), ``c`` (vector)
        - ``scaled_identity_shift``: ``m``, ``center``

    Notes
    -----
    For a subdifferential ``d f`` the resolvent of its inverse ``d f*`` is
    available through :func:`moreau_conjugate`, using
    ``J_{lam df*}(x) = x - lam J_{(1/lam) df}(x / lam)``.
    """
    if name not in GALLERY:
        raise ConfigurationError(f"unknown gallery entry {name!r}; known: {sorted(GALLERY)}")
    return GALLERY[name](dict(params or {}))


def shifted_resolvent(A: ResolventOracle, m: float, lam: float, x) -> np.ndarray:
    """Evaluate ``J_{lam (A + m I)}(x)`` through ``J_{lam A}``.

    Uses ``J_{lam (A + mI)}(x) = J_{lam' A}(x')`` with
    ``lam' = lam / (1 + lam m)`` and ``x' = x / (1 + lam m)``.
    """
    if not m > 0:
        raise ParameterError(f"shift m must be positive, got {m}")
    if not lam > 0:
        raise ParameterError(f"resolvent scale must be positive, got {lam}")
    s = 1.0 + lam * m
    return A(lam / s, as_vector(x, A.dim) / s)


def shifted(A: ResolventOracle, m: float) -> ResolventOracle:
    """Resolvent oracle of ``A + m I``."""
    if not m > 0:
        raise ParameterError(f"shift m must be positive, got {m}")
    return ResolventOracle(A.dim, lambda lam, x: shifted_resolvent(A, m, lam, x),
                           f"{A.label}+{m}I", "general", f"J_(A+mI), m={m}")


def moreau_conjugate(A: ResolventOracle) -> ResolventOracle:
    """Resolvent of ``A^{-1}`` from that of ``A`` via Moreau's decomposition."""
    if A.kind == "zero":
        # the inverse of 0 is N_{0}; its resolvent projects onto the origin
        return ResolventOracle(A.dim, lambda lam, x: np.zeros_like(x), f"{A.label}*",
                               "normal_cone", "J(x) = 0")

    def fn(lam, x):
        return x - lam * A(1.0 / lam, x / lam)

    return ResolventOracle(A.dim, fn, f"{A.label}*", "general",
                           "J(x) = x - lam J_{A/lam}(x/lam)")


def block_resolvent(*blocks: ResolventOracle) -> ResolventOracle:
    """Resolvent of the block-diagonal operator ``diag(A_1, ..., A_p)``."""
    sizes = [b.dim for b in blocks]
    cuts = np.cumsum(sizes)[:-1]

    def fn(lam, x):
        parts = np.split(x, cuts)
        return np.concatenate([b(lam, p) for b, p in zip(blocks, parts)])

    kinds = {b.kind for b in blocks}
    if kinds == {"zero"}:
        kind = "zero"
    elif kinds <= {"zero", "normal_cone"}:
        kind = "normal_cone"
    else:
        kind = "general"
    label = "diag(" + ", ".join(b.label for b in blocks) + ")"
    return ResolventOracle(int(sum(sizes)), fn, label, kind, "blockwise")


# --------------------------------------------------------------------------
# forward operators
# --------------------------------------------------------------------------

def zero_forward(dim: int) -> ForwardOracle:
    return ForwardOracle(dim, lambda x: np.zeros_like(x), 0.0, None, 0.0, "zero", True)


def operator_norm(K, max_iters: int = POWER_MAX_ITERS, rtol: float = POWER_RTOL,
                  seed: int = POWER_SEED) -> float:
    """Spectral norm of a dense matrix by power iteration on ``K^T K``.

    The start vector is drawn from a fixed seed so the constant is
    deterministic. Iteration stops when the Rayleigh quotient changes by
    less than ``rtol`` relative.
    """
    K = np.atleast_2d(np.asarray(K, dtype=np.float64))
    if not np.any(K):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(K.shape[1])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iters):
        w = K.T @ (K @ v)
        est = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector in the kernel; restart deterministically
            v = np.ones(K.shape[1]) / np.sqrt(K.shape[1])
            continue
        v = w / nw
        if abs(est - prev) <= rtol * abs(est):
            break
        prev = est
    # final Rayleigh quotient with the converged vector
    Kv = K @ v
    return float(np.sqrt(Kv @ Kv))


def linear_forward(M, q=None, label: str = "affine", lipschitz: Optional[float] = None,
                   cocoercivity: Optional[float] = None) -> ForwardOracle:
    """``B(x) = M x + q``.

    The Lipschitz constant defaults to ``||M||_2`` by power iteration. For a
    symmetric PSD ``M`` the cocoercivity ``1/||M||`` is declared as well.
    """
    M = np.atleast_2d(np.asarray(M, dtype=np.float64)).copy()
    n = M.shape[0]
    if M.shape != (n, n):
        raise ShapeError(f"M must be square, got {M.shape}")
    q = np.zeros(n) if q is None else as_vector(q, n).copy()
    L = operator_norm(M) if lipschitz is None else float(lipschitz)
    if cocoercivity is None and L > 0 and np.array_equal(M, M.T):
        if np.linalg.eigvalsh(M).min() >= 0:
            cocoercivity = 1.0 / L
    return ForwardOracle(n, lambda x: M @ x + q, L, cocoercivity, None, label,
                         not np.any(M) and not np.any(q))


def rotation_forward(n: int, scale: float = 1.0) -> ForwardOracle:
    """``B(z1, z2) = scale * (z2, -z1)`` on ``R^n x R^n``."""
    if n < 1:
        raise ParameterError("n must be positive")

    def fn(z):
        z1, z2 = z[:n], z[n:]
        return scale * np.concatenate([z2, -z1])

    return ForwardOracle(2 * n, fn, abs(scale), None, 0.0, "rotation", scale == 0)


# --------------------------------------------------------------------------
# structural constructors
# --------------------------------------------------------------------------

def product_space_embed(A: ResolventOracle, Binv: ResolventOracle, K) -> SplitInclusion:
    """Embed ``0 in (A + K^* B K)(x)`` in the product space.

    The set-valued part is ``diag(A, B^{-1})`` (resolvent applied
    blockwise); the forward part is the skew map ``(x, y) -> (K^T y, -K x)``
    whose Lipschitz constant is ``||K||_2``.
    """
    K = np.atleast_2d(np.asarray(K, dtype=np.float64)).copy()
    n1, n2 = A.dim, Binv.dim
    if K.shape != (n2, n1):
        raise ShapeError(f"K has shape {K.shape}, expected ({n2}, {n1})")
    L = operator_norm(K)

    def fn(w):
        x, y = w[:n1], w[n1:]
        return np.concatenate([K.T @ y, -(K @ x)])

    F = ForwardOracle(n1 + n2, fn, L, None, 0.0, "skew", not np.any(K))
    return SplitInclusion(block_resolvent(A, Binv), F, constants=Constants(L=L))


def saddle_operator(grad_x: Callable, grad_y: Callable, prox_g: ResolventOracle,
                    prox_f: ResolventOracle, lipschitz: Optional[float] = None) -> SplitInclusion:
    """Optimality system of ``min_x max_y g(x) + Phi(x, y) - f(y)``.

    ``grad_x(x, y)`` and ``grad_y(x, y)`` are the partial gradients of
    ``Phi``; the forward part is ``(grad_x Phi, -grad_y Phi)``.
    """
    n1, n2 = prox_g.dim, prox_f.dim

    def fn(w):
        x, y = w[:n1], w[n1:]
        gx = np.asarray(grad_x(x, y), dtype=np.float64).reshape(-1)
        gy = np.asarray(grad_y(x, y), dtype=np.float64).reshape(-1)
        if gx.shape != (n1,) or gy.shape != (n2,):
            raise ShapeError("partial gradients do not match the prox dimensions")
        return np.concatenate([gx, -gy])

    F = ForwardOracle(n1 + n2, fn, lipschitz, None, 0.0, "saddle")
    return SplitInclusion(block_resolvent(prox_g, prox_f), F, constants=Constants(L=lipschitz))


def estimate_lipschitz(B: ForwardOracle, seed: int = 0, trials: int = 100,
                       scale: float = 1.0, sampler: Optional[Callable] = None) -> float:
    """Largest sampled ratio ``||B(x) - B(y)|| / ||x - y||``.

    This is a lower bound on the true constant. ``sampler(rng)`` may supply
    points; by default they are standard normal times ``scale``. Coincident
    pairs are skipped; if every pair coincides :class:`SamplingError` is raised.
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    draw = sampler or (lambda r: scale * r.standard_normal(B.dim))
    best, used = 0.0, 0
    for _ in range(trials):
        x, y = as_vector(draw(rng), B.dim), as_vector(draw(rng), B.dim)
        d = np.linalg.norm(x - y)
        if d == 0.0:
            continue
        used += 1
        best = max(best, float(np.linalg.norm(B(x) - B(y)) / d))
    if used == 0:
        raise SamplingError("all sampled pairs were degenerate")
    return best
