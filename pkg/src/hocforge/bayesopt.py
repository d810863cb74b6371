"""Black-box maximization over a 4-D box with a GP surrogate and EI.

The surrogate is a squared-exponential GP on inputs normalized to the unit
box, with fixed hyperparameters (length scale 0.2 per dimension, unit
signal variance, jitter 1e-8).  The acquisition is Expected Improvement,
maximized by multistart coordinate-wise golden-section refinement.  All
randomness comes from the caller's generator, so runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr

from .errors import NumericalFailure, ObjectiveError
from .imaging import Placement

NDIM = 4

DEFAULT_LENGTH_SCALE = 0.2
DEFAULT_SIGNAL_VARIANCE = 1.0
DEFAULT_JITTER = 1e-8
MAX_JITTER = 1e-2

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_STEPS = 12  # shrinks the unit interval below 4e-3
_VALUE_AMPLIFICATION = 2.0  # data spread relative to the unit prior variance


@dataclass
class Bounds:
    """Per-dimension (lo, hi) in native units (degrees, scale, px, px)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if self.lo.shape != (NDIM,) or self.hi.shape != (NDIM,):
            raise ValueError(f"bounds must have {NDIM} dimensions")
        if not (self.lo < self.hi).all():
            raise ValueError("each dimension needs lo < hi")

    def normalize(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def denormalize(self, u: np.ndarray) -> np.ndarray:
        return self.lo + np.asarray(u, dtype=np.float64) * (self.hi - self.lo)


@dataclass
class KernelParams:
    length_scales: np.ndarray = field(
        default_factory=lambda: np.full(NDIM, DEFAULT_LENGTH_SCALE)
    )
    signal_variance: float = DEFAULT_SIGNAL_VARIANCE
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        self.length_scales = np.asarray(self.length_scales, dtype=np.float64)
        if (self.length_scales <= 0).any() or self.signal_variance <= 0:
            raise ValueError("length scales and signal variance must be > 0")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


@dataclass
class ObservationSet:
    """Sampled (point, value) pairs; points live in the unit box."""

    points: np.ndarray = field(default_factory=lambda: np.empty((0, NDIM)))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, NDIM)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.values):
            raise ValueError("points and values must have equal length")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class BOConfig:
    budget: int = 30  # GP-guided iterations (M)
    n_init: int = 10  # initial uniform samples
    xi: float = 0.01  # EI exploration offset
    n_restarts: int = 16  # acquisition multistart count

    def __post_init__(self):
        if self.budget < 1 or self.n_init < 1:
            raise ValueError("budget and n_init must be >= 1")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")


@dataclass
class GPPosterior:
    obs: ObservationSet
    params: KernelParams
    chol: Optional[np.ndarray]  # lower factor of K + jitter I (None if no obs)
    alpha: Optional[np.ndarray]
    jitter_used: float
    chol_inv: Optional[np.ndarray] = None  # precomputed L^-1 for fast variance


def kernel(a: np.ndarray, b: np.ndarray, params: KernelParams) -> float:
    """Squared-exponential covariance between two points."""
    d = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) / params.length_scales
    return params.signal_variance * math.exp(-0.5 * float(np.dot(d, d)))


def kernel_matrix(xa: np.ndarray, xb: np.ndarray, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix between two point sets, shape (len(a), len(b))."""
    diff = (xa[:, None, :] - xb[None, :, :]) / params.length_scales
    return params.signal_variance * np.exp(-0.5 * np.sum(diff**2, axis=2))


def gp_fit(obs: ObservationSet, params: KernelParams) -> GPPosterior:
    """Factorize K + jitter I, escalating the jitter tenfold on failure."""
    if len(obs) == 0:
        return GPPosterior(obs, params, None, None, params.jitter)

    k = kernel_matrix(obs.points, obs.points, params)
    jitter = params.jitter
    while True:
        try:
            chol = np.linalg.cholesky(k + jitter * np.eye(len(obs)))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
            if jitter > MAX_JITTER:
                raise NumericalFailure(
                    f"Cholesky failed for {len(obs)} observations "
                    f"even at jitter {MAX_JITTER}"
                )
    alpha = cho_solve((chol, True), obs.values)
    chol_inv = solve_triangular(chol, np.eye(len(obs)), lower=True)
    return GPPosterior(obs, params, chol, alpha, jitter, chol_inv)


def gp_predict_batch(post: GPPosterior, points: np.ndarray):
    """Posterior mean and variance at a batch of points, shape (n, 4)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, NDIM)
    n = len(points)
    if post.chol is None:
        return np.zeros(n), np.full(n, post.params.signal_variance)

    k_star = kernel_matrix(points, post.obs.points, post.params)  # (n, m)
    mu = k_star @ post.alpha
    v = post.chol_inv @ k_star.T  # (m, n)
    var = post.params.signal_variance - np.einsum("ij,ij->j", v, v)
    return mu, np.maximum(var, 0.0)


def gp_predict(post: GPPosterior, x: np.ndarray):
    """Posterior (mean, variance) at a single point."""
    mu, var = gp_predict_batch(post, np.asarray(x).reshape(1, NDIM))
    return float(mu[0]), float(var[0])


def expected_improvement(mu, var, best: float, xi: float):
    """Closed-form EI for maximization; scalar or vector inputs.

    EI = (mu - best - xi) Phi(z) + sigma phi(z), z = (mu - best - xi) / sigma,
    and max(0, mu - best - xi) when sigma = 0.
    """
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    sigma = np.sqrt(np.maximum(var, 0.0))
    delta = mu - best - xi

    # dividing by max(sigma, tiny) reproduces the sigma = 0 branch exactly:
    # z -> +-inf gives Phi in {0, 1} and sigma * phi(z) = 0
    z = delta / np.maximum(sigma, 1e-300)
    with np.errstate(over="ignore"):
        phi = np.exp(-0.5 * z * z) / _SQRT_2PI
    ei = delta * ndtr(z) + sigma * phi
    if ei.ndim == 0:
        return float(ei)
    return ei


def _golden_refine_coordinate(ei_of, pts: np.ndarray, dim: int):
    """Golden-section maximization of EI along one coordinate, in lockstep
    over all restart points.  Returns (best coordinate, best EI) arrays."""
    n = len(pts)
    a = np.zeros(n)
    b = np.ones(n)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)

    def eval_at(t):
        probe = pts.copy()
        probe[:, dim] = t
        return ei_of(probe)

    fc = eval_at(c)
    fd = eval_at(d)
    for _ in range(_GOLDEN_STEPS):
        left = fc > fd  # keep [a, d] where the left probe wins
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + _INVPHI * (b - a))
        c_new = np.where(left, b - _INVPHI * (b - a), d)
        # each restart needs exactly one fresh evaluation per step: the new
        # c on the left branch, the new d on the right branch
        fresh = eval_at(np.where(left, c_new, d_new))
        fc, fd = np.where(left, fresh, fd), np.where(left, fc, fresh)
        c, d = c_new, d_new

    mid = (a + b) / 2.0
    return mid, eval_at(mid)


def maximize_acquisition(
    post: GPPosterior, config: BOConfig, rng: np.random.Generator
) -> np.ndarray:
    """Best EI point among multistart golden-section refinements.

    A refined coordinate is only adopted on strict EI improvement, and the
    first-encountered maximum wins, so the result is deterministic for a
    given rng state (constant EI returns the first start untouched).
    """
    best = float(post.obs.values.max()) if len(post.obs) else 0.0

    def ei_of(points):
        mu, var = gp_predict_batch(post, points)
        return expected_improvement(mu, var, best, config.xi)

    pts = rng.uniform(size=(config.n_restarts, NDIM))
    ei = ei_of(pts)

    for _ in range(2):
        for dim in range(NDIM):
            coord, coord_ei = _golden_refine_coordinate(ei_of, pts, dim)
            better = coord_ei > ei
            pts[better, dim] = coord[better]
            ei = np.where(better, coord_ei, ei)

    return pts[int(np.argmax(ei))].copy()


def bayes_opt(
    objective: Callable[[np.ndarray], float],
    bounds: Bounds,
    config: BOConfig,
    rng: np.random.Generator,
    params: Optional[KernelParams] = None,
):
    """Maximize a black-box objective over the bounded box.

    Evaluates the objective exactly n_init + budget times and returns the
    argmax over every evaluated point (first encountered wins ties), as
    (Placement, best value, trace).
    """
    params = params or KernelParams()

    def evaluate(u: np.ndarray) -> float:
        native = bounds.denormalize(u)
        value = float(objective(native))
        if not math.isfinite(value):
            raise ObjectiveError(
                f"objective returned {value!r} at {native.tolist()}", point=native
            )
        return value

    points = rng.uniform(size=(config.n_init, NDIM))
    values = [evaluate(u) for u in points]
    points = list(points)

    for _ in range(config.budget):
        # fit the surrogate on standardized, amplified values: with the unit
        # prior variance fixed, mapping the data spread to 2 std suppresses
        # far-field EI once good points exist; the trace keeps raw values
        ys = np.array(values)
        scale = ys.std()
        scale = scale if scale > 1e-12 else 1.0
        standardized = _VALUE_AMPLIFICATION * (ys - ys.mean()) / scale
        post = gp_fit(ObservationSet(np.array(points), standardized), params)
        u = maximize_acquisition(post, config, rng)
        values.append(evaluate(u))
        points.append(u)

    trace = ObservationSet(np.array(points), np.array(values))
    best_idx = int(np.argmax(trace.values))
    native = bounds.denormalize(trace.points[best_idx])
    placement = Placement(
        theta=float(native[0]), gamma=float(native[1]), x=float(native[2]), y=float(native[3])
    )
    return placement, float(trace.values[best_idx]), trace
