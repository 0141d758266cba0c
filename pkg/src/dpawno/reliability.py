"""Monte Carlo reliability analysis over Gaussian-random-field initial
conditions: covariance kernels, Cholesky sampling, limit-state margins and
failure-probability estimation.

The surrogate handed to :func:`estimate_reliability` only needs a
``rollout(ics, steps)`` method returning ``(trajectories, diverged_mask)``;
see :mod:`dpawno.training` for the provided implementations.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite
from .rng import stream

KERNELS = ("exp_sine_squared", "rbf")
_MAX_JITTER = 1e-4


@dataclass(frozen=True)
class GrfSpec:
    """Zero-mean Gaussian random field over the solver grid.

    exp_sine_squared:  k(x, x') = alpha * exp(-(2/l^2) sin^2(pi ||x-x'|| / p))
    rbf:               k(x, x') = alpha * exp(-||x-x'||^2 / (2 l^2))
    """

    kernel: str = "exp_sine_squared"
    alpha: float = 4.0
    length_scale: float = 0.5
    periodicity: float = 1.0
    jitter: float = 1e-8

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown GRF kernel {self.kernel!r}; choose from {KERNELS}")
        if self.alpha <= 0 or self.length_scale <= 0 or self.periodicity <= 0:
            raise ValueError("alpha, length_scale and periodicity must be positive")


def grf_covariance(spec: GrfSpec, points) -> np.ndarray:
    """Dense covariance matrix with the diagonal jitter already added."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.size == 0:
        raise ValueError("empty grid")
    dist = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
    if spec.kernel == "exp_sine_squared":
        k = spec.alpha * np.exp(
            -(2.0 / spec.length_scale ** 2)
            * np.sin(np.pi * dist / spec.periodicity) ** 2)
    else:
        k = spec.alpha * np.exp(-(dist ** 2) / (2.0 * spec.length_scale ** 2))
    return k + spec.jitter * np.eye(len(pts))


def _cholesky(spec: GrfSpec, points) -> np.ndarray:
    base = grf_covariance(GrfSpec(spec.kernel, spec.alpha, spec.length_scale,
                                  spec.periodicity, jitter=0.0), points)
    jitter = spec.jitter
    eye = np.eye(base.shape[0])
    while jitter <= _MAX_JITTER:
        try:
            return np.linalg.cholesky(base + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NotPositiveDefinite(
        f"covariance not positive definite even with jitter {_MAX_JITTER:g}")


def sample_grf(spec: GrfSpec, points, count: int, seed: int,
               stream_index: int = 0) -> np.ndarray:
    """`count` zero-mean draws, one row per draw."""
    chol = _cholesky(spec, points)
    rng = stream(seed, "grf", stream_index)
    z = rng.standard_normal((count, chol.shape[0]))
    return z @ chol.T


@dataclass(frozen=True)
class LimitState:
    """Failure when min over time of (threshold - max-response) goes negative.

    The response functional is the spatial maximum of |u| (of signed u when
    use_magnitude is off); all states up to `horizon` steps are scanned,
    the initial condition included.
    """

    threshold: float
    horizon: int
    use_magnitude: bool = True

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


def evaluate_margin(trajectory, ls: LimitState) -> float:
    """min_t (threshold - max_x response); negative means failure."""
    traj = np.asarray(trajectory, dtype=np.float64)
    upto = min(ls.horizon, traj.shape[0] - 1)
    states = traj[: upto + 1].reshape(upto + 1, -1)
    response = np.abs(states) if ls.use_magnitude else states
    return float(np.min(ls.threshold - np.max(response, axis=1)))


@dataclass
class ReliabilityReport:
    n_samples: int
    failures: int
    diverged: int
    p_f: float
    reliability: float
    stderr: float
    seed: int
    margins: np.ndarray = None

    def to_json(self, **extra) -> str:
        doc = {
            "n": self.n_samples,
            "failures": self.failures,
            "diverged": self.diverged,
            "p_f": self.p_f,
            "reliability": self.reliability,
            "stderr": self.stderr,
            "seed": self.seed,
        }
        doc.update(extra)
        return json.dumps(doc, sort_keys=True)


def estimate_reliability(surrogate, grf_spec: GrfSpec, ls: LimitState,
                         n: int, seed: int, spec,
                         diverged_as_failure: bool = True,
                         keep_margins: bool = False) -> ReliabilityReport:
    """Indicator-based Monte Carlo failure probability under GRF ICs.

    Diverged surrogate trajectories count as failures by default (their
    margin is set to -inf); pass diverged_as_failure=False to exclude them
    from the failure count instead.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ics = grf_initial_conditions(grf_spec, spec, n, seed)
    if hasattr(surrogate, "max_response"):
        # streaming reduction: full trajectory storage for thousands of
        # samples over long horizons does not fit in memory at 2D scale
        peak, diverged = surrogate.max_response(ics, ls.horizon,
                                                magnitude=ls.use_magnitude)
        margins = ls.threshold - peak
    else:
        trajs, diverged = surrogate.rollout(ics, ls.horizon)
        margins = np.array([evaluate_margin(trajs[i], ls) for i in range(n)])
    margins[diverged] = -np.inf if diverged_as_failure else np.nan
    valid = ~np.isnan(margins)
    failures = int(np.sum(margins[valid] < 0.0))
    n_eff = int(np.sum(valid))
    p_f = failures / n_eff if n_eff else 0.0
    stderr = float(np.sqrt(p_f * (1.0 - p_f) / n_eff)) if n_eff else float("nan")
    return ReliabilityReport(
        n_samples=n,
        failures=failures,
        diverged=int(np.sum(diverged)),
        p_f=p_f,
        reliability=1.0 - p_f,
        stderr=stderr,
        seed=seed,
        margins=margins if keep_margins else None,
    )


def grf_initial_conditions(grf_spec: GrfSpec, spec, n: int, seed: int,
                           stream_index: int = 0) -> np.ndarray:
    """GRF draws shaped as solver states (n,) + spec.state_shape()."""
    if spec.is_2d:
        x, y = spec.grid()
        gx, gy = np.meshgrid(x, y)
        points = np.column_stack([gx.ravel(), gy.ravel()])
        draws = sample_grf(grf_spec, points, n, seed, stream_index)
        fields = draws.reshape(n, 1, len(y), len(x))
        return np.broadcast_to(fields, (n, 2, len(y), len(x))).copy()
    draws = sample_grf(grf_spec, spec.grid(), n, seed, stream_index)
    return draws[:, None, :]
