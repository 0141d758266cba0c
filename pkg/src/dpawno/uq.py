"""Uncertainty-propagation diagnostics: probe-point ensembles, Gaussian KDE
response densities, Hellinger distance, and ensemble mean squared error."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSamples, ShapeMismatch


@dataclass
class Density:
    """Probability mass on a uniform support grid."""

    support: np.ndarray
    mass: np.ndarray
    bandwidth: float

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.float64)
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.support.shape != self.mass.shape:
            raise ShapeMismatch("support and mass must align")


def silverman_bandwidth(samples: np.ndarray) -> float:
    n = len(samples)
    h = 1.06 * np.std(samples, ddof=1) * n ** (-0.2)
    # floor keeps the KDE nonsingular for near-degenerate draws
    return max(h, 1e-6 * (np.max(samples) - np.min(samples)))


def estimate_pdf(samples, grid_points: int = 512) -> Density:
    """Gaussian KDE with Silverman bandwidth on [min-3h, max+3h]."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if len(samples) < 2 or np.max(samples) == np.min(samples):
        raise DegenerateSamples(
            "need at least two distinct samples for a density estimate")
    h = silverman_bandwidth(samples)
    support = np.linspace(np.min(samples) - 3 * h, np.max(samples) + 3 * h,
                          grid_points)
    z = (support[:, None] - samples[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) / (len(samples) * h * np.sqrt(2 * np.pi))
    mass = density * (support[1] - support[0])
    return Density(support, mass / mass.sum(), h)


def rebin(density: Density, lo: float, hi: float, bins: int) -> Density:
    """Re-express the mass on a new uniform grid (zero outside the support)."""
    new_support = np.linspace(lo, hi, bins)
    width_old = density.support[1] - density.support[0]
    pdf = density.mass / width_old
    new_pdf = np.interp(new_support, density.support, pdf, left=0.0, right=0.0)
    total = new_pdf.sum()
    if total <= 0.0:
        mass = np.zeros(bins)
    else:
        mass = new_pdf / total
    return Density(new_support, mass, density.bandwidth)


def hellinger(p: Density, q: Density) -> float:
    """(1/sqrt 2) L2 distance between square roots of the masses, after
    re-binning both densities to a shared support (union span)."""
    lo = min(p.support[0], q.support[0])
    hi = max(p.support[-1], q.support[-1])
    bins = max(len(p.support), len(q.support))
    pm = rebin(p, lo, hi, bins).mass
    qm = rebin(q, lo, hi, bins).mass
    return float(np.linalg.norm(np.sqrt(pm) - np.sqrt(qm)) / np.sqrt(2.0))


def nearest_grid_index(grid, x_star):
    """Snap a probe location to the grid; returns (index, coordinate).

    1D: index into the x grid.  2D: pass (x*, y*) and a (x, y) grid pair;
    returns ((iy, ix), (x, y))."""
    if isinstance(grid, tuple):
        x, y = grid
        xs, ys = x_star
        ix = int(np.argmin(np.abs(np.asarray(x) - xs)))
        iy = int(np.argmin(np.abs(np.asarray(y) - ys)))
        return (iy, ix), (float(x[ix]), float(y[iy]))
    g = np.asarray(grid)
    ix = int(np.argmin(np.abs(g - x_star)))
    return ix, float(g[ix])


def probe_trajectories(trajectories: np.ndarray, index, t_star: int,
                       channel: int = 0) -> np.ndarray:
    """u(x*, t*) per sample from stored trajectories (B, T+1, C) + spatial."""
    if t_star >= trajectories.shape[1]:
        raise ValueError(
            f"probe step {t_star} beyond stored {trajectories.shape[1] - 1}")
    if isinstance(index, tuple):
        iy, ix = index
        return trajectories[:, t_star, channel, iy, ix]
    return trajectories[:, t_star, channel, index]


def probe_ensemble(surrogate, ics, x_star, t_star: int, grid,
                   channel: int = 0):
    """Predicted u(x*, t*) for every IC; x* snaps to the nearest grid point.

    Returns (samples, snapped_index, snapped_coordinate)."""
    index, snapped = nearest_grid_index(grid, x_star)
    trajs, _ = surrogate.rollout(np.asarray(ics, dtype=np.float64), t_star)
    return probe_trajectories(trajs, index, t_star, channel), index, snapped


def ensemble_mse(pred_trajectories, true_trajectories, steps: int = 100) -> float:
    """Mean squared error over samples x first `steps` steps x space."""
    pred = np.asarray(pred_trajectories, dtype=np.float64)
    true = np.asarray(true_trajectories, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeMismatch(f"{pred.shape} vs {true.shape}")
    upto = min(steps, pred.shape[1] - 1)
    diff = pred[:, 1:upto + 1] - true[:, 1:upto + 1]
    return float(np.mean(diff * diff))


def mean_hellinger_from_samples(pred_probe, true_probe,
                                grid_points: int = 256) -> float:
    """Arithmetic mean over steps of the Hellinger distance between the
    predicted and true response densities; inputs are (steps, samples)."""
    pred_probe = np.asarray(pred_probe, dtype=np.float64)
    true_probe = np.asarray(true_probe, dtype=np.float64)
    if pred_probe.shape != true_probe.shape:
        raise ShapeMismatch(f"{pred_probe.shape} vs {true_probe.shape}")
    values = []
    for p, q in zip(pred_probe, true_probe):
        try:
            dp = estimate_pdf(p, grid_points)
            dq = estimate_pdf(q, grid_points)
        except DegenerateSamples:
            # an ensemble still sitting on a single value (early steps)
            values.append(0.0 if np.array_equal(p, q) else 1.0)
            continue
        values.append(hellinger(dp, dq))
    return float(np.mean(values))


def mean_hellinger(pred_trajectories, true_trajectories, index,
                   steps: int = 100, grid_points: int = 256,
                   channel: int = 0) -> float:
    """Per-step mean Hellinger distance at a fixed probe, from stored
    trajectories."""
    upto = min(steps, np.shape(pred_trajectories)[1] - 1)
    pred = np.stack([probe_trajectories(pred_trajectories, index, t, channel)
                     for t in range(1, upto + 1)])
    true = np.stack([probe_trajectories(true_trajectories, index, t, channel)
                     for t in range(1, upto + 1)])
    return mean_hellinger_from_samples(pred, true, grid_points)
