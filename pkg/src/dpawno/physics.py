"""Finite-difference right-hand sides and the explicit-Euler augmented stepper.

Four benchmark problems are supported, each with a term mask selecting which
parts of the full right-hand side the "known physics" retains:

  burgers1d   u_t = -u u_x + nu u_xx                 terms: advection, diffusion
  nagumo      u_t = eps u_xx + u(1-u)(u-alpha)       terms: diffusion, reaction
  allen_cahn  u_t = gamma u_xx + 5u - 5u^3           terms: diffusion, reaction
  burgers2d   coupled (u1, u2), each component:
              u_t = -(u1 u_x + u2 u_y) + nu (u_xx + u_yy)
              terms: advection, diffusion_x (the u1 equation's diffusion),
              diffusion_y (the u2 equation's diffusion)

All state arrays are (..., C, X) or (..., C, Y, X) with an optional leading
batch axis; C is 1 except for burgers2d (C=2).  Diffusion uses the 3-point
stencil; advection is central by default with an upwind option for
advection-dominated settings.  Stencils wrap around; for Dirichlet problems
the wrapped values only ever enter boundary rows that apply_bc overwrites.

Term arrays are accumulated in the benchmark's canonical term order, and the
correction enters as one extra addition; this makes "partial rhs + missing
rhs" reproduce the full rhs bit-for-bit, which the oracle tests rely on.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteState, ShapeMismatch, UnsupportedTermForBenchmark

BLOWUP_LIMIT = 1.0e8

# canonical term order per benchmark (also the full term set)
BENCHMARK_TERMS = {
    "burgers1d": ("advection", "diffusion"),
    "nagumo": ("diffusion", "reaction"),
    "allen_cahn": ("diffusion", "reaction"),
    "burgers2d": ("advection", "diffusion_x", "diffusion_y"),
}

DEFAULT_DOMAIN = {
    "burgers1d": (-1.0, 1.0),
    "nagumo": (0.0, 1.0),
    "allen_cahn": (-1.0, 1.0),
    "burgers2d": (0.0, 2.0),
}


@dataclass(frozen=True)
class PdeSpec:
    """One benchmark configuration: physics parameters, retained terms, grid."""

    benchmark: str
    params: dict
    terms: tuple
    bc: str  # "periodic" or "dirichlet"
    bc_value: float = 0.0
    domain: tuple = None
    nx: int = 64
    ny: int = None
    dt: float = 1e-4
    advection_scheme: str = "central"

    def __post_init__(self):
        if self.benchmark not in BENCHMARK_TERMS:
            raise UnsupportedTermForBenchmark(f"unknown benchmark {self.benchmark!r}")
        if self.advection_scheme not in ("central", "upwind"):
            raise ValueError(f"unknown advection scheme {self.advection_scheme!r}")
        full = BENCHMARK_TERMS[self.benchmark]
        for t in self.terms:
            if t not in full:
                raise UnsupportedTermForBenchmark(
                    f"term {t!r} not part of benchmark {self.benchmark!r}")
        # keep canonical ordering regardless of input order
        object.__setattr__(self, "terms", tuple(t for t in full if t in self.terms))
        if self.domain is None:
            object.__setattr__(self, "domain", DEFAULT_DOMAIN[self.benchmark])
        if self.is_2d and self.ny is None:
            object.__setattr__(self, "ny", self.nx)
        if self.bc not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown bc {self.bc!r}")
        self._cfl_check()

    @property
    def is_2d(self) -> bool:
        return self.benchmark == "burgers2d"

    @property
    def channels(self) -> int:
        return 2 if self.is_2d else 1

    @property
    def dx(self) -> float:
        span = self.domain[1] - self.domain[0]
        return span / (self.nx - 1) if self.bc == "dirichlet" else span / self.nx

    @property
    def dy(self) -> float:
        if not self.is_2d:
            raise ValueError("dy only defined for 2D benchmarks")
        span = self.domain[1] - self.domain[0]
        return span / (self.ny - 1) if self.bc == "dirichlet" else span / self.ny

    @property
    def full_terms(self) -> tuple:
        return BENCHMARK_TERMS[self.benchmark]

    @property
    def missing_terms(self) -> tuple:
        return tuple(t for t in self.full_terms if t not in self.terms)

    def with_terms(self, terms) -> "PdeSpec":
        return replace(self, terms=tuple(terms))

    def diffusivity(self) -> float:
        for key in ("nu", "epsilon", "gamma"):
            if key in self.params:
                return self.params[key]
        return 0.0

    def _cfl_check(self):
        has_diffusion = any(t.startswith("diffusion") for t in self.terms)
        if not has_diffusion:
            return
        number = self.diffusivity() * self.dt / self.dx ** 2
        if self.is_2d:
            number += self.diffusivity() * self.dt / self.dy ** 2
        if number > 0.5:
            warnings.warn(
                f"explicit diffusion CFL number {number:.3f} > 0.5 for "
                f"{self.benchmark}; the run may be unstable",
                RuntimeWarning,
                stacklevel=3,
            )

    def grid(self):
        """Spatial coordinates: x for 1D, (x, y) for 2D."""
        lo, hi = self.domain
        if self.bc == "dirichlet":
            x = np.linspace(lo, hi, self.nx)
        else:
            x = lo + (hi - lo) * np.arange(self.nx) / self.nx
        if not self.is_2d:
            return x
        if self.bc == "dirichlet":
            y = np.linspace(lo, hi, self.ny)
        else:
            y = lo + (hi - lo) * np.arange(self.ny) / self.ny
        return x, y

    def spatial_shape(self) -> tuple:
        return (self.ny, self.nx) if self.is_2d else (self.nx,)

    def state_shape(self) -> tuple:
        return (self.channels,) + self.spatial_shape()

    def boundary_mask(self):
        """Boolean mask over (C,) + spatial shape, True on Dirichlet entries."""
        mask = np.zeros(self.state_shape(), dtype=bool)
        if self.bc == "dirichlet":
            mask[..., 0] = True
            mask[..., -1] = True
            if self.is_2d:
                mask[..., 0, :] = True
                mask[..., -1, :] = True
        return mask


@dataclass
class GridField:
    """State u( . , t) on the grid: values (..., C) + spatial, plus the step index."""

    values: object
    time_index: int = 0

    @property
    def data(self) -> np.ndarray:
        return ad.value_of(self.values)


def _d1(u, dx, axis):
    c = 1.0 / (2.0 * dx)
    return ad.circ_stencil(u, [(1, c), (-1, -c)], axis)


def _d1_upwind(speed, u, dx, axis):
    # one-sided against the flow; the flow-direction mask is held constant
    # at the evaluation point, so gradients use the selected stencil
    c = 1.0 / dx
    mask = (ad.value_of(speed) > 0.0).astype(np.float64)
    backward = ad.circ_stencil(u, [(0, c), (-1, -c)], axis)
    forward = ad.circ_stencil(u, [(1, c), (0, -c)], axis)
    return ad.add(ad.mul(backward, mask), ad.mul(forward, 1.0 - mask))


def _advective_d1(speed, u, dx, axis, spec):
    if spec.advection_scheme == "upwind":
        return _d1_upwind(speed, u, dx, axis)
    return _d1(u, dx, axis)


def _d2(u, coeff, dx, axis):
    c = coeff / dx ** 2
    return ad.circ_stencil(u, [(1, c), (0, -2.0 * c), (-1, c)], axis)


def _term_burgers1d(u, spec, term):
    if term == "advection":
        return ad.scalar_mul(ad.mul(u, _advective_d1(u, u, spec.dx, -1, spec)), -1.0)
    if term == "diffusion":
        return _d2(u, spec.params["nu"], spec.dx, -1)
    raise UnsupportedTermForBenchmark(term)


def _term_nagumo(u, spec, term):
    if term == "diffusion":
        return _d2(u, spec.params["epsilon"], spec.dx, -1)
    if term == "reaction":
        alpha = spec.params["alpha"]
        return ad.mul(ad.mul(u, ad.sub(1.0, u)), ad.sub(u, alpha))
    raise UnsupportedTermForBenchmark(term)


def _term_allen_cahn(u, spec, term):
    if term == "diffusion":
        return _d2(u, spec.params["gamma"], spec.dx, -1)
    if term == "reaction":
        return ad.scalar_mul(ad.sub(u, ad.mul(ad.square(u), u)), 5.0)
    raise UnsupportedTermForBenchmark(term)


def _split_components(u):
    c_axis = ad.value_of(u).ndim - 3  # (..., C, Y, X)
    u1 = ad.slice_axis(u, c_axis, 0, 1)
    u2 = ad.slice_axis(u, c_axis, 1, 2)
    return u1, u2, c_axis


def _term_burgers2d(u, spec, term):
    nu = spec.params["nu"]
    u1, u2, c_axis = _split_components(u)
    zeros = np.zeros(ad.value_of(u1).shape)
    if term == "advection":
        adv1 = ad.add(ad.mul(u1, _advective_d1(u1, u1, spec.dx, -1, spec)),
                      ad.mul(u2, _advective_d1(u2, u1, spec.dy, -2, spec)))
        adv2 = ad.add(ad.mul(u1, _advective_d1(u1, u2, spec.dx, -1, spec)),
                      ad.mul(u2, _advective_d1(u2, u2, spec.dy, -2, spec)))
        return ad.scalar_mul(ad.concat(adv1, adv2, c_axis), -1.0)
    if term == "diffusion_x":
        lap1 = ad.add(_d2(u1, nu, spec.dx, -1), _d2(u1, nu, spec.dy, -2))
        return ad.concat(lap1, zeros, c_axis)
    if term == "diffusion_y":
        lap2 = ad.add(_d2(u2, nu, spec.dx, -1), _d2(u2, nu, spec.dy, -2))
        return ad.concat(zeros, lap2, c_axis)
    raise UnsupportedTermForBenchmark(term)


_TERM_FN = {
    "burgers1d": _term_burgers1d,
    "nagumo": _term_nagumo,
    "allen_cahn": _term_allen_cahn,
    "burgers2d": _term_burgers2d,
}


def _check_state_shape(values, spec):
    shape = ad.value_of(values).shape
    expected = spec.state_shape()
    if shape[-len(expected):] != expected:
        raise ShapeMismatch(f"state {shape} does not end with {expected}")


def rhs_values(u, spec: PdeSpec):
    """Sum of the active terms; zeros when no term is active."""
    _check_state_shape(u, spec)
    term_fn = _TERM_FN[spec.benchmark]
    total = None
    for term in spec.terms:  # canonical order (see module docstring)
        contrib = term_fn(u, spec, term)
        total = contrib if total is None else ad.add(total, contrib)
    if total is None:
        return np.zeros(ad.value_of(u).shape)
    return total


def apply_bc_values(u, spec: PdeSpec):
    if spec.bc == "periodic":
        return u
    return ad.boundary_overwrite(u, spec.boundary_mask(), spec.bc_value)


def euler_step_values(u, spec: PdeSpec, correction=None, check_blowup=True):
    """u_next = apply_bc(u + dt * (rhs(u) + correction))."""
    total = rhs_values(u, spec)
    if correction is not None:
        corr_shape = ad.value_of(correction).shape
        if corr_shape != ad.value_of(u).shape:
            raise ShapeMismatch(
                f"correction {corr_shape} vs state {ad.value_of(u).shape}")
        total = ad.add(total, correction)
    u_next = apply_bc_values(ad.add(u, ad.scalar_mul(total, spec.dt)), spec)
    if check_blowup:
        peak = float(np.max(np.abs(ad.value_of(u_next))))
        if not np.isfinite(peak) or peak > BLOWUP_LIMIT:
            raise NonFiniteState(f"state magnitude {peak:.3e} exceeds {BLOWUP_LIMIT:.0e}")
    return u_next


def replace_dt(spec: PdeSpec, dt: float) -> PdeSpec:
    return replace(spec, dt=dt)


def rhs(u: GridField, spec: PdeSpec) -> GridField:
    return GridField(rhs_values(u.values, spec), u.time_index)


def apply_bc(u: GridField, spec: PdeSpec) -> GridField:
    return GridField(apply_bc_values(u.values, spec), u.time_index)


def euler_step(u: GridField, spec: PdeSpec, correction=None) -> GridField:
    corr = correction.values if isinstance(correction, GridField) else correction
    return GridField(euler_step_values(u.values, spec, corr), u.time_index + 1)
