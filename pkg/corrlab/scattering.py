"""
scattering.py
-------------
Zero-energy scattering mode of a repulsive radial potential.

Solves u'' = (1/2) V u with u(0) = 0 (u = r(1 - omega)), rescales by the
exterior slope so that u = r - a beyond the support, and exposes omega,
omega' and the scattering length a.

Two marching schemes:
- "numerov": 4th order, the default for scattering-length work
- "central": the 3-point recurrence of the Crank-Nicolson Hamiltonian, so
  the sampled (1 - omega) is an exact discrete zero mode of that operator
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List

import numpy as np
from scipy.integrate import simpson, trapezoid
from scipy.interpolate import PchipInterpolator

from corrlab import _kernels
from corrlab.errors import (
    ConsistencyError,
    IntegrityError,
    ResolutionError,
    ValidationError,
)
from corrlab.grid import RadialGrid, radial_derivatives, radial_tensor_norms
from corrlab.potential import PotentialSpec

logger = logging.getLogger(__name__)

SCHEMES = ("numerov", "central")
EXTERIOR_OFFSET = 5  # fit window starts this many nodes past the support


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    grid: RadialGrid
    u_samples: np.ndarray
    omega_samples: np.ndarray
    domega_samples: np.ndarray
    a: float
    support_radius: float
    potential_hash: str
    scheme: str = "numerov"
    residual: float = 0.0
    diagnostics: Dict = field(default_factory=dict)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def exterior_mask(self) -> np.ndarray:
        return self.nodes > self.support_radius + EXTERIOR_OFFSET * self.grid.dr

    @cached_property
    def _omega_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self.nodes, self.omega_samples, extrapolate=True)

    @cached_property
    def _domega_interp(self) -> PchipInterpolator:
        return PchipInterpolator(self.nodes, self.domega_samples, extrapolate=True)

    def to_csv(self, path: str) -> str:
        data = np.column_stack([self.nodes, self.u_samples, self.omega_samples, self.domega_samples])
        np.savetxt(path, data, delimiter=",", fmt="%.17g", header="r,u,omega,domega", comments="")
        return path


def _check_grid(spec: PotentialSpec, grid: RadialGrid, min_points_per_range: int) -> None:
    R = spec.range
    if grid.extent < 2 * R:
        raise ResolutionError(
            f"grid extent {grid.extent} must reach 2R = {2 * R}",
            diagnostics={"r_max": grid.extent, "R": R},
        )
    if grid.dr > R / min_points_per_range * (1 + 1e-12):
        raise ResolutionError(
            f"spacing {grid.dr} does not resolve the potential (need dr <= R/{min_points_per_range})",
            diagnostics={"dr": grid.dr, "R": R, "min_points_per_range": min_points_per_range},
        )


def _discrete_residual(u: np.ndarray, f: np.ndarray, h: float, scheme: str) -> float:
    lap = u[2:] - 2 * u[1:-1] + u[:-2]
    if scheme == "numerov":
        rhs = h * h * (f[2:] * u[2:] + 10 * f[1:-1] * u[1:-1] + f[:-2] * u[:-2]) / 12.0
    else:
        rhs = h * h * f[1:-1] * u[1:-1]
    scale = np.max(np.abs(u)) or 1.0
    return float(np.max(np.abs(lap - rhs)) / scale) if lap.size else 0.0


def solve_zero_energy(spec: PotentialSpec, grid: RadialGrid, scheme: str = "numerov",
                      min_points_per_range: int = 200) -> ScatteringSolution:
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    R = spec.range
    r = grid.nodes
    h = grid.dr
    if spec.is_zero:
        zeros = np.zeros_like(r)
        return _freeze(ScatteringSolution(
            grid=grid, u_samples=r.copy(), omega_samples=zeros, domega_samples=zeros.copy(),
            a=0.0, support_radius=R, potential_hash=spec.content_hash, scheme=scheme,
        ))
    _check_grid(spec, grid, min_points_per_range)

    f = 0.5 * spec.sample_on_grid(r)
    if scheme == "numerov":
        u = _kernels.numerov_march(f, h, 0.0, h + f[0] * h ** 3 / 6.0)
    else:
        u = _kernels.central_march(f, h, 0.0, h)
    residual = _discrete_residual(u, f, h, scheme)

    ext = r > R + EXTERIOR_OFFSET * h
    if ext.sum() < 2:
        raise ResolutionError("no exterior nodes beyond the support", diagnostics={"R": R})
    slope, intercept = np.polyfit(r[ext], u[ext], 1)
    u = u / slope
    a = -intercept / slope
    fit_misfit = float(np.max(np.abs(u[ext] - (r[ext] - a))))

    if np.any(u[1:] <= 0) or not np.all(np.isfinite(u)):
        raise IntegrityError(
            "zero-energy mode is not positive on (0, r_max]",
            diagnostics={"min_u": float(np.nanmin(u[1:])), "a": a},
        )

    omega = np.empty_like(u)
    omega[1:] = 1.0 - u[1:] / r[1:]
    # 4th-order one-sided limit of u/r, matching RadialField.from_u
    omega[0] = 1.0 - (4.0 * u[1] / h - u[2] / (2.0 * h)) / 3.0

    du = radial_derivatives(u, h, parity="odd")[1]
    domega = np.zeros_like(u)
    domega[1:] = (u[1:] - r[1:] * du[1:]) / r[1:] ** 2
    outside = r > R
    domega[outside] = -a / r[outside] ** 2

    logger.debug("solved zero-energy mode: kind=%s scheme=%s a=%.12g", spec.kind, scheme, a)
    return _freeze(ScatteringSolution(
        grid=grid, u_samples=u, omega_samples=omega, domega_samples=domega, a=float(a),
        support_radius=R, potential_hash=spec.content_hash, scheme=scheme, residual=residual,
        diagnostics={"exterior_points": int(ext.sum()), "exterior_misfit": fit_misfit},
    ))


def _freeze(sol: ScatteringSolution) -> ScatteringSolution:
    for arr in (sol.u_samples, sol.omega_samples, sol.domega_samples):
        arr.flags.writeable = False
    return sol


def check_consistent(sol: ScatteringSolution, spec: PotentialSpec) -> None:
    if sol.potential_hash != spec.content_hash:
        raise ConsistencyError(
            "scattering solution was computed for a different potential",
            diagnostics={"solution": sol.potential_hash, "potential": spec.content_hash},
        )


def support_integral(spec: PotentialSpec, sol: ScatteringSolution, values: np.ndarray) -> float:
    """int_0^R V(r) values(r) dr by Simpson over the nodes inside the support.

    The last node uses the left limit of V, so a square-well edge lying on a
    node contributes its inside value.
    """
    r = sol.nodes
    R = sol.support_radius
    k = int(np.floor(R / sol.grid.dr + 1e-9))
    k = min(k, r.shape[0] - 1)
    rr = r[:k + 1]
    integrand = spec.left_limit(rr) * values[:k + 1]
    total = float(simpson(integrand, dx=sol.grid.dr)) if k >= 2 else 0.0
    if R - rr[-1] > 1e-9 * R:
        # support edge between nodes: trapezoid on the leftover piece
        tail_r = np.array([rr[-1], np.nextafter(R, 0.0)])
        tail_v = np.interp(tail_r, r, values)
        total += float(trapezoid(spec(tail_r) * tail_v, tail_r))
    return total


def scattering_length(sol: ScatteringSolution, method: str = "asymptotic",
                      spec: PotentialSpec = None) -> float:
    """Scattering length by the exterior fit ("asymptotic") or by
    a = (1/2) int_0^R V u r dr ("integral")."""
    if method not in ("asymptotic", "integral"):
        raise ValidationError(f"unknown method {method!r}")
    if spec is not None:
        check_consistent(sol, spec)
    if sol.a == 0.0 and not np.any(sol.omega_samples):
        return 0.0
    if sol.exterior_mask().sum() < 2:
        raise ValidationError("grid has no exterior nodes beyond the support")
    if method == "asymptotic":
        return sol.a
    if spec is None:
        raise ValidationError("integral route needs the potential spec")
    return 0.5 * support_integral(spec, sol, sol.u_samples * sol.nodes)


def omega_at(sol: ScatteringSolution, N: int, r) -> np.ndarray:
    """omega_N(r) = omega(N r); exact a/(N r) outside the support."""
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    x = N * np.asarray(r, dtype=float)
    inside = x <= sol.support_radius
    out = np.empty_like(x)
    out[inside] = sol._omega_interp(x[inside])
    out[~inside] = sol.a / x[~inside]
    return out


def domega_at(sol: ScatteringSolution, N: int, r) -> np.ndarray:
    """d/dr of omega_N at r, i.e. N omega'(N r)."""
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    x = N * np.asarray(r, dtype=float)
    inside = x <= sol.support_radius
    out = np.empty_like(x)
    out[inside] = sol._domega_interp(x[inside])
    out[~inside] = -sol.a / x[~inside] ** 2
    return N * out


@dataclass
class BoundReport:
    sup_omega: float
    margin: float
    exterior_ratio: float
    grad_bound: float
    hess_bound: float
    grad_l2: float
    passed: bool = True
    failures: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict:
        return dict(self.__dict__)


def verify_omega_bounds(sol: ScatteringSolution, exterior_tol: float = 1e-6) -> BoundReport:
    """Pointwise bounds on omega and its derivatives.

    grad_bound = sup |omega'| r^2 and hess_bound = sup |grad^2 omega| r^3;
    outside the support these are a and sqrt(6) a exactly.
    """
    r = sol.nodes
    omega = np.asarray(sol.omega_samples)
    R = sol.support_radius
    a = sol.a
    failures = []

    sup_omega = float(omega.max())
    ext = sol.exterior_mask()
    exterior_ratio = float(np.max(np.abs(r[ext] * omega[ext])) / a) if a > 0 and ext.any() else 0.0

    hess = radial_tensor_norms(omega, sol.grid.dr, 2)
    far = r > R + 3 * sol.grid.dr
    hess[far] = np.sqrt(6.0) * a / r[far] ** 3
    grad_bound = float(np.max(np.abs(sol.domega_samples) * r ** 2))
    hess_bound = float(np.max(hess * r ** 3))

    grad_sq = 4 * np.pi * simpson(np.asarray(sol.domega_samples) ** 2 * r ** 2, dx=sol.grid.dr)
    grad_l2 = float(np.sqrt(grad_sq + 4 * np.pi * a ** 2 / sol.grid.extent))

    if not sup_omega < 1.0:
        failures.append("sup_omega>=1")
    if omega.min() < -1e-12:
        failures.append("omega_negative")
    if a > 0 and abs(exterior_ratio - 1.0) > exterior_tol:
        failures.append("exterior_ratio")
    if ext.any() and np.any(np.diff(omega[ext]) > 1e-14):
        failures.append("exterior_not_monotone")
    if not (np.isfinite(grad_bound) and np.isfinite(hess_bound) and np.isfinite(grad_l2)):
        failures.append("derivative_bounds_not_finite")
    for name in failures:
        logger.warning("omega bound check failed: %s", name)

    return BoundReport(
        sup_omega=sup_omega, margin=1.0 - sup_omega, exterior_ratio=exterior_ratio,
        grad_bound=grad_bound, hess_bound=hess_bound, grad_l2=grad_l2,
        passed=not failures, failures=failures,
    )
