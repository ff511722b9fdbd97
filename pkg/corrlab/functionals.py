"""
functionals.py
--------------
Scalar functionals monitored along the two-body evolution.

- CutoffChi / default_chi: smooth cutoff with chi = 1 on [0,1], 0 beyond 2
- InitialOrbital: unit-norm radial orbitals (gaussian, bump, exponential)
- window_functional / window_split / window_series: F, F1, F2 over the window
- fn_initial: F_N(0) and its large N*ell constant
- triple_norm: W^{3,1} + W^{3,inf}
- hamiltonian_moments: <H_N>/N and the leading <H_N^2>/N^3 term on phi^{(x)N}
- coupling_constants: b = int V versus 8 pi a = int V (1 - omega)
- uniform_norm_table: ||grad^m (omega psi_Lambda)||_p across Lambda
- micro_to_macro / macro_to_micro: X = N x, T = N^2 t, L = 2 N ell
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, simpson, trapezoid
from scipy.interpolate import CubicSpline

from corrlab.errors import (
    ContaminationError,
    OutOfHypothesisError,
    OutOfRegimeError,
    QuadratureError,
    ResolutionError,
    ValidationError,
)
from corrlab.grid import FOUR_PI, RadialGrid, radial_derivatives, radial_lp_norm, radial_tensor_norms
from corrlab.potential import PotentialSpec, potential_norms
from corrlab.propagator import (
    RELATIVE,
    CartesianField,
    RadialField,
    evolve_cartesian,
    evolve_radial,
    evolve_radial_series,
)
from corrlab.scattering import ScatteringSolution, check_consistent, omega_at, support_integral

logger = logging.getLogger(__name__)

QUAD_EPSREL = 1e-10
RICHARDSON_TOL = 0.05


def _quad(fn: Callable, lo: float, hi: float, label: str, points=None) -> float:
    if hi <= lo:
        return 0.0
    kw = {"points": [p for p in points if lo < p < hi]} if points else {}
    res = quad(fn, lo, hi, epsabs=1e-300, epsrel=QUAD_EPSREL, limit=1000, full_output=1, **kw)
    if len(res) > 3 and res[1] > 1e-6 * max(abs(res[0]), 1e-300):
        raise QuadratureError(f"quadrature for {label} did not converge",
                              diagnostics={"value": res[0], "abserr": res[1]})
    return float(res[0])


# -------------------------------------------------------------------
# Cutoff
# -------------------------------------------------------------------
def _g(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def chi_profile(r) -> np.ndarray:
    r = np.abs(np.asarray(r, dtype=float))
    out = np.ones_like(r)
    out[r >= 2.0] = 0.0
    mid = (r > 1.0) & (r < 2.0)
    if np.any(mid):
        left = _g(2.0 - r[mid])
        right = _g(r[mid] - 1.0)
        out[mid] = left / (left + right)
    return out


@dataclass(frozen=True)
class CutoffChi:
    l1_mass: float
    name: str = "smooth-step"

    def __call__(self, r) -> np.ndarray:
        return chi_profile(r)

    def theta(self, r, scale: float) -> np.ndarray:
        """theta_scale(x) = chi(|x| / scale)."""
        return chi_profile(np.asarray(r, dtype=float) / scale)


@lru_cache(maxsize=1)
def default_chi() -> CutoffChi:
    # half-line mass int_0^inf chi(r) dr
    mass = 1.0 + _quad(lambda r: float(chi_profile(r)), 1.0, 2.0, "chi mass")
    return CutoffChi(l1_mass=mass)


# -------------------------------------------------------------------
# Orbitals
# -------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class InitialOrbital:
    kind: str
    scale: float
    profile: Callable
    derivative: Callable
    extent: float
    alpha: float
    norms: Dict[str, float] = field(default_factory=dict)

    def __call__(self, r) -> np.ndarray:
        return self.profile(np.asarray(r, dtype=float))

    @property
    def fourth_power(self) -> float:
        return self.norms["l4"] ** 4


def _build_orbital(kind: str, scale: float, raw: Callable, raw_d: Callable,
                   extent: float, alpha: float, points=None) -> InitialOrbital:
    mass = FOUR_PI * _quad(lambda r: float(raw(r)) ** 2 * r * r, 0.0, extent, "orbital mass", points)
    c = mass ** -0.5

    def profile(r):
        return c * raw(r)

    def derivative(r):
        return c * raw_d(r)

    l4 = (FOUR_PI * _quad(lambda r: float(profile(r)) ** 4 * r * r, 0.0, extent, "L4", points)) ** 0.25
    grad = np.sqrt(FOUR_PI * _quad(lambda r: float(derivative(r)) ** 2 * r * r, 0.0, extent,
                                   "gradient", points))
    grid = RadialGrid(extent / 4000, extent)
    samples = profile(grid.nodes)
    weight = (1.0 + grid.nodes ** 2) ** (alpha / 2)
    weighted_sup = max(float(np.max(weight * radial_tensor_norms(samples, grid.dr, m)))
                       for m in range(4))
    norms = {"l2": 1.0, "l4": l4, "grad_l2": float(grad), "weighted_sup": weighted_sup}
    return InitialOrbital(kind=kind, scale=scale, profile=profile, derivative=derivative,
                          extent=extent, alpha=alpha, norms=norms)


def gaussian_orbital(sigma: float = 1.0, alpha: float = 4.0) -> InitialOrbital:
    def raw(r):
        return np.exp(-np.asarray(r) ** 2 / (2 * sigma ** 2))

    def raw_d(r):
        r = np.asarray(r)
        return -r / sigma ** 2 * np.exp(-r ** 2 / (2 * sigma ** 2))

    return _build_orbital("gaussian", sigma, raw, raw_d, 12.0 * sigma, alpha)


def bump_orbital(radius: float = 1.0, alpha: float = 4.0) -> InitialOrbital:
    """Compactly supported C-infinity orbital proportional to exp(-1/(1 - (r/radius)^2))."""
    def raw(r):
        x = np.abs(np.asarray(r, dtype=float)) / radius
        out = np.zeros_like(x)
        inside = x < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
        return out

    def raw_d(r):
        x = np.abs(np.asarray(r, dtype=float)) / radius
        out = np.zeros_like(x)
        inside = x < 1.0
        xi = x[inside]
        out[inside] = np.exp(-1.0 / (1.0 - xi ** 2)) * (-2.0 * xi / (1.0 - xi ** 2) ** 2) / radius
        return out

    return _build_orbital("bump", radius, raw, raw_d, radius, alpha)


def exponential_orbital(scale: float = 1.0, alpha: float = 4.0) -> InitialOrbital:
    """exp(-r/scale): the cusp at the origin keeps |grad psi_Lambda| ~ 1/Lambda near 0."""
    def raw(r):
        return np.exp(-np.abs(np.asarray(r, dtype=float)) / scale)

    def raw_d(r):
        return -np.exp(-np.abs(np.asarray(r, dtype=float)) / scale) / scale

    return _build_orbital("exponential", scale, raw, raw_d, 40.0 * scale, alpha)


ORBITALS = {"gaussian": gaussian_orbital, "bump": bump_orbital, "exponential": exponential_orbital}


def make_orbital(kind: str, scale: float = 1.0) -> InitialOrbital:
    if kind not in ORBITALS:
        raise ValidationError(f"unknown orbital kind {kind!r}; expected one of {sorted(ORBITALS)}")
    if not scale > 0:
        raise ValidationError(f"orbital scale must be positive, got {scale}")
    return ORBITALS[kind](scale)


def scaled_profile(orbital: InitialOrbital, Lambda: float, r) -> np.ndarray:
    """psi_Lambda(X) = psi(X / Lambda); not renormalised."""
    return orbital(np.asarray(r, dtype=float) / Lambda)


def window_data(grid: RadialGrid, orbital: Optional[InitialOrbital] = None, Lambda: float = 1.0,
                taper: float = 0.4, mu: float = RELATIVE.mu) -> RadialField:
    """psi_Lambda on the grid (constant 1 when orbital is None), smoothly cut
    to zero between taper*r_max and 2*taper*r_max so nothing reaches the absorber."""
    r = grid.nodes
    base = np.ones_like(r) if orbital is None else scaled_profile(orbital, Lambda, r)
    return RadialField(grid=grid, samples=(base * chi_profile(r / (taper * grid.extent))).astype(complex),
                       mu=mu)


def autocorrelation(orbital: InitialOrbital, r, nodes: int = 4001) -> np.ndarray:
    """A(r) = int |phi(y)|^2 |phi(y + x)|^2 dy with |x| = r."""
    s = np.linspace(0.0, orbital.extent, nodes)
    n = orbital(s) ** 2
    G = cumulative_trapezoid(s * n, s, initial=0.0)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    for i, ri in enumerate(r):
        if ri < 1e-12:
            out[i] = FOUR_PI * simpson(n * n * s * s, x=s)
        else:
            shell = np.interp(ri + s, s, G) - np.interp(np.abs(ri - s), s, G)
            out[i] = 2 * np.pi / ri * simpson(s * n * shell, x=s)
    return out


@lru_cache(maxsize=16)
def _autocorrelation_spline(orbital: InitialOrbital) -> CubicSpline:
    r = np.linspace(0.0, 2.0 * orbital.extent, 801)
    return CubicSpline(r, autocorrelation(orbital, r))


def _autocorr(orbital: InitialOrbital, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    spline = _autocorrelation_spline(orbital)
    return np.where(r <= 2.0 * orbital.extent, spline(np.minimum(r, 2.0 * orbital.extent)), 0.0)


# -------------------------------------------------------------------
# Window functionals
# -------------------------------------------------------------------
def window_functional(evolved: RadialField, sol: ScatteringSolution, L: float,
                      chi: Optional[CutoffChi] = None) -> float:
    """4 pi int theta_L(r) |d/dr (psi / (1 - omega))|^2 r^2 dr."""
    chi = chi or default_chi()
    grid = evolved.grid
    dr = grid.dr
    if 2 * L >= evolved.absorber_start:
        raise ContaminationError(
            f"window 2L={2 * L} reaches the absorbing layer at r={evolved.absorber_start}",
            diagnostics={"L": L, "absorber_start": evolved.absorber_start},
        )
    k = int(np.ceil(2 * L / dr - 1e-9))
    if k + 4 > grid.n:
        raise ContaminationError("window extends past the grid", diagnostics={"L": L, "r_max": grid.extent})
    r = grid.nodes[:k + 4]
    q = evolved.samples[:k + 4] / (1.0 - omega_at(sol, 1, r))
    dq = radial_derivatives(q, dr)[1][:k + 1]
    rw = r[:k + 1]
    return float(FOUR_PI * simpson(chi.theta(rw, L) * np.abs(dq) ** 2 * rw ** 2, dx=dr))


def _split_parts(psi: RadialField, sol: ScatteringSolution, spec: PotentialSpec):
    check_consistent(sol, spec)
    if psi.mu != RELATIVE.mu:
        raise ValidationError(f"window experiments evolve the relative coordinate (mu=2), got mu={psi.mu}")
    om = omega_at(sol, 1, psi.nodes)
    return psi.with_samples(om * psi.samples), psi.with_samples((1.0 - om) * psi.samples)


def _regime_flag(Lambda: float, L: float, diagnostics: Dict) -> None:
    if L >= Lambda:
        logger.warning("window L=%s is not small against Lambda=%s; results are out of regime", L, Lambda)
        diagnostics["out_of_regime"] = True


def window_split(psi: RadialField, sol: ScatteringSolution, spec: PotentialSpec, Lambda: float,
                 L: float, T: float, dt: float, chi: Optional[CutoffChi] = None,
                 absorb: bool = True) -> Dict:
    """F, F1 (evolved omega psi) and F2 (evolved (1 - omega) psi) at time T."""
    part1, part2 = _split_parts(psi, sol, spec)
    ev1 = evolve_radial(part1, spec, T, dt, RELATIVE, absorb=absorb)
    ev2 = evolve_radial(part2, spec, T, dt, RELATIVE, absorb=absorb)
    total = ev1.with_samples(ev1.samples + ev2.samples)
    diagnostics = {"boundary_mass": max(ev1.diagnostics.get("boundary_mass", 0.0),
                                        ev2.diagnostics.get("boundary_mass", 0.0))}
    _regime_flag(Lambda, L, diagnostics)
    return {
        "Lambda": Lambda, "L": L, "T": T,
        "F": window_functional(total, sol, L, chi),
        "F1": window_functional(ev1, sol, L, chi),
        "F2": window_functional(ev2, sol, L, chi),
        "diagnostics": diagnostics,
    }


def window_series(psi: RadialField, sol: ScatteringSolution, spec: PotentialSpec, Lambda: float,
                  Ls: Union[float, Sequence[float]], times: Sequence[float], dt: float,
                  chi: Optional[CutoffChi] = None, absorb: bool = True) -> List[Dict]:
    """window_split at every (T, L) with one evolution pass per part."""
    Ls = [float(Ls)] if np.isscalar(Ls) else [float(x) for x in Ls]
    part1, part2 = _split_parts(psi, sol, spec)
    series1 = evolve_radial_series(part1, spec, times, dt, RELATIVE, absorb=absorb)
    series2 = evolve_radial_series(part2, spec, times, dt, RELATIVE, absorb=absorb)
    rows = []
    for T, ev1, ev2 in zip(times, series1, series2):
        total = ev1.with_samples(ev1.samples + ev2.samples)
        boundary = max(ev1.diagnostics.get("boundary_mass", 0.0), ev2.diagnostics.get("boundary_mass", 0.0))
        for L in Ls:
            diagnostics = {"boundary_mass": boundary}
            _regime_flag(Lambda, L, diagnostics)
            rows.append({
                "Lambda": Lambda, "L": L, "T": float(T),
                "F": window_functional(total, sol, L, chi),
                "F1": window_functional(ev1, sol, L, chi),
                "F2": window_functional(ev2, sol, L, chi),
                "diagnostics": diagnostics,
            })
    return rows


def _cartesian_d1(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis)
            - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)


def cartesian_window_functional(field_: CartesianField, sol: ScatteringSolution, L: float,
                                chi: Optional[CutoffChi] = None) -> float:
    chi = chi or default_chi()
    if 2 * L > 0.4 * field_.side:
        raise ContaminationError(f"window 2L={2 * L} too wide for box side {field_.side}")
    r = field_.radius()
    q = field_.samples / (1.0 - omega_at(sol, 1, r))
    grad_sq = sum(np.abs(_cartesian_d1(q, field_.h, ax)) ** 2 for ax in range(3))
    return float(np.sum(chi.theta(r, L) * grad_sq) * field_.h ** 3)


def eta_window_functional(orbital: InitialOrbital, sol: ScatteringSolution, spec: PotentialSpec,
                          Lambda: float, L: float, T: float, dt: float,
                          eta_values: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.5),
                          n: int = 32, h: Optional[float] = None,
                          chi: Optional[CutoffChi] = None) -> Dict:
    """Centre-of-mass-resolved window functional on a coarse eta grid.

    For each |eta| the relative wave function phi(eta + X/2Lambda) phi(eta - X/2Lambda)
    is evolved on the Cartesian box and its window functional is integrated
    with weight 4 pi eta^2.
    """
    check_consistent(sol, spec)
    h = h or 5.0 * L / n * 2
    x = (np.arange(n) - n // 2) * h
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    taper = chi_profile(r / (0.2 * n * h))
    integrand = []
    for eta in eta_values:
        transverse = (X ** 2 + Y ** 2) / (2 * Lambda) ** 2
        plus = np.sqrt(transverse + (eta + Z / (2 * Lambda)) ** 2)
        minus = np.sqrt(transverse + (eta - Z / (2 * Lambda)) ** 2)
        samples = orbital(plus) * orbital(minus) * taper
        psi = CartesianField(samples=samples.astype(complex), h=h, mu=RELATIVE.mu)
        evolved = evolve_cartesian(psi, spec, T, dt)
        integrand.append(cartesian_window_functional(evolved, sol, L, chi))
    eta = np.asarray(eta_values, dtype=float)
    weights = FOUR_PI * eta ** 2 * np.asarray(integrand)
    value = float(trapezoid(weights, eta))
    return {"value": value, "eta": eta.tolist(), "integrand": integrand}


# -------------------------------------------------------------------
# F_N(0)
# -------------------------------------------------------------------
def fn_initial(orbital: InitialOrbital, sol: ScatteringSolution, N: int, ell: float,
               chi: Optional[CutoffChi] = None) -> Dict[str, float]:
    """F_N(0) = int theta_ell(x) [omega_N / (1 - omega_N)]^2(x) A(x) dx.

    `separable` replaces A(x) by A(0) = ||phi||_4^4; `scaled` is N^2/ell * value,
    which tends to 4 pi a^2 ||chi||_1 ||phi||_4^4 as N*ell grows.
    """
    chi = chi or default_chi()
    N_ell = N * ell
    if N_ell < 1.0 - 1e-12:
        raise OutOfRegimeError(f"N*ell = {N_ell} < 1", diagnostics={"N": N, "ell": ell})
    a = sol.a
    A0 = orbital.fourth_power
    asym = FOUR_PI * a ** 2 * chi.l1_mass * A0
    if a == 0.0 and not np.any(sol.omega_samples):
        return {"value": 0.0, "separable": 0.0, "correction": 0.0, "scaled": 0.0,
                "scaled_separable": 0.0, "asymptotic_constant": 0.0, "relative_gap": 0.0,
                "N_ell": N_ell}

    R = sol.support_radius
    upper = 2.0 * N_ell

    def g2_interior(rho):
        om = float(omega_at(sol, 1, rho))
        return (om / (1.0 - om)) ** 2

    def g2_exterior(rho):
        return (a / (rho - a)) ** 2

    def integral(exact: bool) -> float:
        def weight(rho):
            return float(_autocorr(orbital, rho / N)) if exact else A0

        def inner(rho):
            return float(chi(rho / N_ell)) * g2_interior(rho) * weight(rho) * rho * rho

        def outer(rho):
            return float(chi(rho / N_ell)) * g2_exterior(rho) * weight(rho) * rho * rho

        pts = [N_ell]
        return (_quad(inner, 0.0, min(R, upper), "F_N(0) interior", pts)
                + _quad(outer, min(R, upper), upper, "F_N(0) exterior", pts))

    prefactor = FOUR_PI / N ** 3
    value = prefactor * integral(True)
    separable = prefactor * integral(False)
    scaled = N ** 2 / ell * value
    return {
        "value": value,
        "separable": separable,
        "correction": value - separable,
        "scaled": scaled,
        "scaled_separable": N ** 2 / ell * separable,
        "asymptotic_constant": asym,
        "relative_gap": abs(scaled - asym) / asym,
        "N_ell": N_ell,
    }


# -------------------------------------------------------------------
# Triple norm
# -------------------------------------------------------------------
@dataclass
class TripleNormReport:
    w31: float
    w3inf: float
    total: float
    per_order: Dict[int, Dict[str, float]] = field(default_factory=dict)


def _radial_orders(samples: np.ndarray, dr: float) -> Dict[int, Dict[str, float]]:
    out = {}
    for m in range(4):
        vals = radial_tensor_norms(samples, dr, m)
        out[m] = {"l1": radial_lp_norm(vals, dr, 1), "sup": float(vals.max())}
    return out


def _cartesian_orders(f: np.ndarray, h: float) -> Dict[int, Dict[str, float]]:
    grads = [_cartesian_d1(f, h, ax) for ax in range(3)]
    hess = {}
    third_sq = np.zeros(f.shape)
    hess_sq = np.zeros(f.shape)
    for i in range(3):
        for j in range(i, 3):
            hess[i, j] = _cartesian_d1(grads[i], h, j)
            hess_sq += (1 if i == j else 2) * np.abs(hess[i, j]) ** 2
    for i in range(3):
        for j in range(i, 3):
            for k in range(j, 3):
                mult = len({(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)})
                third_sq += mult * np.abs(_cartesian_d1(hess[i, j], h, k)) ** 2
    orders = {
        0: np.abs(f),
        1: np.sqrt(sum(np.abs(g) ** 2 for g in grads)),
        2: np.sqrt(hess_sq),
        3: np.sqrt(third_sq),
    }
    vol = h ** 3
    return {m: {"l1": float(v.sum() * vol), "sup": float(v.max())} for m, v in orders.items()}


def triple_norm(psi: Union[RadialField, CartesianField], check: bool = True) -> TripleNormReport:
    """|||psi||| = sum_{m<=3} ||grad^m psi||_1 + sum_{m<=3} ||grad^m psi||_inf."""
    if isinstance(psi, CartesianField):
        fine = _cartesian_orders(psi.samples, psi.h)
        coarse = (lambda: _cartesian_orders(psi.samples[::2, ::2, ::2], 2 * psi.h))
    else:
        fine = _radial_orders(psi.samples, psi.grid.dr)
        coarse = (lambda: _radial_orders(psi.samples[::2], 2 * psi.grid.dr))

    if check and fine[3]["sup"] > 0:
        c = coarse()
        for key in ("l1", "sup"):
            ref = fine[3][key]
            if ref > 0 and abs(c[3][key] - ref) / ref > RICHARDSON_TOL:
                raise ResolutionError(
                    "third derivative under-resolved: grid and half grid disagree by more than 5%",
                    diagnostics={"norm": key, "fine": ref, "coarse": c[3][key]},
                )
    w31 = sum(v["l1"] for v in fine.values())
    w3inf = sum(v["sup"] for v in fine.values())
    return TripleNormReport(w31=w31, w3inf=w3inf, total=w31 + w3inf, per_order=fine)


# -------------------------------------------------------------------
# Energy moments and coupling constants
# -------------------------------------------------------------------
def hamiltonian_moments(orbital: InitialOrbital, spec: PotentialSpec, N: int) -> Dict[str, float]:
    """Energy per particle and leading second moment of phi^{(x)N} for
    H_N = sum -Lap_i + sum_{i<j} V_N(x_i - x_j); `spec` is the unscaled V."""
    if N < 2:
        raise ValidationError(f"N must be >= 2, got {N}")
    if spec.scale_N != 1:
        raise ValidationError("pass the unscaled potential; N-scaling is applied here")
    grad_sq = orbital.norms["grad_l2"] ** 2
    A0 = orbital.fourth_power
    if spec.is_zero:
        return {"e1_per_N": grad_sq, "e1_limit": grad_sq, "h2_leading_per_N3": 0.0,
                "h2_limit": 0.0, "h2_mean_square_term": grad_sq ** 2 / N}

    norms = potential_norms(spec)
    R = spec.range

    def first(rho):
        return float(spec(rho)) * float(_autocorr(orbital, rho / N)) * rho * rho

    def second(rho):
        return float(spec(rho)) ** 2 * float(_autocorr(orbital, rho / N)) * rho * rho

    factor = (N - 1) / (2.0 * N)
    e1 = grad_sq + factor * FOUR_PI * _quad(first, 0.0, R, "<V_N>")
    h2 = factor * FOUR_PI * _quad(second, 0.0, R, "<V_N^2>")
    return {
        "e1_per_N": e1,
        "e1_limit": grad_sq + 0.5 * norms["L1"] * A0,
        "h2_leading_per_N3": h2,
        "h2_limit": 0.5 * norms["L2"] ** 2 * A0,
        "h2_mean_square_term": e1 ** 2 / N,
    }


def coupling_constants(spec: PotentialSpec, sol: ScatteringSolution) -> Dict[str, float]:
    """b = int V, 8 pi a = int V (1 - omega) and the excess int V omega."""
    check_consistent(sol, spec)
    if spec.is_zero:
        return {"b": 0.0, "eight_pi_a": 0.0, "excess": 0.0, "residual": 0.0}
    r = sol.nodes
    b = potential_norms(spec)["born_b"]
    eight_pi_a = FOUR_PI * support_integral(spec, sol, np.asarray(sol.u_samples) * r)
    excess = FOUR_PI * support_integral(spec, sol, np.asarray(sol.omega_samples) * r ** 2)
    return {"b": b, "eight_pi_a": eight_pi_a, "excess": excess,
            "residual": abs(b - eight_pi_a - excess)}


# -------------------------------------------------------------------
# Lambda-uniform norm tables
# -------------------------------------------------------------------
def uniform_norm_table(orbital: InitialOrbital, sol: ScatteringSolution, lambdas: Sequence[float],
                       m: int, p: float, dr: float = 0.01, max_ratio: float = 4.0) -> Dict:
    """||grad^m (omega psi_Lambda)||_p for each Lambda; uniform when max/min <= max_ratio."""
    if m not in (0, 1, 2, 3):
        raise ValidationError(f"derivative order must be 0..3, got {m}")
    if not p * (m + 1) > 3:
        raise OutOfHypothesisError(f"p(m+1) = {p * (m + 1)} <= 3: norm not uniformly bounded in Lambda",
                                   diagnostics={"m": m, "p": p})
    rows = []
    for lam in lambdas:
        grid = RadialGrid(dr, lam * orbital.extent * 1.05 + 4.0)
        r = grid.nodes
        f = omega_at(sol, 1, r) * scaled_profile(orbital, lam, r)
        rows.append({"Lambda": float(lam), "norm": radial_lp_norm(radial_tensor_norms(f, dr, m), dr, p)})
    values = [row["norm"] for row in rows]
    low = min(values)
    ratio = max(values) / low if low > 0 else (1.0 if max(values) == 0 else float("inf"))
    return {"m": m, "p": p, "rows": rows, "ratio": ratio, "uniform": ratio <= max_ratio}


# -------------------------------------------------------------------
# Units
# -------------------------------------------------------------------
def micro_to_macro(N: int, ell: float, t: float) -> Dict[str, float]:
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    if N * ell < 1.0 - 1e-12:
        raise OutOfRegimeError(f"ell = {ell} is below 1/N = {1.0 / N}", diagnostics={"N": N, "ell": ell})
    return {"Lambda": float(N), "L": 2.0 * N * ell, "T": float(N) ** 2 * t}


def macro_to_micro(Lambda: float, L: float, T: float) -> Dict[str, float]:
    if Lambda < 1:
        raise ValidationError(f"Lambda must be >= 1, got {Lambda}")
    return {"N": Lambda, "ell": L / (2.0 * Lambda), "t": T / Lambda ** 2}
