"""
dispersive.py
-------------
Sup-norm decay of freely evolved data and the modified dispersive bound.

- supnorm_series: sup |e^{i mu Lap t} f| (optionally |grad ...|) at several t
- estimate_rhs: ||f||_s + ||grad f||_{3s/(s+3)} + ||grad^2 f||_r with index gates
- fit_exponent: log-log slope of a DecaySeries on a time window
- refine_series / empirical_constant / standard_bound_growth / dressed_series
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from corrlab.errors import HorizonError, OutOfHypothesisError, ValidationError
from corrlab.functionals import InitialOrbital, scaled_profile
from corrlab.grid import RadialGrid, radial_derivatives, radial_lp_norm, radial_tensor_norms
from corrlab.potential import PotentialSpec
from corrlab.propagator import (
    BOUNDARY_TOL,
    RadialField,
    boundary_fraction,
    evolve_free,
    moller_transform,
)
from corrlab.scattering import ScatteringSolution, omega_at

logger = logging.getLogger(__name__)

REFINE_TOL = 0.01
DEFECT_TOL = 1e-3


@dataclass
class DecaySeries:
    times: np.ndarray
    sup_norms: np.ndarray
    grad_sup_norms: Optional[np.ndarray] = None
    rejected: Optional[np.ndarray] = None
    Lambda: Optional[float] = None
    family_tag: str = ""
    diagnostics: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.sup_norms = np.asarray(self.sup_norms, dtype=float)
        if self.sup_norms.shape != self.times.shape:
            raise ValidationError("times and sup_norms must have the same length")
        if self.grad_sup_norms is not None:
            self.grad_sup_norms = np.asarray(self.grad_sup_norms, dtype=float)
            if self.grad_sup_norms.shape != self.times.shape:
                raise ValidationError("grad_sup_norms must match times")
        if self.rejected is None:
            self.rejected = np.zeros(self.times.shape, dtype=bool)

    def rows(self) -> List[Dict]:
        out = []
        for i, t in enumerate(self.times):
            out.append({
                "t": float(t),
                "sup_norm": float(self.sup_norms[i]),
                "grad_sup_norm": float(self.grad_sup_norms[i]) if self.grad_sup_norms is not None else float("nan"),
                "Lambda": float(self.Lambda) if self.Lambda is not None else float("nan"),
                "family_tag": self.family_tag,
            })
        return out


def _sample(f: RadialField, mu: Optional[float], t: float, with_gradient: bool) -> Tuple[float, float, float]:
    ev = evolve_free(f, mu, t)
    frac = boundary_fraction(ev)
    if frac > BOUNDARY_TOL:
        raise HorizonError(
            f"free evolution to t={t} reaches the grid edge ({frac:.3g} of the mass)",
            diagnostics={"t": t, "boundary_mass": frac, "r_max": f.grid.extent},
        )
    sup = float(np.max(np.abs(ev.samples)))
    grad = float(np.max(np.abs(radial_derivatives(ev.samples, f.grid.dr)[1]))) if with_gradient else float("nan")
    return sup, grad, float(ev.diagnostics.get("spectral_tail", 0.0))


def supnorm_series(f: RadialField, mu: Optional[float], times: Sequence[float], with_gradient: bool = False,
                   Lambda: Optional[float] = None, family_tag: str = "", workers: int = 1) -> DecaySeries:
    """Grid maxima of the exactly (sine-basis) evolved datum at each time."""
    times = [float(t) for t in times]
    if any(t <= 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("times must be positive and increasing")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(lambda t: _sample(f, mu, t, with_gradient), times))
    else:
        samples = [_sample(f, mu, t, with_gradient) for t in times]
    return DecaySeries(
        times=times,
        sup_norms=[s[0] for s in samples],
        grad_sup_norms=[s[1] for s in samples] if with_gradient else None,
        Lambda=Lambda,
        family_tag=family_tag,
        diagnostics={"max_spectral_tail": max(s[2] for s in samples)},
    )


def _coarse(f: RadialField) -> RadialField:
    samples = f.samples if f.grid.n % 2 == 0 else f.samples[:-1]
    grid = RadialGrid(2 * f.grid.dr, (samples.shape[0] - 1) * f.grid.dr)
    return RadialField(grid=grid, samples=samples[::2], mu=f.mu, time=f.time)


def refine_series(f: RadialField, mu: Optional[float], series: DecaySeries, tol: float = REFINE_TOL) -> DecaySeries:
    """Mark samples whose sup norm moves by more than `tol` when dr is doubled."""
    coarse = supnorm_series(_coarse(f), mu, series.times)
    shift = np.abs(coarse.sup_norms - series.sup_norms) / np.maximum(series.sup_norms, 1e-300)
    rejected = series.rejected | (shift > tol)
    if rejected.any():
        logger.warning("%d of %d sup-norm samples rejected by the refinement check",
                       int(rejected.sum()), rejected.size)
    diagnostics = dict(series.diagnostics, refinement_shift=shift.tolist())
    return replace(series, rejected=rejected, diagnostics=diagnostics)


def _lebesgue_index(s: float, shift: float) -> float:
    """3s/(s + shift), with the s = inf limit 3."""
    return 3.0 if np.isinf(s) else 3.0 * s / (s + shift)


def estimate_rhs(f: RadialField, s: float, q: float = np.inf, r: Optional[float] = None,
                 t: Optional[float] = None) -> Dict[str, float]:
    """Norm bundle of the modified dispersive estimate.

    Admissible indices: s in [3/2, inf], q in [max(s, 3), inf], r in [1, 3q/(3 + 2q)].
    For q = inf, r defaults to 3s/(2s + 3) so both terms decay like t^{-3/(2s)}.
    """
    if not 1.5 <= s <= np.inf:
        raise OutOfHypothesisError(f"s = {s} outside [3/2, inf]", diagnostics={"s": s})
    if not max(s, 3.0) <= q <= np.inf:
        raise OutOfHypothesisError(f"q = {q} outside [max(s,3), inf]", diagnostics={"s": s, "q": q})
    if r is None:
        if not np.isinf(q):
            raise ValidationError("r must be given for finite q")
        r = 1.5 if np.isinf(s) else 3.0 * s / (2 * s + 3)
    r_top = 1.5 if np.isinf(q) else 3.0 * q / (3 + 2 * q)
    if not 1.0 <= r <= r_top + 1e-12:
        raise OutOfHypothesisError(f"r = {r} outside [1, {r_top}]", diagnostics={"s": s, "q": q, "r": r})

    dr = f.grid.dr
    y = f.samples
    f_s = radial_lp_norm(np.abs(y), dr, s)
    grad_f = radial_lp_norm(radial_tensor_norms(y, dr, 1), dr, _lebesgue_index(s, 3.0))
    hess_f = radial_lp_norm(radial_tensor_norms(y, dr, 2), dr, r)

    inv_q = 0.0 if np.isinf(q) else 1.0 / q
    inv_s = 0.0 if np.isinf(s) else 1.0 / s
    lead = 1.5 * (inv_s - inv_q)
    second = 1.5 * (1.0 / r - inv_q) - 1.0
    out = {
        "s": s, "q": q, "r": r,
        "f_s": f_s, "grad_f": grad_f, "hess_f": hess_f,
        "bundle": f_s + grad_f + hess_f,
        "decay_exponent": lead, "hess_exponent": second,
    }
    if t is not None:
        out["bound"] = t ** -lead * (f_s + grad_f) + t ** -second * hess_f
    return out


def fit_exponent(series: DecaySeries, window: Tuple[float, float]) -> Dict[str, float]:
    """alpha = -slope of log sup_norm against log t on the window; residual is RMS in log units."""
    t = series.times
    y = series.sup_norms
    mask = (t >= window[0]) & (t <= window[1]) & ~series.rejected
    if mask.sum() < 5:
        raise ValidationError(f"fit window {window} holds {int(mask.sum())} usable samples, need >= 5")
    if np.any(y[mask] <= 0):
        raise ValidationError("sup norms in the fit window must be positive")
    lt, ly = np.log(t[mask]), np.log(y[mask])
    slope, intercept = np.polyfit(lt, ly, 1)
    residual = float(np.sqrt(np.mean((ly - (slope * lt + intercept)) ** 2)))
    return {"alpha": float(-slope), "residual": residual, "samples": int(mask.sum())}


def empirical_constant(series: DecaySeries, bundle: float, s: float) -> float:
    """Smallest C with sup_norm(t) <= C t^{-3/(2s)} bundle over the accepted samples."""
    if bundle <= 0:
        return 0.0
    keep = ~series.rejected
    exponent = 0.0 if np.isinf(s) else 1.5 / s
    return float(np.max(series.sup_norms[keep] * series.times[keep] ** exponent / bundle))


def omega_times_profile(sol: ScatteringSolution, orbital: InitialOrbital, Lambda: float,
                        grid: RadialGrid, mu: float = 1.0) -> RadialField:
    """The slowly decaying datum omega * psi_Lambda."""
    r = grid.nodes
    return RadialField(grid=grid, samples=(omega_at(sol, 1, r) * scaled_profile(orbital, Lambda, r)).astype(complex),
                       mu=mu)


def standard_bound_growth(sol: ScatteringSolution, orbital: InitialOrbital, lambdas: Sequence[float],
                          dr: float = 0.05) -> Dict:
    """||omega psi_Lambda||_1 over Lambda; the L^1 -> L^inf bound inherits its ~Lambda^2 growth."""
    rows = []
    for lam in lambdas:
        grid = RadialGrid(dr, lam * orbital.extent * 1.05 + 4.0)
        f = omega_times_profile(sol, orbital, lam, grid)
        rows.append({"Lambda": float(lam), "l1": radial_lp_norm(np.abs(f.samples), dr, 1)})
    if len(rows) < 2:
        return {"rows": rows, "slope": float("nan")}
    slope = np.polyfit(np.log([row["Lambda"] for row in rows]), np.log([row["l1"] for row in rows]), 1)[0]
    return {"rows": rows, "slope": float(slope)}


def dressed_series(f: RadialField, spec: PotentialSpec, times: Sequence[float], t0: float,
                   dt: float = 0.01, defect_tol: float = DEFECT_TOL, Lambda: Optional[float] = None) -> DecaySeries:
    """Sup-norm series of the Moller-dressed datum Omega* f; every sample is
    rejected when the approximant's Cauchy defect exceeds `defect_tol`."""
    moller = moller_transform(f, spec, t0, "adjoint", dt)
    dressed = moller["field"]
    series = supnorm_series(dressed, 1.0, times, Lambda=Lambda, family_tag="dressed")
    defect = moller["cauchy_defect"]
    series.diagnostics["cauchy_defect"] = defect
    if defect > defect_tol:
        logger.warning("dressed series rejected: Cauchy defect %.3g > %.3g at t0=%s", defect, defect_tol, t0)
        series.rejected = np.ones(series.times.shape, dtype=bool)
    return series
