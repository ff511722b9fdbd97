"""
propagator.py
-------------
Time evolution engines.

- evolve_radial: Crank-Nicolson on u = r psi for i d_t psi = (-mu Lap + c V) psi
- evolve_free: exact free evolution through the odd extension of u (DST-I)
- evolve_weighted: e^{-2iLT} through the (1 - omega) conjugation
- evolve_cartesian: Strang split-step Fourier on a periodic 3D box
- moller_transform: finite-time approximants of the wave operator and adjoint

The mass coefficient and the potential factor always travel together as a
Hamiltonian preset: RELATIVE (-2 Lap + V), ONE_BODY (-Lap + V) and
MOLLER (-Lap + V/2).
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.fft import dst, fftfreq, fftn, ifftn

from corrlab import _kernels, settings
from corrlab.errors import (
    ConvergenceError,
    NumericalError,
    ResourceError,
    ValidationError,
)
from corrlab.grid import RadialGrid
from corrlab.potential import PotentialSpec
from corrlab.scattering import ScatteringSolution, check_consistent, omega_at

logger = logging.getLogger(__name__)

ABSORB_FRACTION = 0.1
ABSORB_STRENGTH = 1.0
BOUNDARY_TOL = 1e-6
ALIAS_TOL = 1e-12


@dataclass(frozen=True)
class Hamiltonian:
    mu: float
    coupling: float = 1.0
    name: str = "custom"


RELATIVE = Hamiltonian(2.0, 1.0, "relative")
ONE_BODY = Hamiltonian(1.0, 1.0, "one-body")
MOLLER = Hamiltonian(1.0, 0.5, "moller")
FREE = Hamiltonian(1.0, 0.0, "free")


def _origin_value(u: np.ndarray, h: float) -> complex:
    # psi(0) from u = r psi with psi even: 4th-order one-sided limit of u/r
    return (4.0 * u[1] / h - u[2] / (2.0 * h)) / 3.0


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    samples: np.ndarray
    mu: float = 2.0
    absorb_start: Optional[float] = None
    time: float = 0.0
    diagnostics: Dict = field(default_factory=dict)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn: Callable, mu: float = 2.0, **kw) -> "RadialField":
        return cls(grid=grid, samples=np.asarray(fn(grid.nodes), dtype=complex), mu=mu, **kw)

    @classmethod
    def from_u(cls, grid: RadialGrid, u: np.ndarray, mu: float = 2.0, **kw) -> "RadialField":
        r = grid.nodes
        psi = np.empty(r.shape, dtype=complex)
        psi[1:] = u[1:] / r[1:]
        psi[0] = _origin_value(u, grid.dr)
        return cls(grid=grid, samples=psi, mu=mu, **kw)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def u(self) -> np.ndarray:
        return self.grid.nodes * self.samples

    @property
    def norm(self) -> float:
        """Discrete L2 norm, the quantity Crank-Nicolson conserves."""
        u = self.u[1:-1]
        return float(np.sqrt(4 * np.pi * self.grid.dr * np.sum(np.abs(u) ** 2)))

    @property
    def absorber_start(self) -> float:
        if self.absorb_start is not None:
            return self.absorb_start
        return (1.0 - ABSORB_FRACTION) * self.grid.extent

    def with_samples(self, samples: np.ndarray, **changes) -> "RadialField":
        return replace(self, samples=np.asarray(samples, dtype=complex),
                       diagnostics=changes.pop("diagnostics", {}), **changes)


def radial_gaussian(grid: RadialGrid, sigma: float, mu: float = 1.0, **kw) -> RadialField:
    """Unit-norm Gaussian (pi sigma^2)^{-3/4} exp(-r^2 / 2 sigma^2)."""
    return RadialField.from_function(
        grid, lambda r: free_gaussian_exact(r, sigma, mu, 0.0), mu=mu, **kw)


def free_gaussian_exact(r, sigma: float, mu: float, t: float) -> np.ndarray:
    s2 = sigma ** 2 + 2j * mu * t
    r = np.asarray(r, dtype=float)
    return (np.pi * sigma ** 2) ** -0.75 * (sigma ** 2 / s2) ** 1.5 * np.exp(-r ** 2 / (2 * s2))


def boundary_fraction(field_: RadialField, start: Optional[float] = None) -> float:
    start = field_.absorber_start if start is None else start
    mass = np.abs(field_.u) ** 2
    total = mass.sum()
    if total == 0:
        return 0.0
    return float(mass[field_.nodes >= start].sum() / total)


def absorber(r: np.ndarray, start: float, end: float, strength: float = ABSORB_STRENGTH) -> np.ndarray:
    """Cubic-ramp absorbing potential W(r) >= 0, zero before `start`."""
    x = np.clip((r - start) / (end - start), 0.0, None)
    return strength * x ** 3


def time_steps(T: float, dt: float):
    if not dt > 0:
        raise ValidationError(f"time step must be positive, got {dt}")
    nsteps = max(1, int(np.ceil(abs(T) / dt - 1e-9)))
    return nsteps, T / nsteps


def _diagonal(field_: RadialField, spec: Optional[PotentialSpec], ham: Hamiltonian,
              absorb: bool) -> np.ndarray:
    r = field_.nodes[1:-1]
    diag = np.full(r.shape, 2.0 * ham.mu / field_.grid.dr ** 2, dtype=complex)
    if spec is not None and ham.coupling and not spec.is_zero:
        diag += ham.coupling * spec.sample_on_grid(r)
    if absorb:
        diag -= 1j * absorber(r, field_.absorber_start, field_.grid.extent)
    return diag


def check_budget(nodes: int, nsteps: int) -> None:
    if float(nodes) * nsteps > settings.MAX_NODE_STEPS:
        raise ResourceError(
            f"evolution of {nodes} nodes x {nsteps} steps exceeds CORRLAB_MAX_NODES",
            diagnostics={"nodes": nodes, "steps": nsteps, "limit": settings.MAX_NODE_STEPS},
        )


def _cn_march(u_int: np.ndarray, diag: np.ndarray, mu: float, dr: float,
              step: float, nsteps: int) -> np.ndarray:
    off = -mu / dr ** 2
    a_diag = 1.0 + 0.5j * step * diag
    b_diag = 1.0 - 0.5j * step * diag
    a_off = 0.5j * step * off
    cp, inv = _kernels.thomas_factor(a_diag, a_off)
    return _kernels.cn_march(np.ascontiguousarray(u_int, dtype=np.complex128),
                             a_off, cp, inv, b_diag, -a_off, nsteps)


def _finish(field_: RadialField, u_int: np.ndarray, ham: Hamiltonian, T: float,
            norm0: float, absorb: bool) -> RadialField:
    if not np.all(np.isfinite(u_int)):
        raise NumericalError("non-finite values in evolved field",
                             diagnostics={"time": field_.time + T})
    u = np.zeros(field_.grid.n + 1, dtype=complex)
    u[1:-1] = u_int
    out = RadialField.from_u(field_.grid, u, mu=ham.mu, absorb_start=field_.absorb_start,
                             time=field_.time + T)
    frac = boundary_fraction(out)
    out.diagnostics["boundary_mass"] = frac
    if absorb and norm0 > 0:
        out.diagnostics["absorbed_mass"] = 1.0 - (out.norm / norm0) ** 2
    if frac > BOUNDARY_TOL:
        logger.warning("boundary contamination: %.3g of the mass is in the outer layer at t=%.6g",
                       frac, out.time)
        out.diagnostics["boundary_warning"] = True
    return out


def evolve_radial(field_: RadialField, spec: Optional[PotentialSpec], T: float, dt: float,
                  hamiltonian: Optional[Hamiltonian] = None, absorb: bool = True) -> RadialField:
    """Crank-Nicolson evolution for time T (negative T runs backwards).

    The effective step is T / ceil(|T| / dt). Input is left untouched.
    """
    ham = hamiltonian or Hamiltonian(field_.mu)
    if T == 0:
        return field_.with_samples(field_.samples.copy(), mu=ham.mu)
    nsteps, step = time_steps(T, dt)
    check_budget(field_.grid.n, nsteps)
    diag = _diagonal(field_, spec, ham, absorb)
    norm0 = field_.norm
    u_int = _cn_march(field_.u[1:-1], diag, ham.mu, field_.grid.dr, step, nsteps)
    return _finish(field_, u_int, ham, T, norm0, absorb)


def evolve_radial_series(field_: RadialField, spec: Optional[PotentialSpec], times: Sequence[float],
                         dt: float, hamiltonian: Optional[Hamiltonian] = None,
                         absorb: bool = True) -> List[RadialField]:
    """Fields at each of the increasing `times` (measured from field_.time) in one pass."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ValidationError("times must be non-negative and non-decreasing")
    ham = hamiltonian or Hamiltonian(field_.mu)
    diag = _diagonal(field_, spec, ham, absorb)
    norm0 = field_.norm
    out = []
    u_int = field_.u[1:-1].astype(complex)
    elapsed = 0.0
    for t in times:
        interval = t - elapsed
        if interval > 0:
            nsteps, step = time_steps(interval, dt)
            check_budget(field_.grid.n, nsteps)
            u_int = _cn_march(u_int, diag, ham.mu, field_.grid.dr, step, nsteps)
        out.append(_finish(field_, u_int.copy(), ham, t, norm0, absorb))
        elapsed = t
    return out


def radial_energy(field_: RadialField, spec: Optional[PotentialSpec],
                  hamiltonian: Optional[Hamiltonian] = None) -> float:
    """<psi, H psi> for the same finite-difference H that evolve_radial uses."""
    ham = hamiltonian or Hamiltonian(field_.mu)
    dr = field_.grid.dr
    u = field_.u.copy()
    u[-1] = 0.0
    ui = u[1:-1]
    hu = ham.mu / dr ** 2 * (2 * ui - u[:-2] - u[2:])
    if spec is not None and ham.coupling and not spec.is_zero:
        hu = hu + ham.coupling * spec.sample_on_grid(field_.nodes[1:-1]) * ui
    return float(4 * np.pi * dr * np.real(np.vdot(ui, hu)))


def evolve_free(field_: RadialField, mu: Optional[float], T: float) -> RadialField:
    """Exact free evolution e^{-i mu k^2 T} on the sine basis of u = r psi.

    mu=None uses the field's own mass coefficient.
    """
    mu = field_.mu if mu is None else mu
    if T == 0:
        return field_.with_samples(field_.samples.copy(), mu=mu)
    grid = field_.grid
    u = field_.u[1:-1]
    m = u.shape[0]
    k = np.arange(1, m + 1) * np.pi / grid.extent
    coeffs = dst(u.real, type=1, norm="ortho") + 1j * dst(u.imag, type=1, norm="ortho")

    power = np.abs(coeffs) ** 2
    total = power.sum()
    tail = float(power[int(0.9 * m):].sum() / total) if total > 0 else 0.0

    coeffs *= np.exp(-1j * mu * k ** 2 * T)
    u_new = dst(coeffs.real, type=1, norm="ortho") + 1j * dst(coeffs.imag, type=1, norm="ortho")

    out = _finish(field_, u_new, Hamiltonian(mu, 0.0, "free"), T, field_.norm, absorb=False)
    out.diagnostics["spectral_tail"] = tail
    if tail > ALIAS_TOL:
        logger.warning("spectral tail %.3g above %.0e: grid under-resolves the data", tail, ALIAS_TOL)
        out.diagnostics["aliasing_warning"] = True
    return out


def weighted_norm(field_: RadialField, sol: ScatteringSolution) -> float:
    """Norm of the weighted space L^2((1 - omega)^2 dX)."""
    w = 1.0 - omega_at(sol, 1, field_.nodes)
    u = (w * field_.u)[1:-1]
    return float(np.sqrt(4 * np.pi * field_.grid.dr * np.sum(np.abs(u) ** 2)))


def evolve_weighted(field_: RadialField, sol: ScatteringSolution, spec: PotentialSpec,
                    T: float, dt: float, absorb: bool = True) -> RadialField:
    """e^{-2iLT} phi = (1 - omega)^{-1} e^{-i(-2 Lap + V)T} (1 - omega) phi."""
    check_consistent(sol, spec)
    if field_.mu != RELATIVE.mu:
        raise ValidationError(f"weighted evolution is defined for mu=2, got mu={field_.mu}")
    w = 1.0 - omega_at(sol, 1, field_.nodes)
    lifted = field_.with_samples(w * field_.samples)
    evolved = evolve_radial(lifted, spec, T, dt, RELATIVE, absorb=absorb)
    return evolved.with_samples(evolved.samples / w, diagnostics=dict(evolved.diagnostics))


# -------------------------------------------------------------------
# Cartesian engine
# -------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class CartesianField:
    samples: np.ndarray
    h: float
    mu: float = 2.0
    time: float = 0.0
    diagnostics: Dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def side(self) -> float:
        return self.n * self.h

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.h

    def radius(self) -> np.ndarray:
        x = self.axis
        return np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.h ** 3))

    @classmethod
    def from_radial_function(cls, n: int, h: float, fn: Callable, mu: float = 2.0) -> "CartesianField":
        x = (np.arange(n) - n // 2) * h
        r = np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)
        return cls(samples=np.asarray(fn(r), dtype=complex), h=h, mu=mu)

    def with_samples(self, samples: np.ndarray, **changes) -> "CartesianField":
        return replace(self, samples=samples, diagnostics=changes.pop("diagnostics", {}), **changes)


def wavenumbers_squared(n: int, h: float) -> np.ndarray:
    k = 2 * np.pi * fftfreq(n, d=h)
    return k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2


def shell_fraction(field_: CartesianField, fraction: float = 0.4) -> float:
    """Share of the mass within the outer shell max_i |x_i| > fraction * side."""
    x = np.abs(field_.axis)
    outer = x > fraction * field_.side
    mask = outer[:, None, None] | outer[None, :, None] | outer[None, None, :]
    mass = np.abs(field_.samples) ** 2
    total = mass.sum()
    return float(mass[mask].sum() / total) if total > 0 else 0.0


def _check_box(field_: CartesianField) -> None:
    n = field_.n
    if field_.samples.shape != (n, n, n) or n < 4 or n & (n - 1):
        raise ValidationError(f"Cartesian grid must be n^3 with n a power of two, got {field_.samples.shape}")


def split_step(field_: CartesianField, T: float, dt: float,
               nonlinear: Callable[[np.ndarray, float], np.ndarray]) -> CartesianField:
    """Strang splitting: half step of `nonlinear(psi, tau)`, full kinetic, half step."""
    _check_box(field_)
    if T == 0:
        return field_.with_samples(field_.samples.copy())
    nsteps, step = time_steps(T, dt)
    check_budget(field_.n ** 3, nsteps)
    kinetic = np.exp(-1j * field_.mu * wavenumbers_squared(field_.n, field_.h) * step)
    psi = nonlinear(field_.samples.astype(complex), 0.5 * step)
    for i in range(nsteps):
        psi = ifftn(kinetic * fftn(psi))
        psi = nonlinear(psi, 0.5 * step if i == nsteps - 1 else step)
    if not np.all(np.isfinite(psi)):
        raise NumericalError("non-finite values in Cartesian evolution")
    out = field_.with_samples(psi, time=field_.time + T)
    frac = shell_fraction(out)
    out.diagnostics["shell_mass"] = frac
    if frac > BOUNDARY_TOL:
        logger.warning("wrap-around risk: %.3g of the mass in the outer box shell; enlarge the box", frac)
        out.diagnostics["wraparound_warning"] = True
    return out


def evolve_cartesian(field_: CartesianField, spec: Optional[PotentialSpec], T: float,
                     dt: float) -> CartesianField:
    """Split-step Fourier for i d_t psi = (-mu Lap + V) psi on the periodic box."""
    if spec is None or spec.is_zero:
        potential = None
    else:
        potential = spec(field_.radius())

    def phase(psi, tau):
        if potential is None:
            return psi
        return psi * np.exp(-1j * potential * tau)

    return split_step(field_, T, dt, phase)


# -------------------------------------------------------------------
# Wave operator approximants
# -------------------------------------------------------------------
def _moller_leg(field_: RadialField, spec: PotentialSpec, t: float, direction: str,
                dt: float) -> RadialField:
    if direction == "adjoint":
        g = evolve_radial(field_, spec, t, dt, MOLLER, absorb=False)
        g = evolve_radial(g, None, -t, dt, FREE, absorb=False)
    elif direction == "forward":
        g = evolve_radial(field_, None, t, dt, FREE, absorb=False)
        g = evolve_radial(g, spec, -t, dt, MOLLER, absorb=False)
    else:
        raise ValidationError(f"direction must be 'forward' or 'adjoint', got {direction!r}")
    return g.with_samples(g.samples, mu=field_.mu, time=field_.time,
                          diagnostics=dict(g.diagnostics))


def _distance(a: RadialField, b: RadialField) -> float:
    d = (a.u - b.u)[1:-1]
    return float(np.sqrt(4 * np.pi * a.grid.dr * np.sum(np.abs(d) ** 2)))


def moller_transform(field_: RadialField, spec: PotentialSpec, t0: float,
                     direction: str = "adjoint", dt: float = 0.01,
                     defect_tol: Optional[float] = None) -> Dict:
    """Approximant of Omega psi ("forward") or Omega* psi ("adjoint") at time t0
    for h = -Lap + V/2; cauchy_defect is the distance to the 2 t0 approximant.

    Both legs use the same Crank-Nicolson discretisation, so V = 0 gives the
    identity exactly.
    """
    if not t0 > 0:
        raise ValidationError(f"t0 must be positive, got {t0}")
    approx = _moller_leg(field_, spec, t0, direction, dt)
    approx2 = _moller_leg(field_, spec, 2 * t0, direction, dt)
    defect = _distance(approx, approx2)
    approx.diagnostics["cauchy_defect"] = defect
    if defect_tol is not None and defect > defect_tol:
        raise ConvergenceError(
            f"wave operator approximant not converged: defect {defect:.3g} > {defect_tol:.3g}",
            diagnostics={"t0": t0, "cauchy_defect": defect},
        )
    return {"field": approx, "cauchy_defect": defect}


def intertwining_defect(field_: RadialField, spec: PotentialSpec, t: float, t0: float,
                        dt: float = 0.01) -> float:
    """|| e^{-iht} psi - Omega e^{i Lap t} Omega* psi || / ||psi|| at approximant time t0."""
    direct = evolve_radial(field_, spec, t, dt, MOLLER, absorb=False)
    dressed = _moller_leg(field_, spec, t0, "adjoint", dt)
    moved = evolve_radial(dressed, None, t, dt, FREE, absorb=False)
    back = _moller_leg(moved, spec, t0, "forward", dt)
    norm = field_.norm
    return _distance(direct, back) / norm if norm > 0 else 0.0


# -------------------------------------------------------------------
# Checkpoints
# -------------------------------------------------------------------
def save_checkpoint(field_: RadialField, path: str, potential_hash: str = "") -> str:
    header = (
        "# corrlab radial checkpoint\n"
        f"# mu={field_.mu!r} dr={field_.grid.dr!r} r_max={field_.grid.extent!r} "
        f"potential_hash={potential_hash or '-'} T={field_.time!r}\n"
        "r,re_psi,im_psi"
    )
    data = np.column_stack([field_.nodes, field_.samples.real, field_.samples.imag])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=header, comments="")
    return path


def load_checkpoint(path: str) -> RadialField:
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for token in line[1:].split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
    missing = {"mu", "dr", "r_max", "T"} - set(meta)
    if missing:
        raise ValidationError(f"checkpoint {path} lacks header fields {sorted(missing)}")
    data = np.loadtxt(path, delimiter=",", skiprows=3, ndmin=2)
    grid = RadialGrid(float(meta["dr"]), float(meta["r_max"]))
    if data.shape[0] != grid.n + 1:
        raise ValidationError(f"checkpoint {path} has {data.shape[0]} rows, header implies {grid.n + 1}")
    potential_hash = meta.get("potential_hash", "-")
    return RadialField(
        grid=grid, samples=data[:, 1] + 1j * data[:, 2], mu=float(meta["mu"]),
        time=float(meta["T"]),
        diagnostics={} if potential_hash == "-" else {"potential_hash": potential_hash},
    )
