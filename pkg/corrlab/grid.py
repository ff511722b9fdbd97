"""
grid.py
-------
Uniform radial half-line grids and the finite-difference / quadrature
helpers every other module shares.

- RadialGrid(dr, r_max): nodes r_i = i*dr, i = 0..n
- radial_derivatives: 4th-order central stencils, parity reflection at r = 0
- radial_tensor_norms: pointwise |grad^m f| of a radial f, m <= 3
- radial_lp_norm / radial_integral: 4*pi * int ... r^2 dr by Simpson
"""
from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy.integrate import simpson

from corrlab.errors import ValidationError

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class RadialGrid:
    dr: float
    r_max: float

    def __post_init__(self):
        if not (self.dr > 0 and np.isfinite(self.dr)):
            raise ValidationError(f"grid spacing must be positive, got {self.dr}")
        if not self.r_max >= 4 * self.dr:
            raise ValidationError(f"grid extent {self.r_max} too short for spacing {self.dr}")

    @property
    def n(self) -> int:
        """Number of intervals; the last node sits at n*dr (~ r_max)."""
        return int(round(self.r_max / self.dr))

    @property
    def extent(self) -> float:
        return self.n * self.dr

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dr

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.dr / factor, self.extent)

    def describe(self) -> Dict[str, float]:
        return {"dr": self.dr, "r_max": self.extent, "nodes": self.n + 1}


def _pad(y: np.ndarray, k: int, parity: str) -> np.ndarray:
    left = y[k:0:-1]
    if parity == "odd":
        left = -left
    right = y[-2:-k - 2:-1]
    return np.concatenate([left, y, right])


def radial_derivatives(y: np.ndarray, dr: float, parity: str = "even") -> Dict[int, np.ndarray]:
    """First three derivatives of samples `y` on nodes i*dr.

    Radial profiles are even in r; u = r*psi is odd. The outer end is
    reflected as well, so values within three nodes of r_max are only
    meaningful for fields that vanish there.
    """
    if y.shape[0] < 7:
        raise ValidationError("need at least 7 samples for 4th-order stencils")
    yp = _pad(np.asarray(y), 3, parity)
    n = y.shape[0]

    def s(o):
        return yp[3 + o:3 + o + n]

    d1 = (-s(2) + 8 * s(1) - 8 * s(-1) + s(-2)) / (12 * dr)
    d2 = (-s(2) + 16 * s(1) - 30 * s(0) + 16 * s(-1) - s(-2)) / (12 * dr ** 2)
    d3 = (-s(3) + 8 * s(2) - 13 * s(1) + 13 * s(-1) - 8 * s(-2) + s(-3)) / (8 * dr ** 3)
    return {1: d1, 2: d2, 3: d3}


def radial_tensor_norms(y: np.ndarray, dr: float, m: int) -> np.ndarray:
    """Pointwise Frobenius norm |grad^m f| of a radial f sampled on nodes.

    With B = f'/r:
      |grad^2 f|^2 = f''^2 + 2 B^2
      |grad^3 f|^2 = f'''^2 + 6 ((f'' - B)/r)^2
    and the r -> 0 limits sqrt(3)|f''(0)| and |f'''(0)|.
    """
    y = np.asarray(y)
    if m == 0:
        return np.abs(y)
    d = radial_derivatives(y, dr)
    if m == 1:
        return np.abs(d[1])
    r = np.arange(y.shape[0]) * dr
    out = np.empty(y.shape[0])
    b = d[1][1:] / r[1:]
    if m == 2:
        out[1:] = np.sqrt(np.abs(d[2][1:]) ** 2 + 2 * np.abs(b) ** 2)
        out[0] = np.sqrt(3.0) * np.abs(d[2][0])
        return out
    if m == 3:
        c = (d[2][1:] - b) / r[1:]
        out[1:] = np.sqrt(np.abs(d[3][1:]) ** 2 + 6 * np.abs(c) ** 2)
        out[0] = np.abs(d[3][0])
        return out
    raise ValidationError(f"derivative order {m} not supported (m <= 3)")


def radial_integral(values: np.ndarray, dr: float) -> float:
    """4*pi * int values(r) r^2 dr over the sampled nodes."""
    r = np.arange(values.shape[0]) * dr
    return float(FOUR_PI * simpson(values * r ** 2, dx=dr))


def radial_lp_norm(values: np.ndarray, dr: float, p: float) -> float:
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return radial_integral(a ** p, dr) ** (1.0 / p)
