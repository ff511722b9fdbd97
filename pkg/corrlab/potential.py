"""
potential.py
------------
Repulsive radial potentials with compact support.

- PotentialSpec: immutable description (kind, V0, R, scale N, optional table)
- make_potential / scale_potential: construction and V_N(r) = N^2 V(N r)
- potential_norms: L^p norms by adaptive radial quadrature, Born constant b
"""
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from corrlab.errors import QuadratureError, ValidationError

logger = logging.getLogger(__name__)

KINDS = ("bump", "square-well", "tabulated")
QUAD_EPSREL = 1e-10


@lru_cache(maxsize=32)
def _table_spline(table: Tuple[Tuple[float, ...], Tuple[float, ...]]) -> CubicSpline:
    r, v = (np.asarray(t, dtype=float) for t in table)
    return CubicSpline(r, v, bc_type="clamped")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    V0: float
    R: float
    scale_N: int = 1
    table: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    @property
    def amplitude(self) -> float:
        return self.scale_N ** 2 * self.V0

    @property
    def range(self) -> float:
        return self.R / self.scale_N

    @property
    def smooth(self) -> bool:
        return self.kind != "square-well"

    @property
    def is_zero(self) -> bool:
        if self.V0 == 0:
            return True
        return self.kind == "tabulated" and not any(self.table[1])

    def profile(self, x) -> np.ndarray:
        """Unscaled profile V(x)."""
        x = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        inside = x < self.R
        if self.V0 == 0 or not inside.any():
            return out
        xi = x[inside]
        if self.kind == "square-well":
            out[inside] = self.V0
        elif self.kind == "bump":
            out[inside] = self.V0 * np.exp(1.0 - self.R ** 2 / (self.R ** 2 - xi ** 2))
        else:
            out[inside] = self.V0 * np.clip(_table_spline(self.table)(xi), 0.0, None)
        return out

    def __call__(self, r) -> np.ndarray:
        n = self.scale_N
        return n ** 2 * self.profile(n * np.asarray(r, dtype=float))

    def sample_on_grid(self, nodes: np.ndarray) -> np.ndarray:
        """Values at grid nodes; a node on the square-well jump gets the mid value."""
        v = self(nodes)
        if self.kind == "square-well" and self.V0 != 0:
            on_edge = np.abs(nodes - self.range) <= 1e-9 * self.range
            v[on_edge] = 0.5 * self.amplitude
        return v

    def left_limit(self, nodes: np.ndarray) -> np.ndarray:
        """V(r^-); differs from V(r) only at the square-well edge."""
        return self(np.minimum(nodes, np.nextafter(self.range, 0.0)))

    def to_dict(self) -> Dict:
        d = {"kind": self.kind, "V0": self.V0, "R": self.R, "scale_N": self.scale_N}
        if self.table is not None:
            d["table"] = [list(self.table[0]), list(self.table[1])]
        return d

    @property
    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def make_potential(kind: str, V0: float, R: float,
                   table: Optional[Sequence[Sequence[float]]] = None) -> PotentialSpec:
    """Build a potential. For kind="tabulated", `table` is (r_values, shape_values)
    on [0, R]; the profile is V0 * shape, clipped at zero and cut beyond R."""
    if kind not in KINDS:
        raise ValidationError(f"unknown potential kind {kind!r}; expected one of {KINDS}")
    if not V0 >= 0:
        raise ValidationError(f"V0 must be non-negative, got {V0}")
    if not R > 0:
        raise ValidationError(f"R must be positive, got {R}")

    frozen_table = None
    if kind == "tabulated":
        if table is None or len(table) != 2:
            raise ValidationError("tabulated potential needs table=(r_values, values)")
        r, v = (tuple(float(x) for x in col) for col in table)
        if len(r) != len(v) or len(r) < 4:
            raise ValidationError("table columns must have equal length >= 4")
        if np.any(np.diff(r) <= 0) or r[0] != 0.0 or abs(r[-1] - R) > 1e-12 * R:
            raise ValidationError("table radii must increase from 0 to R")
        if min(v) < 0:
            raise ValidationError("tabulated potential must be non-negative")
        frozen_table = (r, v)
    return PotentialSpec(kind=kind, V0=float(V0), R=float(R), table=frozen_table)


def scale_potential(spec: PotentialSpec, N: int) -> PotentialSpec:
    if int(N) != N or N < 1:
        raise ValidationError(f"scale N must be an integer >= 1, got {N}")
    return replace(spec, scale_N=spec.scale_N * int(N))


def _radial_quad(fn, upper: float, label: str) -> float:
    res = quad(fn, 0.0, upper, epsabs=0.0, epsrel=QUAD_EPSREL, limit=400, full_output=1)
    value, abserr = res[0], res[1]
    if len(res) > 3:
        raise QuadratureError(
            f"quadrature for {label} did not converge",
            diagnostics={"value": value, "abserr": abserr, "message": res[3]},
        )
    return 4.0 * np.pi * value


def potential_norms(spec: PotentialSpec) -> Dict[str, float]:
    """L1, L3/2, L2, Linf of V (as a function on R^3) and born_b = L1."""
    if spec.is_zero:
        return {"L1": 0.0, "L3over2": 0.0, "L2": 0.0, "Linf": 0.0, "born_b": 0.0}

    upper = spec.range
    out = {}
    for key, p in (("L1", 1.0), ("L3over2", 1.5), ("L2", 2.0)):
        integral = _radial_quad(lambda r, p=p: float(spec(r)) ** p * r * r, upper, key)
        out[key] = integral ** (1.0 / p)
    if spec.kind == "tabulated":
        out["Linf"] = float(spec(np.linspace(0.0, upper, 4001)).max())
    else:
        out["Linf"] = spec.amplitude
    out["born_b"] = out["L1"]
    return out
