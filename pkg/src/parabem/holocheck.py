"""Numerical analyticity verification for parameter-to-value maps.

Derivatives come from trapezoidal contour integrals on circles around a
parameter coordinate; on a holomorphic map the trapezoid rule is
spectrally accurate and the extracted coefficients do not depend on the
contour radius.  Non-analytic maps break the radius independence, which
is what the negative control exploits.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import geometry
from .kernels import UDomainError

DEFAULT_NODES = 32
VERDICT_RTOL = 1e-5       # derivative residual tolerance for report verdicts
RADIUS_SPLIT_RTOL = 1e-8  # contour coefficients at zeta and zeta/2


def _point_and_radius(z):
    if isinstance(z, geometry.ComplexParamPoint):
        return np.asarray(z.values, dtype=complex), np.asarray(z.polyradius)
    return np.atleast_1d(np.asarray(z, dtype=complex)), None


def _contour_coefficient(f, values, j, radius, m, n_nodes):
    ks = np.arange(n_nodes)
    phases = np.exp(2j * np.pi * ks / n_nodes)
    acc = None
    for k, ph in zip(ks, phases):
        shifted = values.copy()
        shifted[j] = values[j] + radius * ph
        val = np.asarray(f(shifted), dtype=complex)
        term = val * np.exp(-2j * np.pi * k * m / n_nodes)
        acc = term if acc is None else acc + term
    coeff = acc / n_nodes
    return math.factorial(m) / radius ** m * coeff


def cauchy_derivative(f: Callable, z, j: int, radius: float, m: int = 1,
                      n_nodes: int = DEFAULT_NODES):
    """Order-m derivative of f in coordinate j from a circular contour.

    When z carries a polyradius, the circle must stay inside the
    admissible neighborhood of [-1, 1] in that coordinate.
    """
    values, polyradius = _point_and_radius(z)
    if radius <= 0:
        raise ValueError("contour radius must be positive")
    if polyradius is not None:
        slack = float(geometry.dist_to_interval(values[j])) + radius
        if slack > polyradius[j] - 1.0 + 1e-14:
            raise geometry.AdmissibilityError(
                f"contour disk of radius {radius} around coordinate {j} "
                f"leaves the admissible neighborhood (needs {slack:.3e}, "
                f"allowed {polyradius[j] - 1.0:.3e})")
    out = _contour_coefficient(f, values, j, radius, m, n_nodes)
    return out if out.ndim else complex(out)


def radius_independence(f: Callable, z, j: int, radius: float,
                        orders: Sequence[int] = (0, 1),
                        n_nodes: int = DEFAULT_NODES) -> float:
    """Max relative disagreement of contour coefficients at zeta and zeta/2.

    Order 0 is the circle mean and must equal f(z) for an analytic map;
    keeping it matters because some non-analytic maps (|z|^2 among them)
    still produce radius-stable order-1 coefficients.
    """
    values, _ = _point_and_radius(z)
    worst = 0.0
    for m in orders:
        a = np.asarray(_contour_coefficient(f, values, j, radius, m, n_nodes))
        b = np.asarray(_contour_coefficient(f, values, j, radius / 2, m,
                                            n_nodes))
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - b)) / scale))
    return worst


def finite_difference(f: Callable, z, j: int, step: float = 1e-4):
    values, _ = _point_and_radius(z)
    up = values.copy()
    dn = values.copy()
    up[j] = values[j] + step
    dn[j] = values[j] - step
    return (np.asarray(f(up), dtype=complex)
            - np.asarray(f(dn), dtype=complex)) / (2.0 * step)


def derivative_residual(f: Callable, z, j: int, radius: float,
                        fd_step: float = 1e-4,
                        n_nodes: int = DEFAULT_NODES) -> float:
    """Relative gap between the contour derivative and a central difference."""
    c = np.asarray(cauchy_derivative(f, z, j, radius, 1, n_nodes))
    d = np.asarray(finite_difference(f, z, j, fd_step))
    scale = max(np.max(np.abs(d)), np.max(np.abs(c)), 1e-300)
    return float(np.max(np.abs(c - d)) / scale)


def real_part_extension(f: Callable, z):
    """Analytic continuation of y -> Re f(y): (f(z) + conj(f(conj z))) / 2."""
    values = np.atleast_1d(np.asarray(z, dtype=complex))
    a = np.asarray(f(values), dtype=complex)
    b = np.conj(np.asarray(f(np.conj(values)), dtype=complex))
    out = 0.5 * (a + b)
    return out if out.ndim else complex(out)


def abs_square_control(values) -> float:
    """Deliberately non-analytic scalar target used as the negative control."""
    v = np.atleast_1d(np.asarray(values, dtype=complex))
    return float(np.abs(v[0]) ** 2)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
@dataclass
class HolomorphyReport:
    target_name: str
    region: tuple                   # polyradius per parameter dimension
    max_norm: float
    derivative_residuals: tuple     # per-dimension max relative residual
    verdict: bool
    tolerance: float = VERDICT_RTOL
    violations: int = 0             # evaluations that left the kernel domain
    n_samples: int = 0

    def __post_init__(self):
        if any(r < 0 for r in self.derivative_residuals):
            raise ValueError("residuals must be non-negative")


def report_to_dict(report: HolomorphyReport) -> dict:
    return {
        "target_name": report.target_name,
        "region": [float(r) for r in report.region],
        "max_norm": float(report.max_norm),
        "derivative_residuals": [float(r) for r in
                                 report.derivative_residuals],
        "verdict": bool(report.verdict),
        "tolerance": float(report.tolerance),
        "violations": int(report.violations),
        "n_samples": int(report.n_samples),
    }


def save_report(path, report: HolomorphyReport):
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _value_norm(val) -> float:
    return float(np.linalg.norm(np.ravel(np.asarray(val, dtype=complex))))


def _ellipse_samples(polyradius, n_samples, rng, boundary_every=4):
    """Joukowski images of annulus draws, one coordinate per dimension.

    Every boundary_every-th sample sits on the outermost ellipse so the
    scan always touches the region boundary; interior radii scale fixed
    uniform draws, which keeps sample families nested across enlarging
    regions under the same seed.
    """
    rho = np.atleast_1d(np.asarray(polyradius, dtype=float))
    u = rng.uniform(0.0, 1.0, size=(n_samples, len(rho)))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(n_samples, len(rho)))
    u[::boundary_every] = 1.0
    t = 1.0 + u * (rho - 1.0)
    w = t * np.exp(1j * theta)
    return (w + 1.0 / w) / 2.0


def boundedness_scan(f: Callable, polyradius, n_samples: int, seed: int = 0,
                     threads: int = 1,
                     target_name: str = "map") -> HolomorphyReport:
    """Sup of |f| over ellipse-region samples; domain exits counted, not raised."""
    rho = np.atleast_1d(np.asarray(polyradius, dtype=float))
    rng = np.random.default_rng(seed)
    samples = _ellipse_samples(rho, n_samples, rng)

    def probe(zvals):
        try:
            return _value_norm(f(zvals)), 0
        except (UDomainError, geometry.AdmissibilityError):
            return 0.0, 1

    if threads <= 1:
        results = [probe(s) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(probe, samples))
    norms = [n for n, bad in results if not bad]
    violations = sum(bad for _, bad in results)
    return HolomorphyReport(
        target_name=target_name,
        region=tuple(float(r) for r in rho),
        max_norm=max(norms) if norms else math.nan,
        derivative_residuals=(),
        verdict=violations == 0,
        violations=violations,
        n_samples=n_samples,
    )


def derivative_report(f: Callable, points: Sequence, radius: float,
                      target_name: str = "map",
                      fd_step: float = 1e-4,
                      tolerance: float = VERDICT_RTOL) -> HolomorphyReport:
    """Per-dimension derivative residuals over a batch of parameter points.

    Points should be ComplexParamPoint instances so contour disks are
    region-checked.  The verdict compares the stored residuals against the
    stored tolerance and nothing else.
    """
    if not points:
        raise ValueError("need at least one parameter point")
    first, polyr = _point_and_radius(points[0])
    dims = len(first)
    per_dim = [0.0] * dims
    max_norm = 0.0
    for z in points:
        values, _ = _point_and_radius(z)
        max_norm = max(max_norm, _value_norm(f(values)))
        for j in range(dims):
            per_dim[j] = max(per_dim[j],
                             derivative_residual(f, z, j, radius, fd_step))
    region = tuple(float(r) for r in polyr) if polyr is not None \
        else (math.nan,) * dims
    residuals = tuple(per_dim)
    return HolomorphyReport(
        target_name=target_name,
        region=region,
        max_norm=max_norm,
        derivative_residuals=residuals,
        verdict=all(r <= tolerance for r in residuals),
        tolerance=tolerance,
        n_samples=len(points),
    )
