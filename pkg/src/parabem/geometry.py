"""Reference-surface charts, affine deformation families, and their complex extensions.

A reference surface is a union of chart patches.  A deformation family is an
affine-in-parameter map

    r_z(xhat) = phi0(xhat) + sum_j z_j * phi_j(xhat),

evaluated at real reference points xhat while the parameter vector z may be
complex.  Chart Gramians, surface-measure densities and normals extend to
complex parameters through the principal square-root branch, which is valid
exactly while Re(det G) stays positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

FD_STEP = 1e-5          # chart-coordinate step for fallback 4th-order differences
BUMP_EDGE = 0.99        # profile argument beyond which the bump is treated as exact zero


class AdmissibilityError(ValueError):
    """Complex point left the region where the construction is defined."""


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PatchChart:
    """One chart patch: a rectangle in R^2 mapped injectively into R^3.

    Attributes
    ----------
    patch_id : int
    domain : ((u_lo, u_hi), (v_lo, v_hi))
        Axis-aligned parameter rectangle.
    chart : callable
        Maps points of shape (..., 2) to surface points of shape (..., 3).
    chart_jacobian : callable or None
        Analytic derivative, shape (..., 3, 2).  When None, a 4th-order
        central difference with step 1e-5 is used.
    """

    patch_id: int
    domain: tuple[tuple[float, float], tuple[float, float]]
    chart: Callable[[np.ndarray], np.ndarray]
    chart_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def contains(self, u: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        (a0, a1), (b0, b1) = self.domain
        return (
            (u[..., 0] >= a0 - tol) & (u[..., 0] <= a1 + tol)
            & (u[..., 1] >= b0 - tol) & (u[..., 1] <= b1 + tol)
        )

    def require_inside(self, u: np.ndarray) -> None:
        if not np.all(self.contains(u)):
            raise ValueError(
                f"chart coordinates outside patch {self.patch_id} domain {self.domain}"
            )

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.chart_jacobian is not None:
            return self.chart_jacobian(u)
        return _fd4_jacobian(self.chart, u)

    @property
    def area(self) -> float:
        (a0, a1), (b0, b1) = self.domain
        return (a1 - a0) * (b1 - b0)


def _fd4_jacobian(f: Callable, u: np.ndarray) -> np.ndarray:
    h = FD_STEP
    cols = []
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = 1.0
        col = (
            -f(u + 2 * h * e) + 8 * f(u + h * e) - 8 * f(u - h * e) + f(u - 2 * h * e)
        ) / (12 * h)
        cols.append(col)
    return np.stack(cols, axis=-1)


def flat_patch(patch_id: int = 0, scale: float = 1.0,
               domain=((0.0, 1.0), (0.0, 1.0)),
               offset=(0.0, 0.0, 0.0)) -> PatchChart:
    """Planar chart (u, v) -> offset + scale*(u, v, 0)."""
    off = np.asarray(offset, dtype=float)

    def chart(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape[:-1] + (3,))
        out[..., 0] = scale * u[..., 0]
        out[..., 1] = scale * u[..., 1]
        return out + off

    def jac(u):
        u = np.asarray(u, dtype=float)
        J = np.zeros(u.shape[:-1] + (3, 2))
        J[..., 0, 0] = scale
        J[..., 1, 1] = scale
        return J

    return PatchChart(patch_id, tuple(map(tuple, domain)), chart, jac)


# Face frames (outward normal, tangent pair) oriented so t1 x t2 = n.
_FACE_FRAMES = (
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
    ((0, 1, 0), (0, 0, 1), (1, 0, 0)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    ((0, 0, -1), (0, 1, 0), (1, 0, 0)),
)


def cube_sphere_patches(radius: float = 1.0) -> list[PatchChart]:
    """Six-patch sphere: each cube face radially projected onto the sphere."""
    patches = []
    for pid, (n, t1, t2) in enumerate(_FACE_FRAMES):
        n = np.asarray(n, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)

        def chart(u, n=n, t1=t1, t2=t2):
            u = np.asarray(u, dtype=float)
            p = n + u[..., :1] * t1 + u[..., 1:2] * t2
            return radius * p / np.linalg.norm(p, axis=-1, keepdims=True)

        def jac(u, n=n, t1=t1, t2=t2):
            u = np.asarray(u, dtype=float)
            p = n + u[..., :1] * t1 + u[..., 1:2] * t2
            r = np.linalg.norm(p, axis=-1, keepdims=True)
            phat = p / r
            # d(p/|p|) = (I - phat phat^T) dp / |p|
            proj = np.eye(3) - phat[..., :, None] * phat[..., None, :]
            cols = np.stack([t1, t2], axis=-1)
            return radius * (proj @ cols) / r[..., None]

        patches.append(PatchChart(pid, ((-1.0, 1.0), (-1.0, 1.0)), chart, jac))
    return patches


def box_patches(half_width: float = 1.0) -> list[PatchChart]:
    """Surface of the cube [-h, h]^3 as six flat patches."""
    patches = []
    for pid, (n, t1, t2) in enumerate(_FACE_FRAMES):
        n = np.asarray(n, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)

        def chart(u, n=n, t1=t1, t2=t2):
            u = np.asarray(u, dtype=float)
            return half_width * (n + u[..., :1] * t1 + u[..., 1:2] * t2)

        def jac(u, n=n, t1=t1, t2=t2):
            u = np.asarray(u, dtype=float)
            J = np.broadcast_to(
                half_width * np.stack([t1, t2], axis=-1), u.shape[:-1] + (3, 2)
            )
            return np.array(J)

        patches.append(PatchChart(pid, ((-1.0, 1.0), (-1.0, 1.0)), chart, jac))
    return patches


# ---------------------------------------------------------------------------
# Deformation fields (defined on an ambient neighborhood of the surface)
# ---------------------------------------------------------------------------
class IdentityField:
    """phi(x) = scale * x; the inclusion map of the reference surface."""

    def __init__(self, scale: float = 1.0):
        self.scale = scale

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(x, dtype=float)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.scale * np.eye(3), x.shape[:-1] + (3, 3)).copy()


class ConstantField:
    """phi(x) = fixed vector."""

    def __init__(self, vec):
        self.vec = np.asarray(vec, dtype=float)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.vec, x.shape[:-1] + (3,)).copy()

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (3, 3))


class NormalBumpMode:
    """Compactly supported normal-direction bump amplitude * beta(x) * nhat(x).

    beta is the classical smooth bump exp(1 - 1/(1 - t)) in
    t = |x - center|^2 / width^2, supported in the ball of radius `width`.
    The normal field is either radial (x/|x|, spheres) or a fixed vector
    (flat faces); both have exact ambient jacobians.
    """

    def __init__(self, center, width: float, amplitude: float,
                 normal: str | Sequence[float] = "radial"):
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        self.amplitude = float(amplitude)
        if isinstance(normal, str):
            if normal != "radial":
                raise ValueError(f"unknown normal field {normal!r}")
            self.fixed_normal = None
        else:
            self.fixed_normal = np.asarray(normal, dtype=float)

    def _profile(self, x):
        d = np.asarray(x, dtype=float) - self.center
        t = np.sum(d * d, axis=-1) / self.width**2
        inside = t < BUMP_EDGE
        tt = np.where(inside, t, 0.0)
        beta = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - tt)), 0.0)
        dbeta_dt = np.where(inside, -beta / (1.0 - tt) ** 2, 0.0)
        grad = dbeta_dt[..., None] * (2.0 / self.width**2) * d
        return beta, grad

    def _normal(self, x):
        x = np.asarray(x, dtype=float)
        if self.fixed_normal is not None:
            n = np.broadcast_to(self.fixed_normal, x.shape[:-1] + (3,)).copy()
            dn = np.zeros(x.shape[:-1] + (3, 3))
            return n, dn
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        n = x / r
        dn = (np.eye(3) - n[..., :, None] * n[..., None, :]) / r[..., None]
        return n, dn

    def value(self, x: np.ndarray) -> np.ndarray:
        beta, _ = self._profile(x)
        n, _ = self._normal(x)
        return self.amplitude * beta[..., None] * n

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        beta, grad = self._profile(x)
        n, dn = self._normal(x)
        outer = n[..., :, None] * grad[..., None, :]
        return self.amplitude * (outer + beta[..., None, None] * dn)


# ---------------------------------------------------------------------------
# Parametric surface
# ---------------------------------------------------------------------------
@dataclass
class ParametricSurface:
    """Reference patches plus an affine family of deformation fields.

    b_seq holds the per-mode Lipschitz norms; if omitted it is estimated by
    sampling at construction time (sup of |phi_j| plus a surface-gradient sup).
    """

    patches: list[PatchChart]
    phi0: object = field(default_factory=IdentityField)
    modes: list = field(default_factory=list)
    b_seq: Optional[np.ndarray] = None
    p: float = 0.6

    def __post_init__(self):
        if not self.patches:
            raise ValueError("surface needs at least one patch")
        if not 0.0 < self.p < 1.0:
            raise ValueError("summability exponent must lie in (0, 1)")
        if self.b_seq is None:
            self.b_seq = estimate_b_seq(self)
        else:
            self.b_seq = np.asarray(self.b_seq, dtype=float)
            if len(self.b_seq) != len(self.modes):
                raise ValueError("b_seq length must match mode count")
            if len(self.b_seq) and np.any(self.b_seq <= 0):
                raise ValueError("b_seq entries must be positive")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def patch(self, patch_id: int) -> PatchChart:
        for p in self.patches:
            if p.patch_id == patch_id:
                return p
        raise KeyError(f"no patch with id {patch_id}")


# ---------------------------------------------------------------------------
# Complex parameter points
# ---------------------------------------------------------------------------
def dist_to_interval(z) -> np.ndarray:
    """Distance from z to the real interval [-1, 1]."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    outside = np.maximum(np.abs(x) - 1.0, 0.0)
    return np.hypot(outside, y)


def in_oval(z, rho) -> np.ndarray:
    """Membership in the rho-neighborhood {dist(z, [-1,1]) <= rho - 1}."""
    return dist_to_interval(z) <= np.asarray(rho, dtype=float) - 1.0 + 1e-14


def in_bernstein_ellipse(z, s: float) -> np.ndarray:
    """Membership in the closed ellipse with foci +-1 and parameter s >= 1."""
    z = np.asarray(z, dtype=complex)
    return np.abs(z - 1.0) + np.abs(z + 1.0) <= s + 1.0 / s + 1e-14


@dataclass(frozen=True)
class ComplexParamPoint:
    """Truncated parameter vector with the polyradius it is admissible for.

    Construction enforces membership of each coordinate in the
    (rho_j - 1)-neighborhood of [-1, 1].
    """

    values: np.ndarray
    polyradius: np.ndarray

    def __init__(self, values, polyradius=None):
        values = np.atleast_1d(np.asarray(values, dtype=complex))
        if polyradius is None:
            polyradius = np.ones(len(values))
        polyradius = np.atleast_1d(np.asarray(polyradius, dtype=float))
        if polyradius.shape != values.shape:
            raise ValueError("polyradius must match values in length")
        if np.any(polyradius < 1.0):
            raise ValueError("polyradius entries must be >= 1")
        bad = ~in_oval(values, polyradius)
        if np.any(bad):
            j = int(np.argmax(bad))
            raise AdmissibilityError(
                f"coordinate {j}: dist({values[j]:.6g}, [-1,1]) "
                f"exceeds rho-1 = {polyradius[j] - 1:.6g}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "polyradius", polyradius)

    @property
    def is_real(self) -> bool:
        return bool(
            np.all(self.values.imag == 0.0) and np.all(np.abs(self.values.real) <= 1.0)
        )

    def conj(self) -> "ComplexParamPoint":
        return ComplexParamPoint(np.conj(self.values), self.polyradius)


def _param_values(z, n_modes: int) -> np.ndarray:
    """Zero-padded coefficient vector of length n_modes."""
    if isinstance(z, ComplexParamPoint):
        vals = z.values
    else:
        vals = np.atleast_1d(np.asarray(z, dtype=complex))
    if len(vals) > n_modes:
        if np.any(vals[n_modes:] != 0):
            raise ValueError("parameter vector longer than the mode list")
        vals = vals[:n_modes]
    out = np.zeros(n_modes, dtype=complex)
    out[: len(vals)] = vals
    return out


# ---------------------------------------------------------------------------
# Surface evaluation, Gramian, normal
# ---------------------------------------------------------------------------
def eval_surface(surface: ParametricSurface, z, patch: int, u) -> np.ndarray:
    """Deformed surface position r_z at chart coordinates u of one patch.

    Returns phi0(xhat) + sum_j z_j phi_j(xhat) with xhat = chart(u); complex
    dtype whenever z has nonzero imaginary part, real otherwise.
    """
    ch = surface.patch(patch)
    u = np.asarray(u, dtype=float)
    ch.require_inside(u)
    xhat = ch.chart(u)
    vals = _param_values(z, surface.n_modes)
    out = surface.phi0.value(xhat).astype(complex)
    for zj, mode in zip(vals, surface.modes):
        if zj != 0:
            out = out + zj * mode.value(xhat)
    if np.all(vals.imag == 0):
        return out.real
    return out


def surface_jacobian(surface: ParametricSurface, z, patch: int, u) -> np.ndarray:
    """Derivative of u -> r_z(chart(u)); shape (..., 3, 2)."""
    ch = surface.patch(patch)
    u = np.asarray(u, dtype=float)
    ch.require_inside(u)
    xhat = ch.chart(u)
    Dchart = ch.jacobian(u)
    vals = _param_values(z, surface.n_modes)
    amb = surface.phi0.jacobian(xhat).astype(complex)
    for zj, mode in zip(vals, surface.modes):
        if zj != 0:
            amb = amb + zj * mode.jacobian(xhat)
    J = amb @ Dchart.astype(complex)
    if np.all(vals.imag == 0):
        return J.real
    return J


@dataclass(frozen=True)
class GramianData:
    matrix: np.ndarray   # (..., 2, 2), complex symmetric
    det: np.ndarray
    sqrt_det: np.ndarray


def gramian(surface: ParametricSurface, z, patch: int, u) -> GramianData:
    """First fundamental form G = J^T J of the deformed chart (bilinear, no conjugation).

    The square root of det G uses the principal branch; evaluation is refused
    when Re(det G) <= 0 because no branch is then canonical.
    """
    J = surface_jacobian(surface, z, patch, u)
    G = np.swapaxes(J, -1, -2) @ J
    det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    det_c = np.asarray(det, dtype=complex)
    if np.any(det_c.real <= 0.0):
        raise AdmissibilityError(
            "Re(det G) <= 0: complex deformation outside the admissible region"
        )
    sqrt_det = np.sqrt(det_c)
    if np.isrealobj(J):
        return GramianData(G, det_c.real, sqrt_det.real)
    return GramianData(G, det_c, sqrt_det)


def normal(surface: ParametricSurface, z, patch: int, u) -> np.ndarray:
    """Unit normal mhat/|mhat| with mhat the tangent cross product.

    |mhat| is the principal-branch sqrt of det G (the two agree identically,
    also for complex parameters); on real parameters the result is the
    outward Euclidean unit normal.
    """
    J = surface_jacobian(surface, z, patch, u)
    m = np.cross(J[..., 0], J[..., 1], axis=-1)
    g = gramian(surface, z, patch, u)
    sd = np.asarray(g.sqrt_det)
    if np.any(np.abs(sd) < 1e-14):
        raise AdmissibilityError("degenerate surface element: sqrt(det G) ~ 0")
    return m / sd[..., None]


# ---------------------------------------------------------------------------
# Admissibility diagnostics
# ---------------------------------------------------------------------------
def _sample_in_oval(rho: float, size: int, rng) -> np.ndarray:
    delta = rho - 1.0
    if delta <= 0:
        return rng.uniform(-1.0, 1.0, size=size).astype(complex)
    out = np.empty(size, dtype=complex)
    filled = 0
    while filled < size:
        m = 2 * (size - filled) + 8
        x = rng.uniform(-1.0 - delta, 1.0 + delta, size=m)
        y = rng.uniform(-delta, delta, size=m)
        cand = x + 1j * y
        good = cand[dist_to_interval(cand) <= delta]
        take = min(len(good), size - filled)
        out[filled: filled + take] = good[:take]
        filled += take
    return out


def _random_chart_points(surface, m, rng):
    ids = rng.integers(0, len(surface.patches), size=m)
    pts = np.empty((m, 2))
    for k, pid in enumerate(ids):
        (a0, a1), (b0, b1) = surface.patches[pid].domain
        pts[k] = (rng.uniform(a0, a1), rng.uniform(b0, b1))
    return ids, pts


def lipschitz_margin(surface: ParametricSurface, polyradius, n_samples: int,
                     rng=None) -> float:
    """Sampled lower bound for the bi-Lipschitz margin of the deformation family.

    Minimum over sampled complex parameters z (in the polyradius region) and
    reference point pairs of

        Re{(r_z(x) - r_z(y)) . (r_z(x) - r_z(y))} / |x - y|^2,

    with the bilinear dot product in the numerator and reference-surface
    Euclidean distance in the denominator.  A nonpositive value reports
    failure of admissibility; it is returned, not raised.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if rng is None:
        rng = np.random.default_rng(0)
    polyradius = np.atleast_1d(np.asarray(polyradius, dtype=float))
    s = surface.n_modes
    n_z = max(4, n_samples // 32)
    m = max(8, min(48, n_samples // n_z))
    best = np.inf
    for _ in range(n_z):
        z = np.array(
            [_sample_in_oval(polyradius[j] if j < len(polyradius) else 1.0, 1, rng)[0]
             for j in range(s)]
        ) if s else np.zeros(0, dtype=complex)
        ids, pts = _random_chart_points(surface, m, rng)
        xhat = np.empty((m, 3))
        rz = np.empty((m, 3), dtype=complex)
        for k in range(m):
            ch = surface.patch(int(ids[k]))
            xhat[k] = ch.chart(pts[k])
            rz[k] = eval_surface(surface, z, int(ids[k]), pts[k])
        diff_ref = xhat[:, None, :] - xhat[None, :, :]
        dist2 = np.sum(diff_ref**2, axis=-1)
        diff = rz[:, None, :] - rz[None, :, :]
        num = np.sum(diff * diff, axis=-1).real
        iu = np.triu_indices(m, k=1)
        ok = dist2[iu] > 1e-20
        if np.any(ok):
            best = min(best, float(np.min(num[iu][ok] / dist2[iu][ok])))
    return best


def polyradius_from_eps(b_seq, eps: float) -> np.ndarray:
    """Uniform inflation rho_j = 1 + eps/(s*b_j), so sum (rho_j - 1) b_j = eps."""
    b = np.atleast_1d(np.asarray(b_seq, dtype=float))
    if len(b) == 0:
        return np.ones(0)
    return 1.0 + eps / (len(b) * b)


def admissible_epsilon(surface: ParametricSurface, n_samples: int = 2000,
                       rng=None, eps0: float = 1e-2, max_doublings: int = 40) -> float:
    """Empirical admissible ellipse budget.

    Doubles eps (with rho_j = 1 + eps/(s*b_j)) until either the sampled
    Lipschitz margin turns nonpositive or a sampled Gramian determinant loses
    positive real part, then backs off by 0.5.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if surface.n_modes == 0:
        return math.inf
    eps = eps0
    for _ in range(max_doublings):
        rho = polyradius_from_eps(surface.b_seq, eps)
        if not _region_ok(surface, rho, n_samples, rng):
            return eps * 0.5
        eps *= 2.0
    return eps * 0.5


def _patch_grid(ch, n: int) -> np.ndarray:
    (a0, a1), (b0, b1) = ch.domain
    t = np.linspace(0.0, 1.0, n)
    uu, vv = np.meshgrid(a0 + t * (a1 - a0), b0 + t * (b1 - b0), indexing="ij")
    return np.stack([uu.ravel(), vv.ravel()], axis=-1)


def _region_ok(surface, rho, n_samples, rng) -> bool:
    if lipschitz_margin(surface, rho, n_samples, rng=rng) <= 0:
        return False
    grids = [_patch_grid(ch, 9) for ch in surface.patches]
    try:
        for _ in range(max(8, n_samples // 128)):
            z = np.array([_sample_in_oval(r, 1, rng)[0] for r in rho])
            for p, g in enumerate(grids):
                gramian(surface, z, p, g)
    except AdmissibilityError:
        return False
    return True


def sample_admissible_point(surface: ParametricSurface, rho, rng,
                            shrink: float = 0.9, grid: int = 10,
                            max_tries: int = 200) -> ComplexParamPoint:
    """Draw a complex parameter point and verify it before returning it.

    Coordinates are drawn from ovals shrunk by `shrink`; the Gramian is then
    evaluated on a structured grid of every patch, and draws failing the
    positivity requirement are rejected.  The admissibility estimates are
    sampled bounds, so per-point verification is what actually guarantees an
    assembly at the returned point will not be refused.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    grids = [_patch_grid(ch, grid) for ch in surface.patches]
    for _ in range(max_tries):
        z = np.array(
            [_sample_in_oval(1.0 + shrink * (r - 1.0), 1, rng)[0] for r in rho]
        )
        try:
            for p, g in enumerate(grids):
                gramian(surface, z, p, g)
        except AdmissibilityError:
            continue
        return ComplexParamPoint(z, polyradius=rho)
    raise AdmissibilityError(
        f"no verifiable point found in {max_tries} draws; region too aggressive"
    )


def estimate_b_seq(surface: ParametricSurface, n_per_patch: int = 12) -> np.ndarray:
    """Sampled C^{0,1}-norm estimates of the deformation modes.

    Takes max(sup |phi_j|, sup of the surface-gradient operator norm), the
    latter through the reference-chart metric.
    """
    if not surface.modes:
        return np.zeros(0)
    grids = []
    for ch in surface.patches:
        (a0, a1), (b0, b1) = ch.domain
        t = np.linspace(0.0, 1.0, n_per_patch + 2)[1:-1]
        uu, vv = np.meshgrid(a0 + t * (a1 - a0), b0 + t * (b1 - b0), indexing="ij")
        u = np.stack([uu.ravel(), vv.ravel()], axis=-1)
        xhat = ch.chart(u)
        Dch = ch.jacobian(u)
        G = np.swapaxes(Dch, -1, -2) @ Dch
        grids.append((xhat, Dch, G))
    out = np.empty(len(surface.modes))
    for j, mode in enumerate(surface.modes):
        sup_val = 0.0
        sup_grad = 0.0
        for xhat, Dch, G in grids:
            sup_val = max(sup_val, float(np.max(np.linalg.norm(mode.value(xhat), axis=-1))))
            M = mode.jacobian(xhat) @ Dch
            MtM = np.swapaxes(M, -1, -2) @ M
            lam = np.linalg.eigvals(np.linalg.solve(G, MtM)).real
            sup_grad = max(sup_grad, float(np.sqrt(np.max(np.maximum(lam, 0.0)))))
        out[j] = max(sup_val, sup_grad)
    if np.any(out <= 0):
        raise ValueError("degenerate deformation mode: zero C^{0,1} norm")
    return out


# ---------------------------------------------------------------------------
# Bernstein ellipse sampling
# ---------------------------------------------------------------------------
def ellipse_semi_axes(s: float) -> tuple[float, float]:
    return (s + 1.0 / s) / 2.0, (s - 1.0 / s) / 2.0


def bernstein_ellipse_sample(s: float, n: int) -> np.ndarray:
    """n boundary points (w + 1/w)/2 with |w| = s of the ellipse with foci +-1."""
    if s <= 1.0:
        raise ValueError("ellipse parameter must exceed 1")
    if n < 1:
        raise ValueError("need at least one sample")
    w = s * np.exp(2j * np.pi * np.arange(n) / n)
    return (w + 1.0 / w) / 2.0


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------
def _default_mode_centers(kind: str, count: int, radius: float) -> list[np.ndarray]:
    dirs = [np.asarray(f[0], dtype=float) for f in _FACE_FRAMES]
    return [radius * dirs[j % len(dirs)] for j in range(count)]


def surface_from_config(cfg: dict) -> ParametricSurface:
    """Build a surface from a plain JSON-style dict.

    Expected keys: patches {builtin: sphere|box|flat, radius/half_width},
    modes {count, theta, amplitude, width}, truncation (caps the mode count),
    optional p.
    """
    pc = cfg.get("patches", {"builtin": "sphere"})
    kind = pc.get("builtin", "sphere")
    if kind == "sphere":
        radius = float(pc.get("radius", 1.0))
        patches = cube_sphere_patches(radius)
        normal_spec = "radial"
    elif kind == "box":
        radius = float(pc.get("half_width", 1.0))
        patches = box_patches(radius)
        normal_spec = None
    elif kind == "flat":
        patches = [flat_patch(scale=float(pc.get("scale", 1.0)))]
        radius = 1.0
        normal_spec = (0.0, 0.0, 1.0)
    else:
        raise ValueError(f"unknown builtin patch family {kind!r}")

    mc = cfg.get("modes", {})
    count = int(mc.get("count", 0))
    truncation = int(cfg.get("truncation", count))
    count = min(count, truncation) if count else truncation
    theta = float(mc.get("theta", 2.0))
    amplitude = float(mc.get("amplitude", 0.1))
    width = float(mc.get("width", 0.8 * radius))
    centers = mc.get("centers")
    if centers is None:
        centers = _default_mode_centers(kind, count, radius)
    else:
        centers = [np.asarray(c, dtype=float) for c in centers]

    modes = []
    for j in range(count):
        amp = amplitude * (j + 1) ** (-theta)
        if kind == "sphere":
            nspec = "radial"
        elif kind == "box":
            c = centers[j % len(centers)]
            nspec = tuple(np.sign(c) * (np.abs(c) == np.max(np.abs(c))))
        else:
            nspec = normal_spec
        modes.append(NormalBumpMode(centers[j % len(centers)], width, amp, normal=nspec))

    return ParametricSurface(patches=patches, modes=modes, p=float(cfg.get("p", 0.6)))


def load_surface(path) -> ParametricSurface:
    with open(path) as fh:
        return surface_from_config(json.load(fh))
