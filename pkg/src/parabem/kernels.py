"""Helmholtz layer-potential kernels with complexified distance.

All kernels accept complex 3-vectors (or stacked arrays of them) and evaluate
through the bilinear complex norm sqrt(v.v), defined on the set where
Re(v.v) > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UDomainError(ValueError):
    """Re(v.v) <= 0: the complexified distance has no principal value."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class WaveContext:
    """Wavenumber, coupling parameter and incidence/observation directions."""

    kappa: float
    eta: float
    d_inc: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    d_obs: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("wavenumber must be positive")
        if self.eta == 0:
            raise ValueError("coupling parameter must be nonzero")
        for name in ("d_inc", "d_obs"):
            v = np.asarray(getattr(self, name), dtype=float)
            n = np.linalg.norm(v)
            if not np.isclose(n, 1.0, atol=1e-12):
                raise ValueError(f"{name} must be a unit vector, got norm {n}")
            object.__setattr__(self, name, v)


def complex_norm(v) -> np.ndarray:
    """Principal-branch sqrt of the bilinear dot product v.v.

    Equals the Euclidean norm for real v.  Raises UDomainError when
    Re(v.v) <= 0 anywhere; the offending flat index is attached.
    """
    v = np.asarray(v)
    s = np.sum(v * v, axis=-1)
    s = np.asarray(s, dtype=complex)
    bad = s.real <= 0.0
    if np.any(bad):
        idx = int(np.argmax(np.ravel(bad)))
        raise UDomainError(
            f"Re(v.v) = {np.ravel(s)[idx].real:.3e} <= 0 at flat index {idx}", index=idx
        )
    out = np.sqrt(s)
    if np.isrealobj(v):
        return out.real
    return out


def slp_kernel(ctx: WaveContext, v) -> np.ndarray:
    """exp(i kappa |v|) / (4 pi |v|) with the complexified norm."""
    r = complex_norm(v)
    return np.exp(1j * ctx.kappa * r) / (4.0 * np.pi * r)


def dlp_kernel(ctx: WaveContext, normal_at_y, v) -> np.ndarray:
    """(n.v) exp(i kappa |v|) (i kappa |v| - 1) / (4 pi |v|^3).

    This is the normal derivative of the kernel with respect to the point the
    normal is attached to, evaluated with v pointing away from that point.
    """
    r = complex_norm(v)
    nv = np.sum(np.asarray(normal_at_y) * np.asarray(v), axis=-1)
    return nv * np.exp(1j * ctx.kappa * r) * (1j * ctx.kappa * r - 1.0) / (4.0 * np.pi * r**3)


def adjoint_dlp_kernel(ctx: WaveContext, normal_at_x, v) -> np.ndarray:
    """Same algebraic kernel with the normal attached at the target point.

    Callers pass v = target - source; the value is then the target-normal
    derivative of the fundamental solution.
    """
    return dlp_kernel(ctx, normal_at_x, v)


def incident_trace(ctx: WaveContext, surface, y, patch: int, u):
    """Dirichlet and Neumann traces of the incident plane wave on the deformed surface.

    Returns (exp(i kappa r_y.d_inc), i kappa (n.d_inc) exp(i kappa r_y.d_inc)).
    """
    from . import geometry

    x = geometry.eval_surface(surface, y, patch, u)
    n = geometry.normal(surface, y, patch, u)
    phase = np.exp(1j * ctx.kappa * np.sum(x * ctx.d_inc, axis=-1))
    return phase, 1j * ctx.kappa * np.sum(n * ctx.d_inc, axis=-1) * phase
