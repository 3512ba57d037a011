"""Plane-wave scattering pipeline: right-hand sides, solves, far fields.

The direct variant solves for the total-field normal derivative; the
indirect one for the density of a combined double-minus-i-eta-single layer
ansatz.  Far fields come in two prefactor conventions: "standard3d" uses
1/(4 pi) and -i kappa/(4 pi), which is what the series oracle for the sphere
is written in; "paper" uses exp(i pi/4)-phased square-root prefactors
(1/sqrt(2 pi kappa) scalings) of the kind used for cylindrical waves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from .kernels import WaveContext
from .operators import DiscreteOperator, Discretization, QuadConfig, assemble_combined, discretize

GMRES_CUTOVER = 4000


class SingularOperatorError(RuntimeError):
    """Factorization failed; carries the reciprocal condition estimate."""

    def __init__(self, msg, rcond=None):
        super().__init__(msg)
        self.rcond = rcond


@dataclass
class DensitySolution:
    values: np.ndarray
    variant: Optional[str]
    ctx: WaveContext
    disc: Discretization
    residual: float
    cond_est: float
    method: str


def rhs(surface, ctx: WaveContext, y, variant: str,
        quad_config: QuadConfig = QuadConfig(), disc=None) -> np.ndarray:
    """Node samples of the combined-field right-hand side.

    indirect: minus the incident Dirichlet trace.
    direct: incident Neumann trace minus i eta times the Dirichlet trace.
    """
    if disc is None:
        disc = discretize(surface, y, quad_config)
    phase = np.exp(1j * ctx.kappa * np.sum(disc.points * ctx.d_inc, axis=-1))
    if variant == "indirect":
        return -phase
    if variant == "direct":
        ndotd = np.sum(disc.normals * ctx.d_inc, axis=-1)
        return 1j * ctx.kappa * ndotd * phase - 1j * ctx.eta * phase
    raise ValueError("variant must be 'direct' or 'indirect'")


def solve(op: DiscreteOperator, rhs_vec, method: str = "auto",
          tol: float = 1e-6, variant: Optional[str] = None) -> DensitySolution:
    """Dense LU solve with a reciprocal-condition estimate.

    GMRES with restart 30 takes over for large systems (or on request); the
    residual is recorded either way and checked against `tol`.
    """
    A = op.matrix
    f = np.asarray(rhs_vec, dtype=complex)
    N = A.shape[0]
    if method == "auto":
        method = "lu" if N <= GMRES_CUTOVER else "gmres"

    if method == "lu":
        lu, piv = sla.lu_factor(A)
        anorm = np.linalg.norm(A, 1)
        rcond, info = sla.lapack.zgecon(lu, anorm, norm="1")
        if info != 0 or rcond < np.finfo(float).eps:
            raise SingularOperatorError(
                f"factorization unusable: reciprocal condition {rcond:.3e}",
                rcond=float(rcond),
            )
        phi = sla.lu_solve((lu, piv), f)
        cond_est = float(1.0 / rcond)
    elif method == "gmres":
        # diagonal scaling only; anything heavier is out of scope
        d = np.diag(A)
        M = LinearOperator(A.shape, matvec=lambda v: v / d)
        phi, info = gmres(A, f, rtol=1e-10, atol=0.0, restart=30, maxiter=200, M=M)
        if info != 0:
            raise SingularOperatorError(f"gmres did not converge (info={info})")
        cond_est = float("nan")
    else:
        raise ValueError("method must be 'auto', 'lu' or 'gmres'")

    residual = float(np.linalg.norm(A @ phi - f) / np.linalg.norm(f))
    if residual > tol:
        raise SingularOperatorError(
            f"solve residual {residual:.3e} exceeds tolerance {tol:.1e}"
        )
    return DensitySolution(phi, variant, op.ctx, op.disc, residual, cond_est, method)


def _far_field_sums(ctx: WaveContext, disc: Discretization, values):
    phase = np.exp(-1j * ctx.kappa * np.sum(disc.points * ctx.d_obs, axis=-1))
    single = np.sum(phase * values * disc.weights)
    ndotd = np.sum(disc.normals * ctx.d_obs, axis=-1)
    double = np.sum(ndotd * phase * values * disc.weights)
    return single, double


def far_field(surface, ctx: WaveContext, y, density: DensitySolution,
              convention: str = "standard3d") -> complex:
    """Far-field amplitude in the observation direction of the context.

    direct: the single-layer pattern of the solved normal derivative (with
    the sign that makes the scattered wave outgoing against the incident
    one); indirect: the pattern of the layer ansatz itself.
    """
    disc = density.disc
    single, double = _far_field_sums(ctx, disc, density.values)
    if convention == "standard3d":
        s_inf = single / (4.0 * np.pi)
        d_inf = -1j * ctx.kappa / (4.0 * np.pi) * double
        if density.variant == "direct":
            return complex(-s_inf)
        return complex(d_inf - 1j * ctx.eta * s_inf)
    if convention == "paper":
        pref = np.exp(1j * np.pi / 4.0)
        ff_s = -pref / np.sqrt(2.0 * np.pi * ctx.kappa) * single
        ff_d = pref * np.sqrt(ctx.kappa / (2.0 * np.pi)) * double
        if density.variant == "direct":
            return complex(ff_s)
        return complex(ff_d - 1j * ctx.eta * ff_s)
    raise ValueError("convention must be 'standard3d' or 'paper'")


def solve_scattering(surface, ctx: WaveContext, y, variant: str = "indirect",
                     quad_config: QuadConfig = QuadConfig(), disc=None,
                     method: str = "auto") -> DensitySolution:
    """Assemble the combined operator at y and solve for the density."""
    if disc is None:
        disc = discretize(surface, y, quad_config)
    op = assemble_combined(surface, ctx, y, quad_config, variant=variant, disc=disc)
    f = rhs(surface, ctx, y, variant, quad_config, disc=disc)
    return solve(op, f, method=method, variant=variant)


def forward_far_field(surface, ctx: WaveContext, y, variant: str = "indirect",
                      quad_config: QuadConfig = QuadConfig(),
                      convention: str = "standard3d", disc=None) -> complex:
    sol = solve_scattering(surface, ctx, y, variant, quad_config, disc=disc)
    return far_field(surface, ctx, y, sol, convention)


def qoi_ff_magnitude(surface, ctx: WaveContext, y, variant: str = "indirect",
                     quad_config: QuadConfig = QuadConfig(),
                     convention: str = "standard3d") -> float:
    """Squared modulus of the far-field amplitude; the scalar the surrogate
    and inversion layers consume."""
    u = forward_far_field(surface, ctx, y, variant, quad_config, convention)
    return float(abs(u) ** 2)
