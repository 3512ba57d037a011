"""Quadrature rules on chart rectangles.

Three families: tensor Gauss-Legendre for smooth integrands, Duffy-type
composite rules that remove a point singularity inside (or on the boundary
of) the rectangle, and a target-centered polar rule used to integrate
short-range kernels accurately around a marked point.  The C^1 cutoff shape
used by the regularized kernel sequence also lives here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# triangles whose area falls below this fraction of the rectangle are dropped
# (happens when the singular target sits on an edge or corner)
_DEGENERATE_FRACTION = 1e-13


@dataclass(frozen=True)
class PatchQuadrature:
    """Nodes and positive weights on one chart rectangle."""

    patch_id: int
    nodes: np.ndarray      # (n, 2)
    weights: np.ndarray    # (n,)
    order: int

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (n, 2)")
        if self.weights.shape != (self.nodes.shape[0],):
            raise ValueError("weights must match nodes")


def gauss_rule(domain, order: int, patch_id: int = 0) -> PatchQuadrature:
    """Tensor Gauss-Legendre rule on a rectangle; exact to degree 2*order-1 per axis."""
    if order < 1:
        raise ValueError("quadrature order must be at least 1")
    (a0, a1), (b0, b1) = domain
    x, w = np.polynomial.legendre.leggauss(order)
    xu = a0 + (x + 1.0) * 0.5 * (a1 - a0)
    wu = w * 0.5 * (a1 - a0)
    xv = b0 + (x + 1.0) * 0.5 * (b1 - b0)
    wv = w * 0.5 * (b1 - b0)
    uu, vv = np.meshgrid(xu, xv, indexing="ij")
    ww = np.outer(wu, wv)
    return PatchQuadrature(
        patch_id, np.stack([uu.ravel(), vv.ravel()], axis=-1), ww.ravel(), order
    )


# ---------------------------------------------------------------------------
# Cutoff shape
# ---------------------------------------------------------------------------
class CutoffProfile:
    """C^1 shape: 0 on [0, 1/2], cubic smoothstep on (1/2, 1), 1 on [1, inf)."""

    def __call__(self, t):
        return cutoff(t, self)


SMOOTHSTEP = CutoffProfile()


def cutoff(t, profile: CutoffProfile = SMOOTHSTEP):
    """Evaluate the cutoff shape; rejects negative arguments."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("cutoff argument must be nonnegative")
    s = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    out = s * s * (3.0 - 2.0 * s)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Duffy composite rule
# ---------------------------------------------------------------------------
def duffy_selfpatch_rule(domain, target, order: int,
                         patch_id: int = 0) -> PatchQuadrature:
    """Composite rule removing a 1/r singularity at `target` inside the rectangle.

    The rectangle is split into triangles fanning out from the target; each is
    integrated with the degeneracy-removing map whose jacobian cancels the
    radial singularity.  A target on the boundary simply produces fewer
    triangles (the degenerate ones are clamped away), which is the documented
    boundary handling.
    """
    if order < 1:
        raise ValueError("quadrature order must be at least 1")
    (a0, a1), (b0, b1) = domain
    t = np.asarray(target, dtype=float)
    if not (a0 - 1e-12 <= t[0] <= a1 + 1e-12 and b0 - 1e-12 <= t[1] <= b1 + 1e-12):
        raise ValueError("singular target must lie inside the rectangle")
    t = np.clip(t, [a0, b0], [a1, b1])

    corners = np.array([[a0, b0], [a1, b0], [a1, b1], [a0, b1]])
    x, w = np.polynomial.legendre.leggauss(order)
    gs = (x + 1.0) * 0.5
    gw = w * 0.5
    S, T = np.meshgrid(gs, gs, indexing="ij")
    WS, WT = np.meshgrid(gw, gw, indexing="ij")
    S, T, WW = S.ravel(), T.ravel(), (WS * WT).ravel()

    area_min = _DEGENERATE_FRACTION * (a1 - a0) * (b1 - b0)
    all_nodes, all_weights = [], []
    for k in range(4):
        v1 = corners[k]
        v2 = corners[(k + 1) % 4]
        e1 = v1 - t
        e2 = v2 - v1
        twice_area = abs(e1[0] * (v2 - t)[1] - e1[1] * (v2 - t)[0])
        if twice_area < 2.0 * area_min:
            continue
        # x(s, u) = t + s*(e1 + u*e2); |jacobian| = s * twice_area
        pts = t + S[:, None] * (e1[None, :] + T[:, None] * e2[None, :])
        all_nodes.append(pts)
        all_weights.append(WW * S * twice_area)
    if not all_nodes:
        raise ValueError("all subtriangles degenerate; rectangle has no area")
    return PatchQuadrature(
        patch_id, np.concatenate(all_nodes), np.concatenate(all_weights), order
    )


# ---------------------------------------------------------------------------
# Target-centered polar rule
# ---------------------------------------------------------------------------
def polar_rule(domain, target, n_theta: int, n_r: int,
               r_breaks=(), r_cap=None, patch_id: int = 0) -> PatchQuadrature:
    """Polar rule around `target`, exact-area cover of the rectangle.

    The angular range is partitioned at the corner directions so the radial
    extent R(theta) is smooth per wedge; the radial axis is further split at
    `r_breaks` (and capped at r_cap when given) so integrands with known
    radial kinks are analytic on every panel.  Weights include the polar
    jacobian r.
    """
    (a0, a1), (b0, b1) = domain
    t = np.asarray(target, dtype=float)
    if not (a0 < t[0] < a1 and b0 < t[1] < b1):
        raise ValueError("polar target must be strictly inside the rectangle")

    corners = np.array([[a1, b1], [a0, b1], [a0, b0], [a1, b0]])
    ang = np.sort(np.arctan2(corners[:, 1] - t[1], corners[:, 0] - t[0]))
    wedges = [(ang[i], ang[(i + 1) % 4] + (2 * np.pi if i == 3 else 0.0))
              for i in range(4)]

    gx, gw = np.polynomial.legendre.leggauss(n_theta)
    rx, rw = np.polynomial.legendre.leggauss(n_r)

    # perpendicular edge data: (outward angle, distance) for right, top, left, bottom
    edges = [(0.0, a1 - t[0]), (np.pi / 2, b1 - t[1]),
             (np.pi, t[0] - a0), (-np.pi / 2, t[1] - b0)]

    def r_max(theta):
        best = np.inf * np.ones_like(theta)
        for phi, d in edges:
            c = np.cos(theta - phi)
            with np.errstate(divide="ignore"):
                cand = np.where(c > 1e-12, d / np.maximum(c, 1e-300), np.inf)
            best = np.minimum(best, cand)
        return best

    nodes, weights = [], []
    for th_lo, th_hi in wedges:
        if th_hi - th_lo < 1e-14:
            continue
        th = th_lo + (gx + 1.0) * 0.5 * (th_hi - th_lo)
        wth = gw * 0.5 * (th_hi - th_lo)
        R = r_max(th)
        if r_cap is not None:
            R = np.minimum(R, r_cap)
        for i, (theta, wt) in enumerate(zip(th, wth)):
            breaks = [0.0] + [b for b in sorted(r_breaks) if 0.0 < b < R[i]] + [R[i]]
            for lo, hi in zip(breaks[:-1], breaks[1:]):
                if hi - lo < 1e-15:
                    continue
                r = lo + (rx + 1.0) * 0.5 * (hi - lo)
                wr = rw * 0.5 * (hi - lo)
                nodes.append(
                    t + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
                )
                weights.append(wt * wr * r)
    return PatchQuadrature(
        patch_id, np.concatenate(nodes), np.concatenate(weights), n_r
    )


# ---------------------------------------------------------------------------
# Lagrange product-integration helpers
# ---------------------------------------------------------------------------
def gauss_nodes_1d(domain_1d, order: int):
    a, b = domain_1d
    x, _ = np.polynomial.legendre.leggauss(order)
    return a + (x + 1.0) * 0.5 * (b - a)


def lagrange_matrix_1d(nodes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Barycentric evaluation of the Lagrange basis on `nodes` at `pts`; (m, q)."""
    nodes = np.asarray(nodes, dtype=float)
    pts = np.asarray(pts, dtype=float)
    q = len(nodes)
    bw = np.ones(q)
    for j in range(q):
        bw[j] = 1.0 / np.prod(nodes[j] - np.delete(nodes, j))
    diff = pts[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14)
    safe = np.where(exact, 1.0, diff)
    terms = bw[None, :] / safe
    denom = np.sum(terms, axis=1, keepdims=True)
    out = terms / denom
    hit = exact.any(axis=1)
    out[hit] = 0.0
    out[hit, np.argmax(exact[hit], axis=1)] = 1.0
    return out


def tensor_lagrange_matrix(domain, order: int, pts: np.ndarray) -> np.ndarray:
    """Interpolation matrix from the q x q tensor-Gauss grid to arbitrary points.

    Column ordering matches gauss_rule (u-major), so matrix @ grid_values
    evaluates the tensor interpolant at pts.
    """
    (a0, a1), (b0, b1) = domain
    nu = gauss_nodes_1d((a0, a1), order)
    nv = gauss_nodes_1d((b0, b1), order)
    Lu = lagrange_matrix_1d(nu, pts[:, 0])
    Lv = lagrange_matrix_1d(nv, pts[:, 1])
    return (Lu[:, :, None] * Lv[:, None, :]).reshape(len(pts), order * order)
