"""Dense Nystrom assembly of the Helmholtz layer operators.

Operators act on density samples at tensor-Gauss nodes; surface weights
absorb the measure.  Cross-patch entries are plain kernel-times-weight
products.  Self-patch rows (and rows whose target sits close to a
neighbouring patch) are product-integration rows: a singularity-removing
rule centered at the target's chart location, combined with Lagrange
interpolation back to the source grid.

All combinatorial choices (which rows get the singular treatment, where the
rule is centered) are made from the undeformed reference geometry, so they
never switch as the deformation parameter moves.  Matrix entries are then
compositions of fixed quadrature with the parametric kernel and stay smooth
in the parameter, also for complex values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import geometry
from .kernels import (
    UDomainError,
    WaveContext,
    adjoint_dlp_kernel,
    complex_norm,
    dlp_kernel,
    slp_kernel,
)
from .quadrature import (
    cutoff,
    duffy_selfpatch_rule,
    gauss_rule,
    tensor_lagrange_matrix,
)

MAGIC = b"PBEM"


@dataclass(frozen=True)
class QuadConfig:
    """Quadrature selection: per-axis Gauss order, singular-rule order,
    and the near-singular threshold in units of patch diameter over order."""

    order: int = 8
    duffy_order: Optional[int] = None
    near_factor: float = 2.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be at least 1")

    @property
    def singular_order(self) -> int:
        return self.duffy_order if self.duffy_order is not None else self.order + 4


@dataclass
class Discretization:
    """Node set of one surface at one parameter point.

    weights = gauss weight * sqrt(det G); complex on complex parameter
    points, strictly positive on real ones.
    """

    surface: geometry.ParametricSurface
    z: np.ndarray
    config: QuadConfig
    node_patches: np.ndarray   # (N,) int
    node_params: np.ndarray    # (N, 2)
    points: np.ndarray         # (N, 3)
    normals: np.ndarray        # (N, 3)
    sqrt_g: np.ndarray         # (N,)
    chart_weights: np.ndarray  # (N,)
    weights: np.ndarray        # (N,)
    patch_slices: list

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    @property
    def nodes(self) -> list:
        return [(int(p), tuple(u)) for p, u in zip(self.node_patches, self.node_params)]

    def is_real(self) -> bool:
        return not np.iscomplexobj(self.points)


def discretize(surface: geometry.ParametricSurface, z,
               config: QuadConfig = QuadConfig()) -> Discretization:
    zvals = geometry._param_values(z, surface.n_modes)
    patches, params, pts, nrms, sqg, cw = [], [], [], [], [], []
    slices = []
    start = 0
    for p, ch in enumerate(surface.patches):
        rule = gauss_rule(ch.domain, config.order, ch.patch_id)
        n = len(rule.weights)
        x = geometry.eval_surface(surface, zvals, p, rule.nodes)
        nh = geometry.normal(surface, zvals, p, rule.nodes)
        g = geometry.gramian(surface, zvals, p, rule.nodes)
        patches.append(np.full(n, p))
        params.append(rule.nodes)
        pts.append(x)
        nrms.append(nh)
        sqg.append(g.sqrt_det)
        cw.append(rule.weights)
        slices.append(slice(start, start + n))
        start += n
    sqg = np.concatenate(sqg)
    cw = np.concatenate(cw)
    w = cw * sqg
    if np.all(zvals.imag == 0) and np.any(w.real <= 0):
        raise geometry.AdmissibilityError("nonpositive surface weight on a real point")
    return Discretization(
        surface=surface,
        z=zvals,
        config=config,
        node_patches=np.concatenate(patches),
        node_params=np.concatenate(params),
        points=np.concatenate(pts),
        normals=np.concatenate(nrms),
        sqrt_g=sqg,
        chart_weights=cw,
        weights=w,
        patch_slices=slices,
    )


@dataclass
class DiscreteOperator:
    """Assembled dense operator together with its node set and context."""

    matrix: np.ndarray
    disc: Discretization
    ctx: Optional[WaveContext]
    kind: str

    @property
    def weights(self) -> np.ndarray:
        return self.disc.weights

    @property
    def nodes(self) -> list:
        return self.disc.nodes

    @property
    def n_nodes(self) -> int:
        return self.disc.n_nodes


# ---------------------------------------------------------------------------
# Near-singular structure (reference geometry, parameter independent)
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NearEntry:
    target: int
    source_patch: int
    center: tuple


def _patch_diameters(ref: Discretization) -> np.ndarray:
    out = np.empty(len(ref.patch_slices))
    for p, sl in enumerate(ref.patch_slices):
        pts = ref.points[sl]
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        out[p] = d.max()
    return out


def _project_to_patch(surface, patch: int, x, start, rounds: int = 3,
                      grid: int = 7) -> tuple:
    """Chart coordinates minimizing the reference distance to x, clamped."""
    ch = surface.patch(patch)
    (a0, a1), (b0, b1) = ch.domain
    span = np.array([(a1 - a0), (b1 - b0)]) / 4.0
    best = np.asarray(start, dtype=float)
    for _ in range(rounds):
        gu = np.linspace(best[0] - span[0], best[0] + span[0], grid)
        gv = np.linspace(best[1] - span[1], best[1] + span[1], grid)
        uu, vv = np.meshgrid(gu, gv, indexing="ij")
        cand = np.stack([uu.ravel(), vv.ravel()], axis=-1)
        cand[:, 0] = np.clip(cand[:, 0], a0, a1)
        cand[:, 1] = np.clip(cand[:, 1], b0, b1)
        pts = geometry.eval_surface(surface, np.zeros(surface.n_modes), patch, cand)
        k = int(np.argmin(np.linalg.norm(pts - x, axis=-1)))
        best = cand[k]
        span /= 2.0
    return (float(best[0]), float(best[1]))


def near_structure(surface: geometry.ParametricSurface,
                   config: QuadConfig) -> list:
    """Targets requiring the singular path on a patch other than their own.

    Computed once per (surface, config) from the undeformed reference and
    cached on the surface object; distances and projections never depend on
    the deformation parameter.
    """
    cache = getattr(surface, "_near_cache", None)
    if cache is None:
        cache = {}
        surface._near_cache = cache
    if config in cache:
        return cache[config]

    zref = np.zeros(surface.n_modes)
    ref = discretize(surface, zref, config)
    diam = _patch_diameters(ref)
    entries = []
    for sp, ssl in enumerate(ref.patch_slices):
        thr = config.near_factor * diam[sp] / config.order
        spts = ref.points[ssl]
        for tp, tsl in enumerate(ref.patch_slices):
            if tp == sp:
                continue
            tpts = ref.points[tsl]
            d = np.linalg.norm(tpts[:, None, :] - spts[None, :, :], axis=-1)
            dmin = d.min(axis=1)
            for i_local in np.nonzero(dmin < thr)[0]:
                gi = tsl.start + int(i_local)
                start = ref.node_params[ssl.start + int(np.argmin(d[i_local]))]
                center = _project_to_patch(surface, sp, ref.points[gi], start)
                entries.append(NearEntry(gi, sp, center))
    cache[config] = entries
    return entries


# ---------------------------------------------------------------------------
# Kernel dispatch
# ---------------------------------------------------------------------------
def _cross_block(ctx, kind, X, NX, Y, NY, WY):
    """Plain product block: kernel(target i, source j) * w_j."""
    if kind == "slp":
        V = Y[None, :, :] - X[:, None, :]
        K = slp_kernel(ctx, V)
    elif kind == "dlp":
        V = Y[None, :, :] - X[:, None, :]
        K = dlp_kernel(ctx, NY[None, :, :], V)
    elif kind == "adjoint_dlp":
        V = X[:, None, :] - Y[None, :, :]
        K = adjoint_dlp_kernel(ctx, NX[:, None, :], V)
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return K * WY[None, :]


def _row_values(ctx, kind, x, nx, Y, NY):
    """Kernel samples of one target against arbitrary source points."""
    if kind == "slp":
        return slp_kernel(ctx, Y - x[None, :])
    if kind == "dlp":
        return dlp_kernel(ctx, NY, Y - x[None, :])
    if kind == "adjoint_dlp":
        return adjoint_dlp_kernel(ctx, nx[None, :], x[None, :] - Y)
    raise ValueError(f"unknown kernel kind {kind!r}")


def _wrap_domain_error(err: UDomainError, what: str) -> UDomainError:
    return UDomainError(f"kernel domain violation in {what}: {err}", index=err.index)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------
def _assemble_kind(surface, ctx, z, config, kind, disc=None,
                   defect_cutoff=None) -> DiscreteOperator:
    """Shared assembly driver.

    defect_cutoff: optional (n, nu); multiplies the kernel by
    1 - cutoff(n * d_ref^nu) with d_ref the reference-surface distance,
    producing the short-range remainder operator removed by regularization.
    """
    if disc is None:
        disc = discretize(surface, z, config)
    N = disc.n_nodes
    A = np.zeros((N, N), dtype=complex)
    slices = disc.patch_slices

    ref = None
    if defect_cutoff is not None:
        ref = discretize(surface, np.zeros(surface.n_modes), config)

    # cross-patch plain blocks
    for tp, tsl in enumerate(slices):
        for sp, ssl in enumerate(slices):
            if tp == sp:
                continue
            try:
                block = _cross_block(
                    ctx, kind,
                    disc.points[tsl], disc.normals[tsl],
                    disc.points[ssl], disc.normals[ssl], disc.weights[ssl],
                )
            except UDomainError as err:
                raise _wrap_domain_error(
                    err, f"block (target patch {tp}, source patch {sp})"
                ) from err
            if defect_cutoff is not None:
                n_cut, nu = defect_cutoff
                d_ref = np.linalg.norm(
                    ref.points[tsl][:, None, :] - ref.points[ssl][None, :, :], axis=-1
                )
                block = block * (1.0 - cutoff(n_cut * d_ref ** nu))
            A[tsl, ssl] = block

    # self-patch product-integration rows
    d_order = config.singular_order
    for p, sl in enumerate(slices):
        ch = surface.patch(p)
        targets = disc.node_params[sl]
        rules = [duffy_selfpatch_rule(ch.domain, t, d_order) for t in targets]
        nodes_all = np.stack([r.nodes for r in rules])        # (T, D, 2)
        try:
            Y = geometry.eval_surface(surface, disc.z, p, nodes_all)
            NY = geometry.normal(surface, disc.z, p, nodes_all)
            SQG = geometry.gramian(surface, disc.z, p, nodes_all).sqrt_det
        except geometry.AdmissibilityError as err:
            raise geometry.AdmissibilityError(
                f"singular-rule geometry on patch {p}: {err}"
            ) from err
        if defect_cutoff is not None:
            Yref = geometry.eval_surface(surface, np.zeros(surface.n_modes), p, nodes_all)
            Xref = ref.points[sl]
        for t in range(len(targets)):
            L = tensor_lagrange_matrix(ch.domain, config.order, rules[t].nodes)
            gi = sl.start + t
            try:
                vals = _row_values(
                    ctx, kind, disc.points[gi], disc.normals[gi], Y[t], NY[t]
                )
            except UDomainError as err:
                raise _wrap_domain_error(
                    err, f"singular row (node {gi}, patch {p})"
                ) from err
            if defect_cutoff is not None:
                n_cut, nu = defect_cutoff
                d_ref = np.linalg.norm(Yref[t] - Xref[t][None, :], axis=-1)
                vals = vals * (1.0 - cutoff(n_cut * d_ref ** nu))
            A[gi, sl] = (vals * SQG[t] * rules[t].weights) @ L

    # near-singular rows on neighbouring patches
    for e in near_structure(surface, config):
        ch = surface.patch(e.source_patch)
        rule = duffy_selfpatch_rule(ch.domain, e.center, d_order)
        L = tensor_lagrange_matrix(ch.domain, config.order, rule.nodes)
        Y = geometry.eval_surface(surface, disc.z, e.source_patch, rule.nodes)
        NY = geometry.normal(surface, disc.z, e.source_patch, rule.nodes)
        SQG = geometry.gramian(surface, disc.z, e.source_patch, rule.nodes).sqrt_det
        try:
            vals = _row_values(
                ctx, kind, disc.points[e.target], disc.normals[e.target], Y, NY
            )
        except UDomainError as err:
            raise _wrap_domain_error(
                err,
                f"near row (node {e.target}, source patch {e.source_patch})",
            ) from err
        if defect_cutoff is not None:
            n_cut, nu = defect_cutoff
            Yref = geometry.eval_surface(
                surface, np.zeros(surface.n_modes), e.source_patch, rule.nodes
            )
            d_ref = np.linalg.norm(Yref - ref.points[e.target][None, :], axis=-1)
            vals = vals * (1.0 - cutoff(n_cut * d_ref ** nu))
        A[e.target, slices[e.source_patch]] = (vals * SQG * rule.weights) @ L

    return DiscreteOperator(A, disc, ctx, kind)


def assemble_slp(surface, ctx: WaveContext, z,
                 quad_config: QuadConfig = QuadConfig(), disc=None) -> DiscreteOperator:
    """Single-layer operator: kernel exp(i kappa r)/(4 pi r)."""
    return _assemble_kind(surface, ctx, z, quad_config, "slp", disc)


def assemble_dlp(surface, ctx: WaveContext, z,
                 quad_config: QuadConfig = QuadConfig(), disc=None) -> DiscreteOperator:
    """Double-layer operator: source-normal derivative of the fundamental solution."""
    return _assemble_kind(surface, ctx, z, quad_config, "dlp", disc)


def assemble_adjoint_dlp(surface, ctx: WaveContext, z,
                         quad_config: QuadConfig = QuadConfig(),
                         disc=None) -> DiscreteOperator:
    """Adjoint double-layer operator: target-normal derivative, assembled independently."""
    return _assemble_kind(surface, ctx, z, quad_config, "adjoint_dlp", disc)


def assemble_combined(surface, ctx: WaveContext, z,
                      quad_config: QuadConfig = QuadConfig(), variant: str = "indirect",
                      disc=None) -> DiscreteOperator:
    """Combined-field operator: half identity plus double layer minus
    i eta times single layer; the direct variant uses the adjoint double layer."""
    if variant not in ("direct", "indirect"):
        raise ValueError("variant must be 'direct' or 'indirect'")
    if disc is None:
        disc = discretize(surface, z, quad_config)
    kind = "adjoint_dlp" if variant == "direct" else "dlp"
    Kop = _assemble_kind(surface, ctx, z, quad_config, kind, disc)
    Vop = _assemble_kind(surface, ctx, z, quad_config, "slp", disc)
    N = disc.n_nodes
    A = 0.5 * np.eye(N, dtype=complex) + Kop.matrix - 1j * ctx.eta * Vop.matrix
    return DiscreteOperator(A, disc, ctx, f"combined_{variant}")


def assemble_regularized(surface, ctx: WaveContext, z,
                         quad_config: QuadConfig = QuadConfig(), n: int = 1,
                         nu: float = 1.0, kind: str = "slp",
                         disc=None) -> DiscreteOperator:
    """Short-range-regularized operator: kernel times cutoff(n * d^nu).

    d is the distance between the nodes' positions on the undeformed
    reference surface, so the damping factor is parameter independent and
    real.  The kernel is bounded wherever the factor is nonzero, so every
    entry is a plain product; entries with factor 0 (in particular the
    diagonal) are exactly 0.
    """
    if n < 1:
        raise ValueError("cutoff index must be at least 1")
    if disc is None:
        disc = discretize(surface, z, quad_config)
    ref = discretize(surface, np.zeros(surface.n_modes), quad_config)
    N = disc.n_nodes
    d_ref = np.linalg.norm(
        ref.points[:, None, :] - ref.points[None, :, :], axis=-1
    )
    damp = cutoff(n * d_ref ** nu)
    A = np.zeros((N, N), dtype=complex)
    live = damp > 0.0
    if np.any(live):
        it, js = np.nonzero(live)
        try:
            if kind == "slp":
                vals = slp_kernel(ctx, disc.points[js] - disc.points[it])
            elif kind == "dlp":
                vals = dlp_kernel(
                    ctx, disc.normals[js], disc.points[js] - disc.points[it]
                )
            elif kind == "adjoint_dlp":
                vals = adjoint_dlp_kernel(
                    ctx, disc.normals[it], disc.points[it] - disc.points[js]
                )
            else:
                raise ValueError(f"unknown kernel kind {kind!r}")
        except UDomainError as err:
            raise _wrap_domain_error(err, "regularized assembly") from err
        A[it, js] = vals * damp[it, js] * disc.weights[js]
    return DiscreteOperator(A, disc, ctx, f"regularized_{kind}_{n}")


def assemble_defect(surface, ctx: WaveContext, z,
                    quad_config: QuadConfig = QuadConfig(), n: int = 1,
                    nu: float = 1.0, kind: str = "slp",
                    disc=None) -> DiscreteOperator:
    """Remainder removed by the regularization: kernel times (1 - cutoff).

    Assembled with the full singular path (the factor equals 1 at the
    diagonal), this is the operator difference between the plain and the
    regularized families evaluated without requantizing either one, so its
    norm can keep shrinking with n instead of flooring at the fixed-grid
    quadrature discrepancy.
    """
    if n < 1:
        raise ValueError("cutoff index must be at least 1")
    op = _assemble_kind(surface, ctx, z, quad_config, kind, disc,
                        defect_cutoff=(float(n), float(nu)))
    op.kind = f"defect_{kind}_{n}"
    return op


# ---------------------------------------------------------------------------
# Norms, pairings, localization
# ---------------------------------------------------------------------------
def weighted_inner(u, v, weights) -> complex:
    """Bilinear pairing sum(u * v * w); no conjugation anywhere."""
    return complex(np.sum(np.asarray(u) * np.asarray(v) * np.asarray(weights)))


def op_norms(op, weights=None):
    """(l1, linf, l2) operator norms on the weighted node measure.

    l1: largest weighted column sum, linf: largest row sum (the surface
    weights already sit inside the matrix columns), l2: largest singular
    value after the diagonal similarity that makes the 2-norm match the
    weighted quadratic mean.  The moduli of the weights are used, so the
    norms stay real on complex parameter points.
    """
    if isinstance(op, DiscreteOperator):
        M = op.matrix
        w = op.weights if weights is None else weights
    else:
        M = np.asarray(op)
        w = weights
    if w is None:
        w = np.ones(M.shape[0])
    aw = np.abs(np.asarray(w))
    if np.any(aw <= 0):
        raise ValueError("weights must be nonzero")
    absM = np.abs(M)
    l1 = float(np.max(absM.T @ aw / aw))
    linf = float(np.max(absM.sum(axis=1)))
    sq = np.sqrt(aw)
    l2 = float(np.linalg.norm((sq[:, None] * M) / sq[None, :], ord=2))
    return l1, linf, l2


def localize(op: DiscreteOperator, patch: int) -> DiscreteOperator:
    """Piece of the operator that integrates over a single patch only."""
    sl = op.disc.patch_slices[patch]
    M = np.zeros_like(op.matrix)
    M[:, sl] = op.matrix[:, sl]
    return DiscreteOperator(M, op.disc, op.ctx, f"{op.kind}_patch{patch}")


def localized_sum(op: DiscreteOperator) -> np.ndarray:
    """Sum of the per-patch pieces; equals the full matrix exactly."""
    out = np.zeros_like(op.matrix)
    for p in range(len(op.disc.patch_slices)):
        out += localize(op, p).matrix
    return out


def entry_map(surface, ctx: WaveContext, quad_config: QuadConfig, kind: str,
              i: int, j: int):
    """Closure z -> matrix entry (i, j), for cross-patch pairs only.

    Cross-patch entries are single kernel evaluations, so the closure is
    cheap enough to probe along contours; pairs on the same patch would need
    the full product-integration row and are refused.
    """
    ref = discretize(surface, np.zeros(surface.n_modes), quad_config)
    pi, pj = int(ref.node_patches[i]), int(ref.node_patches[j])
    if pi == pj:
        raise ValueError("entry map requires a cross-patch node pair")
    for e in near_structure(surface, quad_config):
        if e.target == i and e.source_patch == pj:
            raise ValueError("entry map requires a pair outside the near-singular set")
    ui = ref.node_params[i]
    uj = ref.node_params[j]
    wj_chart = ref.chart_weights[j]

    def entry(z):
        x = geometry.eval_surface(surface, z, pi, ui)
        nx = geometry.normal(surface, z, pi, ui)
        y = geometry.eval_surface(surface, z, pj, uj)
        ny = geometry.normal(surface, z, pj, uj)
        sg = geometry.gramian(surface, z, pj, uj).sqrt_det
        if kind == "slp":
            val = slp_kernel(ctx, y - x)
        elif kind == "dlp":
            val = dlp_kernel(ctx, ny, y - x)
        elif kind == "adjoint_dlp":
            val = adjoint_dlp_kernel(ctx, nx, x - y)
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
        return complex(val * wj_chart * sg)

    return entry


# ---------------------------------------------------------------------------
# Binary export
# ---------------------------------------------------------------------------
def dump_operator(path, op) -> None:
    """Write the matrix: 16-byte header (magic, u32 size, u32 flags, u32
    reserved), then row-major little-endian float64 interleaved re/im."""
    M = op.matrix if isinstance(op, DiscreteOperator) else np.asarray(op)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("operator matrix must be square")
    N = M.shape[0]
    buf = np.empty((N, N, 2), dtype="<f8")
    buf[..., 0] = M.real
    buf[..., 1] = M.imag
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<III", N, 0, 0))
        fh.write(buf.tobytes())


def load_operator(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != MAGIC:
            raise ValueError("not an operator dump: bad magic")
        N, flags, _ = struct.unpack("<III", header[4:])
        if flags != 0:
            raise ValueError(f"unsupported flags {flags}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 2 * N * N:
        raise ValueError(
            f"truncated operator dump: expected {2 * N * N} floats, got {data.size}"
        )
    data = data.reshape(N, N, 2)
    return data[..., 0] + 1j * data[..., 1]


# ---------------------------------------------------------------------------
# Regularized-convergence study
# ---------------------------------------------------------------------------
def defect_norm_profile(surface, ctx: WaveContext, z_samples,
                        quad_config: QuadConfig, ns=(2, 4, 8, 16, 32),
                        nu: float = 1.0, kind: str = "slp") -> dict:
    """Weighted norms of the short-range remainder across cutoff indices.

    Returns the per-index sup over the parameter samples of each norm and
    the log-log slope of the l2 curve.
    """
    ns = list(ns)
    sup = {"l1": np.zeros(len(ns)), "linf": np.zeros(len(ns)),
           "l2": np.zeros(len(ns))}
    for z in z_samples:
        disc = discretize(surface, z, quad_config)
        for k, n in enumerate(ns):
            op = assemble_defect(surface, ctx, z, quad_config, n=n, nu=nu,
                                 kind=kind, disc=disc)
            l1, linf, l2 = op_norms(op)
            sup["l1"][k] = max(sup["l1"][k], l1)
            sup["linf"][k] = max(sup["linf"][k], linf)
            sup["l2"][k] = max(sup["l2"][k], l2)
    slope = float(np.polyfit(np.log(ns),
                             np.log(np.maximum(sup["l2"], 1e-300)), 1)[0])
    return {"ns": ns, "nu": nu, "slope_l2": slope, **{k: v.tolist() for k, v in sup.items()}}
