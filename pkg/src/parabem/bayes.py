"""Shape-inversion posteriors over the parameter cube.

The data model: far-field observations stacked as (Re, Im) pairs per
direction, a Gaussian misfit with dense covariance, a uniform prior on
[-1, 1]^s, and posterior summaries (normalization constant and the
posterior-mean surface sampled at the chart quadrature nodes).

The misfit keeps the bilinear quadratic form at complex parameters, and
the complex-argument observation stack uses the reflection split
(f(z) +- conj(f(conj z)))/2, so the density extends holomorphically and
the analyticity harness can probe it directly.
"""

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from . import geometry, scattering
from .kernels import WaveContext
from .operators import QuadConfig
from .quadrature import gauss_rule

FORWARD_QUANTUM = 1e-12
UNDERFLOW_FLOOR = 1e-300


class EvidenceUnderflowError(RuntimeError):
    """Normalization constant fell below the representable floor."""

    def __init__(self, msg, log_z=None):
        super().__init__(msg)
        self.log_z = log_z


@dataclass
class PosteriorSpec:
    observations: np.ndarray          # length 2 * len(directions)
    covariance: np.ndarray            # dense SPD
    directions: list                  # (d_inc, d_obs) unit-vector pairs
    variant: str = "indirect"
    kappa: float = 1.0
    eta: float = 1.0
    # test hook: a replacement precision matrix (e.g. zeros turns the
    # potential off so the posterior reduces to the prior)
    precision_override: Optional[np.ndarray] = None

    def __post_init__(self):
        self.observations = np.atleast_1d(
            np.asarray(self.observations, dtype=float))
        self.covariance = np.asarray(self.covariance, dtype=float)
        if self.variant not in ("direct", "indirect"):
            raise ValueError(f"unknown variant {self.variant!r}")
        m = len(self.observations)
        if m != 2 * len(self.directions):
            raise ValueError(
                f"{len(self.directions)} direction pairs need "
                f"{2 * len(self.directions)} observations, got {m}")
        if self.covariance.shape != (m, m):
            raise ValueError("covariance shape must match the observations")
        if not np.allclose(self.covariance, self.covariance.T,
                           atol=1e-12 * max(1.0, np.abs(self.covariance).max())):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(self.covariance).min() <= 0:
            raise ValueError("covariance must be positive definite")
        if self.precision_override is not None:
            P = np.asarray(self.precision_override, dtype=float)
            if P.shape != (m, m) or not np.allclose(P, P.T):
                raise ValueError("precision override must be symmetric "
                                 "with the observation shape")
            self.precision_override = P
        self._precision = None

    def precision(self) -> np.ndarray:
        if self.precision_override is not None:
            return self.precision_override
        if self._precision is None:
            c, low = sla.cho_factor(self.covariance)
            self._precision = sla.cho_solve(
                (c, low), np.eye(len(self.observations)))
        return self._precision

    def contexts(self) -> list:
        return [WaveContext(kappa=self.kappa, eta=self.eta,
                            d_inc=np.asarray(di, dtype=float),
                            d_obs=np.asarray(do, dtype=float))
                for di, do in self.directions]


# ---------------------------------------------------------------------------
# observation operator
# ---------------------------------------------------------------------------
def _far_field_values(surface, ctx_list, y, variant, quad_config, method):
    """Far field per context; one solve per distinct (kappa, eta, incidence)."""
    groups = {}
    for idx, ctx in enumerate(ctx_list):
        key = (ctx.kappa, ctx.eta, tuple(ctx.d_inc))
        groups.setdefault(key, []).append(idx)
    values = np.empty(len(ctx_list), dtype=complex)
    for idxs in groups.values():
        lead = ctx_list[idxs[0]]
        sol = scattering.solve_scattering(surface, lead, y, variant,
                                          quad_config, method=method)
        for idx in idxs:
            values[idx] = scattering.far_field(surface, ctx_list[idx], y, sol)
    return values


def observe(surface, ctx_list: Sequence[WaveContext], y,
            variant: str = "indirect",
            quad_config: QuadConfig = QuadConfig(),
            method: str = "auto") -> np.ndarray:
    """(Re, Im) far-field stack across direction pairs at a real parameter."""
    y = np.atleast_1d(np.asarray(y))
    values = _far_field_values(surface, ctx_list, y, variant, quad_config,
                               method)
    out = np.empty(2 * len(ctx_list))
    out[0::2] = values.real
    out[1::2] = values.imag
    return out


def far_field_forward(surface, spec: PosteriorSpec,
                      quad_config: QuadConfig = QuadConfig(),
                      method: str = "auto") -> Callable:
    """Observation closure usable at real and complex parameters.

    At complex z the (Re, Im) components are replaced by their reflection
    extensions built from the far fields at z and conj(z); on real input
    the formulas collapse to the plain stack.
    """
    ctx_list = spec.contexts()

    def raw(y):
        return _far_field_values(surface, ctx_list, np.atleast_1d(y),
                                 spec.variant, quad_config, method)

    def forward(y):
        y = np.atleast_1d(np.asarray(y))
        if not np.iscomplexobj(y) or np.all(y.imag == 0):
            u = raw(y.real)
            out = np.empty(2 * len(ctx_list))
            out[0::2] = u.real
            out[1::2] = u.imag
            return out
        u = raw(y)
        u_bar = np.conj(raw(np.conj(y)))
        out = np.empty(2 * len(ctx_list), dtype=complex)
        out[0::2] = 0.5 * (u + u_bar)
        out[1::2] = (u - u_bar) / 2j
        return out

    return forward


class ForwardCache:
    """Memoized forward map keyed by the quantized parameter vector.

    Values at a key are deterministic, so concurrent last-writer-wins
    insertion is harmless.  The same cache serves every covariance since
    the forward map does not depend on the noise model.
    """

    def __init__(self, forward: Callable, quantum: float = FORWARD_QUANTUM):
        self.forward = forward
        self.quantum = quantum
        self._memo = {}
        self.n_calls = 0
        self.n_evals = 0

    def _key(self, y):
        q = self.quantum
        if np.iscomplexobj(y):
            return tuple((int(round(v.real / q)), int(round(v.imag / q)))
                         for v in y)
        return tuple(int(round(float(v) / q)) for v in y)

    def __call__(self, y):
        y = np.atleast_1d(np.asarray(y))
        self.n_calls += 1
        key = self._key(y)
        hit = self._memo.get(key)
        if hit is None:
            hit = np.asarray(self.forward(y))
            self._memo[key] = hit
            self.n_evals += 1
        return hit

    def __len__(self):
        return len(self._memo)


# ---------------------------------------------------------------------------
# potential and density
# ---------------------------------------------------------------------------
def potential(spec: PosteriorSpec, y, forward_cache: Callable):
    """Half the precision-weighted squared misfit, bilinear at complex y."""
    jy = forward_cache(y)
    r = spec.observations - jy
    val = 0.5 * (r @ spec.precision() @ r)
    if np.iscomplexobj(val):
        return complex(val)
    return float(val)


def posterior_density(spec: PosteriorSpec, y, forward_cache: Callable):
    """exp(-potential); in (0, 1] on real parameters."""
    p = potential(spec, y, forward_cache)
    if isinstance(p, complex):
        return complex(np.exp(-p))
    return float(math.exp(-p))


# ---------------------------------------------------------------------------
# evidence and posterior mean
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EvidenceResult:
    Z: float
    log_Z: float
    mean: np.ndarray
    method: str
    n_evals: int


def _seeded_rng(seed: int, label: str):
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


_FIB = [1, 2]
while _FIB[-1] < 10 ** 7:
    _FIB.append(_FIB[-1] + _FIB[-2])


def _lattice_points(s: int, n: int, seed: int):
    """Rank-1 lattice with a random shift, mapped to [-1, 1]^s.

    s = 2 uses the Fibonacci rule (n snapped to a Fibonacci number);
    larger s uses a Korobov generating vector with a golden-section
    multiplier made coprime to n.
    """
    if s == 2:
        n = next(f for f in _FIB if f >= n)
        i = _FIB.index(n)
        gen = np.array([1, _FIB[i - 1] if i > 0 else 1])
    else:
        a = max(2, int(round(n * (math.sqrt(5.0) - 1.0) / 2.0)))
        while math.gcd(a, n) != 1:
            a += 1
        gen = np.array([pow(a, k, n) for k in range(s)])
        gen[0] = 1
    shift = _seeded_rng(seed, "qmc-shift").uniform(0.0, 1.0, size=s)
    k = np.arange(n)[:, None]
    pts = (k * gen[None, :] / n + shift) % 1.0
    return 2.0 * pts - 1.0, np.full(n, 1.0 / n)


def _quadrature_samples(s: int, method: str, gauss_order: int,
                        n_samples: int, seed: int):
    if method == "auto":
        method = "gauss" if s <= 3 else ("qmc" if s <= 16 else "mc")
    if method == "gauss":
        if s > 3:
            raise ValueError("tensor-Gauss evidence limited to 3 dimensions")
        x, w = np.polynomial.legendre.leggauss(gauss_order)
        grids = np.meshgrid(*([x] * s), indexing="ij")
        ys = np.stack([g.ravel() for g in grids], axis=-1)
        ww = np.ones(1)
        for _ in range(s):
            ww = np.outer(ww, w).ravel()
        return ys, ww / 2.0 ** s, "gauss"
    if method == "qmc":
        ys, w = _lattice_points(s, n_samples, seed)
        return ys, w, "qmc"
    if method == "mc":
        rng = _seeded_rng(seed, "mc-sampler")
        ys = rng.uniform(-1.0, 1.0, size=(n_samples, s))
        return ys, np.full(n_samples, 1.0 / n_samples), "mc"
    raise ValueError(f"unknown quadrature method {method!r}")


def _threaded_potentials(spec, forward_cache, ys, threads):
    def one(y):
        return potential(spec, y, forward_cache)

    if threads <= 1:
        return np.array([one(y) for y in ys])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(one, ys)))


def posterior_expectation(spec: PosteriorSpec, forward_cache: Callable,
                          qoi: Callable, s: int, method: str = "auto",
                          gauss_order: int = 20, n_samples: int = 4096,
                          seed: int = 0, threads: int = 1,
                          log_space: bool = False):
    """(Z, log Z, posterior mean of qoi, method, n_evals) by quadrature.

    qoi maps a real parameter vector to a numpy value; the mean is the
    Theta-weighted quadrature average normalized by Z.  In log-space
    mode the weights are exponentiated relative to the largest density,
    which keeps the mean finite when Z underflows.
    """
    ys, w, used = _quadrature_samples(s, method, gauss_order, n_samples, seed)
    pots = _threaded_potentials(spec, forward_cache, ys, threads).real
    log_terms = np.log(w) - pots
    log_z = float(logsumexp(log_terms))
    z = math.exp(log_z) if log_z > math.log(UNDERFLOW_FLOOR) else 0.0
    if not log_space and z < UNDERFLOW_FLOOR:
        raise EvidenceUnderflowError(
            f"normalization constant underflowed (log Z = {log_z:.3f}); "
            "rerun with log_space=True", log_z=log_z)
    # posterior weights, stable against a common scale in the densities
    wq = np.exp(log_terms - log_terms.max())
    wq /= wq.sum()
    acc = None
    for wi, y in zip(wq, ys):
        val = np.asarray(qoi(y), dtype=float) * wi
        acc = val if acc is None else acc + val
    return z, log_z, acc, used, len(ys)


def surface_node_map(surface, quad_config: QuadConfig = QuadConfig()):
    """qoi closure: parameter -> deformed surface positions at chart nodes."""
    rules = [gauss_rule(ch.domain, quad_config.order, ch.patch_id)
             for ch in surface.patches]

    def qoi(y):
        zvals = geometry._param_values(y, surface.n_modes)
        pts = [geometry.eval_surface(surface, zvals, p, rule.nodes)
               for p, rule in enumerate(rules)]
        return np.concatenate(pts, axis=0).real

    return qoi


def evidence_and_mean(spec: PosteriorSpec, surface,
                      quad_config: QuadConfig = QuadConfig(),
                      forward_cache: Optional[Callable] = None,
                      method: str = "auto", gauss_order: int = 20,
                      n_samples: int = 4096, seed: int = 0, threads: int = 1,
                      log_space: bool = False) -> EvidenceResult:
    """Normalization constant and posterior-mean surface at chart nodes."""
    if forward_cache is None:
        forward_cache = ForwardCache(
            far_field_forward(surface, spec, quad_config))
    z, log_z, mean, used, n = posterior_expectation(
        spec, forward_cache, surface_node_map(surface, quad_config),
        s=surface.n_modes, method=method, gauss_order=gauss_order,
        n_samples=n_samples, seed=seed, threads=threads, log_space=log_space)
    if not log_space and not z > 0:
        raise EvidenceUnderflowError(
            f"normalization constant is not positive (log Z = {log_z:.3f})",
            log_z=log_z)
    return EvidenceResult(Z=z, log_Z=log_z, mean=mean, method=used, n_evals=n)
