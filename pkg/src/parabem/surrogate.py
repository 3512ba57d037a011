"""Sparse tensor-Legendre surrogates on the parameter cube [-1, 1]^s.

Multi-indices are tuples of non-negative integers in canonical form
(trailing zeros trimmed).  Models carry coefficients in one of two
univariate normalizations: the classical polynomials with sup-norm one
(q = inf) or the rescaling that is orthonormal for the uniform
probability measure dx/2 on [-1, 1] (q = 2).
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.special import eval_legendre

__all__ = [
    "MultiIndexSet", "SurrogateModel", "SamplingConfig", "DecayRate",
    "RankDeficientFitError", "trim", "is_downward_closed", "is_anchored",
    "legendre_eval", "anchored_set", "gauss_grid", "fit_surrogate",
    "evaluate", "restrict", "best_n_term_curve", "decay_diagnostics",
    "save_surrogate", "load_surrogate", "write_error_curve_csv",
    "write_decay_csv",
]


# ---------------------------------------------------------------------------
# multi-indices
# ---------------------------------------------------------------------------
def trim(nu) -> tuple:
    """Canonical form of a multi-index: int tuple, trailing zeros removed."""
    nu = tuple(int(k) for k in nu)
    if any(k < 0 for k in nu):
        raise ValueError("multi-index entries must be non-negative")
    end = len(nu)
    while end > 0 and nu[end - 1] == 0:
        end -= 1
    return nu[:end]


def _predecessors(nu):
    for j, k in enumerate(nu):
        if k > 0:
            yield trim(nu[:j] + (k - 1,) + nu[j + 1:])


def is_downward_closed(indices) -> bool:
    have = {trim(nu) for nu in indices}
    return all(p in have for nu in have for p in _predecessors(nu))


def is_anchored(indices) -> bool:
    """Downward closed, and the unit indices present form a prefix e_1..e_m."""
    if not is_downward_closed(indices):
        return False
    have = {trim(nu) for nu in indices}
    units = sorted(len(nu) for nu in have if sum(nu) == 1)
    return units == list(range(1, len(units) + 1))


@dataclass(frozen=True)
class MultiIndexSet:
    indices: tuple
    downward_closed: bool
    anchored: bool

    @classmethod
    def from_indices(cls, indices) -> "MultiIndexSet":
        canon = tuple(sorted({trim(nu) for nu in indices}))
        dc = is_downward_closed(canon)
        return cls(canon, dc, dc and is_anchored(canon))

    def __post_init__(self):
        canon = tuple(sorted({trim(nu) for nu in self.indices}))
        if canon != tuple(self.indices):
            raise ValueError("indices must be canonical, deduplicated, sorted")
        dc = is_downward_closed(canon)
        anc = dc and is_anchored(canon)
        if (self.downward_closed, self.anchored) != (dc, anc):
            raise ValueError(
                "declared closure flags disagree with the index set")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, nu):
        return trim(nu) in set(self.indices)

    @property
    def active_dims(self) -> int:
        return max((len(nu) for nu in self.indices), default=0)

    def degrees(self) -> np.ndarray:
        """Per-dimension maximum degree, shape (active_dims,)."""
        deg = np.zeros(self.active_dims, dtype=int)
        for nu in self.indices:
            for j, k in enumerate(nu):
                deg[j] = max(deg[j], k)
        return deg


def anchored_set(n: int, s: int) -> MultiIndexSet:
    """All indices whose nonzero entries satisfy prod(entry + 1) <= n,
    supported on the first min(n, s) dimensions."""
    if n < 1:
        raise ValueError("budget must be at least 1")
    if s < 1:
        raise ValueError("dimension cap must be at least 1")
    dims = min(n, s)
    found = []

    def rec(prefix, prod):
        if len(prefix) == dims:
            found.append(trim(prefix))
            return
        rec(prefix + (0,), prod)
        k = 1
        while prod * (k + 1) <= n:
            rec(prefix + (k,), prod * (k + 1))
            k += 1

    rec((), 1)
    return MultiIndexSet.from_indices(found)


# ---------------------------------------------------------------------------
# basis evaluation
# ---------------------------------------------------------------------------
def _check_normalization(q):
    if not (q == 2 or q == math.inf):
        raise ValueError("normalization q must be 2 or inf")


def legendre_eval(n: int, q, x):
    """Univariate Legendre value; q=inf classical, q=2 orthonormal in dx/2."""
    _check_normalization(q)
    if n < 0:
        raise ValueError("degree must be non-negative")
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 1.0):
        raise ValueError("argument outside [-1, 1]")
    vals = eval_legendre(n, arr)
    if q == 2:
        vals = math.sqrt(2 * n + 1) * vals
    return float(vals) if arr.ndim == 0 else vals


def _design_matrix(indices: Sequence[tuple], ys: np.ndarray, q) -> np.ndarray:
    """Rows: samples; columns: tensorized basis values per multi-index."""
    _check_normalization(q)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    need = max((len(nu) for nu in indices), default=0)
    if ys.shape[1] < need:
        raise ValueError(
            f"samples have {ys.shape[1]} coordinates, index set needs {need}")
    deg = [0] * need
    for nu in indices:
        for j, k in enumerate(nu):
            deg[j] = max(deg[j], k)
    tables = [
        np.stack([legendre_eval(k, q, ys[:, j]) for k in range(deg[j] + 1)])
        for j in range(need)
    ]
    A = np.ones((ys.shape[0], len(indices)))
    for col, nu in enumerate(indices):
        for j, k in enumerate(nu):
            if k > 0:
                A[:, col] *= tables[j][k]
    return A


def gauss_grid(orders: Sequence[int]):
    """Tensor Gauss-Legendre nodes on [-1,1]^s with probability weights."""
    axes = [np.polynomial.legendre.leggauss(p) for p in orders]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    ys = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.ones(1)
    for _, wj in axes:
        w = np.outer(w, wj).ravel()
    # each univariate weight integrates dx; divide by 2 per axis for dx/2
    return ys, w / 2.0 ** len(orders)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------
class RankDeficientFitError(RuntimeError):
    def __init__(self, msg, cond=None):
        super().__init__(msg)
        self.cond = cond


@dataclass(frozen=True)
class SamplingConfig:
    method: str = "mc"          # "mc" | "gauss"
    oversampling: float = 10.0
    seed: int = 0
    threads: int = 1
    dims: Optional[int] = None  # sampling dimension; defaults to active dims

    def __post_init__(self):
        if self.method not in ("mc", "gauss"):
            raise ValueError(f"unknown sampling method {self.method!r}")
        if self.oversampling < 1.0:
            raise ValueError("oversampling must be at least 1")


@dataclass
class SurrogateModel:
    index_set: MultiIndexSet
    coeffs: np.ndarray          # (|set|,) or (|set|, m) for vector targets
    normalization: object       # 2 or math.inf
    truncation_dim: int
    residual: float = math.nan
    cond: float = math.nan
    value_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        _check_normalization(self.normalization)
        if len(self.coeffs) != len(self.index_set):
            raise ValueError("coefficient count must match the index set")


def _evaluate_batch(evaluator: Callable, ys: np.ndarray, threads: int):
    if threads <= 1:
        vals = [evaluator(y) for y in ys]
    else:
        # indexed placement: results land by position, not completion order
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(evaluator, ys))
    return np.asarray(vals)


def fit_surrogate(evaluator: Callable, index_set: MultiIndexSet,
                  sampling: SamplingConfig = SamplingConfig(),
                  q=2, value_weights=None) -> SurrogateModel:
    """Least-squares coefficients of evaluator on the tensor-Legendre basis.

    Monte Carlo sampling draws oversampling * |set| uniform points; Gauss
    sampling uses a tensor grid exact for products of basis pairs, with
    rows scaled by the square roots of the probability weights.
    """
    if not index_set.downward_closed:
        raise ValueError("index set must be downward closed")
    if len(index_set) == 0:
        raise ValueError("index set is empty")
    dims = sampling.dims if sampling.dims is not None else index_set.active_dims
    dims = max(dims, 1, index_set.active_dims)
    if sampling.method == "mc":
        count = math.ceil(sampling.oversampling * len(index_set))
        rng = np.random.default_rng(sampling.seed)
        ys = rng.uniform(-1.0, 1.0, size=(count, dims))
        row_scale = np.ones(count)
    else:
        deg = np.zeros(dims, dtype=int)
        deg[:index_set.active_dims] = index_set.degrees()
        ys, w = gauss_grid(list(deg + 1))
        row_scale = np.sqrt(w)
    vals = _evaluate_batch(evaluator, ys, sampling.threads)
    A = _design_matrix(index_set.indices, ys, q) * row_scale[:, None]
    targets = vals * (row_scale[:, None] if vals.ndim > 1 else row_scale)
    # pivoted-QR least squares; condition reported from the singular values
    coeffs, _, rank, _ = sla.lstsq(A, targets, lapack_driver="gelsy")
    sv = np.linalg.svd(A, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else math.inf
    if rank < len(index_set):
        raise RankDeficientFitError(
            f"design matrix rank {rank} < {len(index_set)} basis functions "
            f"(condition {cond:.3e}); add samples or shrink the index set",
            cond=cond)
    fit_res = np.linalg.norm(A @ coeffs - targets)
    ref = max(np.linalg.norm(targets), 1e-300)
    return SurrogateModel(
        index_set=index_set,
        coeffs=coeffs,
        normalization=q,
        truncation_dim=dims,
        residual=float(fit_res / ref),
        cond=float(cond),
        value_weights=value_weights,
    )


def evaluate(model: SurrogateModel, y):
    """Surrogate prediction at one point (1-d y) or a batch (2-d y)."""
    ys = np.asarray(y, dtype=float)
    single = ys.ndim == 1
    A = _design_matrix(model.index_set.indices, ys, model.normalization)
    out = A @ model.coeffs
    return out[0] if single else out


def restrict(model: SurrogateModel, keep: MultiIndexSet) -> SurrogateModel:
    """Sub-model on a subset of the fitted indices; missing entries dropped."""
    pos = {nu: i for i, nu in enumerate(model.index_set.indices)}
    missing = [nu for nu in keep.indices if nu not in pos]
    if missing:
        raise ValueError(f"indices not in the fitted set: {missing[:3]}")
    sel = [pos[nu] for nu in keep.indices]
    return SurrogateModel(
        index_set=keep,
        coeffs=model.coeffs[sel],
        normalization=model.normalization,
        truncation_dim=model.truncation_dim,
        residual=model.residual,
        cond=model.cond,
        value_weights=model.value_weights,
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------
def coefficient_magnitudes(model: SurrogateModel) -> np.ndarray:
    """Scalar size per coefficient; vector targets use the weighted l2 norm
    over the value axis."""
    c = np.asarray(model.coeffs)
    if c.ndim == 1:
        return np.abs(c)
    w = (np.abs(np.asarray(model.value_weights))
         if model.value_weights is not None else np.ones(c.shape[1]))
    return np.sqrt((np.abs(c) ** 2) @ w)


def _greedy_closed_selection(indices, mags, n):
    pos = {nu: i for i, nu in enumerate(indices)}
    kept = set()
    order = []
    while len(order) < n:
        best = None
        for nu in indices:
            if nu in kept or any(p not in kept for p in _predecessors(nu)):
                continue
            if best is None or mags[pos[nu]] > mags[pos[best]]:
                best = nu
        if best is None:
            break
        kept.add(best)
        order.append(pos[best])
    return order


def best_n_term_curve(model: SurrogateModel, n_list: Sequence[int],
                      enforce_closure: bool = False):
    """(n, l2 tail norm) after keeping the n largest coefficients."""
    mags = coefficient_magnitudes(model)
    total = len(mags)
    out = []
    for n in n_list:
        if n > total:
            raise ValueError(f"requested {n} terms, model has {total}")
        if enforce_closure:
            kept = _greedy_closed_selection(model.index_set.indices, mags, n)
        else:
            kept = np.argsort(-mags, kind="stable")[:n]
        dropped = np.ones(total, dtype=bool)
        dropped[list(kept)] = False
        out.append((int(n), float(np.sqrt(np.sum(mags[dropped] ** 2)))))
    return out


@dataclass(frozen=True)
class DecayRate:
    dim: int        # 1-based parameter coordinate
    slope: float    # fitted d log|c_k| / dk along the univariate chain
    rho: float      # exp(-slope), the empirical geometric decay radius
    r2: float
    n_points: int


def decay_diagnostics(model: SurrogateModel,
                      floor_rel: float = 1e-8) -> list:
    """Log-linear fits of the univariate chain coefficients per dimension.

    Chains are truncated at the first entry below floor_rel times the
    chain maximum so a sampling noise floor cannot flatten the slope.
    """
    mags = coefficient_magnitudes(model)
    pos = {nu: i for i, nu in enumerate(model.index_set.indices)}
    rates = []
    for j in range(1, model.index_set.active_dims + 1):
        ks, vals = [], []
        k = 1
        while True:
            nu = trim((0,) * (j - 1) + (k,))
            if nu not in pos:
                break
            ks.append(k)
            vals.append(mags[pos[nu]])
            k += 1
        if len(ks) < 3:
            raise ValueError(
                f"dimension {j} has only {len(ks)} chain coefficients; "
                "need at least 3 for a rate fit")
        vals = np.asarray(vals)
        floor = floor_rel * vals.max()
        cut = len(vals)
        for i, v in enumerate(vals):
            if v < floor:
                cut = i
                break
        cut = max(cut, 3)
        kk = np.asarray(ks[:cut], dtype=float)
        logv = np.log(vals[:cut])
        slope, intercept = np.polyfit(kk, logv, 1)
        pred = slope * kk + intercept
        ss_tot = float(np.sum((logv - logv.mean()) ** 2))
        ss_res = float(np.sum((logv - pred) ** 2))
        r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
        rates.append(DecayRate(dim=j, slope=float(slope),
                               rho=float(np.exp(-slope)), r2=float(r2),
                               n_points=int(cut)))
    return rates


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def save_surrogate(path, model: SurrogateModel):
    payload = {
        "q": "inf" if model.normalization == math.inf else 2,
        "s": int(model.truncation_dim),
        "indices": [list(nu) for nu in model.index_set.indices],
        "coeffs_re": np.real(model.coeffs).tolist(),
        "coeffs_im": np.imag(model.coeffs).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_surrogate(path) -> SurrogateModel:
    with open(path) as fh:
        payload = json.load(fh)
    q = math.inf if payload["q"] == "inf" else payload["q"]
    coeffs = (np.asarray(payload["coeffs_re"], dtype=float)
              + 1j * np.asarray(payload["coeffs_im"], dtype=float))
    return SurrogateModel(
        index_set=MultiIndexSet.from_indices(
            tuple(nu) for nu in payload["indices"]),
        coeffs=coeffs,
        normalization=q,
        truncation_dim=int(payload["s"]),
    )


def write_error_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "error"])
        for n, err in curve:
            wr.writerow([int(n), "%.17g" % err])


def write_decay_csv(path, rates):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["dim", "slope", "rho", "r2", "n_points"])
        for r in rates:
            wr.writerow([r.dim, "%.17g" % r.slope, "%.17g" % r.rho,
                         "%.17g" % r.r2, r.n_points])
