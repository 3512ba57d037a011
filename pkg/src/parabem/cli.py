"""Experiment orchestration: config ingestion, pipelines, convergence
studies, and artifact emission.

One JSON config describes a whole experiment; subcommands run slices of it.
All artifacts are deterministic for a fixed seed: JSON is written with
sorted keys, CSV numbers with repr-faithful precision, and nothing carries
a timestamp.  Exit codes: 0 on pass, 2 when a verdict or fitted slope
misses its tolerance, 1 on any error.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import pathlib
import zlib
from dataclasses import dataclass
from typing import Optional

import click
import numpy as np

from . import bayes, geometry, holocheck, operators, scattering, surrogate
from .kernels import WaveContext
from .operators import QuadConfig


class ConfigError(ValueError):
    """Schema violation; the message starts with the JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


def _leaf(type_, default, choices=None, nullable=False):
    return {"type": type_, "default": default, "choices": choices,
            "nullable": nullable}


# Published schema: every knob any module reads appears here with a default.
# Sections marked required must be present in the document; leaves inside
# them may be omitted and fall back to the default.
CONFIG_SCHEMA = {
    "surface": {
        "patches": {
            "builtin": _leaf("string", "sphere", ("sphere", "box", "flat")),
            "radius": _leaf("number", 1.0),
            "half_width": _leaf("number", 1.0),
            "scale": _leaf("number", 1.0),
        },
        "modes": {
            "count": _leaf("integer", 0),
            "theta": _leaf("number", 2.0),
            "amplitude": _leaf("number", 0.1),
            "width": _leaf("number", 0.8),
            "centers": _leaf("array", None, nullable=True),
        },
        "p": _leaf("number", 0.6),
    },
    "wave": {
        "kappa": _leaf("number", 1.0),
        "eta": _leaf("number", 1.0),
        "d_inc": _leaf("array", [0.0, 0.0, 1.0]),
        "d_obs": _leaf("array", [0.0, 0.0, 1.0]),
    },
    "quadrature": {
        "order": _leaf("integer", 4),
        "duffy_order": _leaf("integer", None, nullable=True),
        "near_factor": _leaf("number", 2.0),
        "path": _leaf("string", "duffy", ("duffy", "regularized")),
        "cutoff_index": _leaf("integer", 8),
        "cutoff_exponent": _leaf("number", 1.0),
    },
    "truncation": _leaf("integer", 0),
    "variant": _leaf("string", "indirect", ("indirect", "direct")),
    "convention": _leaf("string", "standard3d", ("standard3d", "paper")),
    "surrogate": {
        "budget": _leaf("integer", 8),
        "q": _leaf("number", 2.0),
        "oversampling": _leaf("number", 10.0),
        "method": _leaf("string", "mc", ("mc", "gauss")),
    },
    "holocheck": {
        "polyradius_policy": _leaf("string", "uniform", ("uniform", "auto")),
        "rho": _leaf("number", 1.1),
        "tolerance": _leaf("number", holocheck.VERDICT_RTOL),
        "contour_radius": _leaf("number", 0.02),
        "scan_samples": _leaf("integer", 64),
        "derivative_points": _leaf("integer", 3),
    },
    "evidence": {
        "method": _leaf("string", "auto", ("auto", "gauss", "qmc", "mc")),
        "gauss_order": _leaf("integer", 20),
        "n_samples": _leaf("integer", 4096),
    },
    "convergence": {
        "nu": _leaf("number", 1.0),
        "cutoff_indices": _leaf("array", [2, 4, 8, 16, 32]),
        "orders": _leaf("array", [2, 3, 4, 5]),
        "budgets": _leaf("array", [2, 4, 8, 16, 32]),
        "n_param_samples": _leaf("integer", 5),
        "validation_samples": _leaf("integer", 64),
        "slope_target": _leaf("number", -0.9),
        "slope_window": _leaf("number", 0.3),
    },
    "bayes_spec": _leaf("string", None, nullable=True),
    "output_dir": _leaf("string", "out"),
    "seed": _leaf("integer", 0),
}

REQUIRED_SECTIONS = ("surface", "wave")

_TYPE_CHECKS = {
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
    "array": lambda v: isinstance(v, list),
}


def _validate_node(schema, raw, pointer):
    if _is_leaf(schema):
        if raw is None:
            if not schema["nullable"]:
                raise ConfigError(pointer, "may not be null")
            return None
        if not _TYPE_CHECKS[schema["type"]](raw):
            raise ConfigError(
                pointer,
                f"expected {schema['type']}, got {type(raw).__name__}")
        if schema["choices"] is not None and raw not in schema["choices"]:
            raise ConfigError(
                pointer, f"must be one of {list(schema['choices'])}")
        return raw
    if not isinstance(raw, dict):
        raise ConfigError(pointer or "/", f"expected object, got {type(raw).__name__}")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{pointer}/{key}", "unknown key")
    out = {}
    for key, sub in schema.items():
        child = f"{pointer}/{key}"
        if _is_leaf(sub):
            if key not in raw:
                out[key] = sub["default"]
            else:
                out[key] = _validate_node(sub, raw[key], child)
        else:
            if key not in raw:
                if pointer == "" and key in REQUIRED_SECTIONS:
                    raise ConfigError(child, "missing required section")
                out[key] = _validate_node(sub, {}, child)
            else:
                out[key] = _validate_node(sub, raw[key], child)
    return out


def _is_leaf(node) -> bool:
    return "type" in node and not isinstance(node.get("type"), dict)


@dataclass(frozen=True)
class ExperimentConfig:
    surface: dict
    wave: dict
    quadrature: dict
    truncation: int
    variant: str
    convention: str
    surrogate: dict
    holocheck: dict
    evidence: dict
    convergence: dict
    bayes_spec: Optional[str]
    output_dir: str
    seed: int

    def build_surface(self) -> geometry.ParametricSurface:
        spec = dict(self.surface)
        if self.truncation:
            spec["truncation"] = self.truncation
        return geometry.surface_from_config(spec)

    def build_wave(self, d_obs=None) -> WaveContext:
        return WaveContext(self.wave["kappa"], self.wave["eta"],
                           d_inc=self.wave["d_inc"],
                           d_obs=self.wave["d_obs"] if d_obs is None else d_obs)

    def build_quad(self) -> QuadConfig:
        return QuadConfig(order=self.quadrature["order"],
                          duffy_order=self.quadrature["duffy_order"],
                          near_factor=self.quadrature["near_factor"])


def config_from_dict(raw: dict, base_dir=None) -> ExperimentConfig:
    validated = _validate_node(CONFIG_SCHEMA, raw, "")
    bayes_spec = validated["bayes_spec"]
    if bayes_spec is not None:
        path = pathlib.Path(bayes_spec)
        if base_dir is not None and not path.is_absolute():
            path = pathlib.Path(base_dir) / path
        if not path.exists():
            raise ConfigError("/bayes_spec",
                              f"referenced file not found: {path}")
        bayes_spec = str(path)
    return ExperimentConfig(
        surface=validated["surface"],
        wave=validated["wave"],
        quadrature=validated["quadrature"],
        truncation=validated["truncation"],
        variant=validated["variant"],
        convention=validated["convention"],
        surrogate=validated["surrogate"],
        holocheck=validated["holocheck"],
        evidence=validated["evidence"],
        convergence=validated["convergence"],
        bayes_spec=bayes_spec,
        output_dir=validated["output_dir"],
        seed=validated["seed"],
    )


def load_config(path) -> ExperimentConfig:
    path = pathlib.Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError("/", f"invalid JSON: {err}") from err
    return config_from_dict(raw, base_dir=path.parent)


def parse_y(text, n_modes: int) -> np.ndarray:
    if text is None or not text.strip():
        return np.zeros(n_modes)
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError as err:
        raise ConfigError("/y", f"not a comma-separated float list: {err}")
    if len(vals) != n_modes:
        raise ConfigError(
            "/y", f"expected {n_modes} parameter values, got {len(vals)}")
    return np.asarray(vals, dtype=float)


def _seeded_rng(seed: int, label: str):
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


# ---------------------------------------------------------------------------
# artifact helpers
# ---------------------------------------------------------------------------
def _write_json(path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _sha256(path) -> str:
    return hashlib.sha256(pathlib.Path(path).read_bytes()).hexdigest()


def _write_curve_csv(path, rows, slope: float):
    lines = ["control_parameter,error"]
    for c, e in rows:
        lines.append(f"{c:.17g},{e:.17g}")
    lines.append(f"slope,{slope:.17g}")
    pathlib.Path(path).write_text("\n".join(lines) + "\n")


def _out_dir(config: ExperimentConfig, override) -> pathlib.Path:
    out = pathlib.Path(override) if override else pathlib.Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------
def _solve_with_path(config: ExperimentConfig, surface, ctx, y,
                     method: str = "auto"):
    """Solve the boundary system along the configured singular-quadrature
    path: "duffy" uses the product-integration assembly, "regularized" the
    short-range-damped kernels at the configured cutoff index."""
    quad = config.build_quad()
    if config.quadrature["path"] == "duffy":
        return scattering.solve_scattering(surface, ctx, y, config.variant,
                                           quad, method=method)
    disc = operators.discretize(surface, y, quad)
    kind = "adjoint_dlp" if config.variant == "direct" else "dlp"
    n = config.quadrature["cutoff_index"]
    nu = config.quadrature["cutoff_exponent"]
    Kop = operators.assemble_regularized(surface, ctx, y, quad, n=n, nu=nu,
                                         kind=kind, disc=disc)
    Vop = operators.assemble_regularized(surface, ctx, y, quad, n=n, nu=nu,
                                         kind="slp", disc=disc)
    A = 0.5 * np.eye(disc.n_nodes, dtype=complex) \
        + Kop.matrix - 1j * ctx.eta * Vop.matrix
    op = operators.DiscreteOperator(
        A, disc, ctx, f"combined_{config.variant}_regularized_{n}")
    rhs_vec = scattering.rhs(surface, ctx, y, config.variant, quad, disc=disc)
    return scattering.solve(op, rhs_vec, method=method, variant=config.variant)


def run_pipeline(config: ExperimentConfig, y=None, out_dir=None,
                 method: str = "auto") -> dict:
    """Solve at one parameter point and emit solve.json plus a summary with
    content hashes of every artifact written."""
    surface = config.build_surface()
    yv = np.zeros(surface.n_modes) if y is None else np.asarray(y, dtype=float)
    ctx = config.build_wave()
    sol = _solve_with_path(config, surface, ctx, yv, method=method)
    u = scattering.far_field(surface, ctx, yv, sol, config.convention)
    out = _out_dir(config, out_dir)
    solve_payload = {
        "u_inf_re": float(u.real),
        "u_inf_im": float(u.imag),
        "residual": float(sol.residual),
        "cond_est": float(sol.cond_est),
        "method": sol.method,
        "n_nodes": int(sol.disc.n_nodes),
    }
    _write_json(out / "solve.json", solve_payload)
    summary = {
        "variant": config.variant,
        "convention": config.convention,
        "path": config.quadrature["path"],
        "y": [float(v) for v in yv],
        "solve": solve_payload,
        "artifacts": {"solve.json": _sha256(out / "solve.json")},
    }
    _write_json(out / "summary.json", summary)
    return summary


def run_farfield(config: ExperimentConfig, y=None, out_dir=None,
                 n_directions: int = 16) -> dict:
    """One solve, far-field sweep over a great circle through d_inc."""
    surface = config.build_surface()
    yv = np.zeros(surface.n_modes) if y is None else np.asarray(y, dtype=float)
    ctx = config.build_wave()
    sol = _solve_with_path(config, surface, ctx, yv)
    a = np.asarray(ctx.d_inc, dtype=float)
    b = np.array([1.0, 0.0, 0.0])
    if abs(a @ b) > 0.9:
        b = np.array([0.0, 1.0, 0.0])
    b = b - (a @ b) * a
    b /= np.linalg.norm(b)
    out = _out_dir(config, out_dir)
    lines = ["theta,re,im,abs"]
    for k in range(n_directions):
        theta = 2.0 * np.pi * k / n_directions
        d = np.cos(theta) * a + np.sin(theta) * b
        ctx_k = config.build_wave(d_obs=d)
        u = scattering.far_field(surface, ctx_k, yv, sol, config.convention)
        lines.append(f"{theta:.17g},{u.real:.17g},{u.imag:.17g},{abs(u):.17g}")
    (out / "farfield.csv").write_text("\n".join(lines) + "\n")
    return {"n_directions": n_directions,
            "artifacts": {"farfield.csv": _sha256(out / "farfield.csv")}}


def _far_field_evaluator(config: ExperimentConfig, surface, ctx):
    quad = config.build_quad()

    def evaluate(y):
        u = scattering.forward_far_field(surface, ctx, y, config.variant,
                                         quad, convention=config.convention)
        return np.array([u.real, u.imag])

    return evaluate


def run_surrogate(config: ExperimentConfig, out_dir=None, seed=None,
                  threads: int = 1) -> dict:
    """Fit a sparse polynomial surrogate of the far-field map over the
    surface's parameters; emit the model and diagnostic curves."""
    surface = config.build_surface()
    if surface.n_modes == 0:
        raise ValueError("surrogate fitting needs a surface with modes")
    ctx = config.build_wave()
    idx = surrogate.anchored_set(config.surrogate["budget"], surface.n_modes)
    sampling = surrogate.SamplingConfig(
        method=config.surrogate["method"],
        oversampling=config.surrogate["oversampling"],
        seed=config.seed if seed is None else seed,
        threads=threads)
    q = math.inf if config.surrogate["q"] == math.inf else config.surrogate["q"]
    model = surrogate.fit_surrogate(
        _far_field_evaluator(config, surface, ctx), idx, sampling, q=q)
    out = _out_dir(config, out_dir)
    surrogate.save_surrogate(out / "surrogate.json", model)
    artifacts = {"surrogate.json": _sha256(out / "surrogate.json")}

    n_list = []
    n = 1
    while n < len(idx):
        n_list.append(n)
        n *= 2
    curve = surrogate.best_n_term_curve(model, n_list)
    surrogate.write_error_curve_csv(out / "error_curve.csv", curve)
    artifacts["error_curve.csv"] = _sha256(out / "error_curve.csv")
    try:
        rates = surrogate.decay_diagnostics(model)
        surrogate.write_decay_csv(out / "decay.csv", rates)
        artifacts["decay.csv"] = _sha256(out / "decay.csv")
    except ValueError:
        rates = []  # budget too small for a per-dimension fit
    summary = {
        "n_indices": len(idx),
        "n_samples": int(math.ceil(sampling.oversampling * len(idx)))
        if sampling.method == "mc" else None,
        "residual": float(model.residual),
        "cond": float(model.cond),
        "rho": [float(r.rho) for r in rates],
        "artifacts": artifacts,
    }
    _write_json(out / "surrogate_summary.json", summary)
    return summary


def _holocheck_target(config: ExperimentConfig, surface, ctx, target: str):
    quad = config.build_quad()
    if target in ("slp", "dlp"):
        npp = quad.order ** 2
        if len(surface.patches) < 2:
            raise ValueError("kernel-entry targets need at least two patches")
        return operators.entry_map(surface, ctx, quad, target, 0, npp)
    if target == "farfield":
        def far(z):
            return scattering.forward_far_field(
                surface, ctx, z, config.variant, quad,
                convention=config.convention)
        return far
    if target == "posterior":
        if config.bayes_spec is None:
            raise ConfigError("/bayes_spec",
                              "required for the posterior target")
        spec = load_posterior_spec(config)
        cache = bayes.ForwardCache(
            bayes.far_field_forward(surface, spec, quad))

        def density(z):
            return bayes.posterior_density(spec, z, cache)
        return density
    raise ValueError(f"unknown holocheck target {target!r}")


def run_holocheck(config: ExperimentConfig, target: str, out_dir=None,
                  seed=None, threads: int = 1) -> holocheck.HolomorphyReport:
    """Derivative check plus boundedness scan for one target map, merged
    into a single report whose verdict requires both to pass."""
    surface = config.build_surface()
    if surface.n_modes == 0:
        raise ValueError("holomorphy verification needs a surface with modes")
    ctx = config.build_wave()
    hc_cfg = config.holocheck
    root_seed = config.seed if seed is None else seed
    rng = _seeded_rng(root_seed, "holocheck-points")
    if hc_cfg["polyradius_policy"] == "uniform":
        rho = np.full(surface.n_modes, float(hc_cfg["rho"]))
    else:
        eps = geometry.admissible_epsilon(surface, n_samples=500, rng=rng)
        if math.isinf(eps):
            rho = np.full(surface.n_modes, float(hc_cfg["rho"]))
        else:
            rho = geometry.polyradius_from_eps(surface.b_seq, eps)
    f = _holocheck_target(config, surface, ctx, target)
    # contour disks must stay inside the ellipse region around the points
    radius = min(float(hc_cfg["contour_radius"]),
                 0.45 * float(np.min(rho) - 1.0))
    points = [geometry.sample_admissible_point(surface, rho, rng, shrink=0.5)
              for _ in range(hc_cfg["derivative_points"])]
    deriv = holocheck.derivative_report(
        f, points, radius, target_name=target,
        tolerance=float(hc_cfg["tolerance"]))
    scan = holocheck.boundedness_scan(
        f, rho, hc_cfg["scan_samples"],
        seed=root_seed, threads=threads, target_name=target)
    report = holocheck.HolomorphyReport(
        target_name=target,
        region=tuple(float(r) for r in rho),
        max_norm=max(deriv.max_norm, scan.max_norm),
        derivative_residuals=deriv.derivative_residuals,
        verdict=bool(deriv.verdict and scan.verdict),
        tolerance=float(hc_cfg["tolerance"]),
        violations=scan.violations,
        n_samples=scan.n_samples,
    )
    out = _out_dir(config, out_dir)
    holocheck.save_report(out / f"holocheck_{target}.json", report)
    return report


def load_posterior_spec(config: ExperimentConfig) -> bayes.PosteriorSpec:
    with open(config.bayes_spec) as fh:
        raw = json.load(fh)
    for key in ("observations", "covariance", "directions"):
        if key not in raw:
            raise ConfigError(f"/{key}",
                              f"missing in posterior spec {config.bayes_spec}")
    directions = [(d[0], d[1]) for d in raw["directions"]]
    return bayes.PosteriorSpec(
        raw["observations"], raw["covariance"], directions,
        variant=raw.get("variant", config.variant),
        kappa=raw.get("kappa", config.wave["kappa"]),
        eta=raw.get("eta", config.wave["eta"]))


def run_bayes(config: ExperimentConfig, out_dir=None, seed=None,
              threads: int = 1) -> dict:
    """Evidence and posterior-mean surface for the configured posterior."""
    if config.bayes_spec is None:
        raise ConfigError("/bayes_spec", "required for the bayes command")
    surface = config.build_surface()
    spec = load_posterior_spec(config)
    res = bayes.evidence_and_mean(
        spec, surface, config.build_quad(),
        method=config.evidence["method"],
        gauss_order=config.evidence["gauss_order"],
        n_samples=config.evidence["n_samples"],
        seed=config.seed if seed is None else seed,
        threads=threads)
    payload = {
        "Z": float(res.Z),
        "log_Z": float(res.log_Z),
        "mean_qoi_nodes": [float(v) for v in np.asarray(res.mean).ravel()],
        "method": res.method,
        "n_evals": int(res.n_evals),
    }
    out = _out_dir(config, out_dir)
    _write_json(out / "bayes.json", payload)
    return payload


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------
def _param_samples(surface, config, rng):
    if surface.n_modes == 0:
        return [np.zeros(0)]
    rho = np.full(surface.n_modes, float(config.holocheck["rho"]))
    return [geometry.sample_admissible_point(surface, rho, rng, shrink=0.5)
            .values
            for _ in range(config.convergence["n_param_samples"])]


def _study_regularizer(config, surface, ctx, rng):
    prof = operators.defect_norm_profile(
        surface, ctx, _param_samples(surface, config, rng),
        config.build_quad(), ns=config.convergence["cutoff_indices"],
        nu=config.convergence["nu"])
    rows = list(zip(prof["ns"], prof["l2"]))
    slope = prof["slope_l2"]
    target = config.convergence["nu"] - 2.0
    ok = abs(slope - target) <= config.convergence["slope_window"]
    return rows, slope, ok


def _study_quadrature(config, surface, ctx):
    orders = [int(o) for o in config.convergence["orders"]]
    ref_quad = QuadConfig(order=max(orders) + 2,
                          near_factor=config.quadrature["near_factor"])
    y = np.zeros(surface.n_modes)
    u_ref = scattering.forward_far_field(surface, ctx, y, config.variant,
                                         ref_quad,
                                         convention=config.convention)
    rows = []
    for order in orders:
        quad = QuadConfig(order=order,
                          near_factor=config.quadrature["near_factor"])
        u = scattering.forward_far_field(surface, ctx, y, config.variant,
                                         quad, convention=config.convention)
        rows.append((order, abs(u - u_ref) / abs(u_ref)))
    slope = float(np.polyfit(np.log([r[0] for r in rows]),
                             np.log([max(r[1], 1e-300) for r in rows]), 1)[0])
    errs = [r[1] for r in rows]
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    return rows, slope, ok


def _study_surrogate(config, surface, ctx, seed, threads):
    if surface.n_modes == 0:
        raise ValueError("surrogate study needs a surface with modes")
    evaluator = bayes.ForwardCache(_far_field_evaluator(config, surface, ctx))
    budgets = [int(b) for b in config.convergence["budgets"]]
    rng = _seeded_rng(seed, "surrogate-validation")
    n_val = config.convergence["validation_samples"]
    y_val = rng.uniform(-1.0, 1.0, (n_val, surface.n_modes))
    truth = np.array([evaluator(y) for y in y_val])
    scale = np.linalg.norm(truth)
    rows = []
    for k, budget in enumerate(budgets):
        idx = surrogate.anchored_set(budget, surface.n_modes)
        sampling = surrogate.SamplingConfig(
            method="mc", oversampling=config.surrogate["oversampling"],
            seed=seed + k, threads=threads)
        model = surrogate.fit_surrogate(evaluator, idx, sampling,
                                        q=config.surrogate["q"])
        pred = surrogate.evaluate(model, y_val)
        rows.append((budget, float(np.linalg.norm(pred - truth) / scale)))
    slope = float(np.polyfit(np.log([r[0] for r in rows]),
                             np.log([max(r[1], 1e-300) for r in rows]), 1)[0])
    ok = slope <= config.convergence["slope_target"]
    return rows, slope, ok


def run_convergence(config: ExperimentConfig, study: str, out_dir=None,
                    seed=None, threads: int = 1):
    """Run one study and emit its error curve as CSV with a fitted-slope
    footer row.  Returns (csv_path, slope, passed)."""
    surface = config.build_surface()
    ctx = config.build_wave()
    root_seed = config.seed if seed is None else seed
    if study == "regularizer":
        rng = _seeded_rng(root_seed, "regularizer-points")
        rows, slope, ok = _study_regularizer(config, surface, ctx, rng)
    elif study == "quadrature":
        rows, slope, ok = _study_quadrature(config, surface, ctx)
    elif study == "surrogate":
        rows, slope, ok = _study_surrogate(config, surface, ctx, root_seed,
                                           threads)
    else:
        raise ValueError(f"unknown study {study!r}")
    out = _out_dir(config, out_dir)
    path = out / f"convergence_{study}.csv"
    _write_curve_csv(path, rows, slope)
    return path, slope, ok


# ---------------------------------------------------------------------------
# command wiring
# ---------------------------------------------------------------------------
def _common_options(f):
    f = click.option("--threads", default=1, type=int,
                     help="worker threads for batched evaluations")(f)
    f = click.option("--seed", default=None, type=int,
                     help="override the config seed")(f)
    f = click.option("--out", "out_dir", default=None,
                     type=click.Path(), help="override the output directory")(f)
    f = click.option("--config", "config_path", required=True,
                     type=click.Path(exists=True, dir_okay=False))(f)
    return f


def _load(config_path) -> ExperimentConfig:
    return load_config(config_path)


def _fail(err) -> "SystemExit":
    click.echo(f"error: {err}", err=True)
    return SystemExit(1)


@click.group()
def main():
    """Boundary-element scattering experiments on parametrized surfaces."""


@main.command()
@_common_options
@click.option("--y", "y_text", default="", help="comma-separated parameters")
@click.option("--variant", default=None,
              type=click.Choice(["indirect", "direct"]))
@click.option("--method", default="auto",
              type=click.Choice(["auto", "lu", "gmres"]))
def solve(config_path, out_dir, seed, threads, y_text, variant, method):
    """Solve the boundary system at one parameter point."""
    del seed, threads
    try:
        config = _load(config_path)
        if variant is not None:
            config = dataclasses.replace(config, variant=variant)
        y = parse_y(y_text, config.build_surface().n_modes)
        summary = run_pipeline(config, y, out_dir, method=method)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps(summary["solve"], sort_keys=True))


@main.command()
@_common_options
@click.option("--y", "y_text", default="", help="comma-separated parameters")
@click.option("--n-directions", default=16, type=int)
def farfield(config_path, out_dir, seed, threads, y_text, n_directions):
    """Far-field sweep over a great circle of observation directions."""
    del seed, threads
    try:
        config = _load(config_path)
        y = parse_y(y_text, config.build_surface().n_modes)
        summary = run_farfield(config, y, out_dir, n_directions=n_directions)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command("surrogate")
@_common_options
def surrogate_cmd(config_path, out_dir, seed, threads):
    """Fit the sparse far-field surrogate and emit diagnostics."""
    try:
        config = _load(config_path)
        summary = run_surrogate(config, out_dir, seed=seed, threads=threads)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command("holocheck")
@_common_options
@click.option("--target", required=True,
              type=click.Choice(["slp", "dlp", "farfield", "posterior"]))
def holocheck_cmd(config_path, out_dir, seed, threads, target):
    """Verify parametric holomorphy of one target map."""
    try:
        config = _load(config_path)
        report = run_holocheck(config, target, out_dir, seed=seed,
                               threads=threads)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps(holocheck.report_to_dict(report), sort_keys=True))
    if not report.verdict:
        raise SystemExit(2)


@main.command("bayes")
@_common_options
@click.option("--spec", "spec_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="posterior spec JSON (observations, covariance, directions)")
def bayes_cmd(config_path, out_dir, seed, threads, spec_path):
    """Evidence and posterior mean for the configured inverse problem."""
    try:
        config = _load(config_path)
        if spec_path is not None:
            config = dataclasses.replace(config, bayes_spec=spec_path)
        payload = run_bayes(config, out_dir, seed=seed, threads=threads)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps(payload, sort_keys=True))


@main.command()
@_common_options
@click.option("--study", required=True,
              type=click.Choice(["regularizer", "quadrature", "surrogate"]))
def convergence(config_path, out_dir, seed, threads, study):
    """Run a convergence study; exit 2 if the fitted slope misses target."""
    try:
        config = _load(config_path)
        path, slope, ok = run_convergence(config, study, out_dir, seed=seed,
                                          threads=threads)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps({"csv": str(path), "slope": slope,
                           "passed": bool(ok)}, sort_keys=True))
    if not ok:
        raise SystemExit(2)


@main.command("dump-operator")
@_common_options
@click.option("--y", "y_text", default="", help="comma-separated parameters")
@click.option("--kind", default="combined",
              type=click.Choice(["slp", "dlp", "adjoint_dlp", "combined"]))
def dump_operator_cmd(config_path, out_dir, seed, threads, y_text, kind):
    """Assemble one operator and write it in the binary dump format."""
    del seed, threads
    try:
        config = _load(config_path)
        surface = config.build_surface()
        y = parse_y(y_text, surface.n_modes)
        ctx = config.build_wave()
        quad = config.build_quad()
        if kind == "combined":
            op = operators.assemble_combined(surface, ctx, y, quad,
                                             variant=config.variant)
        elif kind == "slp":
            op = operators.assemble_slp(surface, ctx, y, quad)
        elif kind == "dlp":
            op = operators.assemble_dlp(surface, ctx, y, quad)
        else:
            op = operators.assemble_adjoint_dlp(surface, ctx, y, quad)
        out = _out_dir(config, out_dir)
        path = out / f"operator_{kind}.bin"
        operators.dump_operator(path, op)
    except Exception as err:
        raise _fail(err)
    click.echo(json.dumps({"path": str(path), "n": int(op.matrix.shape[0]),
                           "sha256": _sha256(path)}, sort_keys=True))


if __name__ == "__main__":
    main()
