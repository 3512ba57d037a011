import math

import numpy as np
import pytest

from parabem import geometry as geo, holocheck as hc, operators as ops
from parabem.kernels import UDomainError, WaveContext


def test_cauchy_polynomial_pin():
    d = hc.cauchy_derivative(lambda z: z[0] ** 2, [1.0], 0, 0.1)
    assert abs(d - 2.0) < 1e-10


def test_cauchy_exponential_second_derivative():
    d = hc.cauchy_derivative(lambda z: np.exp(z[0]), [0.0], 0, 0.3, m=2)
    assert abs(d - 1.0) < 1e-10


def test_cauchy_vector_valued():
    f = lambda z: np.array([z[0] ** 2, np.exp(z[0])])
    z0 = 0.4 + 0.1j
    d = hc.cauchy_derivative(f, [z0], 0, 0.1)
    assert np.abs(d - np.array([2 * z0, np.exp(z0)])).max() < 1e-10


def test_cauchy_region_checks():
    zp = geo.ComplexParamPoint([0.0], [1.05])
    with pytest.raises(geo.AdmissibilityError):
        hc.cauchy_derivative(lambda z: z[0], zp, 0, 0.2)
    # inside the region the same call goes through
    assert abs(hc.cauchy_derivative(lambda z: z[0], zp, 0, 0.04) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        hc.cauchy_derivative(lambda z: z[0], [0.0], 0, -0.1)


def test_radius_independence_analytic_map():
    split = hc.radius_independence(lambda z: np.exp(z[0]), [0.3 + 0.2j], 0, 0.1)
    assert split < hc.RADIUS_SPLIT_RTOL


def test_negative_control_fails_radius_independence():
    split = hc.radius_independence(hc.abs_square_control, [0.8 + 0.1j], 0, 0.1)
    assert split > 1e-3


def test_negative_control_slips_past_order_one_alone():
    # the order-1 contour coefficient of |z|^2 is conj(z) at every radius,
    # so the check must include the circle mean to catch this target
    split = hc.radius_independence(hc.abs_square_control, [0.8 + 0.1j], 0, 0.1,
                                   orders=(1,))
    assert split < 1e-12


# ---------------------------------------------------------------------------
# derivative residuals on geometry and operator entries
# ---------------------------------------------------------------------------
@pytest.fixture(scope="module")
def bumpy():
    # wide supports: every parameter influences every surface point, so
    # no probe below sees an identically-zero derivative
    modes = [
        geo.NormalBumpMode(center=(0, 0, 1.0), width=2.5, amplitude=0.08),
        geo.NormalBumpMode(center=(1.0, 0, 0), width=2.5, amplitude=0.05),
    ]
    return geo.ParametricSurface(patches=geo.cube_sphere_patches(), modes=modes)


COMPLEX_POINTS = [
    np.array([0.30 + 0.05j, -0.20 + 0.02j]),
    np.array([-0.50 - 0.03j, 0.40 - 0.04j]),
    np.array([0.10 + 0.02j, 0.70 + 0.05j]),
]


def test_gramian_closure_passes_derivative_check(bumpy):
    u = np.array([[0.23, -0.41]])

    def f(z):
        return geo.gramian(bumpy, z, 0, u).det[0]

    for z in COMPLEX_POINTS:
        for j in (0, 1):
            assert hc.derivative_residual(f, z, j, 0.05) < 1e-6


def test_normal_closure_passes_derivative_check(bumpy):
    u = np.array([[0.37, 0.11]])

    def f(z):
        return geo.normal(bumpy, z, 4, u)[0] @ np.array([0.2, 0.3, 0.9])

    for z in COMPLEX_POINTS:
        assert hc.derivative_residual(f, z, 0, 0.05) < 1e-6
        assert hc.derivative_residual(f, z, 1, 0.05) < 1e-6


def test_operator_entry_closures_pass_derivative_check(bumpy):
    cfg = ops.QuadConfig(order=3)
    ctx = WaveContext(kappa=1.0, eta=1.0)
    disc = ops.discretize(bumpy, np.zeros(2), cfg)
    i = 4
    j = disc.patch_slices[1].start + 4
    for kind in ("slp", "dlp"):
        f = ops.entry_map(bumpy, ctx, cfg, kind, i, j)
        for z in COMPLEX_POINTS[:2]:
            assert hc.derivative_residual(f, z, 0, 0.05) < 1e-6
            assert hc.derivative_residual(f, z, 1, 0.05) < 1e-6


# ---------------------------------------------------------------------------
# real-part extension
# ---------------------------------------------------------------------------
def test_real_part_extension_hand_pin():
    assert hc.real_part_extension(lambda z: 1j * z[0], [1j]) == 0.0


def test_real_part_extension_equals_re_on_real_points():
    f = lambda z: (2 + 3j) * z[0] ** 2 + 1j * z[0] - 0.7j
    rng = np.random.default_rng(17)
    for y in rng.uniform(-1, 1, 40):
        got = hc.real_part_extension(f, [y])
        want = f(np.array([complex(y)])).real
        assert abs(got - want) < 1e-15
        assert abs(got.imag) < 1e-15


def test_real_part_extension_derivative_identity():
    f = lambda z: (2 + 3j) * z[0] ** 2 + 1j * z[0]
    ext = lambda z: hc.real_part_extension(f, z)
    for z0 in (0.3 + 0.2j, -0.5 + 0.1j, 0.05 - 0.3j):
        lhs = hc.cauchy_derivative(ext, [z0], 0, 0.1)
        df = lambda z: hc.cauchy_derivative(f, z, 0, 0.05)
        rhs = 0.5 * (df(np.array([z0])) + np.conj(df(np.array([np.conj(z0)]))))
        assert abs(lhs - rhs) < 1e-10
        # for this f the extension is the polynomial 2 z^2
        assert abs(lhs - 4 * z0) < 1e-10


# ---------------------------------------------------------------------------
# boundedness scans
# ---------------------------------------------------------------------------
def test_scan_constant_map():
    rep = hc.boundedness_scan(lambda z: 3.0 - 4.0j, [1.2, 1.2], 50, seed=2)
    assert rep.max_norm == pytest.approx(5.0, abs=1e-14)
    assert rep.verdict and rep.violations == 0
    assert rep.n_samples == 50


def test_scan_monotone_in_region():
    f = lambda z: np.exp(np.sum(z))
    norms = [hc.boundedness_scan(f, [rho, rho], 200, seed=5).max_norm
             for rho in (1.05, 1.2, 1.5)]
    assert norms[0] <= norms[1] <= norms[2]


def test_scan_reaches_the_region_boundary():
    rho = 1.4
    rep = hc.boundedness_scan(lambda z: abs(z[0]), [rho], 400, seed=9)
    semi_major = (rho + 1.0 / rho) / 2.0
    assert rep.max_norm <= semi_major + 1e-12
    assert rep.max_norm > semi_major - 0.01


def test_scan_counts_domain_violations():
    def guarded(z):
        if abs(z[0].imag) > 0.12:
            raise UDomainError("left the kernel domain", index=0)
        return z[0]

    big = hc.boundedness_scan(guarded, [1.5], 100, seed=1)
    small = hc.boundedness_scan(guarded, [1.01], 100, seed=1)
    assert big.violations > 0 and not big.verdict
    assert small.violations == 0 and small.verdict


def test_scan_threads_deterministic():
    f = lambda z: np.exp(z[0]) * np.cos(z[1])
    a = hc.boundedness_scan(f, [1.3, 1.2], 120, seed=4, threads=1)
    b = hc.boundedness_scan(f, [1.3, 1.2], 120, seed=4, threads=4)
    assert a.max_norm == b.max_norm
    assert a.violations == b.violations


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
def test_report_rejects_negative_residuals():
    with pytest.raises(ValueError):
        hc.HolomorphyReport("t", (1.1,), 1.0, (-0.5,), True)


def test_report_json_roundtrip(tmp_path):
    rep = hc.HolomorphyReport("slp-entry", (1.1, 1.2), 2.5, (1e-9, 3e-8),
                              True, violations=0, n_samples=10)
    path = tmp_path / "rep.json"
    hc.save_report(path, rep)
    import json
    back = json.loads(path.read_text())
    assert back["target_name"] == "slp-entry"
    assert back["derivative_residuals"] == [1e-9, 3e-8]
    assert back["verdict"] is True
    hc.save_report(tmp_path / "rep2.json", rep)
    assert path.read_bytes() == (tmp_path / "rep2.json").read_bytes()


def test_derivative_report_analytic_passes():
    f = lambda z: z[0] ** 2 + 3.0 * z[1]
    pts = [geo.ComplexParamPoint(z, [1.3, 1.3]) for z in COMPLEX_POINTS]
    rep = hc.derivative_report(f, pts, 0.05, target_name="poly")
    assert rep.verdict
    assert rep.region == (1.3, 1.3)
    assert max(rep.derivative_residuals) < 1e-8
    assert rep.n_samples == 3


def test_derivative_report_flags_the_control():
    pts = [geo.ComplexParamPoint([0.5 + 0.3j], [1.5])]
    rep = hc.derivative_report(hc.abs_square_control, pts, 0.05,
                               target_name="control")
    assert not rep.verdict
    assert rep.derivative_residuals[0] > 0.1


def test_derivative_report_needs_points():
    with pytest.raises(ValueError):
        hc.derivative_report(lambda z: z[0], [], 0.1)
