import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from parabem import geometry as geo
from parabem import kernels as ker


CTX = ker.WaveContext(kappa=2.0, eta=1.0)
CTX0 = ker.WaveContext(kappa=1e-30, eta=1.0)  # Laplace limit for pinned values


real_vec = hnp.arrays(
    float, 3, elements=st.floats(min_value=-5, max_value=5, allow_nan=False)
).filter(lambda v: np.linalg.norm(v) > 1e-3)


# ---------------------------------------------------------------------------
# complex_norm
# ---------------------------------------------------------------------------
def test_complex_norm_real_unit_vector():
    assert ker.complex_norm(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_complex_norm_three_four_five():
    assert ker.complex_norm(np.array([3.0, 4.0, 0.0])) == pytest.approx(5.0)


def test_complex_norm_rejects_imaginary_axis():
    with pytest.raises(ker.UDomainError):
        ker.complex_norm(np.array([1j, 0.0, 0.0]))


@settings(max_examples=100, deadline=None)
@given(real_vec)
def test_complex_norm_matches_euclid_on_reals(v):
    assert ker.complex_norm(v) == pytest.approx(np.linalg.norm(v), rel=1e-12)


def test_complex_norm_reports_offending_index():
    stack = np.array([[1.0, 0, 0], [1j, 0, 0]])
    with pytest.raises(ker.UDomainError) as ei:
        ker.complex_norm(stack)
    assert ei.value.index == 1


# ---------------------------------------------------------------------------
# slp_kernel
# ---------------------------------------------------------------------------
def test_slp_laplace_unit_distance():
    v = np.array([0.0, 1.0, 0.0])
    assert ker.slp_kernel(CTX0, v) == pytest.approx(1.0 / (4 * np.pi))


def test_slp_unit_distance_kappa_two():
    v = np.array([1.0, 0.0, 0.0])
    assert ker.slp_kernel(CTX, v) == pytest.approx(np.exp(2j) / (4 * np.pi))


@settings(max_examples=60, deadline=None)
@given(real_vec, st.floats(min_value=-0.2, max_value=0.2),
       st.floats(min_value=-0.2, max_value=0.2),
       st.floats(min_value=-0.2, max_value=0.2))
def test_slp_modulus_bound_on_complexified_differences(v, a, b, c):
    w = v + 1j * np.array([a, b, c]) * max(np.linalg.norm(v), 1.0) * 0.3
    if np.sum(w * w).real <= 1e-9:
        return
    r = ker.complex_norm(w)
    bound = np.exp(CTX.kappa * np.abs(r)) / (4 * np.pi * np.abs(r))
    assert np.abs(ker.slp_kernel(CTX, w)) <= bound * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(real_vec)
def test_slp_even_in_v(v):
    assert ker.slp_kernel(CTX, v) == pytest.approx(ker.slp_kernel(CTX, -v), rel=1e-13)


def test_slp_singularity_order_first():
    # |slp| * r stays bounded as r -> 0
    for r in [1e-1, 1e-3, 1e-6]:
        v = np.array([r, 0.0, 0.0])
        assert abs(ker.slp_kernel(CTX, v)) * r == pytest.approx(1 / (4 * np.pi), rel=1e-6)


# ---------------------------------------------------------------------------
# dlp_kernel / adjoint_dlp_kernel
# ---------------------------------------------------------------------------
def test_dlp_vanishes_for_orthogonal_normal():
    n = np.array([0.0, 0.0, 1.0])
    v = np.array([0.7, -0.3, 0.0])
    assert ker.dlp_kernel(CTX, n, v) == pytest.approx(0.0, abs=1e-16)


def test_dlp_laplace_parallel_unit():
    n = np.array([1.0, 0.0, 0.0])
    v = np.array([1.0, 0.0, 0.0])
    assert ker.dlp_kernel(CTX0, n, v) == pytest.approx(-1.0 / (4 * np.pi))


def test_adjoint_dlp_laplace_parallel_unit():
    n = np.array([0.0, 1.0, 0.0])
    v = np.array([0.0, 1.0, 0.0])
    assert ker.adjoint_dlp_kernel(CTX0, n, v) == pytest.approx(-1.0 / (4 * np.pi))


def test_adjoint_dlp_is_sign_flipped_dlp():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        v = rng.normal(size=3)
        a = ker.adjoint_dlp_kernel(CTX, n, v)
        b = ker.dlp_kernel(CTX, n, -v)
        assert a == pytest.approx(-b, rel=1e-13)


def test_adjoint_dlp_matches_fd_normal_derivative_of_green():
    # d/dn_x of exp(i kappa |x-y|)/(4 pi |x-y|) by central differences
    rng = np.random.default_rng(9)
    h = 1e-6
    for _ in range(10):
        x = rng.normal(size=3)
        y = rng.normal(size=3)
        if np.linalg.norm(x - y) < 0.5:
            continue
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)

        def green(pt):
            r = np.linalg.norm(pt - y)
            return np.exp(1j * CTX.kappa * r) / (4 * np.pi * r)

        fd = (green(x + h * n) - green(x - h * n)) / (2 * h)
        val = ker.adjoint_dlp_kernel(CTX, n, x - y)
        assert val == pytest.approx(fd, rel=1e-8)


def test_dlp_bounded_against_quadratic_normal_gap():
    # on a C^{1,1} surface n.(x-y) = O(|x-y|^2); emulate on the unit sphere
    rng = np.random.default_rng(13)
    for _ in range(20):
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        b = rng.normal(size=3)
        b /= np.linalg.norm(b)
        v = a - b  # source-to-target chord, normal at a is a itself
        r = np.linalg.norm(v)
        if r < 1e-3:
            continue
        val = ker.dlp_kernel(CTX, a, v)
        assert abs(val) * r < 1.0  # first-order singularity at worst


# ---------------------------------------------------------------------------
# incident_trace
# ---------------------------------------------------------------------------
@pytest.fixture(scope="module")
def sphere():
    return geo.ParametricSurface(patches=geo.cube_sphere_patches())


def test_incident_trace_unit_modulus(sphere):
    ctx = ker.WaveContext(kappa=1.3, eta=1.0, d_inc=np.array([0.0, 0.0, 1.0]))
    rng = np.random.default_rng(2)
    for _ in range(10):
        pid = int(rng.integers(0, 6))
        u = rng.uniform(-1, 1, size=2)
        d, _ = ker.incident_trace(ctx, sphere, [], pid, u)
        assert abs(d) == pytest.approx(1.0, abs=1e-13)


def test_incident_trace_neumann_ratio(sphere):
    ctx = ker.WaveContext(kappa=0.7, eta=1.0, d_inc=np.array([0.0, 1.0, 0.0]))
    u = np.array([0.3, -0.5])
    d, nm = ker.incident_trace(ctx, sphere, [], 2, u)
    n = geo.normal(sphere, [], 2, u)
    assert nm / d == pytest.approx(1j * ctx.kappa * np.dot(n, ctx.d_inc), rel=1e-12)


def test_incident_trace_equator_point(sphere):
    # r.d_inc = 0 on the equator when d_inc = e_z: dirichlet trace is 1
    ctx = ker.WaveContext(kappa=2.2, eta=1.0, d_inc=np.array([0.0, 0.0, 1.0]))
    d, _ = ker.incident_trace(ctx, sphere, [], 0, np.array([0.4, 0.0]))
    assert d == pytest.approx(1.0, abs=1e-12)


def test_wave_context_validation():
    with pytest.raises(ValueError):
        ker.WaveContext(kappa=-1.0, eta=1.0)
    with pytest.raises(ValueError):
        ker.WaveContext(kappa=1.0, eta=0.0)
    with pytest.raises(ValueError):
        ker.WaveContext(kappa=1.0, eta=1.0, d_inc=np.array([0.0, 0.0, 2.0]))
