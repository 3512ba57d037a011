import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parabem import surrogate as sg
import oracles

small_indices = st.lists(
    st.lists(st.integers(0, 3), max_size=3).map(tuple),
    min_size=1, max_size=8,
)


# ---------------------------------------------------------------------------
# multi-indices and index sets
# ---------------------------------------------------------------------------
def test_trim_canonical_form():
    assert sg.trim((1, 0, 2, 0, 0)) == (1, 0, 2)
    assert sg.trim(()) == ()
    assert sg.trim((0, 0)) == ()
    with pytest.raises(ValueError):
        sg.trim((1, -1))


@given(small_indices)
def test_closure_predicates_match_bruteforce(indices):
    assert sg.is_downward_closed(indices) == \
        oracles.downward_closed_bruteforce(indices)
    assert sg.is_anchored(indices) == oracles.anchored_bruteforce(indices)


@given(small_indices)
def test_from_indices_flags_are_honest(indices):
    ms = sg.MultiIndexSet.from_indices(indices)
    assert ms.downward_closed == oracles.downward_closed_bruteforce(ms.indices)
    assert ms.anchored == oracles.anchored_bruteforce(ms.indices)


def test_index_set_rejects_wrong_flags():
    with pytest.raises(ValueError):
        sg.MultiIndexSet(indices=((), (1,)), downward_closed=False,
                         anchored=False)
    with pytest.raises(ValueError):
        sg.MultiIndexSet(indices=((0,),), downward_closed=True, anchored=True)


def test_anchored_set_pins():
    assert sg.anchored_set(1, 4).indices == ((),)
    assert set(sg.anchored_set(2, 2).indices) == {(), (1,), (0, 1)}
    for n, s in [(4, 2), (6, 3), (9, 4)]:
        built = sg.anchored_set(n, s)
        assert built.anchored
        assert set(built.indices) == oracles.anchored_budget_set_bruteforce(n, s)


def test_anchored_set_respects_dim_cap():
    assert sg.anchored_set(32, 2).active_dims <= 2
    # budget 2 caps the support at dimension 2 even with a roomy cap
    assert sg.anchored_set(2, 5).active_dims <= 2
    with pytest.raises(ValueError):
        sg.anchored_set(0, 3)
    with pytest.raises(ValueError):
        sg.anchored_set(4, 0)


# ---------------------------------------------------------------------------
# basis evaluation
# ---------------------------------------------------------------------------
def test_legendre_eval_pins():
    assert sg.legendre_eval(0, 2, 0.3) == pytest.approx(1.0)
    assert sg.legendre_eval(0, math.inf, -0.7) == pytest.approx(1.0)
    assert sg.legendre_eval(1, math.inf, 1.0) == pytest.approx(1.0)
    assert sg.legendre_eval(1, 2, 1.0) == pytest.approx(math.sqrt(3.0))


def test_legendre_eval_errors():
    with pytest.raises(ValueError):
        sg.legendre_eval(1, 2, 1.5)
    with pytest.raises(ValueError):
        sg.legendre_eval(1, 3, 0.5)
    with pytest.raises(ValueError):
        sg.legendre_eval(-1, 2, 0.5)


@pytest.mark.parametrize("n,m", [(0, 0), (1, 1), (3, 3), (2, 5), (0, 4)])
def test_legendre_orthonormal_in_probability_measure(n, m):
    from scipy.integrate import quad
    val, _ = quad(lambda x: sg.legendre_eval(n, 2, x)
                  * sg.legendre_eval(m, 2, x) * 0.5, -1, 1,
                  epsabs=1e-13, epsrel=1e-13)
    assert val == pytest.approx(1.0 if n == m else 0.0, abs=1e-12)


def test_gauss_grid_probability_weights():
    ys, w = sg.gauss_grid([3])
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    ys2, w2 = sg.gauss_grid([2, 3])
    got = np.sum(w2 * ys2[:, 0] ** 2 * ys2[:, 1] ** 2)
    assert got == pytest.approx(1.0 / 9.0, abs=1e-14)


def test_basis_gram_identity_under_exact_gauss():
    lam = sg.anchored_set(8, 3)
    ys, w = sg.gauss_grid(list(lam.degrees() + 1))
    A = sg._design_matrix(lam.indices, ys, 2)
    gram = (A * w[:, None]).T @ A
    assert np.abs(gram - np.eye(len(lam))).max() < 1e-12


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------
def _planted(y):
    return sg.legendre_eval(2, 2, y[0]) * sg.legendre_eval(1, 2, y[1])


def test_fit_reproduces_planted_basis_gauss():
    lam = sg.anchored_set(6, 2)
    model = sg.fit_surrogate(_planted, lam, sg.SamplingConfig(method="gauss"))
    i0 = list(lam.indices).index((2, 1))
    assert abs(model.coeffs[i0] - 1.0) < 1e-10
    assert np.abs(np.delete(model.coeffs, i0)).max() < 1e-10
    assert model.residual < 1e-12


def test_fit_reproduces_planted_basis_mc():
    lam = sg.anchored_set(6, 2)
    model = sg.fit_surrogate(_planted, lam,
                             sg.SamplingConfig(method="mc", seed=11))
    i0 = list(lam.indices).index((2, 1))
    assert abs(model.coeffs[i0] - 1.0) < 1e-2
    assert np.abs(np.delete(model.coeffs, i0)).max() < 1e-2


def test_fit_constant():
    lam = sg.anchored_set(4, 2)
    model = sg.fit_surrogate(lambda y: 5.0, lam,
                             sg.SamplingConfig(method="gauss"))
    i0 = list(lam.indices).index(())
    assert abs(model.coeffs[i0] - 5.0) < 1e-12
    assert np.abs(np.delete(model.coeffs, i0)).max() < 1e-12


def test_fit_requires_downward_closed():
    bad = sg.MultiIndexSet.from_indices([(2,)])
    assert not bad.downward_closed
    with pytest.raises(ValueError):
        sg.fit_surrogate(lambda y: 1.0, bad)


def test_fit_reports_rank_deficiency_with_conditioning():
    chain = sg.MultiIndexSet.from_indices([(k,) for k in range(61)])
    cfg = sg.SamplingConfig(method="mc", oversampling=1.0, seed=3)
    with pytest.raises(sg.RankDeficientFitError) as err:
        sg.fit_surrogate(lambda y: 1.0, chain, cfg)
    assert err.value.cond > 1e12


def test_fit_threads_deterministic():
    ts = [1.5, 3.0]
    f = lambda y: 1.0 / ((ts[0] - y[0]) * (ts[1] - y[1]))
    lam = sg.anchored_set(8, 2)
    a = sg.fit_surrogate(f, lam, sg.SamplingConfig(method="mc", seed=7,
                                                   threads=1))
    b = sg.fit_surrogate(f, lam, sg.SamplingConfig(method="mc", seed=7,
                                                   threads=4))
    assert np.array_equal(a.coeffs, b.coeffs)


def test_evaluate_matches_planted_function():
    lam = sg.anchored_set(6, 2)
    model = sg.fit_surrogate(_planted, lam, sg.SamplingConfig(method="gauss"))
    rng = np.random.default_rng(5)
    ys = rng.uniform(-1, 1, (20, 2))
    got = sg.evaluate(model, ys)
    want = np.array([_planted(y) for y in ys])
    assert np.abs(got - want).max() < 1e-10
    single = sg.evaluate(model, ys[0])
    assert abs(single - want[0]) < 1e-10


def test_restrict_subsets_coefficients():
    lam = sg.anchored_set(6, 2)
    model = sg.fit_surrogate(_planted, lam, sg.SamplingConfig(method="gauss"))
    sub = sg.restrict(model, sg.anchored_set(2, 2))
    assert len(sub.coeffs) == 3
    with pytest.raises(ValueError):
        sg.restrict(sub, lam)


def test_vector_valued_fit_and_magnitudes():
    lam = sg.anchored_set(3, 2)

    def f(y):
        return np.array([sg.legendre_eval(1, 2, y[0]),
                         2.0 * sg.legendre_eval(1, 2, y[1])])

    w = np.array([4.0, 0.25])
    model = sg.fit_surrogate(f, lam, sg.SamplingConfig(method="gauss"),
                             value_weights=w)
    mags = sg.coefficient_magnitudes(model)
    idx = {nu: i for i, nu in enumerate(lam.indices)}
    # |c| per index is the weighted l2 norm across the two value slots
    assert mags[idx[(1,)]] == pytest.approx(2.0, abs=1e-10)
    assert mags[idx[(0, 1)]] == pytest.approx(1.0, abs=1e-10)
    assert mags[idx[()]] == pytest.approx(0.0, abs=1e-10)


# ---------------------------------------------------------------------------
# best n-term curves
# ---------------------------------------------------------------------------
def _geometric_model(ratio=0.5, length=10):
    idx = sg.MultiIndexSet.from_indices([(k,) for k in range(length)])
    coeffs = np.array([ratio ** k for k in range(length)], dtype=complex)
    return sg.SurrogateModel(idx, coeffs, 2, 1)


def test_best_n_term_pins():
    model = _geometric_model()
    total = math.sqrt(sum(0.25 ** k for k in range(10)))
    curve = dict(sg.best_n_term_curve(model, [0, 3, 10]))
    assert curve[0] == pytest.approx(total, rel=1e-14)
    assert curve[3] == pytest.approx(oracles.geometric_tail_l2(0.5, 3, 10),
                                     rel=1e-14)
    assert curve[10] == 0.0
    with pytest.raises(ValueError):
        sg.best_n_term_curve(model, [11])


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
@settings(max_examples=50)
def test_best_n_term_tails_decrease(vals):
    idx = sg.MultiIndexSet.from_indices([(k,) for k in range(len(vals))])
    model = sg.SurrogateModel(idx, np.array(vals, dtype=complex), 2, 1)
    curve = sg.best_n_term_curve(model, list(range(len(vals) + 1)))
    tails = [t for _, t in curve]
    assert all(a >= b - 1e-12 for a, b in zip(tails, tails[1:]))
    assert tails[-1] == 0.0


def test_best_n_term_closure_flag():
    idx = sg.MultiIndexSet.from_indices([(), (1,), (2,)])
    coeffs = np.array([1.0, 0.01, 0.5], dtype=complex)
    model = sg.SurrogateModel(idx, coeffs, 2, 1)
    free = dict(sg.best_n_term_curve(model, [2]))[2]
    closed = dict(sg.best_n_term_curve(model, [2], enforce_closure=True))[2]
    # unconstrained keeps {(), (2,)}; the closed pick must take (1,) first
    assert free == pytest.approx(0.01, rel=1e-12)
    assert closed == pytest.approx(0.5, rel=1e-12)


# ---------------------------------------------------------------------------
# decay diagnostics
# ---------------------------------------------------------------------------
def test_decay_exact_geometric_is_perfect_line():
    model = _geometric_model(ratio=1.0 / 3.0, length=8)
    rate = sg.decay_diagnostics(model)[0]
    assert rate.r2 == pytest.approx(1.0, abs=1e-12)
    assert rate.slope == pytest.approx(math.log(1.0 / 3.0), rel=1e-12)
    assert rate.rho == pytest.approx(3.0, rel=1e-12)


def test_decay_requires_three_chain_points():
    model = _geometric_model(length=3)  # chain entries k = 1, 2 only
    with pytest.raises(ValueError):
        sg.decay_diagnostics(model)


def test_decay_floor_cuts_noise_tail():
    mags = [1.0] + [0.5 ** k for k in range(1, 6)] + [1e-16] * 4
    idx = sg.MultiIndexSet.from_indices([(k,) for k in range(10)])
    model = sg.SurrogateModel(idx, np.array(mags, dtype=complex), 2, 1)
    rate = sg.decay_diagnostics(model)[0]
    assert rate.n_points == 5
    assert rate.rho == pytest.approx(2.0, rel=1e-6)


def test_pole_radius_recovered_within_ten_percent():
    chain = sg.MultiIndexSet.from_indices([(k,) for k in range(13)])
    model = sg.fit_surrogate(lambda y: 1.0 / (2.0 - y[0]), chain,
                             sg.SamplingConfig(method="gauss"))
    # cross-check the fitted coefficients against direct 1-d quadrature
    for k in (0, 1, 4, 8):
        assert abs(model.coeffs[k] - oracles.legendre_pole_coefficient(k)) \
            < 1e-6
    rate = sg.decay_diagnostics(model)[0]
    assert abs(rate.rho - oracles.RHO_POLE_AT_2) / oracles.RHO_POLE_AT_2 < 0.1
    assert rate.r2 > 0.95


@pytest.fixture(scope="module")
def aniso_model():
    ts = [1.5, 3.0, 5.5]

    def f(y):
        return float(np.prod([1.0 / (t - yy) for t, yy in zip(ts, y)]))

    lam = sg.anchored_set(32, 3)
    return sg.fit_surrogate(f, lam, sg.SamplingConfig(method="gauss")), f


def test_decay_radii_track_anisotropy(aniso_model):
    model, _ = aniso_model
    rates = sg.decay_diagnostics(model)
    rhos = [r.rho for r in rates]
    assert all(a < b for a, b in zip(rhos, rhos[1:]))
    assert all(r.r2 > 0.95 for r in rates)
    # truth: rho_j = t_j + sqrt(t_j^2 - 1) for the pole at t_j
    for r, t in zip(rates, [1.5, 3.0, 5.5]):
        assert abs(r.rho - (t + math.sqrt(t * t - 1))) / r.rho < 0.1


def test_validation_error_decreases_with_budget(aniso_model):
    model, f = aniso_model
    rng = np.random.default_rng(99)
    ys = rng.uniform(-1, 1, (400, 3))
    truth = np.array([f(y) for y in ys])
    errs = []
    for n in (2, 4, 8, 16, 32):
        sub = sg.restrict(model, sg.anchored_set(n, 3))
        pred = sg.evaluate(sub, ys)
        errs.append(float(np.sqrt(np.mean(np.abs(pred - truth) ** 2))))
    assert all(b <= 1.1 * a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0] / 100.0


def test_best_n_term_slope_is_steep(aniso_model):
    model, _ = aniso_model
    curve = sg.best_n_term_curve(model, [2, 4, 8, 16, 32])
    xs = np.log([n + 1.0 for n, _ in curve])
    ys = np.log([t for _, t in curve])
    slope = np.polyfit(xs, ys, 1)[0]
    assert slope <= -0.9


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def test_save_load_roundtrip(tmp_path):
    lam = sg.anchored_set(4, 2)
    coeffs = (np.arange(len(lam)) + 1j * np.arange(len(lam))).astype(complex)
    model = sg.SurrogateModel(lam, coeffs, 2, 2)
    path = tmp_path / "model.json"
    sg.save_surrogate(path, model)
    back = sg.load_surrogate(path)
    assert back.index_set.indices == lam.indices
    assert np.array_equal(back.coeffs, coeffs)
    assert back.normalization == 2
    assert back.truncation_dim == 2

    model_inf = sg.SurrogateModel(lam, coeffs.real.astype(complex), math.inf, 2)
    sg.save_surrogate(path, model_inf)
    assert sg.load_surrogate(path).normalization == math.inf


def test_save_is_deterministic(tmp_path):
    lam = sg.anchored_set(3, 2)
    model = sg.SurrogateModel(lam, np.ones(len(lam), dtype=complex), 2, 2)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    sg.save_surrogate(a, model)
    sg.save_surrogate(b, model)
    assert a.read_bytes() == b.read_bytes()


def test_csv_emitters(tmp_path):
    curve_path = tmp_path / "curve.csv"
    sg.write_error_curve_csv(curve_path, [(2, 0.125), (4, 0.03125)])
    lines = curve_path.read_text().strip().splitlines()
    assert lines[0] == "n,error"
    assert lines[1].startswith("2,") and float(lines[1].split(",")[1]) == 0.125

    rates = [sg.DecayRate(dim=1, slope=-0.5, rho=math.exp(0.5), r2=0.99,
                          n_points=6)]
    decay_path = tmp_path / "decay.csv"
    sg.write_decay_csv(decay_path, rates)
    lines = decay_path.read_text().strip().splitlines()
    assert lines[0] == "dim,slope,rho,r2,n_points"
    assert lines[1].split(",")[0] == "1"
