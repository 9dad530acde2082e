import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bbgky_qem.metrics import (
    FitResult,
    MetricError,
    MetricReport,
    Trajectory,
    assemble_observable,
    fit_quadratic,
    l_norm,
    p_metric,
    select_rows,
)
from bbgky_qem.pauli import PauliString

T = 3.0
t11 = np.linspace(0, T, 11)


def traj(values, errors=None):
    return Trajectory.on_grid(values, T, errors)


def test_assemble_examples():
    zero = assemble_observable(np.zeros((2, 11)), [0.5, -0.5], T)
    assert np.all(zero.values == 0) and np.all(zero.errors == 0)
    one = assemble_observable(np.ones((1, 11)), [1 / 16], T, np.full((1, 11), 0.1))
    assert one.values[3] == pytest.approx(1 / 16) and one.errors[3] == pytest.approx(0.1 / 16)
    c = np.array([1, -1] * 8) / 16
    many = assemble_observable(np.ones((16, 11)), c, T, np.full((16, 11), 0.2))
    assert np.allclose(many.errors, 0.2 / 4)
    with pytest.raises(MetricError):
        assemble_observable(np.ones((3, 11)), c, T)


def test_select_rows():
    strings = [PauliString.parse(s) for s in ("X1", "Y2", "Z3")]
    data = np.arange(9).reshape(3, 3)
    assert np.array_equal(select_rows(strings, data, strings[::-1]), data[::-1])
    with pytest.raises(MetricError):
        select_rows(strings, data, [PauliString.parse("X4")])


def test_l_norm_examples():
    a = traj(np.sin(t11))
    assert l_norm(a, a)[0] == 0.0
    b = traj(np.sin(t11) + 0.1)
    assert l_norm(a, b)[0] == pytest.approx(np.sqrt(3.3) * 0.1)
    assert l_norm(a, b)[0] == pytest.approx(0.18166, abs=1e-5)
    with pytest.raises(MetricError):
        l_norm(a, Trajectory.on_grid(np.zeros(6), T))


def test_l_norm_error_propagation():
    a = traj(np.zeros(11), np.full(11, 0.01))
    b = traj(np.full(11, 0.2))
    val, err = l_norm(a, b)
    # constant offset: dL/dd_s = dt d / L on every point
    dt = 0.3
    expected = dt * np.sqrt(11 * 0.2**2 * 0.01**2) / val
    assert err == pytest.approx(expected)


vec = arrays(np.float64, 11, elements=st.floats(-2, 2))


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec)
def test_l_norm_is_a_metric(x, y, z):
    a, b, c = traj(x), traj(y), traj(z)
    ab = l_norm(a, b)[0]
    assert ab == pytest.approx(l_norm(b, a)[0])
    assert ab >= 0
    assert l_norm(a, c)[0] <= ab + l_norm(b, c)[0] + 1e-12


def test_downsample():
    fine = Trajectory.on_grid(np.arange(101.0), T)
    coarse = fine.downsample(10)
    assert len(coarse) == 11 and np.allclose(coarse.times, t11) and coarse.values[-1] == 100


@pytest.mark.parametrize("weighted", [True, False])
def test_fit_exact_representations(weighted):
    fit = fit_quadratic(traj(2 * t11 - t11**2, np.full(11, 0.05)), 1.2, weighted)
    assert np.allclose(fit.p, [2, -1], atol=1e-12)
    fit = fit_quadratic(traj(-0.3 * t11**2), 1.2, weighted)
    assert np.allclose(fit.p, [0, -0.3], atol=1e-12)
    assert fit.points == 5


def test_fit_window_and_errors():
    with pytest.raises(MetricError):
        fit_quadratic(traj(t11), 0.5)
    y = 0.1 * t11 - 0.05 * t11**2
    noisy = y + np.where(t11 > 1.3, 50.0, 0.0)  # outside the window
    assert np.allclose(fit_quadratic(traj(noisy), 1.2).p, [0.1, -0.05])


def test_fit_covariance_matches_weighted_normal_equations():
    rng = np.random.default_rng(0)
    e = rng.uniform(0.01, 0.05, 11)
    fit = fit_quadratic(traj(rng.normal(size=11), e), 1.2)
    keep = t11 <= 1.2 + 1e-12
    A = np.column_stack([t11[keep], t11[keep] ** 2])
    assert np.allclose(fit.covariance, np.linalg.inv(A.T @ (A / e[keep, None] ** 2)))
    assert fit.weighted
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= 0)


def test_fit_zero_error_start_is_pinned():
    e = np.full(11, 0.02)
    e[0] = 0.0
    fit = fit_quadratic(traj(0.4 * t11, e), 1.2)
    assert fit.weighted and np.isfinite(fit.covariance).all()


def test_fit_to_dict_is_plain():
    import json

    d = fit_quadratic(traj(t11**2)).to_dict()
    assert json.loads(json.dumps(d))["weighted"] is False


def test_p_metric_examples():
    ref = FitResult(np.array([0.02, -0.01]), np.zeros((2, 2)))
    assert p_metric(ref, ref)[0] == 0.0
    assert p_metric(FitResult(2 * ref.p, np.zeros((2, 2))), ref)[0] == pytest.approx(1.0)
    assert p_metric(FitResult(np.zeros(2), np.zeros((2, 2))), ref)[0] == pytest.approx(1.0)
    with pytest.raises(MetricError):
        p_metric(ref, FitResult(np.zeros(2), np.zeros((2, 2))))


@settings(max_examples=100, deadline=None)
@given(
    st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
    st.tuples(st.floats(0.1, 1), st.floats(0.1, 1)),
    st.floats(0.1, 10) | st.floats(-10, -0.1),
)
def test_p_metric_scale_covariant(p, q, k):
    cov = np.diag([0.01, 0.02])
    a, b = FitResult(np.array(p), cov), FitResult(np.array(q), cov)
    ka, kb = FitResult(k * np.array(p), k * k * cov), FitResult(k * np.array(q), k * k * cov)
    v, e = p_metric(a, b)
    kv, ke = p_metric(ka, kb)
    assert kv == pytest.approx(v, rel=1e-9, abs=1e-12)
    assert ke == pytest.approx(e, rel=1e-9, abs=1e-12)


def test_p_metric_error_by_finite_differences():
    pa, pb = np.array([0.3, -0.2]), np.array([0.1, -0.4])
    ca, cb = np.array([[1e-4, 2e-5], [2e-5, 3e-4]]), np.diag([2e-4, 1e-4])
    val, err = p_metric(FitResult(pa, ca), FitResult(pb, cb))

    def f(v):
        return np.linalg.norm(v[:2] - v[2:]) / np.linalg.norm(v[2:])

    v0 = np.concatenate([pa, pb])
    g = np.array([(f(v0 + h) - f(v0 - h)) / 2e-7 for h in np.eye(4) * 1e-7])
    cov = np.zeros((4, 4))
    cov[:2, :2], cov[2:, 2:] = ca, cb
    assert val == pytest.approx(f(v0))
    assert err == pytest.approx(np.sqrt(g @ cov @ g), rel=1e-5)


def test_trajectory_validation_and_csv():
    with pytest.raises(MetricError):
        Trajectory(np.zeros(3), np.zeros(2), np.zeros(3))
    with pytest.raises(MetricError):
        Trajectory(np.zeros(3), -np.ones(3), np.arange(3.0))
    text = traj(t11, np.full(11, 0.5)).to_csv()
    assert text.splitlines()[0] == "t,value,error" and len(text.splitlines()) == 12


def test_report_serialisation():
    rep = MetricReport()
    rep.add(m=0.5, mu5=0.2, r=1, seed=3, L=0.25)
    rep.add(m=0.5, mu5=0.2, r=2, seed=3, L=0.125)
    assert rep.to_csv().splitlines()[1] == "0.5,0.2,1,3,0.25"
    assert '"r": 2' in rep.to_json()
