import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sstats

from uwbnlos import ekf
from uwbnlos.channel import NlosStats, PowerModel, simulate_epoch
from uwbnlos.geometry import C_M_PER_NS, Anchor, Floorplan, Point2
from uwbnlos.mitigation import TdoaVector, mitigate_epoch

dts = st.floats(1e-3, 2.0)


def _anchors(*xy):
    return {i + 1: Anchor(i + 1, Point2(*p)) for i, p in enumerate(xy)}


def fd_jacobian(position, model, h=1e-5):
    p = np.asarray(position, dtype=float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        cols.append(
            (ekf.measurement_function(p + e, model) - ekf.measurement_function(p - e, model)) / (2 * h)
        )
    return np.column_stack(cols)


def random_spd(rng, n=4):
    a = rng.normal(size=(n, n))
    return a @ a.T + 0.1 * np.eye(n)


def test_make_f_definition():
    x = ekf.make_f(1.0) @ np.array([0.0, 0.0, 1.0, 2.0])
    np.testing.assert_array_equal(x, [1.0, 2.0, 1.0, 2.0])
    np.testing.assert_allclose(ekf.make_f(1e-12), np.eye(4), atol=1e-11)
    with pytest.raises(ValueError):
        ekf.make_f(0.0)


@given(dts)
def test_make_f_semigroup(dt):
    np.testing.assert_allclose(ekf.make_f(dt) @ ekf.make_f(dt), ekf.make_f(2 * dt), atol=1e-12)


def test_make_q_values():
    np.testing.assert_array_equal(ekf.make_q(0.3, 0.0), np.zeros((4, 4)))
    q = ekf.make_q(1.0, 1.0)
    # dt**4/4, dt**3/2, dt**2 with dt = 1
    assert q[0, 0] == q[1, 1] == 0.25
    assert q[2, 2] == q[3, 3] == 1.0
    assert q[0, 2] == q[2, 0] == q[1, 3] == q[3, 1] == 0.5
    assert q[0, 1] == q[0, 3] == q[2, 3] == 0.0


@given(dts, st.floats(0, 5))
def test_make_q_psd(dt, sa):
    q = ekf.make_q(dt, sa)
    np.testing.assert_array_equal(q, q.T)
    assert np.linalg.eigvalsh(q).min() >= -1e-12 * max(1.0, q.max())


def test_make_q_matches_white_acceleration_gain():
    # Q = G G^T sigma_a^2 with G = [dt^2/2, dt]^T per axis
    dt, sa = 0.37, 1.3
    g = np.array([[dt**2 / 2, 0], [0, dt**2 / 2], [dt, 0], [0, dt]])
    np.testing.assert_allclose(ekf.make_q(dt, sa), sa**2 * g @ g.T, atol=1e-15)


def test_init_state(site):
    s = ekf.init_state(site.floorplan)
    np.testing.assert_array_equal(s.x, [5.0, 3.0, 0.0, 0.0])
    assert np.all(np.diag(s.P) > 0)
    np.testing.assert_array_equal(s.P, np.diag(np.diag(s.P)))
    assert s.P[0, 0] == pytest.approx((0.5 * np.hypot(10, 6)) ** 2)
    t = ekf.init_state(site.floorplan)
    np.testing.assert_array_equal(s.x, t.x)
    np.testing.assert_array_equal(s.P, t.P)


def test_predict_static_no_process_noise(site):
    m = ekf.EkfModel(site.anchors, sigma_a=0.0, dt=0.5)
    s = ekf.EkfState(np.array([1.0, 2.0, 0.0, 0.0]), random_spd(np.random.default_rng(0)))
    out = ekf.predict(s, m)
    np.testing.assert_array_equal(out.x, s.x)
    F = ekf.make_f(0.5)
    np.testing.assert_allclose(out.P, F @ s.P @ F.T, atol=1e-12)
    again = ekf.predict(s, m)
    np.testing.assert_array_equal(out.P, again.P)


def test_predict_trace_grows_for_nonnegative_cross_terms(site):
    # trace(F P F^T) = trace(P) + 2 dt (P_xvx + P_yvy) + dt^2 (P_vxvx + P_vyvy),
    # which can only shrink when position and velocity are anti-correlated.
    rng = np.random.default_rng(1)
    m = ekf.EkfModel(site.anchors, sigma_a=0.5)
    checked = 0
    for _ in range(500):
        P = random_spd(rng)
        if P[0, 2] < 0 or P[1, 3] < 0:
            continue
        s = ekf.EkfState(np.zeros(4), P)
        assert np.trace(ekf.predict(s, m).P) > np.trace(P)
        checked += 1
    assert checked > 50


def test_measurement_function_examples():
    m = ekf.EkfModel(_anchors((0, 0), (4, 0), (0, 4)))
    # equidistant from anchor 2 and the reference
    assert ekf.measurement_function([2.0, 1.0], m)[0] == pytest.approx(0.0, abs=1e-15)
    # at the reference, anchor 2 is 4 m away
    assert ekf.measurement_function([0.0, 0.0], m)[0] == pytest.approx(4 / C_M_PER_NS)


def test_measurement_function_brute_force(site, model):
    rng = np.random.default_rng(4)
    for _ in range(50):
        p = rng.uniform((0, 0), (10, 6))
        ref = site.anchors[model.reference_anchor_id].position
        d_ref = np.hypot(p[0] - ref.x, p[1] - ref.y)
        expected = [
            (np.hypot(p[0] - site.anchors[a].position.x, p[1] - site.anchors[a].position.y) - d_ref)
            / 0.299792458
            for a in sorted(site.anchors)
            if a != model.reference_anchor_id
        ]
        np.testing.assert_allclose(ekf.measurement_function(p, model), expected, rtol=1e-13, atol=1e-12)


def test_jacobian_velocity_columns_zero(model):
    H = ekf.jacobian([3.0, 2.0, 5.0, -1.0], model)
    assert H.shape == (5, 4)
    np.testing.assert_array_equal(H[:, 2:], 0.0)


def test_jacobian_matches_finite_differences(site, model):
    rng = np.random.default_rng(11)
    n = 0
    while n < 100:
        p = rng.uniform((0, 0), (10, 6))
        if min(np.hypot(*(p - [a.position.x, a.position.y])) for a in site.anchors.values()) < 0.5:
            continue
        H = ekf.jacobian(p, model)[:, :2]
        fd = fd_jacobian(p, model)
        assert np.abs(H - fd).max() / np.abs(H).max() <= 1e-6
        n += 1


def test_jacobian_symmetric_layout():
    m = ekf.EkfModel(_anchors((-3, 0), (3, 0), (0, 5)))
    H = ekf.jacobian([0.0, 2.0], m)
    assert H[0, 0] != 0.0
    assert H[0, 1] == pytest.approx(0.0, abs=1e-15)
    m2 = ekf.EkfModel(_anchors((0, 5), (-3, 0), (3, 0)), reference_anchor_id=2)
    H2 = ekf.jacobian([0.0, 2.0], m2)
    # anchors 1 (on the axis) and 3 (mirror of the reference)
    assert H2[1, 1] == pytest.approx(0.0, abs=1e-15)


def test_jacobian_singularity(model, site):
    a = site.anchors[3].position
    with pytest.raises(ekf.SingularGeometryError):
        ekf.jacobian([a.x, a.y], model)


def _z_from(x, model, R):
    return TdoaVector(model.reference_anchor_id, model.anchor_ids(), ekf.measurement_function(x, model), R)


def test_update_zero_innovation(site, model):
    s = ekf.init_state(site.floorplan)
    z = _z_from(s.x, model, 0.08 * np.eye(5) + 0.04)
    out = ekf.update(s, z, model)
    np.testing.assert_allclose(out.x, s.x, atol=1e-12)
    assert np.trace(out.P) < np.trace(s.P)


def test_update_no_information_limit(model):
    s = ekf.EkfState(np.array([5.0, 3.0, 0.0, 0.0]), np.eye(4))
    z = _z_from([5.5, 3.5], model, 1e6 * (0.08 * np.eye(5) + 0.04))
    out = ekf.update(s, z, model)
    assert np.linalg.norm(out.x[:2] - s.x[:2]) < 1e-3


def test_update_matches_symbolic_kalman_algebra():
    # reference at the origin, anchor 2 ahead on the x axis, anchor 3 behind:
    # the tag at (3, 0) sees anchor 3 along the same bearing as the reference.
    m = ekf.EkfModel(_anchors((0, 0), (10, 0), (-10, 0)))
    x0 = np.array([3.0, 0.0, 0.5, -0.25])
    P0 = np.diag([4.0, 2.0, 1.0, 0.5])
    P0[0, 2] = P0[2, 0] = 0.3
    R = np.array([[0.5, 0.2], [0.2, 0.7]])
    zval = np.array([-4.0 / C_M_PER_NS + 0.3, 0.1])
    out = ekf.update(ekf.EkfState(x0, P0), TdoaVector(1, (2, 3), zval, R), m)

    c = sp.Rational(299792458, 10**9)
    H = sp.Matrix([[-2 / c, 0, 0, 0], [0, 0, 0, 0]])
    Ps = sp.Matrix(4, 4, lambda i, j: sp.nsimplify(P0[i, j]))
    Rs = sp.Matrix(2, 2, lambda i, j: sp.nsimplify(R[i, j]))
    # (|x - a2| - |x - a1|) / c and (|x - a3| - |x - a1|) / c
    h = sp.Matrix([(7 - 3) / c, (13 - 3) / c])
    nu = sp.Matrix([sp.nsimplify(v) for v in zval]) - h
    S = H * Ps * H.T + Rs
    K = Ps * H.T * S.inv()
    x1 = sp.Matrix([sp.nsimplify(v) for v in x0]) + K * nu
    P1 = (sp.eye(4) - K * H) * Ps
    np.testing.assert_allclose(out.x, np.array(x1, dtype=float).ravel(), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(out.P, np.array(P1, dtype=float), rtol=1e-12, atol=1e-12)


def test_update_singular_innovation_raises(site, model):
    s = ekf.EkfState(np.array([5.0, 3.0, 0.0, 0.0]), np.zeros((4, 4)))
    z = _z_from([5.0, 3.0], model, np.zeros((5, 5)))
    with pytest.raises(ekf.InnovationSingularError):
        ekf.update(s, z, model)


def test_update_rejects_short_vector(site, model):
    s = ekf.init_state(site.floorplan)
    z = TdoaVector(1, (2,), np.zeros(1), np.eye(1))
    with pytest.raises(ValueError):
        ekf.update(s, z, model)


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(5)))
def test_update_invariant_to_entry_order(site, model, perm):
    rng = np.random.default_rng(2)
    s = ekf.init_state(site.floorplan)
    meas, _ = simulate_epoch(Point2(2.0, 1.2), site.anchors, site.floorplan, NlosStats(), PowerModel(), rng)
    z = mitigate_epoch(meas, NlosStats())
    a = ekf.update(s, z, model)
    b = ekf.update(s, z.permuted(perm), model)
    np.testing.assert_allclose(a.x, b.x, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a.P, b.P, rtol=1e-10, atol=1e-12)


def test_joseph_form_agrees_with_standard(site, model):
    from dataclasses import replace

    rng = np.random.default_rng(3)
    s = ekf.init_state(site.floorplan)
    meas, _ = simulate_epoch(Point2(6.0, 2.4), site.anchors, site.floorplan, NlosStats(), PowerModel(), rng)
    z = mitigate_epoch(meas, NlosStats())
    a = ekf.update(s, z, model)
    b = ekf.update(s, z, replace(model, joseph=True))
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
    np.testing.assert_allclose(a.P, b.P, rtol=1e-6, atol=1e-9)


def test_covariance_stays_psd_over_long_run(site, model):
    rng = np.random.default_rng(17)
    tag = Point2(8.4, 2.5)
    s = ekf.init_state(site.floorplan)
    stats = NlosStats()
    for _ in range(10_000):
        meas, _ = simulate_epoch(tag, site.anchors, site.floorplan, stats, PowerModel(), rng)
        s = ekf.step(s, mitigate_epoch(meas, stats), model)
        assert np.array_equal(s.P, s.P.T)
    assert s.is_valid()
    assert np.linalg.norm(s.position - [tag.x, tag.y]) < 1.0


def test_model_validation(site):
    with pytest.raises(ValueError):
        ekf.EkfModel(site.anchors, dt=0.0)
    with pytest.raises(ValueError):
        ekf.EkfModel(site.anchors, sigma_a=-1.0)
    with pytest.raises(ValueError):
        ekf.EkfModel(site.anchors, reference_anchor_id=42)
    with pytest.raises(ValueError):
        ekf.EkfModel(_anchors((0, 0), (1, 0)))


def test_nees_consistency_static_los(site):
    """Averaged NEES after burn-in sits inside the two-sided 95% envelope.

    Process noise is off so the filter model matches the static truth, and
    each run starts from a prior drawn consistently around the truth. From
    the wide centre-of-floorplan prior the first, badly linearized updates
    leave the filter overconfident for good when there is no process noise.
    """
    runs, epochs, burn_in = 200, 150, 50
    plan = Floorplan((), site.floorplan.bounds)
    m = ekf.EkfModel(site.anchors, sigma_a=0.0)
    stats = NlosStats()
    nees = np.zeros((runs, epochs))
    for r in range(runs):
        rng = np.random.default_rng(1000 + r)
        tag = Point2(*rng.uniform((1, 1), (9, 5)))
        truth = np.array([tag.x, tag.y, 0.0, 0.0])
        P0 = np.diag([0.3**2, 0.3**2, 0.1**2, 0.1**2])
        s = ekf.EkfState(truth + rng.multivariate_normal(np.zeros(4), P0), P0)
        classes = None
        for k in range(epochs):
            meas, classes = simulate_epoch(tag, site.anchors, plan, stats, PowerModel(), rng, classes)
            s = ekf.step(s, mitigate_epoch(meas, stats), m)
            e = s.x - truth
            nees[r, k] = e @ np.linalg.solve(s.P, e)
    avg = nees[:, burn_in:].mean(axis=0)
    lo = sstats.chi2.ppf(0.025, 4 * runs) / runs
    hi = sstats.chi2.ppf(0.975, 4 * runs) / runs
    inside = np.mean((avg >= lo) & (avg <= hi))
    assert inside >= 0.9, (avg.min(), avg.max(), lo, hi)
    assert lo <= avg.mean() <= hi
