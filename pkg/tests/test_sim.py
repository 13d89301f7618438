import numpy as np
import pytest
import scipy.linalg

from coopnet.closedloop import assemble, epsilon_star
from coopnet.errors import (
    EmptyWindow,
    NonFiniteState,
    StepTooLarge,
    ValidationError,
)
from coopnet.scenarios import (
    demo_power_network,
    random_network,
    realize,
    with_zero_sum,
)
from coopnet.sim import (
    error_metrics,
    initial_state,
    integrate,
    rk4_propagator,
    steady_state_prediction,
    suggest_dt,
)

W = 100.0 * np.pi


class _Plain:
    """Minimal stand-in closed loop for pure integrator tests."""

    def __init__(self, a):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        n = a.shape[0]
        self.A_full = a
        self.regime = "tracking"
        self.p = 1
        self.node_ids = (1,)
        self.y_map = np.zeros((1, n))
        self.v_map = np.zeros((1, n))
        self.ref_map = np.zeros((1, n))
        self.err_map = np.zeros((1, n))
        self.n_states = n
        self.index_map = ()


def test_integrate_scalar_exponential():
    res = integrate(_Plain([[-1.0]]), [1.0], t_end=1.0, dt=1e-3)
    assert abs(res.states[0, -1] - np.exp(-1.0)) <= 1e-9


def test_integrate_rotation_returns_after_one_period():
    cl = _Plain([[0.0, -W], [W, 0.0]])
    res = integrate(cl, [1.0, 0.0], t_end=0.02, dt=1e-6)
    assert np.abs(res.states[:, -1] - [1.0, 0.0]).max() <= 1e-6


def test_integrate_observed_order_at_least_3_5():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4)) - 3.0 * np.eye(4)
    x0 = rng.standard_normal(4)
    exact = scipy.linalg.expm(a * 0.8) @ x0
    errs = []
    for dt in (0.02, 0.01):
        res = integrate(_Plain(a), x0, t_end=0.8, dt=dt, store_every=1)
        errs.append(np.linalg.norm(res.states[:, -1] - exact))
    order = np.log2(errs[0] / errs[1])
    assert order >= 3.5


def test_integrate_rejects_unstable_step():
    with pytest.raises(StepTooLarge):
        integrate(_Plain([[-100.0]]), [1.0], t_end=1.0, dt=0.05)


def test_integrate_reports_non_finite_state():
    with pytest.raises(NonFiniteState) as exc:
        integrate(_Plain([[-1.0]]), [np.nan], t_end=1.0, dt=1e-2)
    assert exc.value.step >= 1


def test_integrate_requires_matching_grid():
    with pytest.raises(ValidationError):
        integrate(_Plain([[-1.0]]), [1.0], t_end=1.0, dt=1e-3,
                  store_every=7)


def test_rk4_propagator_is_degree_four_taylor():
    a = np.array([[0.0, 1.0], [-2.0, -0.5]])
    dt = 0.1
    expect = np.eye(2)
    term = np.eye(2)
    for k in range(1, 5):
        term = term @ (a * dt) / k
        expect = expect + term
    assert np.allclose(rk4_propagator(a, dt), expect, atol=1e-15)


def test_suggest_dt_resolves_fastest_mode():
    cl = _Plain(np.diag([-1.0, -1000.0]))
    assert suggest_dt(cl) == pytest.approx(1e-4, rel=1e-6)


# ---------------------------------------------------------------------------
# closed-loop trajectories


def test_neighboring_input_reproduced_from_states():
    scn = demo_power_network()
    rz = realize(scn)
    x0 = initial_state(rz.cl, nu0=scn.nu0, eta0=scn.eta0)
    res = integrate(rz.cl, x0, t_end=0.01, dt=1e-6)
    h = rz.network.topology.H
    z_slices = {e.entity: (e.offset, e.length)
                for e in rz.cl.index_map if e.kind == "edge_state"}
    for i, node_id in enumerate(rz.cl.node_ids):
        v_direct = np.zeros_like(res.v[node_id])
        for j, edge in enumerate(rz.network.edges):
            off, length = z_slices[j + 1]
            zj = res.states[off:off + length]
            v_direct += -h[i, j] * (edge.C @ zj)
        assert np.abs(v_direct - res.v[node_id]).max() <= 1e-12 * max(
            1.0, np.abs(v_direct).max())


def test_edge_flows_cancel_over_nodes():
    scn = demo_power_network()
    rz = realize(scn)
    x0 = initial_state(rz.cl, nu0=scn.nu0, eta0=scn.eta0)
    res = integrate(rz.cl, x0, t_end=0.01, dt=1e-6)
    total = sum(res.v[i] for i in res.v)
    scale = max(np.abs(res.v[1]).max(), 1.0)
    assert np.abs(total).max() <= 1e-12 * scale


def test_zero_sum_commands_conserved():
    scn = with_zero_sum(random_network(seed=21, regime="cooperation"))
    rz = realize(scn, eps=0.2)
    x0 = initial_state(rz.cl, nu0=scn.nu0)
    res = integrate(rz.cl, x0, t_end=20.0, dt=1e-2)
    nu_slices = [(e.offset, e.length) for e in rz.cl.index_map
                 if e.kind == "exo_state"]
    total = sum(res.states[o:o + n] for o, n in nu_slices)
    assert np.abs(total).max() <= 1e-10


def test_tracking_errors_decay_exponentially():
    scn = random_network(seed=2, regime="tracking")
    rz = realize(scn)
    from coopnet.analysis import spectral_abscissa

    alpha = spectral_abscissa(rz.cl.A_error)
    assert alpha < 0
    horizon = 20.0 / abs(alpha)
    x0 = initial_state(rz.cl, eta0=scn.eta0)
    res = integrate(rz.cl, x0, t_end=float(np.ceil(horizon)), dt=1e-2)
    err_norm = np.linalg.norm(
        np.vstack([res.errors[i] for i in res.errors]), axis=0)
    n3 = err_norm.size // 3
    assert err_norm[-1] <= 1e-6
    assert err_norm[-1] < err_norm[n3] < err_norm[1]


# ---------------------------------------------------------------------------
# predictions


def test_sync_prediction_zero_average():
    scn = random_network(seed=12, regime="sync")
    rz = realize(scn)
    t = np.linspace(0.0, 1.0, 11)
    eta0 = {1: [1.0, 0.0], 2: [0.0, 1.0], 3: [-1.0, -1.0]}
    pred = steady_state_prediction(rz.cset, t, eta0=eta0)
    for i in pred.per_node:
        assert np.abs(pred.per_node[i]).max() <= 1e-14


def test_cooperation_bias_two_equal_commands():
    scn = random_network(seed=21, n_nodes=2, m_edges=1,
                         regime="cooperation")
    rz = realize(scn, eps=0.2)
    t = np.array([0.0])
    c = np.array([0.3, -0.7])
    pred = steady_state_prediction(rz.cset, t, nu0={1: c, 2: c})
    expect = rz.cset.exo.Q_v @ (-c)
    assert np.allclose(pred.bias[:, 0], expect, atol=1e-12)


def test_demo_command_references_are_the_stated_sinusoids():
    scn = demo_power_network()
    rz = realize(scn)
    t = np.linspace(0.0, 0.04, 2001)
    pred = steady_state_prediction(rz.cset, t, nu0=scn.nu0,
                                   eta0=scn.eta0)
    assert pred.per_node[1][0, 0] == pytest.approx(5.0, abs=1e-9)
    assert pred.per_node[2][0, 0] == pytest.approx(10.0, abs=1e-9)
    assert np.abs(pred.per_node[1][0] -
                  10.0 * np.sin(W * t + np.pi / 6)).max() <= 1e-6
    assert np.abs(pred.per_node[2][0] -
                  10.0 * np.cos(W * t)).max() <= 1e-6
    # the ground master holds zero output
    assert np.abs(pred.per_node[3]).max() == 0.0


# ---------------------------------------------------------------------------
# metrics


def _result_with_error(t, err):
    from coopnet.sim import SimResult

    err = np.atleast_2d(err)
    zero = {1: err}
    return SimResult(t=t, states=np.zeros((1, t.size)), y=zero, v=zero,
                     refs=zero, errors={1: err}, regime="tracking",
                     dt=float(t[1] - t[0]), store_every=1)


def test_metrics_zero_error():
    t = np.linspace(0.0, 1.0, 101)
    res = _result_with_error(t, np.zeros((1, 101)))
    m = error_metrics(res, window=0.2)
    assert m[1].max_error == 0.0 and m[1].rms_error == 0.0
    assert not m[1].decayed


def test_metrics_exponential_decay():
    t = np.linspace(0.0, 5.0, 5001)
    res = _result_with_error(t, np.exp(-t)[None, :])
    m = error_metrics(res, window=1.0)
    assert m[1].max_error == pytest.approx(np.exp(-4.0), rel=1e-3)
    assert m[1].decayed


def test_metrics_rejects_bad_window():
    t = np.linspace(0.0, 1.0, 11)
    res = _result_with_error(t, np.zeros((1, 11)))
    with pytest.raises(EmptyWindow):
        error_metrics(res, window=2.0)
    with pytest.raises(EmptyWindow):
        error_metrics(res, window=0.0)


def test_sync_prediction_agreement_improves_with_horizon():
    scn = random_network(seed=31, n_nodes=3, m_edges=3, regime="sync")
    rz = realize(scn)
    est = epsilon_star(rz.network, rz.cset, rz.maps, eps_hi=10.0)
    cl = assemble("sync", rz.network, rz.cset, rz.maps,
                  eps=est.eps_bisect / 2.0)
    from coopnet.analysis import spectral_abscissa

    alpha = spectral_abscissa(cl.A_error)
    devs = []
    for factor in (4.0, 8.0):
        t_end = float(np.ceil(factor / abs(alpha)))
        n = int(round(t_end / 1e-2))
        x0 = initial_state(cl, eta0=scn.eta0)
        res = integrate(cl, x0, t_end=n * 1e-2, dt=1e-2)
        pred = steady_state_prediction(rz.cset, res.t, eta0=scn.eta0)
        devs.append(max(
            np.linalg.norm(res.y[i][:, -1] - pred.per_node[i][:, -1])
            for i in res.y))
    assert devs[1] < devs[0]


def test_tracking_error_decay_rate_is_negative():
    scn = random_network(seed=2, regime="tracking")
    rz = realize(scn)
    x0 = initial_state(rz.cl, eta0=scn.eta0)
    res = integrate(rz.cl, x0, t_end=30.0, dt=1e-2)
    err = np.linalg.norm(
        np.vstack([res.errors[i] for i in res.errors]), axis=0)
    mask = err > 1e-13  # fit only above the floating-point floor
    rate = np.polyfit(res.t[mask], np.log(err[mask]), 1)[0]
    assert rate < 0
