"""Fixed-step integration of the assembled closed loop, steady-state
predictions of the regulation theory, and error metrics.

The closed loop is autonomous and linear, so one classical fourth-order
step equals multiplication by the degree-4 Taylor polynomial of the matrix
exponential; the propagator is built once and powered between stored
samples, which keeps long stiff runs cheap and bit-deterministic.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    EmptyWindow,
    NonFiniteState,
    StepTooLarge,
    ValidationError,
)

#: allowed excess of the one-step propagator's spectral radius over 1
PROPAGATOR_RADIUS_TOL = 1e-6


@dataclass(frozen=True)
class SimResult:
    """Stored trajectories of one closed-loop run.

    ``states`` is n_total x T on the uniform stored grid ``t``; ``y``,
    ``v``, ``refs`` and ``errors`` are per-node p x T arrays keyed by
    1-based node id.  ``errors`` are in each node's native regulated
    coordinates (output error for tracking/sync/master nodes, neighboring
    input error for cooperation/slave nodes).
    """

    t: np.ndarray
    states: np.ndarray
    y: dict
    v: dict
    refs: dict
    errors: dict
    regime: str
    dt: float
    store_every: int

    @property
    def t_end(self):
        return float(self.t[-1])


def rk4_propagator(a, dt):
    """One-step matrix of classical RK4 on ``xdot = A x``: the degree-4
    Taylor polynomial of ``expm(dt A)``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    r = np.eye(n)
    term = np.eye(n)
    for k in range(1, 5):
        term = term @ (dt * a) / k
        r = r + term
    return r


def suggest_dt(cl):
    """Step suggestion resolving the fastest closed-loop mode ten-fold."""
    lam = np.linalg.eigvals(cl.A_full)
    fast = float(np.abs(lam).max(initial=0.0))
    return 0.1 / max(1.0, fast)


def _pick_store_every(n_steps, store_every, max_stored=200_000):
    if store_every is not None:
        s = int(store_every)
        if s < 1 or n_steps % s:
            raise ValidationError(
                "store_every", f"must divide the {n_steps} steps")
        return s
    target = max(1, int(np.ceil(n_steps / max_stored)))
    for s in range(min(target, n_steps), 0, -1):
        if n_steps % s == 0:
            return s
    return 1


def integrate(cl, x0, t_end, dt, store_every=None):
    """Integrate the closed loop with the classical fourth-order fixed step.

    Samples are stored every ``store_every`` steps (chosen automatically to
    cap storage when omitted; must divide the step count).

    Raises
    ------
    StepTooLarge
        If the one-step propagator has spectral radius above 1 + 1e-6
        (the fixed step is unstable for this system).
    NonFiniteState
        On overflow, reporting the first bad step.
    """
    if dt <= 0 or t_end <= 0:
        raise ValidationError("dt/t_end", "must be positive")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != cl.n_states:
        raise DimensionMismatch(
            f"x0 has {x0.size} entries, closed loop has {cl.n_states}")
    n_steps = int(round(t_end / dt))
    if n_steps < 1 or abs(n_steps * dt - t_end) > 1e-9 * t_end:
        raise ValidationError("t_end", "must be an integer number of steps")
    r = rk4_propagator(cl.A_full, dt)
    radius = float(np.abs(np.linalg.eigvals(r)).max(initial=0.0))
    if radius > 1.0 + PROPAGATOR_RADIUS_TOL:
        raise StepTooLarge(
            f"propagator spectral radius {radius:.6f} > 1: reduce dt "
            f"(suggestion: {suggest_dt(cl):.3e})")
    s = _pick_store_every(n_steps, store_every)
    r_s = np.linalg.matrix_power(r, s)
    n_stored = n_steps // s
    states = np.empty((cl.n_states, n_stored + 1))
    states[:, 0] = x0
    x = x0.copy()
    for k in range(n_stored):
        x = r_s @ x
        if not np.all(np.isfinite(x)):
            raise NonFiniteState((k + 1) * s)
        states[:, k + 1] = x
    t = np.arange(n_stored + 1) * (dt * s)
    p = cl.p
    y_all = cl.y_map @ states
    v_all = cl.v_map @ states
    ref_all = cl.ref_map @ states
    err_all = cl.err_map @ states
    y, v, refs, errors = {}, {}, {}, {}
    for k, node_id in enumerate(cl.node_ids):
        rows = slice(k * p, (k + 1) * p)
        y[node_id] = y_all[rows]
        v[node_id] = v_all[rows]
        refs[node_id] = ref_all[rows]
        errors[node_id] = err_all[rows]
    return SimResult(t=t, states=states, y=y, v=v, refs=refs, errors=errors,
                     regime=cl.regime, dt=float(dt), store_every=s)


def initial_state(cl, nu0=None, eta0=None, etabar0=None, node0=None,
                  controller0=None, edge0=None):
    """Build the simulation-form initial state from per-entity values.

    ``nu0``/``eta0``/``etabar0`` map 1-based node ids to reference or
    command initial vectors; unspecified blocks start at zero.  Which block
    each dict targets depends on the regime: ``eta0`` fills the per-node
    output-reference generator (autonomous for tracking/master nodes,
    coupling-driven for sync), ``nu0`` the neighboring-input commands, and
    ``etabar0`` the cooperation reference generators.
    """
    x0 = np.zeros(cl.n_states)
    lookup = {(e.kind, e.entity): e for e in cl.index_map}

    def fill(kind, entity, value, name):
        entry = lookup.get((kind, entity))
        if entry is None:
            raise ValidationError(
                f"{name}[{entity}]", f"no {kind} block for this node")
        value = np.asarray(value, dtype=float).ravel()
        if value.size != entry.length:
            raise DimensionMismatch(
                f"{name}[{entity}] has {value.size} entries, block has "
                f"{entry.length}")
        x0[entry.offset:entry.offset + entry.length] = value

    eta_kind = "reference_state" if cl.regime == "sync" else "exo_state"
    for i, val in (eta0 or {}).items():
        fill(eta_kind, i, val, "eta0")
    for i, val in (nu0 or {}).items():
        fill("exo_state", i, val, "nu0")
    for i, val in (etabar0 or {}).items():
        fill("reference_state", i, val, "etabar0")
    for i, val in (node0 or {}).items():
        fill("node_state", i, val, "node0")
    for i, val in (controller0 or {}).items():
        fill("controller_state", i, val, "controller0")
    for j, val in (edge0 or {}).items():
        fill("edge_state", j, val, "edge0")
    return x0


# ---------------------------------------------------------------------------
# steady-state predictions


def _exp_on_grid(s, t):
    """e^{S t_k} for a uniform grid, by powering one exact step."""
    t = np.asarray(t, dtype=float)
    if t.size > 1:
        steps = np.diff(t)
        if np.abs(steps - steps[0]).max() > 1e-9 * max(steps[0], 1e-300):
            raise ValidationError("t", "prediction grid must be uniform")
        phi_step = scipy.linalg.expm(s * steps[0])
    else:
        phi_step = np.eye(s.shape[0])
    phis = np.empty((t.size, s.shape[0], s.shape[1]))
    phis[0] = scipy.linalg.expm(s * t[0]) if t[0] != 0.0 else np.eye(
        s.shape[0])
    for k in range(1, t.size):
        phis[k] = phi_step @ phis[k - 1]
    return phis


@dataclass(frozen=True)
class SteadyStatePrediction:
    """Closed-form limits of the regulation theorems on the stored grid.

    ``per_node`` holds the predicted regulated signal per node (output for
    tracking/sync/master nodes, neighboring input for cooperation/slave);
    ``bias`` the common cooperation residual when the command sum is
    nonzero; ``output_sum`` the predicted sum of node outputs.
    """

    t: np.ndarray
    per_node: dict
    bias: np.ndarray
    output_sum: np.ndarray


def steady_state_prediction(cset, t, nu0=None, eta0=None, etabar0=None):
    """Evaluate the predicted steady trajectories for the set's regime.

    tracking/master nodes: y_i -> Q_eta e^{S t} eta_i(0).
    sync: all outputs -> Q_eta e^{S t} (mean of eta_i(0)).
    cooperation/slave nodes: v_i -> Q_v e^{S t} nu_i(0); with a nonzero
    command sum the common residual is Q_v e^{S t} nu_0(0) with
    nu_0(0) = -(sum nu_i(0))/N; the output sum follows the cooperation
    reference generator from the sum of etabar_i(0).
    """
    exo = cset.exo
    nu0 = {i: np.asarray(v, dtype=float).ravel()
           for i, v in (nu0 or {}).items()}
    eta0 = {i: np.asarray(v, dtype=float).ravel()
            for i, v in (eta0 or {}).items()}
    etabar0 = {i: np.asarray(v, dtype=float).ravel()
               for i, v in (etabar0 or {}).items()}
    n_nodes = len(cset.controllers)
    phis = _exp_on_grid(exo.S, t)
    per_node, bias, output_sum = {}, None, None

    def track(vec):
        return np.einsum("pq,tqr->pt", exo.Q_eta,
                         phis @ vec.reshape(-1, 1))

    def command(vec):
        return np.einsum("pq,tqr->pt", exo.Q_v, phis @ vec.reshape(-1, 1))

    if cset.regime == "sync":
        total = np.zeros(exo.q)
        for i in range(1, n_nodes + 1):
            total = total + eta0.get(i, np.zeros(exo.q))
        mean = total / n_nodes
        for i in range(1, n_nodes + 1):
            per_node[i] = track(mean)
    elif cset.regime == "tracking":
        for i in range(1, n_nodes + 1):
            per_node[i] = track(eta0.get(i, np.zeros(exo.q)))
    elif cset.regime == "cooperation":
        total = np.zeros(exo.q)
        for i in range(1, n_nodes + 1):
            vec = nu0.get(i, np.zeros(exo.q))
            total = total + vec
            per_node[i] = command(vec)
        nu_bias = -total / n_nodes
        bias = command(nu_bias)
        phis_gs = _exp_on_grid(cset.G_S, t)
        total_ref = np.zeros(cset.G_S.shape[0])
        for i in range(1, n_nodes + 1):
            total_ref = total_ref + etabar0.get(
                i, np.zeros(cset.G_S.shape[0]))
        output_sum = np.einsum("pq,tqr->pt", cset.G_Q,
                               phis_gs @ total_ref.reshape(-1, 1))
    elif cset.regime == "master_slave":
        for i in range(1, n_nodes + 1):
            if (i - 1) in cset.slaves:
                per_node[i] = command(nu0.get(i, np.zeros(exo.q)))
            else:
                per_node[i] = track(eta0.get(i, np.zeros(exo.q)))
    else:
        raise ValidationError("regime", f"unknown regime {cset.regime!r}")
    return SteadyStatePrediction(t=np.asarray(t, dtype=float),
                                 per_node=per_node, bias=bias,
                                 output_sum=output_sum)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class NodeMetrics:
    """Trailing-window error metrics for one node."""

    max_error: float
    rms_error: float
    decayed: bool


def error_metrics(result, window):
    """Per-node max/RMS error over the trailing window plus a decay flag.

    The decay flag is true when the trailing-window max is below the
    leading-window max (same width at the start of the run).

    Raises
    ------
    EmptyWindow
        If the window is nonpositive, exceeds the horizon, or contains no
        stored samples.
    """
    t = result.t
    horizon = float(t[-1] - t[0])
    if window <= 0 or window > horizon:
        raise EmptyWindow(
            f"window {window} outside (0, {horizon}]")
    trail = t >= (t[-1] - window)
    lead = t <= (t[0] + window)
    if not trail.any() or not lead.any():
        raise EmptyWindow("window contains no stored samples")
    metrics = {}
    for node_id, err in result.errors.items():
        abs_err = np.abs(err)
        tmax = float(abs_err[:, trail].max(initial=0.0))
        lmax = float(abs_err[:, lead].max(initial=0.0))
        rms = float(np.sqrt(np.mean(err[:, trail] ** 2)))
        metrics[node_id] = NodeMetrics(max_error=tmax, rms_error=rms,
                                       decayed=bool(tmax < lmax))
    return metrics
