"""Closed-loop assembly: the simulation-form state matrix, the per-regime
error-coordinate matrix, and the coupling-gain stability boundary search.

Both assembled matrices carry index maps from (entity kind, entity id) to
state offsets; assembly is deterministic, so re-assembly reproduces them
entrywise.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .analysis import lemma1_certificate, spectral_abscissa
from .errors import (
    HypothesisViolated,
    MissingMaps,
    NoStableEps,
    NumericalFailure,
    ValidationError,
)
from .network import is_static
from .synthesis import (
    CooperationMaps,
    MasterSlaveMaps,
    TrackingMaps,
)
from .topology import assemble_weighted_blocks

#: spectral abscissa below which the error system counts as stable
STABILITY_TOL = 1e-9


@dataclass(frozen=True)
class IndexEntry:
    """One state block: kind, 1-based entity id, offset and length."""

    kind: str
    entity: int
    offset: int
    length: int


class _Layout:
    """Offset bookkeeping for a block state vector."""

    def __init__(self):
        self.entries = []
        self.size = 0
        self._slices = {}

    def add(self, kind, entity, length):
        entry = IndexEntry(kind=kind, entity=int(entity),
                           offset=self.size, length=int(length))
        self.entries.append(entry)
        self._slices[(kind, int(entity))] = slice(self.size,
                                                  self.size + int(length))
        self.size += int(length)
        return entry

    def sl(self, kind, entity):
        return self._slices[(kind, int(entity))]

    def has(self, kind, entity):
        return (kind, int(entity)) in self._slices


@dataclass(frozen=True)
class ClosedLoop:
    """Assembled closed loop for one regime at one coupling gain.

    ``A_full``/``index_map`` describe the simulation-form state (actual
    node, controller, edge, reference and command states); ``A_error`` /
    ``error_index_map`` the regime's error-coordinate system whose spectral
    abscissa decides stability.  The output maps extract stacked node
    outputs y, neighboring inputs v, references and errors from the
    simulation-form state.
    """

    regime: str
    eps: float
    A_full: np.ndarray
    index_map: tuple
    A_error: np.ndarray
    error_index_map: tuple
    error_block_ids: tuple
    y_map: np.ndarray
    v_map: np.ndarray
    ref_map: np.ndarray
    err_map: np.ndarray
    node_ids: tuple
    p: int
    err_kind: dict

    @property
    def n_states(self):
        return self.A_full.shape[0]

    def output_rows(self, node_id):
        k = self.node_ids.index(node_id)
        return slice(k * self.p, (k + 1) * self.p)


def _hat_lists(network, cset):
    dyn = network.dynamic_indices()
    ctrls = [cset.controllers[i] for i in dyn]
    if any(c is None for c in ctrls):
        raise MissingMaps("controller set has unsynthesized dynamic nodes")
    return dyn, ctrls


def assemble(regime, network, cset, maps=None, eps=None):
    """Assemble the closed loop for ``regime`` at coupling gain ``eps``.

    ``maps`` must be the regime's regulation maps (from
    :func:`coopnet.synthesis.build_maps`): the sync error matrix needs the
    per-node regulator maps, cooperation needs the node reference maps,
    master-slave the slave reference maps.  ``eps`` defaults to the
    controller set's stored gain.

    Raises
    ------
    MissingMaps
        If the regime needs maps that were not supplied.
    """
    if regime != cset.regime:
        raise ValidationError(
            "regime", f"controller set was built for {cset.regime!r}")
    eps = cset.eps if eps is None else float(eps)
    if eps < 0:
        raise ValidationError("eps", "coupling gain must be >= 0")
    dyn, ctrls = _hat_lists(network, cset)
    topo = network.topology
    exo = cset.exo
    p, q = network.p, exo.q
    e_list = [e.A for e in network.edges]
    f_list = [e.B for e in network.edges]
    g_list = [e.C for e in network.edges]
    h = topo.H

    # ----- simulation form -------------------------------------------------
    lay = _Layout()
    for i in dyn:
        node = network.nodes[i]
        lay.add("node_state", i + 1, node.n)
        lay.add("controller_state", i + 1, cset.controllers[i].im.c)
    for j in range(topo.M):
        lay.add("edge_state", j + 1, network.edges[j].n)
    if regime == "sync":
        for i in range(topo.N):
            lay.add("reference_state", i + 1, q)
    elif regime == "cooperation":
        for i in range(topo.N):
            lay.add("reference_state", i + 1, p * q)
        for i in range(topo.N):
            lay.add("exo_state", i + 1, q)
    elif regime == "tracking":
        for i in dyn:
            lay.add("exo_state", i + 1, q)
    elif regime == "master_slave":
        for i in cset.slaves:
            lay.add("reference_state", i + 1, p * q)
        for i in cset.slaves:
            lay.add("exo_state", i + 1, q)
        for i in cset.masters:
            lay.add("exo_state", i + 1, q)
    else:
        raise ValidationError("regime", f"unknown regime {regime!r}")

    def xsl(i):
        a = lay.sl("node_state", i + 1)
        b = lay.sl("controller_state", i + 1)
        return slice(a.start, b.stop)

    a_full = np.zeros((lay.size, lay.size))
    for i in dyn:
        ctrl = cset.controllers[i]
        a_full[xsl(i), xsl(i)] = ctrl.Ahat
        for j in range(topo.M):
            if h[i, j] != 0.0:
                zj = lay.sl("edge_state", j + 1)
                a_full[xsl(i), zj] += -h[i, j] * (ctrl.Dhat @ g_list[j])
        ref_kind = "exo_state" if ctrl.regime in ("tracking", "master") \
            else "reference_state"
        a_full[xsl(i), lay.sl(ref_kind, i + 1)] = ctrl.Dhat_ref
    for j in range(topo.M):
        zj = lay.sl("edge_state", j + 1)
        a_full[zj, zj] = e_list[j]
        for i in dyn:
            if h[i, j] != 0.0:
                a_full[zj, xsl(i)] += h[i, j] * (f_list[j] @
                                                 cset.controllers[i].Chat)
        for i in network.static_indices():
            if h[i, j] != 0.0:
                a_full[zj, lay.sl("exo_state", i + 1)] += \
                    h[i, j] * (f_list[j] @ exo.Q_eta)
    # driven reference generators
    if regime == "sync":
        for i in range(topo.N):
            ri = lay.sl("reference_state", i + 1)
            a_full[ri, ri] = exo.S
            for j in range(topo.M):
                if h[i, j] != 0.0:
                    zj = lay.sl("edge_state", j + 1)
                    a_full[ri, zj] += -eps * h[i, j] * (exo.B_eta @ g_list[j])
    if regime in ("cooperation", "master_slave"):
        driven = range(topo.N) if regime == "cooperation" else cset.slaves
        for i in driven:
            ri = lay.sl("reference_state", i + 1)
            a_full[ri, ri] = cset.G_S
            for j in range(topo.M):
                if h[i, j] != 0.0:
                    zj = lay.sl("edge_state", j + 1)
                    a_full[ri, zj] += -eps * h[i, j] * (cset.G_B @ g_list[j])
            a_full[ri, lay.sl("exo_state", i + 1)] = \
                -eps * (cset.G_B @ exo.Q_v)
    for entry in lay.entries:
        if entry.kind == "exo_state":
            si = lay.sl("exo_state", entry.entity)
            a_full[si, si] = exo.S

    # ----- output maps ------------------------------------------------------
    node_ids = tuple(i + 1 for i in range(topo.N))
    y_map = np.zeros((topo.N * p, lay.size))
    v_map = np.zeros((topo.N * p, lay.size))
    ref_map = np.zeros((topo.N * p, lay.size))
    err_kind = {}
    for i in range(topo.N):
        rows = slice(i * p, (i + 1) * p)
        if is_static(network.nodes[i]):
            y_map[rows, lay.sl("exo_state", i + 1)] = exo.Q_eta
            ref_map[rows, lay.sl("exo_state", i + 1)] = exo.Q_eta
            err_kind[i + 1] = "output"
        else:
            ctrl = cset.controllers[i]
            y_map[rows, xsl(i)] = ctrl.Chat
            if ctrl.regime in ("cooperation", "slave"):
                ref_map[rows, lay.sl("exo_state", i + 1)] = exo.Q_v
                err_kind[i + 1] = "input"
            else:
                kind = "exo_state" if ctrl.regime in ("tracking", "master") \
                    else "reference_state"
                ref_map[rows, lay.sl(kind, i + 1)] = exo.Q_eta
                err_kind[i + 1] = "output"
        for j in range(topo.M):
            if h[i, j] != 0.0:
                v_map[rows, lay.sl("edge_state", j + 1)] = \
                    -h[i, j] * g_list[j]
    err_map = np.zeros_like(y_map)
    for i in range(topo.N):
        rows = slice(i * p, (i + 1) * p)
        base = v_map if err_kind[i + 1] == "input" else y_map
        err_map[rows] = base[rows] - ref_map[rows]

    # ----- error-coordinate form -------------------------------------------
    a_err, err_lay = _error_matrix(regime, network, cset, maps, eps)

    return ClosedLoop(
        regime=regime, eps=eps, A_full=a_full, index_map=tuple(lay.entries),
        A_error=a_err, error_index_map=tuple(err_lay.entries),
        error_block_ids=tuple(range(len(err_lay.entries))),
        y_map=y_map, v_map=v_map, ref_map=ref_map, err_map=err_map,
        node_ids=node_ids, p=p, err_kind=err_kind)


def _coupling_unit(regime, network, cset, maps):
    """Coefficient matrix of eps in the (node, edge) off-diagonal block.

    Returns the matrix scaled per unit eps (zero for tracking).
    """
    dyn, ctrls = _hat_lists(network, cset)
    g_list = [e.C for e in network.edges]
    h_dyn = network.topology.H[dyn, :]
    if regime == "tracking":
        rows = sum(c.nc for c in ctrls)
        cols = sum(e.n for e in network.edges)
        return np.zeros((rows, cols))
    if regime == "sync":
        if not isinstance(maps, TrackingMaps):
            raise MissingMaps("sync assembly needs the regulator maps")
        left = [maps.Pi[i + 1] @ cset.exo.B_eta for i in dyn]
    elif regime == "cooperation":
        if not isinstance(maps, CooperationMaps):
            raise MissingMaps("cooperation assembly needs cooperation maps")
        left = [maps.Pi_bar1[i + 1] @ cset.G_B for i in dyn]
    elif regime == "master_slave":
        if not isinstance(maps, MasterSlaveMaps):
            raise MissingMaps("master-slave assembly needs master-slave maps")
        left = []
        for i in dyn:
            if i in cset.slaves:
                left.append(maps.Pi_f_ref[i + 1] @ cset.G_B)
            else:
                left.append(np.zeros((cset.controllers[i].nc,
                                      network.p)))
    else:
        raise ValidationError("regime", f"unknown regime {regime!r}")
    return assemble_weighted_blocks(h_dyn, left=left, right=g_list)


def _error_matrix(regime, network, cset, maps, eps):
    dyn, ctrls = _hat_lists(network, cset)
    topo = network.topology
    exo = cset.exo
    p, q = network.p, exo.q
    e_list = [e.A for e in network.edges]
    f_list = [e.B for e in network.edges]
    g_list = [e.C for e in network.edges]
    h_dyn = topo.H[dyn, :]

    an = scipy.linalg.block_diag(*[c.Ahat for c in ctrls]) if ctrls \
        else np.zeros((0, 0))
    em = scipy.linalg.block_diag(*e_list) if e_list else np.zeros((0, 0))
    hdg = assemble_weighted_blocks(
        h_dyn, left=[c.Dhat for c in ctrls], right=g_list)
    htfc = assemble_weighted_blocks(
        h_dyn.T, left=f_list, right=[c.Chat for c in ctrls])

    lay = _Layout()
    for i in dyn:
        lay.add("node_error", i + 1, cset.controllers[i].nc)
    for j in range(topo.M):
        lay.add("edge_error", j + 1, network.edges[j].n)

    if regime == "tracking":
        a_err = np.block([[an, -hdg], [htfc, em]])
        return a_err, lay

    w5 = _coupling_unit(regime, network, cset, maps)
    if regime == "sync":
        n1 = topo.N - 1
        for k in range(n1):
            lay.add("reference_error", k + 1, q)
        htf_q = assemble_weighted_blocks(topo.Hbar.T, left=f_list,
                                         right=exo.Q_eta)
        bg_hg = assemble_weighted_blocks(topo.Hbar, left=exo.B_eta,
                                         right=g_list)
        tail = np.kron(np.eye(n1), exo.S)
        a_err = np.block([
            [an, -hdg + eps * w5, np.zeros((an.shape[0], n1 * q))],
            [htfc, em, htf_q],
            [np.zeros((n1 * q, an.shape[0])), -eps * bg_hg, tail]])
        return a_err, lay
    if regime == "cooperation":
        n1 = topo.N - 1
        for k in range(n1):
            lay.add("reference_error", k + 1, p * q)
        htf_gq = assemble_weighted_blocks(topo.Hbar.T, left=f_list,
                                          right=cset.G_Q)
        gb_hg = assemble_weighted_blocks(topo.Hbar, left=cset.G_B,
                                         right=g_list)
        tail = np.kron(np.eye(n1), cset.G_S)
        a_err = np.block([
            [an, -hdg + eps * w5, np.zeros((an.shape[0], n1 * p * q))],
            [htfc, em, htf_gq],
            [np.zeros((n1 * p * q, an.shape[0])), -eps * gb_hg, tail]])
        return a_err, lay
    if regime == "master_slave":
        slaves = list(cset.slaves)
        l = len(slaves)
        for i in slaves:
            lay.add("reference_error", i + 1, p * q)
        h_s = topo.H[slaves, :] if l else np.zeros((0, topo.M))
        htf_gq = assemble_weighted_blocks(h_s.T, left=f_list,
                                          right=cset.G_Q)
        gb_hg = assemble_weighted_blocks(h_s, left=cset.G_B, right=g_list)
        tail = np.kron(np.eye(l), cset.G_S) if l else np.zeros((0, 0))
        a_err = np.block([
            [an, -hdg + eps * w5, np.zeros((an.shape[0], l * p * q))],
            [htfc, em, htf_gq],
            [np.zeros((l * p * q, an.shape[0])), -eps * gb_hg, tail]])
        return a_err, lay
    raise ValidationError("regime", f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# coupling-gain boundary


@dataclass(frozen=True)
class EpsilonStar:
    """Result of the coupling-gain boundary search.

    ``eps_bisect`` is the operative value (largest stable gain found by the
    probe + bisection scheme, or ``eps_hi`` when the whole grid is stable);
    ``eps_analytic`` is the conservative constructive bound from the block
    certificate (NaN when its hypotheses fail), reported for comparison and
    never used as the operative value.
    """

    eps_bisect: float
    eps_analytic: float
    abscissa_at_bisect: float
    probes: tuple
    probe_abscissas: tuple


def _blkdiag(mats):
    mats = [np.atleast_2d(m) for m in mats]
    return scipy.linalg.block_diag(*mats) if mats else np.zeros((0, 0))


def lemma1_block_split(network, cset, maps, eps):
    """The (W1, W2, W3, W4, W5, P_w, Q_w) split of the node/edge block system."""
    dyn, ctrls = _hat_lists(network, cset)
    g_list = [e.C for e in network.edges]
    f_list = [e.B for e in network.edges]
    h_dyn = network.topology.H[dyn, :]
    w1 = _blkdiag([c.Ahat for c in ctrls])
    w4 = _blkdiag([e.A for e in network.edges])
    w2 = -assemble_weighted_blocks(h_dyn, left=[c.Dhat for c in ctrls],
                                   right=g_list)
    w3 = assemble_weighted_blocks(h_dyn.T, left=f_list,
                                  right=[c.Chat for c in ctrls])
    w5 = eps * _coupling_unit(cset.regime, network, cset, maps)
    p_w = _blkdiag([c.Phat.P for c in ctrls])
    q_w = _blkdiag([cert.P for cert in cset.edge_certificates])
    return w1, w2, w3, w4, w5, p_w, q_w


def analytic_eps_bound(network, cset, maps):
    """Conservative coupling-gain bound from the constructive certificate.

    Returns ``eps_bar / ||W5_unit||`` where eps_bar comes from
    :func:`coopnet.analysis.lemma1_certificate` applied at eps = 0, or NaN
    when the certificate hypotheses are not satisfied; infinity when the
    regime has no eps-coupling (tracking).
    """
    w5_unit = _coupling_unit(cset.regime, network, cset, maps)
    norm = float(np.linalg.norm(w5_unit, 2)) if w5_unit.size else 0.0
    if norm == 0.0:
        return float("inf")  # no coupling path at all
    w1, w2, w3, w4, _, p_w, q_w = lemma1_block_split(network, cset, maps, 0.0)
    try:
        _, eps_bar = lemma1_certificate(
            w1, w2, w3, w4, np.zeros_like(w2), p_w, q_w)
    except (HypothesisViolated, NumericalFailure):
        # hypotheses fail or the scales defeat the solver tolerances: the
        # constructive bound is unavailable (it is report-only anyway)
        return float("nan")
    return eps_bar / norm


def epsilon_star(network, cset, maps, eps_hi, rel_width=1e-3, n_probes=16,
                 stability_tol=STABILITY_TOL):
    """Largest stable coupling gain in (0, eps_hi] by probing + bisection.

    A coarse log-spaced grid locates the stable bracket containing the
    largest stable probe; bisection refines the boundary to relative width
    ``rel_width``.  Stability means the error-coordinate matrix has
    spectral abscissa below ``-stability_tol``.

    Raises
    ------
    NoStableEps
        If no probe in the grid is stable.
    """
    if eps_hi <= 0:
        raise ValidationError("eps_hi", "search ceiling must be > 0")

    def abscissa(eps):
        cl = assemble(cset.regime, network, cset, maps, eps=eps)
        return spectral_abscissa(cl.A_error)

    probes = np.geomspace(eps_hi * 1e-4, eps_hi, n_probes)
    aabs = np.array([abscissa(e) for e in probes])
    stable = aabs < -stability_tol
    if not stable.any():
        raise NoStableEps(
            f"no stable coupling gain among probes in "
            f"[{probes[0]:.3e}, {probes[-1]:.3e}]")
    k = int(np.max(np.nonzero(stable)[0]))
    analytic = analytic_eps_bound(network, cset, maps)
    if k == len(probes) - 1:
        return EpsilonStar(
            eps_bisect=float(probes[-1]), eps_analytic=analytic,
            abscissa_at_bisect=float(aabs[-1]),
            probes=tuple(probes), probe_abscissas=tuple(aabs))
    lo, hi = float(probes[k]), float(probes[k + 1])
    while (hi - lo) > rel_width * lo:
        mid = 0.5 * (lo + hi)
        if abscissa(mid) < -stability_tol:
            lo = mid
        else:
            hi = mid
    return EpsilonStar(
        eps_bisect=lo, eps_analytic=analytic,
        abscissa_at_bisect=float(abscissa(lo)),
        probes=tuple(probes), probe_abscissas=tuple(aabs))
