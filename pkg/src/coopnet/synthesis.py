"""Controller construction.

Builds the p-copy internal models, the passifying feedback gains with their
storage-function certificates, the per-node regulator maps, and the
steady-state maps of the cooperation and master-slave regimes; assembles
everything into a per-network ControllerSet after running the standing
assumption checks.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .analysis import (
    Certificate,
    Exosystem,
    LtiSystem,
    STRICT_MARGIN,
    controllable,
    hyper_min_phase_check,
    is_hurwitz,
    lyapunov_kernel_basis,
    lyapunov_solve,
    marginal_kernel_certificate,
    observable,
    real_marginal_basis,
    spectral_abscissa,
    spr_certificate,
    sylvester_solve,
)
from .errors import (
    AllSlaves,
    AssumptionFailed,
    CertificateFailed,
    IdentityViolated,
    InternalModelViolated,
    NotHurwitz,
    NotHyperMinPhase,
    SynthesisFailed,
    ValidationError,
)
from .network import Network, is_static
from .topology import assemble_weighted_blocks, check_connected

REGIMES = ("tracking", "sync", "cooperation", "master_slave")
NODE_REGIMES = ("tracking", "sync", "cooperation", "master", "slave")

#: residual tolerance for the regulator output identities
MAP_IDENTITY_TOL = 1e-8
#: tolerance for the passivity identities of assumption A5
PASSIVITY_TOL = 1e-9


def _sym(a):
    return 0.5 * (a + a.T)


def _blkdiag(mats):
    mats = [np.atleast_2d(m) for m in mats]
    if not mats:
        return np.zeros((0, 0))
    return scipy.linalg.block_diag(*mats)


# ---------------------------------------------------------------------------
# internal models


@dataclass(frozen=True)
class InternalModel:
    """p parallel copies of the reference dynamics in companion form.

    ``G1`` is block diagonal with p copies of the companion matrix of the
    reference generator's minimal polynomial; ``G2`` stacks the matching
    unit input columns.  ``minimal_poly_coeffs`` holds (a_1, ..., a_q) of
    lambda^q + a_1 lambda^{q-1} + ... + a_q.
    """

    G1: np.ndarray
    G2: np.ndarray
    copies: int
    block_dim: int
    minimal_poly_coeffs: tuple

    @property
    def c(self):
        """Controller state dimension."""
        return self.G1.shape[0]


def minimal_polynomial_coeffs(s):
    """Coefficients (a_1..a_q) of the minimal polynomial of a simple-spectrum S."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    # simple spectrum: minimal polynomial == characteristic polynomial
    real_marginal_basis(s, require_simple=True)
    coeffs = np.poly(np.linalg.eigvals(s))
    coeffs = np.real_if_close(coeffs, tol=1e6).real
    return tuple(float(c) for c in coeffs[1:])


def companion_pair(coeffs):
    """Controllable-canonical (alpha, beta) for lambda^q + a_1 ... + a_q."""
    q = len(coeffs)
    alpha = np.zeros((q, q))
    if q > 1:
        alpha[:-1, 1:] = np.eye(q - 1)
    alpha[-1, :] = -np.asarray(coeffs, dtype=float)[::-1]
    beta = np.zeros((q, 1))
    beta[-1, 0] = 1.0
    return alpha, beta


def p_copy_internal_model(s, p):
    """Minimal p-copy internal model of the reference dynamics ``s``.

    Raises
    ------
    SpectrumNotMarginal
        If ``s`` has eigenvalues off the imaginary axis or repeated ones.
    """
    if p < 1:
        raise ValidationError("p", "need at least one copy")
    coeffs = minimal_polynomial_coeffs(s)
    alpha, beta = companion_pair(coeffs)
    g1 = np.kron(np.eye(p), alpha)
    g2 = np.kron(np.eye(p), beta)
    im = InternalModel(G1=g1, G2=g2, copies=int(p), block_dim=len(coeffs),
                       minimal_poly_coeffs=coeffs)
    validate_internal_model(im, np.atleast_2d(np.asarray(s, dtype=float)))
    return im


def internal_model_from_matrices(g1, g2, s):
    """Wrap user-supplied (G1, G2) after checking the internal-model property.

    Checks controllability of (G1, G2) and that the minimal polynomial of
    ``s`` divides the characteristic polynomial of G1.
    """
    g1 = np.atleast_2d(np.asarray(g1, dtype=float))
    g2 = np.atleast_2d(np.asarray(g2, dtype=float))
    s = np.atleast_2d(np.asarray(s, dtype=float))
    coeffs = minimal_polynomial_coeffs(s)
    copies = g2.shape[1]
    im = InternalModel(G1=g1, G2=g2, copies=copies, block_dim=len(coeffs),
                       minimal_poly_coeffs=coeffs)
    validate_internal_model(im, s)
    return im


def validate_internal_model(im, s):
    """Controllability plus divisibility of char(G1) by minpoly(S)."""
    if not controllable(im.G1, im.G2):
        raise InternalModelViolated("(G1, G2) is not controllable")
    char = np.poly(np.linalg.eigvals(im.G1))
    char = np.real_if_close(char, tol=1e6).real
    minpoly = np.concatenate([[1.0], np.asarray(im.minimal_poly_coeffs)])
    _, rem = np.polydiv(char, minpoly)
    scale = max(1.0, np.abs(char).max())
    if rem.size and np.abs(rem).max() > 1e-10 * scale:
        raise InternalModelViolated(
            "reference minimal polynomial does not divide char(G1) "
            f"(remainder {np.abs(rem).max():.2e})")
    return im


# ---------------------------------------------------------------------------
# closed node matrices and the controller record


def hat_matrices(node, k_x, k_zeta, im, ref_q=None):
    """Closed-node matrices (Ahat, Dhat, Dhat_ref, Chat).

    The augmented state is (x, zeta); ``Dhat_ref`` (None when ``ref_q`` is
    None) injects the reference output into the internal model.
    """
    a, b, c = node.A, node.B, node.C
    d = node.D_in
    k_x = np.atleast_2d(np.asarray(k_x, dtype=float))
    k_zeta = np.atleast_2d(np.asarray(k_zeta, dtype=float))
    n, cdim = a.shape[0], im.c
    ahat = np.block([[a + b @ k_x, b @ k_zeta],
                     [im.G2 @ c, im.G1]])
    dhat = np.vstack([d, np.zeros((cdim, d.shape[1]))])
    chat = np.hstack([c, np.zeros((c.shape[0], cdim))])
    dhat_ref = None
    if ref_q is not None:
        ref_q = np.atleast_2d(np.asarray(ref_q, dtype=float))
        dhat_ref = np.vstack([np.zeros((n, ref_q.shape[1])),
                              -im.G2 @ ref_q])
    return ahat, dhat, dhat_ref, chat


@dataclass(frozen=True)
class NodeController:
    """Per-node controller: gains, internal model, reference generator.

    ``ref_B`` is stored unscaled; the closed-loop assembler multiplies it by
    the shared coupling gain eps.  ``Phat`` is the passivity certificate of
    the closed node (storage form: ``Phat Ahat + Ahat.T Phat <= 0`` and
    ``Phat Dhat = Chat.T``).
    """

    regime: str
    K_x: np.ndarray
    K_zeta: np.ndarray
    im: InternalModel
    ref_S: np.ndarray
    ref_B: np.ndarray
    ref_Q: np.ndarray
    eps: float
    Phat: Certificate
    node: LtiSystem
    Ahat: np.ndarray = field(repr=False, default=None)
    Dhat: np.ndarray = field(repr=False, default=None)
    Dhat_ref: np.ndarray = field(repr=False, default=None)
    Chat: np.ndarray = field(repr=False, default=None)

    @property
    def nc(self):
        """Augmented state dimension n + c."""
        return self.Ahat.shape[0]


def make_node_controller(node, regime, k_x, k_zeta, im, ref_s, ref_b, ref_q,
                         eps, phat, tol=PASSIVITY_TOL):
    """Assemble and verify a NodeController record.

    Verifies the closed node is Hurwitz and that ``phat`` witnesses the
    passivity identities at tolerance ``tol``.
    """
    if regime not in NODE_REGIMES:
        raise ValidationError("regime", f"unknown node regime {regime!r}")
    ahat, dhat, dhat_ref, chat = hat_matrices(node, k_x, k_zeta, im, ref_q)
    absc = spectral_abscissa(ahat)
    if absc >= 0:
        raise NotHurwitz(f"closed node has spectral abscissa {absc:.3e}")
    _check_passivity(phat.P, ahat, dhat, chat, tol)
    return NodeController(
        regime=regime, K_x=np.atleast_2d(np.asarray(k_x, dtype=float)),
        K_zeta=np.atleast_2d(np.asarray(k_zeta, dtype=float)), im=im,
        ref_S=np.atleast_2d(np.asarray(ref_s, dtype=float)),
        ref_B=np.atleast_2d(np.asarray(ref_b, dtype=float)),
        ref_Q=np.atleast_2d(np.asarray(ref_q, dtype=float)),
        eps=float(eps), Phat=phat, node=node,
        Ahat=ahat, Dhat=dhat, Dhat_ref=dhat_ref, Chat=chat)


def _check_passivity(p, ahat, dhat, chat, tol):
    p = _sym(np.asarray(p, dtype=float))
    if np.linalg.eigvalsh(p)[0] <= 0:
        raise CertificateFailed("storage matrix is not positive definite")
    scale = max(1.0, float(np.linalg.norm(p, 2)) *
                float(np.linalg.norm(ahat, 2)))
    lmax = float(np.linalg.eigvalsh(_sym(p @ ahat + ahat.T @ p))[-1])
    if lmax > tol * scale:
        raise CertificateFailed(
            f"storage inequality fails: lambda_max {lmax:.3e} > "
            f"{tol * scale:.3e}")
    eq = np.abs(p @ dhat - chat.T).max()
    eq_scale = max(1.0, np.abs(chat).max())
    if eq > tol * eq_scale:
        raise CertificateFailed(
            f"storage equality P Dhat = Chat.T fails (residual {eq:.3e})")
    return lmax


# ---------------------------------------------------------------------------
# passification


def _normal_form(b, c):
    """Change of basis T = [C; W] with W spanning the left null space of B."""
    w = scipy.linalg.null_space(b.T).T
    t = np.vstack([c, w])
    if np.linalg.matrix_rank(t) < t.shape[0]:
        raise NotHyperMinPhase("output map and input complement do not span")
    return t


def _storage_candidates(a_k, b, c, rho_grid):
    """Candidate storage matrices P_s with C P_s = B.T in normal form.

    Yields (P_s, lambda_max((A_k) P_s + P_s (A_k).T)) over the scale grid.
    """
    p_dim = c.shape[0]
    n = a_k.shape[0]
    t = _normal_form(b, c)
    ti = np.linalg.inv(t)
    ap = t @ a_k @ ti
    b1 = _sym(c @ b)
    if n == p_dim:
        p_prime = b1
        m = _sym(ap @ p_prime + p_prime @ ap.T)
        p_s = _sym(ti @ p_prime @ ti.T)
        yield p_s, float(np.linalg.eigvalsh(m)[-1])
        return
    a22 = ap[p_dim:, p_dim:]
    if not is_hurwitz(a22):
        raise NotHyperMinPhase("zero dynamics are not Hurwitz")
    # A22 P2 + P2 A22.T = -I   (dual orientation)
    p2_unit = lyapunov_solve(a22.T, np.eye(n - p_dim))
    for rho in rho_grid:
        p_prime = scipy.linalg.block_diag(b1, rho * p2_unit)
        m = _sym(ap @ p_prime + p_prime @ ap.T)
        p_s = _sym(ti @ p_prime @ ti.T)
        yield p_s, float(np.linalg.eigvalsh(m)[-1])


def passify_node(node, im, exo, regime="tracking", kappa_max=2 ** 24,
                 margin=STRICT_MARGIN, seed=0):
    """Design passifying gains for a direct-coupling node (``D_in == B``).

    Output feedback ``K_x = -kappa (C B)^{-1} C`` with kappa probed over
    0, 1, 2, 4, ... until a storage matrix P_s with ``C P_s = B.T`` makes
    the state loop strictly dissipative; ``K_zeta = -G2.T P_g^{-1}`` with
    P_g the marginal-kernel certificate of G1.  The returned controller
    carries the storage certificate in the canonical form
    ``Phat = diag(P_s, P_g)^{-1}``.

    Raises
    ------
    NotHyperMinPhase
        If the node fails the relative-degree-one / stable-zeros test.
    SynthesisFailed
        If the gain search exhausts ``kappa_max`` (reports final margins).
    """
    a, b, c = node.A, node.B, node.C
    if node.D_in is None or node.D_in.shape != b.shape or \
            np.abs(node.D_in - b).max() > 0:
        raise ValidationError(
            "node.D_in", "constructive passification needs D_in == B")
    if not hyper_min_phase_check(a, b, c):
        raise NotHyperMinPhase(
            "node fails the hyper-minimum-phase conditions")

    cb = c @ b
    rho_grid = np.geomspace(1e-6, 1e6, 25)
    kappa = 0.0
    best = None
    while kappa <= kappa_max:
        k_x = -kappa * np.linalg.solve(cb, c)
        a_k = a + b @ k_x
        for p_s, lmax in _storage_candidates(a_k, b, c, rho_grid):
            scale = max(1.0, float(np.linalg.norm(a_k, 2)) *
                        float(np.linalg.norm(p_s, 2)))
            if best is None or lmax / scale < best[1]:
                best = (kappa, lmax / scale, p_s, k_x)
            if lmax < -margin * scale:
                return _finish_passification(
                    node, im, exo, regime, k_x, p_s, seed)
        kappa = 1.0 if kappa == 0.0 else 2.0 * kappa
    raise SynthesisFailed(
        f"gain search exhausted at kappa={best[0]:g} with relative "
        f"margin {best[1]:.3e}")


def _finish_passification(node, im, exo, regime, k_x, p_s, seed):
    rng = np.random.default_rng(seed)
    im_try = im
    k_zeta = p_g = None
    for attempt in range(5):
        p_g_base = marginal_kernel_certificate(im_try.G1)
        # the certificate scale is free: pick the best-damped closed node
        best = None
        for rho in np.geomspace(1e-6, 1e6, 25):
            cand_pg = rho * p_g_base
            cand_kz = -np.linalg.solve(cand_pg.T, im_try.G2).T
            ahat, _, _, _ = hat_matrices(node, k_x, cand_kz, im_try)
            absc = spectral_abscissa(ahat)
            if best is None or absc < best[0]:
                best = (absc, cand_kz, cand_pg)
        if best[0] < 0:
            _, k_zeta, p_g = best
            break
        # marginal modes unobservable through K_zeta: re-draw G2
        g2 = im_try.G2 + 0.05 * rng.standard_normal(im_try.G2.shape)
        if not controllable(im_try.G1, g2):
            continue
        im_try = InternalModel(
            G1=im_try.G1, G2=g2, copies=im_try.copies,
            block_dim=im_try.block_dim,
            minimal_poly_coeffs=im_try.minimal_poly_coeffs)
    else:
        raise SynthesisFailed(
            "closed node not Hurwitz for any internal-model completion")
    p_tilde = scipy.linalg.block_diag(p_s, p_g)
    phat_mat = _sym(np.linalg.inv(p_tilde))
    ahat, dhat, _, chat = hat_matrices(node, k_x, k_zeta, im_try)
    lmax = _check_passivity(phat_mat, ahat, dhat, chat, PASSIVITY_TOL)
    phat = Certificate(P=phat_mat, slack=-lmax, kind="passivity")
    ref_s, ref_q = exo.S, exo.Q_eta
    ref_b = np.zeros((exo.q, exo.p)) if regime in ("tracking", "master") \
        else exo.B_eta
    return make_node_controller(node, regime, k_x, k_zeta, im_try,
                                ref_s, ref_b, ref_q, 0.0, phat)


def verify_A5(node, k_x, k_zeta, im, phat=None, tol=PASSIVITY_TOL):
    """Verify (or synthesize the certificate for) externally supplied gains.

    When ``phat`` is given it is checked directly.  Otherwise a certificate
    is synthesized in the block-diagonal storage family of the constructive
    design: P_g is recovered from ``K_zeta P_g = -G2.T`` inside the
    marginal Lyapunov kernel of G1, and P_s from the relative-degree normal
    form with the supplied K_x.

    Returns the passivity Certificate (storage form).

    Raises
    ------
    CertificateFailed
        If no certificate in the structured family matches the gains (this
        does not prove the gains violate passivity).
    NotHurwitz
        If the closed node is not Hurwitz.
    """
    ahat, dhat, _, chat = hat_matrices(node, k_x, k_zeta, im)
    absc = spectral_abscissa(ahat)
    if absc >= 0:
        raise NotHurwitz(f"closed node has spectral abscissa {absc:.3e}")
    if phat is not None:
        p = phat.P if isinstance(phat, Certificate) else np.asarray(phat)
        lmax = _check_passivity(p, ahat, dhat, chat, tol)
        return Certificate(P=_sym(np.asarray(p, dtype=float)), slack=-lmax,
                           kind="passivity")

    a, b, c = node.A, node.B, node.C
    if node.D_in is None or node.D_in.shape != b.shape or \
            np.abs(node.D_in - b).max() > 0:
        raise CertificateFailed(
            "indirect coupling (D_in != B): supply the certificate "
            "explicitly")
    k_x = np.atleast_2d(np.asarray(k_x, dtype=float))
    k_zeta = np.atleast_2d(np.asarray(k_zeta, dtype=float))

    # P_g from the marginal kernel, pinned by the supplied K_zeta
    basis = lyapunov_kernel_basis(im.G1)
    if not basis:
        raise CertificateFailed("marginal Lyapunov kernel of G1 is empty")
    cols = np.column_stack([(k_zeta @ m).ravel() for m in basis])
    target = (-im.G2.T).ravel()
    theta, *_ = np.linalg.lstsq(cols, target, rcond=None)
    p_g = _sym(sum(t * m for t, m in zip(theta, basis)))
    resid = np.abs(k_zeta @ p_g + im.G2.T).max()
    if resid > 1e-8 * max(1.0, np.abs(im.G2).max()):
        raise CertificateFailed(
            f"no marginal-kernel storage matches K_zeta "
            f"(residual {resid:.3e})")
    if np.linalg.eigvalsh(p_g)[0] <= 0:
        raise CertificateFailed(
            "storage pinned by K_zeta is not positive definite")

    a_k = a + b @ k_x
    best = None
    for p_s, lmax in _storage_candidates(a_k, b, c, np.geomspace(1e-6, 1e6, 25)):
        scale = max(1.0, float(np.linalg.norm(a_k, 2)) *
                    float(np.linalg.norm(p_s, 2)))
        if best is None or lmax / scale < best[0]:
            best = (lmax / scale, p_s)
    if best is None or best[0] > tol:
        raise CertificateFailed(
            f"state-loop storage inequality fails "
            f"(best relative margin {best[0]:.3e})" if best else
            "no storage candidate")
    p_tilde = scipy.linalg.block_diag(best[1], p_g)
    phat_mat = _sym(np.linalg.inv(p_tilde))
    lmax = _check_passivity(phat_mat, ahat, dhat, chat, tol)
    return Certificate(P=phat_mat, slack=-lmax, kind="passivity")


# ---------------------------------------------------------------------------
# regulator and steady-state maps


def regulator_map(ahat, dhat_eta, chat, s, q_target, tol=MAP_IDENTITY_TOL):
    """Steady-state map Pi with ``Pi S = Ahat Pi + Dhat_eta``.

    The internal model forces the output identity ``Chat Pi = q_target``,
    which is verified at tolerance ``tol``.

    Raises
    ------
    SingularPencil
        If Ahat and S share spectrum.
    InternalModelViolated
        If the output identity fails (malformed internal model).
    """
    pi = sylvester_solve(ahat, s, dhat_eta)
    chat = np.atleast_2d(np.asarray(chat, dtype=float))
    q_target = np.atleast_2d(np.asarray(q_target, dtype=float))
    resid = np.abs(chat @ pi - q_target).max()
    if resid > tol * max(1.0, np.abs(q_target).max()):
        raise InternalModelViolated(
            f"output identity Chat Pi = Q fails (residual {resid:.3e})")
    return pi


@dataclass(frozen=True)
class TrackingMaps:
    """Per-node regulator maps (tracking and synchronization regimes)."""

    Pi: dict  # node id (1-based) -> (n+c) x q


@dataclass(frozen=True)
class CooperationMaps:
    """Node maps, and the reduced edge/reference steady-state maps."""

    Pi_bar1: dict  # node id -> (n+c) x pq
    Pi_bar2: dict  # node id -> (n+c) x q
    Pi_tilde_z: np.ndarray
    Pi_tilde_eta: np.ndarray


@dataclass(frozen=True)
class MasterSlaveMaps:
    """Steady-state maps of the mixed regime.

    ``Pi_z_*``/``Pi_ref_*`` map the stacked slave-command states (nu) and
    master-reference states (eta) into edge states and slave reference
    generators; ``M``/``N_mat`` are the corresponding steady neighboring
    inputs; the ``Pi_f_*`` (slaves) and ``Pi_l_*`` (dynamic masters) maps
    give the node steady states.
    """

    Pi_z_nu: np.ndarray
    Pi_z_eta: np.ndarray
    Pi_ref_nu: np.ndarray
    Pi_ref_eta: np.ndarray
    M: dict        # node id -> p x (l q)
    N_mat: dict    # node id -> p x ((N-l) q)
    Pi_f_nu: dict
    Pi_f_ref: dict
    Pi_l_nu: dict
    Pi_l_eta: dict


def cooperation_node_maps(ctrl, exo, g_s, g_q, tol=MAP_IDENTITY_TOL):
    """Node steady-state maps for the cooperation regime.

    Solves the joint regulator equation against diag(G_S, S) and verifies
    both output identities: the reference part reproduces G_Q and the
    command part is output-invisible.
    """
    s_blk = scipy.linalg.block_diag(g_s, exo.S)
    r = np.hstack([ctrl.Dhat_ref, ctrl.Dhat @ exo.Q_v])
    pi = sylvester_solve(ctrl.Ahat, s_blk, r)
    pq = g_s.shape[0]
    pi1, pi2 = pi[:, :pq], pi[:, pq:]
    r1 = np.abs(ctrl.Chat @ pi1 - g_q).max()
    if r1 > tol * max(1.0, np.abs(g_q).max()):
        raise IdentityViolated(
            f"reference output identity fails (residual {r1:.3e})")
    r2 = np.abs(ctrl.Chat @ pi2).max()
    if r2 > tol:
        raise IdentityViolated(
            f"command-invisibility identity fails (residual {r2:.3e})")
    return pi1, pi2


def _edge_block_rows(network):
    return [e.A for e in network.edges], [e.B for e in network.edges], \
        [e.C for e in network.edges]


def cooperation_network_maps(network, cset, tol=MAP_IDENTITY_TOL):
    """Reduced edge/reference steady-state maps of the cooperation regime.

    Builds the internally stable reduced system (edges + T-projected
    reference generators) and solves its regulator equation against the
    T-projected commands; verifies that the steady edge outputs reproduce
    the commanded neighboring inputs.
    """
    topo = network.topology
    e_list, f_list, g_list = _edge_block_rows(network)
    eps = cset.eps
    if eps <= 0:
        raise ValidationError("eps", "cooperation maps need eps > 0")
    g_s, g_b, g_q = cset.G_S, cset.G_B, cset.G_Q
    exo = cset.exo
    n1 = topo.N - 1
    em = _blkdiag(e_list)
    htf_gq = assemble_weighted_blocks(topo.Hbar.T, left=f_list, right=g_q)
    gb_hg = assemble_weighted_blocks(topo.Hbar, left=g_b, right=g_list)
    a_nu = np.block([
        [em, htf_gq],
        [-eps * gb_hg, np.kron(np.eye(n1), g_s)]])
    b_nu = np.vstack([
        np.zeros((em.shape[0], n1 * exo.q)),
        np.kron(np.eye(n1), -eps * (g_b @ exo.Q_v))])
    pi = sylvester_solve(a_nu, np.kron(np.eye(n1), exo.S), b_nu)
    nz = em.shape[0]
    pi_z, pi_eta = pi[:nz, :], pi[nz:, :]
    hg_bar = assemble_weighted_blocks(topo.Hbar, left=None, right=g_list)
    resid = np.abs(-hg_bar @ pi_z - np.kron(np.eye(n1), exo.Q_v)).max()
    if resid > tol * max(1.0, np.abs(exo.Q_v).max()):
        raise IdentityViolated(
            f"steady edge-output identity fails (residual {resid:.3e})")
    return pi_z, pi_eta


def master_slave_maps(network, cset, tol=MAP_IDENTITY_TOL):
    """Steady-state maps of the master-slave regime.

    Solves the coupled edge + slave-reference subsystem against the slave
    commands and the master references, then the per-node regulator
    equations; verifies the slave neighboring-input identities and the
    output identities of every node map.
    """
    topo = network.topology
    exo = cset.exo
    eps = cset.eps
    if eps <= 0:
        raise ValidationError("eps", "master-slave maps need eps > 0")
    slaves, masters = cset.slaves, cset.masters
    l = len(slaves)
    n_masters = len(masters)
    e_list, f_list, g_list = _edge_block_rows(network)
    g_s, g_b, g_q = cset.G_S, cset.G_B, cset.G_Q
    em = _blkdiag(e_list)
    nz = em.shape[0]
    h = topo.H
    q = exo.q

    h_slave = h[slaves, :] if l else np.zeros((0, topo.M))
    htf_gq = assemble_weighted_blocks(h_slave.T, left=f_list, right=g_q)
    gb_hg = assemble_weighted_blocks(h_slave, left=g_b, right=g_list)
    a_ms = np.block([
        [em, htf_gq],
        [-eps * gb_hg, np.kron(np.eye(l), g_s)]]) if l else em

    b_nu = np.vstack([
        np.zeros((nz, l * q)),
        np.kron(np.eye(l), -eps * (g_b @ exo.Q_v))]) if l else \
        np.zeros((nz, 0))
    h_master = h[masters, :] if n_masters else np.zeros((0, topo.M))
    b_eta_top = assemble_weighted_blocks(
        h_master.T, left=f_list, right=exo.Q_eta)
    b_eta = np.vstack([b_eta_top,
                       np.zeros((a_ms.shape[0] - nz, n_masters * q))])

    pi_nu = sylvester_solve(a_ms, np.kron(np.eye(max(l, 0)), exo.S), b_nu) \
        if l else np.zeros((a_ms.shape[0], 0))
    pi_eta = sylvester_solve(a_ms, np.kron(np.eye(n_masters), exo.S), b_eta) \
        if n_masters else np.zeros((a_ms.shape[0], 0))
    pi_z_nu, pi_ref_nu = pi_nu[:nz, :], pi_nu[nz:, :]
    pi_z_eta, pi_ref_eta = pi_eta[:nz, :], pi_eta[nz:, :]

    hg = assemble_weighted_blocks(h, left=None, right=g_list)
    m_all = -hg @ pi_z_nu
    n_all = -hg @ pi_z_eta
    p = network.p
    m_blocks, n_blocks = {}, {}
    for i in range(topo.N):
        m_blocks[i + 1] = m_all[i * p:(i + 1) * p, :]
        n_blocks[i + 1] = n_all[i * p:(i + 1) * p, :]
    for rank, i in enumerate(slaves):
        want = np.zeros((p, l * q))
        want[:, rank * q:(rank + 1) * q] = exo.Q_v
        r = np.abs(m_blocks[i + 1] - want).max()
        if r > tol * max(1.0, np.abs(exo.Q_v).max()):
            raise IdentityViolated(
                f"slave {i + 1} steady neighboring-input identity fails "
                f"(residual {r:.3e})")
        r0 = np.abs(n_blocks[i + 1]).max()
        if r0 > tol:
            raise IdentityViolated(
                f"slave {i + 1} master-drive invisibility fails "
                f"(residual {r0:.3e})")

    pi_f_nu, pi_f_ref, pi_l_nu, pi_l_eta = {}, {}, {}, {}
    i_l_s = np.kron(np.eye(l), exo.S) if l else np.zeros((0, 0))
    i_m_s = np.kron(np.eye(n_masters), exo.S) if n_masters else \
        np.zeros((0, 0))
    for rank, i in enumerate(slaves):
        ctrl = cset.controllers[i]
        if l:
            pi_f_nu[i + 1] = regulator_map(
                ctrl.Ahat, ctrl.Dhat @ m_blocks[i + 1], ctrl.Chat, i_l_s,
                np.zeros((p, l * q)), tol)
        pi_f_ref[i + 1] = regulator_map(
            ctrl.Ahat, ctrl.Dhat_ref, ctrl.Chat, g_s, g_q, tol)
    for rank, i in enumerate(masters):
        ctrl = cset.controllers[i]
        if ctrl is None:
            continue  # static master: output pinned, no node map
        if l:
            pi_l_nu[i + 1] = regulator_map(
                ctrl.Ahat, ctrl.Dhat @ m_blocks[i + 1], ctrl.Chat, i_l_s,
                np.zeros((p, l * q)), tol)
        xi = np.zeros((1, n_masters))
        xi[0, rank] = 1.0
        drive = ctrl.Dhat @ n_blocks[i + 1] + np.kron(xi, ctrl.Dhat_ref)
        pi_l_eta[i + 1] = regulator_map(
            ctrl.Ahat, drive, ctrl.Chat, i_m_s,
            np.kron(xi, exo.Q_eta), tol)

    return MasterSlaveMaps(
        Pi_z_nu=pi_z_nu, Pi_z_eta=pi_z_eta, Pi_ref_nu=pi_ref_nu,
        Pi_ref_eta=pi_ref_eta, M=m_blocks, N_mat=n_blocks,
        Pi_f_nu=pi_f_nu, Pi_f_ref=pi_f_ref, Pi_l_nu=pi_l_nu,
        Pi_l_eta=pi_l_eta)


def cooperation_maps(network, cset, tol=MAP_IDENTITY_TOL):
    """Steady-state maps for the cooperation or master-slave regime."""
    if cset.regime == "cooperation":
        pi1, pi2 = {}, {}
        for i, ctrl in enumerate(cset.controllers):
            pi1[i + 1], pi2[i + 1] = cooperation_node_maps(
                ctrl, cset.exo, cset.G_S, cset.G_Q, tol)
        pi_z, pi_eta = cooperation_network_maps(network, cset, tol)
        return CooperationMaps(Pi_bar1=pi1, Pi_bar2=pi2,
                               Pi_tilde_z=pi_z, Pi_tilde_eta=pi_eta)
    if cset.regime == "master_slave":
        return master_slave_maps(network, cset, tol)
    raise ValidationError("regime", f"no cooperation maps for {cset.regime}")


def build_maps(network, cset, tol=MAP_IDENTITY_TOL):
    """Regulation maps appropriate to the controller set's regime."""
    if cset.regime in ("tracking", "sync"):
        pi = {}
        for i, ctrl in enumerate(cset.controllers):
            if ctrl is None:
                continue
            pi[i + 1] = regulator_map(
                ctrl.Ahat, ctrl.Dhat_ref, ctrl.Chat, cset.exo.S,
                cset.exo.Q_eta, tol)
        return TrackingMaps(Pi=pi)
    return cooperation_maps(network, cset, tol)


# ---------------------------------------------------------------------------
# controller set assembly


@dataclass(frozen=True)
class ControllerSet:
    """Per-network controller family sharing one coupling gain.

    ``controllers[i]`` is None exactly when node i+1 is a static master.
    ``G_S``/``G_B``/``G_Q`` are the cooperation reference-generator
    matrices (None in the tracking and sync regimes); ``edge_certificates``
    hold the strict-positive-real witnesses found for every edge.
    """

    regime: str
    eps: float
    controllers: tuple
    exo: Exosystem
    edge_certificates: tuple
    G_S: np.ndarray = None
    G_B: np.ndarray = None
    G_Q: np.ndarray = None
    slaves: tuple = ()
    masters: tuple = ()

    def node_certificates(self):
        return tuple(c.Phat for c in self.controllers if c is not None)


@dataclass(frozen=True)
class NodeGains:
    """Externally supplied gains for one node (G1/G2 optional)."""

    K_x: np.ndarray
    K_zeta: np.ndarray
    G1: np.ndarray = None
    G2: np.ndarray = None


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one assumption check, with its numerical margin."""

    name: str
    entity: str
    passed: bool
    margin: float
    detail: str = ""

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"{self.name:>4} {self.entity:<12} {status}  "
                f"margin={self.margin: .3e}  {self.detail}")


def cooperation_reference_matrices(exo):
    """Reference-generator triple (G_S, G_B, G_Q) for output cooperation.

    G_S stacks p copies of S; G_B/G_Q distribute the columns of B_eta and
    rows of Q_eta one per copy.  The passivity identities
    ``(I_p x P_eta) G_S + G_S.T (I_p x P_eta) <= 0`` and
    ``(I_p x P_eta) G_B = G_Q.T`` are verified on construction.
    """
    p, q = exo.p, exo.q
    g_s = np.kron(np.eye(p), exo.S)
    g_b = _blkdiag([exo.B_eta[:, [i]] for i in range(p)])
    g_q = _blkdiag([exo.Q_eta[[i], :] for i in range(p)])
    p_big = np.kron(np.eye(p), exo.P_eta)
    lyap = p_big @ g_s + g_s.T @ p_big
    if float(np.linalg.eigvalsh(_sym(lyap))[-1]) > 1e-9 * max(
            1.0, float(np.linalg.norm(p_big, 2)) *
            float(np.linalg.norm(g_s, 2))):
        raise CertificateFailed("reference generator is not marginal")
    resid = np.abs(p_big @ g_b - g_q.T).max()
    if resid > 1e-10 * max(1.0, np.abs(g_q).max()):
        raise CertificateFailed(
            f"reference passivity equality fails (residual {resid:.3e})")
    if not observable(g_s, g_q):
        warnings.warn(
            "(G_S, G_Q) is not observable; cooperation limits may not be "
            "asymptotically reached", stacklevel=2)
    return g_s, g_b, g_q


def check_assumptions(network, exo, regime, roles=None):
    """Structural assumption report: ranks (A1), reference spectrum (A2),
    edge strict positive realness (A3), connectivity (A4).

    Returns a list of CheckResult; the A3 entries carry the found
    certificates' slacks as margins.
    """
    results = []
    for i, node in enumerate(network.nodes):
        entity = f"node {i + 1}"
        if is_static(node):
            results.append(CheckResult("A1", entity, True, 0.0,
                                       "static master (no dynamics)"))
            continue
        ok = node.rank_conditions_ok()
        results.append(CheckResult(
            "A1", entity, ok, 0.0,
            "B, D_in full column rank; C full row rank" if ok
            else "rank condition fails"))
    for j, edge in enumerate(network.edges):
        ok = edge.rank_conditions_ok()
        results.append(CheckResult(
            "A1", f"edge {j + 1}", ok, 0.0,
            "F full column rank; G full row rank" if ok
            else "rank condition fails"))

    lam = np.linalg.eigvals(exo.S)
    re_max = float(np.abs(lam.real).max(initial=0.0))
    try:
        real_marginal_basis(exo.S, require_simple=True)
        results.append(CheckResult(
            "A2", "exosystem", True, re_max,
            f"spectrum {np.round(lam, 6)}"))
    except Exception as exc:
        results.append(CheckResult("A2", "exosystem", False, re_max,
                                   str(exc)))

    edge_certs = []
    for j, edge in enumerate(network.edges):
        try:
            cert = spr_certificate(edge)
            edge_certs.append(cert)
            results.append(CheckResult(
                "A3", f"edge {j + 1}", True, cert.slack,
                "strictly positive real"))
        except Exception as exc:
            edge_certs.append(None)
            results.append(CheckResult("A3", f"edge {j + 1}", False, 0.0,
                                       str(exc)))

    connected = check_connected(network.topology.H)
    results.append(CheckResult(
        "A4", "network", connected,
        float(network.topology.N - 1),
        "incidence matrix has row rank N-1" if connected
        else "network is disconnected"))

    if regime == "master_slave":
        roles = roles or {}
        masters = [i for i in range(network.n_nodes)
                   if roles.get(i + 1, "slave") == "master"]
        results.append(CheckResult(
            "roles", "network", bool(masters), float(len(masters)),
            f"{len(masters)} master(s)" if masters
            else "all nodes are slaves (need at least one master)"))
    return results, edge_certs


def assumption_report(network, exo, regime, roles=None, eps=0.0, gains=None,
                      seed=0, nu0=None):
    """Run every assumption check and attempt the controller construction.

    Never raises on check failures; returns ``(results, cset)`` where
    ``cset`` is None when any check failed.  ``nu0`` (cooperation command
    initial conditions) adds the zero-sum report line checked at
    simulation time.
    """
    if regime not in REGIMES:
        raise ValidationError("regime", f"unknown regime {regime!r}")
    if roles and regime != "master_slave":
        raise ValidationError("roles", "roles only apply to master_slave")
    gains = gains or {}
    results, edge_certs = check_assumptions(network, exo, regime, roles)
    failures = [r for r in results if not r.passed]

    slaves, masters = (), ()
    if regime == "master_slave":
        roles = roles or {}
        for i, node in enumerate(network.nodes):
            role = roles.get(i + 1)
            if role not in ("master", "slave"):
                raise ValidationError(
                    f"roles[{i + 1}]", "every node needs 'master' or 'slave'")
            if is_static(node) and role != "master":
                raise ValidationError(
                    f"roles[{i + 1}]", "static nodes must be masters")
        slaves = tuple(i for i in range(network.n_nodes)
                       if roles[i + 1] == "slave")
        masters = tuple(i for i in range(network.n_nodes)
                        if roles[i + 1] == "master")
        if not masters:
            raise AllSlaves("master_slave needs at least one master node")
    elif any(is_static(nd) for nd in network.nodes):
        raise ValidationError(
            "nodes", "static nodes are only supported as master_slave masters")

    g_s = g_b = g_q = None
    if regime in ("cooperation", "master_slave"):
        g_s, g_b, g_q = cooperation_reference_matrices(exo)
    if regime == "sync" and not observable(exo.S, exo.Q_eta):
        warnings.warn("(S, Q_eta) is not observable; the synchronization "
                      "limit may not be asymptotically reached", stacklevel=2)

    p = network.p
    controllers = []
    for i, node in enumerate(network.nodes):
        if is_static(node):
            controllers.append(None)
            continue
        node_regime = {"tracking": "tracking", "sync": "sync",
                       "cooperation": "cooperation"}.get(regime)
        if regime == "master_slave":
            node_regime = "slave" if i in slaves else "master"
        if node_regime in ("cooperation", "slave"):
            ref_s, ref_b, ref_q = g_s, g_b, g_q
        elif node_regime == "sync":
            ref_s, ref_b, ref_q = exo.S, exo.B_eta, exo.Q_eta
        else:
            ref_s, ref_b, ref_q = exo.S, np.zeros((exo.q, p)), exo.Q_eta
        try:
            supplied = gains.get(i + 1)
            if supplied is None:
                im = p_copy_internal_model(exo.S, p)
                ctrl = passify_node(node, im, exo, seed=seed + i)
                ctrl = make_node_controller(
                    node, node_regime, ctrl.K_x, ctrl.K_zeta, ctrl.im,
                    ref_s, ref_b, ref_q, eps, ctrl.Phat)
            else:
                if supplied.G1 is not None:
                    im = internal_model_from_matrices(
                        supplied.G1, supplied.G2, exo.S)
                else:
                    im = p_copy_internal_model(exo.S, p)
                phat = verify_A5(node, supplied.K_x, supplied.K_zeta, im)
                ctrl = make_node_controller(
                    node, node_regime, supplied.K_x, supplied.K_zeta, im,
                    ref_s, ref_b, ref_q, eps, phat)
            controllers.append(ctrl)
            results.append(CheckResult(
                "A5", f"node {i + 1}", True, ctrl.Phat.slack,
                "closed node Hurwitz and passive"))
        except Exception as exc:
            controllers.append(None)
            res = CheckResult("A5", f"node {i + 1}", False, 0.0, str(exc))
            results.append(res)
            failures.append(res)

    if regime == "cooperation" and nu0 is not None:
        total = np.zeros(exo.q)
        for vec in nu0.values():
            total = total + np.asarray(vec, dtype=float).ravel()
        norm = float(np.linalg.norm(total))
        results.append(CheckResult(
            "A6", "references", norm <= 1e-10, norm,
            "command initial conditions sum to zero" if norm <= 1e-10
            else f"command sum has norm {norm:.3e} (tracking will carry "
                 f"the predicted common bias)"))

    if failures:
        return results, None
    cset = ControllerSet(
        regime=regime, eps=float(eps), controllers=tuple(controllers),
        exo=exo, edge_certificates=tuple(edge_certs),
        G_S=g_s, G_B=g_b, G_Q=g_q, slaves=slaves, masters=masters)
    return results, cset


def build_controllers(network, exo, regime, roles=None, eps=0.0, gains=None,
                      seed=0):
    """Construct the full controller family for one regime.

    Per node, gains are synthesized by :func:`passify_node` unless supplied
    in ``gains`` (then verified via :func:`verify_A5`).  All structural
    assumptions are checked first; any failure raises AssumptionFailed with
    the full list.

    Parameters
    ----------
    regime : {"tracking", "sync", "cooperation", "master_slave"}
    roles : dict, optional
        1-based node id -> "master" | "slave"; required for master_slave.
    eps : float
        Shared coupling gain stored on the controller set.
    gains : dict, optional
        1-based node id -> NodeGains for externally supplied gains.
    """
    results, cset = assumption_report(network, exo, regime, roles=roles,
                                      eps=eps, gains=gains, seed=seed)
    if cset is None:
        raise AssumptionFailed([r for r in results if not r.passed])
    return cset
