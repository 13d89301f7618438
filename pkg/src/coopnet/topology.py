"""Graph structure of the network: incidence matrix, connectivity and the
block-matrix assemblers used by the closed-loop constructions.

The network is an undirected graph of N nodes and M oriented edges.  Edge
orientation is encoded in the N x M incidence matrix H: column j carries a
single +1 (positive end) and a single -1 (negative end).  ``complement_basis``
returns the (N-1) x N matrix T with orthonormal rows orthogonal to the
all-ones vector, and ``Hbar = T @ H`` is the reduced incidence used whenever
the network-average mode is split off.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooSmall,
    IndexOutOfRange,
    SelfLoop,
    ValidationError,
)

#: relative singular-value threshold for every rank decision in the toolkit
RANK_RTOL = 1e-10


def matrix_rank(a, rtol=RANK_RTOL):
    """Rank of ``a`` by singular values above ``rtol`` times the largest."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def full_column_rank(a, rtol=RANK_RTOL):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return matrix_rank(a, rtol) == a.shape[1]


def full_row_rank(a, rtol=RANK_RTOL):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return matrix_rank(a, rtol) == a.shape[0]


def incidence_from_edge_list(edges, n_nodes):
    """Build the N x M incidence matrix from 1-based edge endpoint pairs.

    Parameters
    ----------
    edges : sequence of (int, int)
        ``(positive_node, negative_node)`` pairs, indices in ``[1, n_nodes]``.
    n_nodes : int
        Number of nodes N.

    Returns
    -------
    ndarray
        N x M matrix with ``H[i, j] = +1`` iff node ``i+1`` is the positive
        end of edge ``j+1``, ``-1`` iff the negative end, else 0.

    Raises
    ------
    SelfLoop
        If an edge connects a node to itself.
    IndexOutOfRange
        If an endpoint lies outside ``[1, n_nodes]``.
    """
    n_nodes = int(n_nodes)
    if n_nodes < 1:
        raise DimensionTooSmall(f"need at least one node, got N={n_nodes}")
    h = np.zeros((n_nodes, len(edges)))
    for j, (pos, neg) in enumerate(edges):
        pos, neg = int(pos), int(neg)
        for end in (pos, neg):
            if not 1 <= end <= n_nodes:
                raise IndexOutOfRange(
                    f"edge {j + 1} endpoint {end} outside [1, {n_nodes}]")
        if pos == neg:
            raise SelfLoop(f"edge {j + 1} connects node {pos} to itself")
        h[pos - 1, j] = 1.0
        h[neg - 1, j] = -1.0
    return h


def validate_incidence(h):
    """Check the one +1 / one -1 column structure of an incidence matrix."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    for j in range(h.shape[1]):
        col = h[:, j]
        plus = np.count_nonzero(col == 1.0)
        minus = np.count_nonzero(col == -1.0)
        others = np.count_nonzero(col) - plus - minus
        if plus != 1 or minus != 1 or others != 0:
            raise ValidationError(
                f"H[:, {j}]",
                f"incidence column needs exactly one +1 and one -1, got {col}")
    return h


def check_connected(h):
    """True iff the graph described by incidence matrix ``h`` is connected.

    Connectivity is equivalent to ``rank(H) == N - 1`` (the all-ones vector
    always spans part of the left null space; connectivity makes it all of
    it).
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    return matrix_rank(h) == h.shape[0] - 1


def complement_basis(n_nodes):
    """Orthonormal basis of the complement of the all-ones vector.

    Returns the (N-1) x N matrix T with ``T @ 1 = 0`` and ``T @ T.T = I``,
    built deterministically from the Helmert vectors
    ``e_1 + ... + e_k - k e_{k+1}``.

    Raises
    ------
    DimensionTooSmall
        If ``n_nodes < 2``.
    """
    n = int(n_nodes)
    if n < 2:
        raise DimensionTooSmall(f"complement basis needs N >= 2, got {n}")
    t = np.zeros((n - 1, n))
    for k in range(1, n):
        t[k - 1, :k] = 1.0
        t[k - 1, k] = -float(k)
        t[k - 1] /= np.sqrt(k * (k + 1.0))
    return t


def reduced_incidence(t, h):
    """Reduced incidence ``Hbar = T @ H`` (full row rank when connected)."""
    return np.asarray(t, dtype=float) @ np.asarray(h, dtype=float)


@dataclass(frozen=True)
class Topology:
    """Incidence structure of the network.

    Attributes
    ----------
    N, M : int
        Node and edge counts.
    H : ndarray
        N x M incidence matrix with entries in {-1, 0, +1}.
    T : ndarray
        (N-1) x N complement basis (``T @ 1 = 0``, ``T @ T.T = I``).
    Hbar : ndarray
        Reduced incidence ``T @ H``.
    """

    N: int
    M: int
    H: np.ndarray
    T: np.ndarray
    Hbar: np.ndarray
    edge_ends: tuple = field(default=())

    @classmethod
    def from_edge_list(cls, edges, n_nodes):
        """Build the full topology record from 1-based endpoint pairs."""
        h = incidence_from_edge_list(edges, n_nodes)
        if n_nodes >= 2:
            t = complement_basis(n_nodes)
            hbar = reduced_incidence(t, h)
        else:
            t = np.zeros((0, 1))
            hbar = np.zeros((0, len(edges)))
        return cls(N=int(n_nodes), M=len(edges), H=h, T=t, Hbar=hbar,
                   edge_ends=tuple((int(a), int(b)) for a, b in edges))

    @property
    def connected(self):
        return check_connected(self.H)

    def validate(self):
        """Re-check every structural invariant; raises ValidationError."""
        validate_incidence(self.H)
        if self.H.shape != (self.N, self.M):
            raise ValidationError("H", "shape does not match (N, M)")
        if self.N >= 2:
            if np.abs(self.T @ np.ones(self.N)).max() > 1e-12:
                raise ValidationError("T", "rows not orthogonal to ones")
            if np.abs(self.T @ self.T.T - np.eye(self.N - 1)).max() > 1e-12:
                raise ValidationError("T", "rows not orthonormal")
            if np.abs(self.Hbar - self.T @ self.H).max() > 1e-12:
                raise ValidationError("Hbar", "not equal to T @ H")
        return self


def _factor(factors, k, n_expected):
    """Normalize the left/right factor argument of assemble_weighted_blocks."""
    if factors is None:
        return None
    if isinstance(factors, np.ndarray) or np.isscalar(factors):
        return np.atleast_2d(np.asarray(factors, dtype=float))
    if len(factors) != n_expected:
        raise DimensionMismatch(
            f"expected {n_expected} factor blocks, got {len(factors)}")
    return np.atleast_2d(np.asarray(factors[k], dtype=float))


def assemble_weighted_blocks(h_like, left=None, right=None):
    """Stack the block matrix with block (i, j) = ``h_like[i, j] * left_i @ right_j``.

    This is the single constructor behind every overlined coupling matrix:
    the node/edge interconnection blocks, their reduced (T-projected)
    variants, and the block-diagonal special case (``h_like`` = identity).

    Parameters
    ----------
    h_like : array_like
        Scalar weight per block; typically H, H.T, Hbar, or an identity.
    left, right : None, matrix, or list of matrices
        Row-block and column-block factors.  ``None`` stands for the
        identity factor (the other factor is used as-is); a single matrix is
        broadcast to every block row/column; a list supplies one factor per
        block row/column.

    Raises
    ------
    DimensionMismatch
        If a nonzero block's factors have incompatible inner dimensions, or
        block sizes are inconsistent along a row or column.
    """
    h = np.atleast_2d(np.asarray(h_like, dtype=float))
    nr, nc = h.shape

    def block(i, j):
        li = _factor(left, i, nr)
        rj = _factor(right, j, nc)
        if li is None and rj is None:
            return np.array([[h[i, j]]])
        if li is None:
            return h[i, j] * rj
        if rj is None:
            return h[i, j] * li
        if li.shape[1] != rj.shape[0]:
            if h[i, j] == 0.0:
                return np.zeros((li.shape[0], rj.shape[1]))
            raise DimensionMismatch(
                f"block ({i}, {j}): left is {li.shape}, right is {rj.shape}")
        return h[i, j] * (li @ rj)

    if nr == 0 or nc == 0:
        heights = [_factor(left, i, nr).shape[0] if left is not None else 1
                   for i in range(nr)]
        widths = [_factor(right, j, nc).shape[1] if right is not None else 1
                  for j in range(nc)]
        return np.zeros((sum(heights), sum(widths)))
    rows = [[block(i, j) for j in range(nc)] for i in range(nr)]
    heights = [r[0].shape[0] for r in rows]
    widths = [rows[0][j].shape[1] for j in range(nc)]
    for i in range(nr):
        for j in range(nc):
            if rows[i][j].shape != (heights[i], widths[j]):
                raise DimensionMismatch(
                    f"block ({i}, {j}) has shape {rows[i][j].shape}, "
                    f"expected ({heights[i]}, {widths[j]})")
    return np.block(rows)
