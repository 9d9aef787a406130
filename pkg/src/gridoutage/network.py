"""Grid topology and the DC power-flow objects derived from it.

A :class:`Network` is an immutable description of a transmission grid:
buses with net injections, and lines with positive series reactances.
From it we build the bus-line incidence matrix ``M``, the susceptance
matrix ``B = M D_x M^T`` (a weighted graph Laplacian with line weights
``1/x_l``), and the angle-dependent matrix ``A`` that maps a binary
line-removal indicator to the induced injection mismatch.

All vectors are ordered by internal indices (buses ``0..N-1``, lines
``0..L-1``).  External identifiers (case-file bus numbers, 1-based line
numbers) only appear at API boundaries; use the ``bus_index``/``bus_id``
and ``line_index``/``line_id`` maps to convert.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .errors import TopologyError

__all__ = [
    "Network",
    "MeasurementMatrix",
    "incidence_matrix",
    "susceptance_matrix",
    "dc_flow_solve",
    "measurement_matrix",
]


@dataclass
class Network:
    """Immutable grid topology with per-unit injections.

    Parameters
    ----------
    bus_ids : sequence of int
        External bus numbers; position defines the internal index.
    lines : sequence of (from_id, to_id, x)
        One entry per line, endpoints given as external bus ids and
        ``x`` the series reactance in per-unit.  Position defines the
        internal line index; the external line number is position + 1.
    p : array, shape (N,)
        Net per-unit injection at each bus (generation minus load).
    slack : int
        Internal index of the angle-reference bus.
    """

    bus_ids: tuple
    lines: tuple
    p: np.ndarray
    slack: int = 0

    # derived index arrays, filled in __post_init__
    from_idx: np.ndarray = field(init=False, repr=False)
    to_idx: np.ndarray = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.bus_ids = tuple(int(b) for b in self.bus_ids)
        self.lines = tuple((int(f), int(t), float(x)) for f, t, x in self.lines)
        self.p = np.asarray(self.p, dtype=float)

        n = len(self.bus_ids)
        if len(set(self.bus_ids)) != n:
            raise ValueError("duplicate bus ids")
        if self.p.shape != (n,):
            raise ValueError(f"injection vector has shape {self.p.shape}, expected ({n},)")
        if not 0 <= self.slack < n:
            raise ValueError(f"slack index {self.slack} out of range")

        self._bus_pos = {b: i for i, b in enumerate(self.bus_ids)}
        seen_pairs = set()
        f_idx, t_idx, xs = [], [], []
        for f, t, x in self.lines:
            if f == t:
                raise ValueError(f"line {f}-{t} is a self loop")
            if f not in self._bus_pos or t not in self._bus_pos:
                raise ValueError(f"line {f}-{t} references an unknown bus")
            if x <= 0:
                raise ValueError(f"line {f}-{t} has nonpositive reactance {x}")
            pair = (min(f, t), max(f, t))
            if pair in seen_pairs:
                raise ValueError(f"parallel lines between buses {f} and {t} must be merged")
            seen_pairs.add(pair)
            f_idx.append(self._bus_pos[f])
            t_idx.append(self._bus_pos[t])
            xs.append(x)
        self.from_idx = np.asarray(f_idx, dtype=np.intp)
        self.to_idx = np.asarray(t_idx, dtype=np.intp)
        self.x = np.asarray(xs, dtype=float)

        if not self.is_connected():
            raise TopologyError("network graph is disconnected")

    # -- size and index maps -------------------------------------------------

    @property
    def n_buses(self):
        return len(self.bus_ids)

    @property
    def n_lines(self):
        return len(self.lines)

    def bus_index(self, bus_id):
        return self._bus_pos[bus_id]

    def bus_id(self, index):
        return self.bus_ids[index]

    @staticmethod
    def line_index(line_id):
        """External 1-based line number -> internal index."""
        return line_id - 1

    @staticmethod
    def line_id(index):
        return index + 1

    # -- graph helpers -------------------------------------------------------

    def adjacency(self, keep=None):
        """Bus adjacency matrix over the lines selected by mask ``keep``."""
        if keep is None:
            f, t = self.from_idx, self.to_idx
        else:
            keep = np.asarray(keep, dtype=bool)
            f, t = self.from_idx[keep], self.to_idx[keep]
        ones = np.ones(len(f))
        n = self.n_buses
        return sp.coo_matrix((np.r_[ones, ones], (np.r_[f, t], np.r_[t, f])), shape=(n, n))

    def is_connected(self, removed_lines=()):
        """True if the grid stays connected after removing the given line indices."""
        keep = np.ones(self.n_lines, dtype=bool)
        for l in removed_lines:
            keep[l] = False
        ncomp, _ = connected_components(self.adjacency(keep), directed=False)
        return ncomp == 1

    def lines_at(self, bus_index):
        """Internal indices of the lines incident to a bus."""
        return np.flatnonzero((self.from_idx == bus_index) | (self.to_idx == bus_index))


def incidence_matrix(net):
    """N x L bus-line incidence matrix: +1 at the from bus, -1 at the to bus."""
    L = net.n_lines
    rows = np.r_[net.from_idx, net.to_idx]
    cols = np.r_[np.arange(L), np.arange(L)]
    data = np.r_[np.ones(L), -np.ones(L)]
    return sp.coo_matrix((data, (rows, cols)), shape=(net.n_buses, L)).tocsc()


def susceptance_matrix(net):
    """Susceptance matrix ``B = M D_x M^T`` (weighted Laplacian, weights 1/x)."""
    m = incidence_matrix(net)
    d = sp.diags(1.0 / net.x)
    return (m @ d @ m.T).tocsr()


def dc_flow_solve(b, p, slack):
    """Solve the DC power-flow system ``B theta = p`` with a fixed reference angle.

    The slack row and column are removed and the reduced (N-1) system is
    solved exactly; ``theta[slack] = 0``.  Any injection imbalance is
    implicitly absorbed at the slack bus (its row is dropped).

    Raises
    ------
    TopologyError
        If the reduced system is singular (disconnected graph).
    """
    p = np.asarray(p, dtype=float)
    n = b.shape[0]
    if p.shape != (n,):
        raise ValueError(f"injection vector has shape {p.shape}, expected ({n},)")
    keep = np.ones(n, dtype=bool)
    keep[slack] = False
    reduced = b[keep][:, keep].tocsc()
    try:
        lu = splu(reduced)
        theta_red = lu.solve(p[keep])
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise TopologyError(f"reduced flow system is singular: {exc}") from None
    if not np.all(np.isfinite(theta_red)):
        raise TopologyError("reduced flow system is singular (non-finite solution)")
    theta = np.zeros(n)
    theta[keep] = theta_red
    return theta


@dataclass
class MeasurementMatrix:
    """Angle-dependent outage-response matrix ``A = M D_x diag(M^T theta)``.

    Column ``l`` equals ``(theta_f - theta_t) / x_l`` times the incidence
    vector of line ``l``, so ``A s`` is the injection mismatch produced by
    removing the lines selected by a binary ``s`` at the given angles.
    """

    matrix: sp.csc_matrix
    theta: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self):
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


def measurement_matrix(net, theta):
    """Build the outage-response matrix for a given angle vector."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (net.n_buses,):
        raise ValueError(f"angle vector has shape {theta.shape}, expected ({net.n_buses},)")
    L = net.n_lines
    diff = (theta[net.from_idx] - theta[net.to_idx]) / net.x
    rows = np.r_[net.from_idx, net.to_idx]
    cols = np.r_[np.arange(L), np.arange(L)]
    data = np.r_[diff, -diff]
    mat = sp.coo_matrix((data, (rows, cols)), shape=(net.n_buses, L)).tocsc()
    return MeasurementMatrix(matrix=mat, theta=theta.copy())
