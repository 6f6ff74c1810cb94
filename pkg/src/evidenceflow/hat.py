"""Laplacian, hat matrix and network estimates of the aggregate model."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RowNotFound
from .model import edge_label
from .numerics import laplacian_pinv

VALIDATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class HatMatrix:
    """``entries[k, j]`` is the coefficient of direct estimate ``j`` in network estimate ``k``.

    Rows and columns follow ``edges`` exactly, orientation included.
    """

    edges: tuple
    entries: np.ndarray

    @property
    def labels(self):
        return [edge_label(e) for e in self.edges]

    def row(self, a, b):
        """Signed row for comparison ``(a, b)``; a reversed edge gives the negated row."""
        for k, (c, d) in enumerate(self.edges):
            if (c, d) == (a, b):
                return self.entries[k].copy()
            if (c, d) == (b, a):
                return -self.entries[k]
        raise RowNotFound(f"no hat-matrix row for comparison {a}-{b} (not a direct comparison)")


def laplacian(net):
    """``L = B^T W B`` of the aggregate network."""
    B = net.incidence
    return B.T @ net.weights @ B


def hat_matrix(net, validate=False):
    """``H = B L^+ B^T W``.

    With ``validate=True`` the result is checked for idempotence and for
    flow conservation of every row (the node divergence of row ``ab`` must
    be +1 at ``a``, -1 at ``b`` and zero elsewhere).
    """
    B, W = net.incidence, net.weights
    H = B @ laplacian_pinv(laplacian(net)) @ B.T @ W
    H.flags.writeable = False
    hm = HatMatrix(net.edges, H)
    if validate:
        check_hat(hm, B)
    return hm


def check_hat(hm, B):
    H = hm.entries
    idem = np.max(np.abs(H @ H - H)) if H.size else 0.0
    if idem > VALIDATION_TOL:
        raise AssertionError(f"hat matrix not idempotent (residual {idem:.3e})")
    # divergence of row ab at each node must equal B[ab] itself
    div = H @ B
    cons = np.max(np.abs(div - B)) if H.size else 0.0
    if cons > VALIDATION_TOL:
        raise AssertionError(f"hat rows violate flow conservation (residual {cons:.3e})")
    diag = np.diag(H)
    if np.any(diag < -1e-10) or np.any(diag > 1 + 1e-10):
        raise AssertionError("hat-matrix diagonal outside [0, 1]")


def network_estimates(H, theta_dir):
    """``theta_net = H theta_dir``."""
    theta = np.asarray(theta_dir, dtype=float)
    entries = H.entries if isinstance(H, HatMatrix) else np.asarray(H, dtype=float)
    if theta.shape != (entries.shape[1],):
        raise DimensionMismatch(f"expected {entries.shape[1]} direct estimates, got shape {theta.shape}")
    return entries @ theta
