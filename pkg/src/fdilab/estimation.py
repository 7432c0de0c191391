"""Weighted least-squares state estimation and residual-based bad-data tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .errors import ContractError, SingularSystemError
from .grid import MeasurementMatrix, NoiseModel

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True, eq=False)
class WlsEstimate:
    x_hat: np.ndarray
    residual: np.ndarray
    j_value: np.ndarray | float


@dataclass(frozen=True, eq=False)
class StaticVerdict:
    is_bad: np.ndarray | bool
    statistic: np.ndarray | float
    threshold: float


class WlsSolver:
    """QR factorisation of the whitened measurement matrix, reusable across z.

    Estimating many snapshots against the same H and R is the common case
    (Monte Carlo trials, whole traces), so the factorisation is done once.
    """

    def __init__(self, h: MeasurementMatrix | np.ndarray, noise: NoiseModel):
        hm = h.h if isinstance(h, MeasurementMatrix) else np.asarray(h, dtype=float)
        if noise.sigma.shape[0] != hm.shape[0]:
            raise ContractError(f"noise has {noise.sigma.shape[0]} entries, H has {hm.shape[0]} rows")
        if hm.shape[0] < hm.shape[1]:
            raise SingularSystemError(f"{hm.shape[0]} measurements cannot determine {hm.shape[1]} states")
        self.h = hm
        self.inv_sigma = 1.0 / noise.sigma
        self.q, self.r = np.linalg.qr(hm * self.inv_sigma[:, None])
        diag = np.abs(np.diag(self.r))
        if diag.size and diag.min() <= 1e-10 * diag.max():
            raise SingularSystemError("H is rank deficient; normal equations are singular")

    @property
    def dof(self) -> int:
        return self.h.shape[0] - self.h.shape[1]

    def estimate(self, z: np.ndarray) -> WlsEstimate:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.h.shape[0]:
            raise ContractError(f"z has {z.shape[-1]} entries, expected {self.h.shape[0]}")
        zw = z * self.inv_sigma
        rhs = zw @ self.q
        x_hat = linalg.solve_triangular(self.r, rhs.T).T
        residual = z - x_hat @ self.h.T
        wres = residual * self.inv_sigma
        j_value = np.einsum("...i,...i->...", wres, wres)
        return WlsEstimate(x_hat, residual, j_value if j_value.ndim else float(j_value))


def wls_estimate(z: np.ndarray, h: MeasurementMatrix | np.ndarray, noise: NoiseModel) -> WlsEstimate:
    """Minimise (z - Hx)^T R^-1 (z - Hx); J is reported without the 1/2 factor."""
    return WlsSolver(h, noise).estimate(z)


def chi_square_threshold(dof: int, alpha: float) -> float:
    """Upper-tail critical value: P(chi2_dof > tau) = alpha."""
    if not (isinstance(dof, (int, np.integer)) and dof >= 1):
        raise ContractError(f"dof must be a positive integer, got {dof!r}")
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(stats.chi2.isf(alpha, dof))


def static_detect(
    z: np.ndarray,
    h: MeasurementMatrix | np.ndarray,
    noise: NoiseModel,
    alpha: float = DEFAULT_ALPHA,
    solver: WlsSolver | None = None,
) -> StaticVerdict:
    solver = solver or WlsSolver(h, noise)
    if solver.dof < 1:
        raise ContractError("static detection needs more measurements than states")
    tau = chi_square_threshold(solver.dof, alpha)
    j = solver.estimate(z).j_value
    return StaticVerdict(np.asarray(j) > tau if np.ndim(j) else j > tau, j, tau)


def l2_residual_norm(z: np.ndarray, h: MeasurementMatrix | np.ndarray) -> np.ndarray | float:
    """Unweighted residual norm ||z - H x_hat||_2 (the R = I special case)."""
    hm = h.h if isinstance(h, MeasurementMatrix) else np.asarray(h, dtype=float)
    est = wls_estimate(z, hm, NoiseModel(np.ones(hm.shape[0])))
    norm = np.linalg.norm(est.residual, axis=-1)
    return norm if norm.ndim else float(norm)
