"""Plug-and-play ADMM for complex linear inverse problems.

Solves min_x 1/2 ||y - Phi x||^2 + lam * J(x) where the regularizer J is
known only through a denoiser: the classical ADMM auxiliary update is
replaced by z = D(x + u, sigma) with noise level sigma^2 = lam / (2 rho).
One round is

    x <- (Phi^H Phi + rho I)^-1 (Phi^H y + rho (z - u))   closed-form LS
    z <- D(x + u, sigma)                                  plug-in prior
    u <- u + x - z                                        scaled dual

The operator may be a dense matrix or any object providing ``apply``,
``adjoint_apply``, ``regularized_solve(b, rho)`` and ``size`` (see
`DenseOperator` for the reference implementation); structured channels
supply their own fast solver through the same four attributes.

The estimate reported after each round is ``z``: the denoiser output is the
iterate that carries the prior, and at the consensus fixed point x = z they
coincide anyway.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "DenseOperator",
    "PnpProblem",
    "PnpState",
    "as_operator",
    "primal_update",
    "dual_update",
    "run",
]

Denoiser = Callable[[np.ndarray, float], np.ndarray]


class DenseOperator:
    """Dense matrix with a cached regularized normal-equation solver."""

    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=complex)
        if self.a.ndim != 2:
            raise ValueError(f"operator must be a matrix, got shape {self.a.shape}")
        self._gram = self.a.conj().T @ self.a
        self._factor: tuple[float, tuple] | None = None

    @property
    def size(self) -> int:
        """Length of the unknown vector."""
        return self.a.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.a @ x

    def adjoint_apply(self, y: np.ndarray) -> np.ndarray:
        return self.a.conj().T @ y

    def regularized_solve(self, b: np.ndarray, rho: float) -> np.ndarray:
        """Solve (A^H A + rho I) x = b; the factorization is reused while
        rho stays unchanged."""
        if self._factor is None or self._factor[0] != rho:
            g = self._gram + rho * np.eye(self.size)
            self._factor = (rho, cho_factor(g))
        return cho_solve(self._factor[1], b)


def as_operator(phi) -> DenseOperator:
    """Coerce a dense matrix to `DenseOperator`; pass structured operators through."""
    if isinstance(phi, np.ndarray):
        return DenseOperator(phi)
    for attr in ("apply", "adjoint_apply", "regularized_solve", "size"):
        if not hasattr(phi, attr):
            raise TypeError(f"operator lacks required attribute {attr!r}")
    return phi


@dataclass(eq=False)
class PnpProblem:
    """One inverse-problem instance with its ADMM parameters.

    ``rho_growth`` > 1 multiplies the penalty each round (the denoiser
    noise level sigma = sqrt(lam / (2 rho)) shrinks accordingly); the
    default keeps rho fixed.
    """

    phi: object
    y: np.ndarray
    rho: float = 0.1
    lam: float = 0.5
    n_iter: int = 10
    rho_growth: float = 1.0

    def __post_init__(self) -> None:
        self.phi = as_operator(self.phi)
        self.y = np.asarray(self.y, dtype=complex).reshape(-1)
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.rho_growth < 1.0:
            raise ValueError(f"rho_growth must be >= 1, got {self.rho_growth}")

    def sigma(self, rho: float | None = None) -> float:
        """Denoiser noise level sqrt(lam / (2 rho))."""
        return float(np.sqrt(self.lam / (2.0 * (self.rho if rho is None else rho))))


@dataclass(eq=False)
class PnpState:
    """Iterate triple plus per-round diagnostics."""

    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    iteration: int = 0
    residuals: list = field(default_factory=list)  # ||x - z|| after each round
    objectives: list = field(default_factory=list)  # 0.5 ||y - Phi x||^2
    nmse: list = field(default_factory=list)  # ||z - truth||^2 / ||truth||^2

    @property
    def estimate(self) -> np.ndarray:
        return self.z


def primal_update(problem: PnpProblem, z_dot: np.ndarray, rho: float | None = None) -> np.ndarray:
    """Exact minimizer of 1/2 ||y - Phi x||^2 + rho/2 ||x - z_dot||^2."""
    rho = problem.rho if rho is None else rho
    op = problem.phi
    return op.regularized_solve(op.adjoint_apply(problem.y) + rho * z_dot, rho)


def dual_update(state: PnpState) -> np.ndarray:
    """Scaled dual ascent u + (x - z)."""
    return state.u + state.x - state.z


def run(
    problem: PnpProblem,
    denoiser: Denoiser,
    truth: np.ndarray | None = None,
    stop_tol: float | None = None,
) -> PnpState:
    """Run the PnP-ADMM loop from zero initialization.

    ``denoiser(v, sigma)`` must return a vector of the same length.  When
    ``truth`` is given, the per-round NMSE of the estimate is recorded.
    ``stop_tol`` enables early exit once ||x - z|| / ||z|| falls below it.
    """
    n = problem.phi.size
    state = PnpState(
        x=np.zeros(n, dtype=complex), z=np.zeros(n, dtype=complex), u=np.zeros(n, dtype=complex)
    )
    rho = problem.rho
    truth_energy = None if truth is None else float(np.sum(np.abs(truth) ** 2))
    for _ in range(problem.n_iter):
        state.x = primal_update(problem, state.z - state.u, rho)
        state.z = np.asarray(denoiser(state.x + state.u, problem.sigma(rho)))
        if state.z.shape != state.x.shape:
            raise ValueError(
                f"denoiser returned shape {state.z.shape}, expected {state.x.shape}"
            )
        state.u = dual_update(state)
        state.iteration += 1
        residual = float(np.linalg.norm(state.x - state.z))
        state.residuals.append(residual)
        misfit = problem.y - problem.phi.apply(state.x)
        state.objectives.append(0.5 * float(np.sum(np.abs(misfit) ** 2)))
        if truth is not None:
            err = float(np.sum(np.abs(state.z - truth) ** 2))
            state.nmse.append(err / truth_energy)
        rho *= problem.rho_growth
        z_norm = float(np.linalg.norm(state.z))
        if stop_tol is not None and z_norm > 0 and residual / z_norm < stop_tol:
            break
    return state
