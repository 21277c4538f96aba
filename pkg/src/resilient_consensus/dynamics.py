"""Agent dynamics x(k+1) = A x(k) + B u(k), closed-loop assembly and stepping."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graph import GraphError, GraphSpectrum

MARGINAL_TOL = 1e-9


class DivergenceError(RuntimeError):
    """A state update produced non-finite values."""


@dataclass(frozen=True)
class LtiModel:
    """Shared (A, B) dynamics for every agent.

    Construction records the marginal/unstable eigenvalue set of A (|lambda|
    >= 1 - tol) and warns when (A, B) has an uncontrollable non-Schur mode.
    """

    A: np.ndarray
    B: np.ndarray
    marginal_eigenvalues: tuple = ()

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.atleast_2d(np.array(self.B, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got {B.shape}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        eigs = np.linalg.eigvals(A)
        marginal = tuple(complex(l) for l in eigs if abs(l) >= 1.0 - MARGINAL_TOL)
        object.__setattr__(self, "marginal_eigenvalues", marginal)
        for lam in marginal:
            # PBH test: non-Schur modes must be controllable for any gain design
            pencil = np.hstack([lam * np.eye(A.shape[0]) - A, B])
            if np.linalg.matrix_rank(pencil, tol=1e-9) < A.shape[0]:
                warnings.warn(
                    f"(A, B) is not stabilizable: uncontrollable mode at {lam:.6g}",
                    stacklevel=2,
                )
                break

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class NetworkState:
    """Global stacked state at step k; x_c carries the sensor-corrupted copy."""

    k: int
    x: np.ndarray
    x_c: np.ndarray


def make_state(k: int, x, x_c=None) -> NetworkState:
    x = np.asarray(x, dtype=float).ravel().copy()
    xc = x.copy() if x_c is None else np.asarray(x_c, dtype=float).ravel().copy()
    if xc.shape != x.shape:
        raise ValueError("x and x_c must have identical shapes")
    x.setflags(write=False)
    xc.setflags(write=False)
    return NetworkState(k=k, x=x, x_c=xc)


@dataclass(frozen=True)
class ClosedLoopMatrix:
    """A_c = I_N (x) A - c Lhat (x) BK with its spectrum and the gain-design flag."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    coupling_schur: bool


def assemble_closed_loop(model: LtiModel, spectrum: GraphSpectrum, ctrl) -> ClosedLoopMatrix:
    """Build the global closed-loop matrix and check A - c*lam_i*BK Schur for i >= 2."""
    n_agents = spectrum.normalized_laplacian.shape[0]
    BK = model.B @ ctrl.K
    if BK.shape != (model.state_dim, model.state_dim):
        raise ValueError(f"gain K has incompatible shape {ctrl.K.shape}")
    a_c = np.kron(np.eye(n_agents), model.A) - ctrl.c * np.kron(spectrum.normalized_laplacian, BK)
    eigs = np.linalg.eigvals(a_c)
    schur = all(
        np.abs(np.linalg.eigvals(model.A - ctrl.c * lam * BK)).max() < 1.0
        for lam in spectrum.nonzero_eigenvalues()
    )
    return ClosedLoopMatrix(matrix=a_c, eigenvalues=eigs, coupling_schur=schur)


def step(model: LtiModel, state: NetworkState, controls: np.ndarray,
         actuator_injection: np.ndarray | None = None,
         sensor_injection_next: np.ndarray | None = None) -> NetworkState:
    """Advance the plant one step.

    ``controls`` is the per-agent input matrix (N, m); the actuator injection
    is added to it before it reaches the plant, and the sensor injection is
    overlaid on the next true state to form x_c.
    """
    n, m = model.state_dim, model.input_dim
    N = state.x.size // n
    U = np.asarray(controls, dtype=float).reshape(N, m)
    if actuator_injection is not None:
        U = U + np.asarray(actuator_injection, dtype=float).reshape(N, m)
    X = state.x.reshape(N, n)
    x_next = (X @ model.A.T + U @ model.B.T).ravel()
    if not np.isfinite(x_next).all():
        raise DivergenceError(f"non-finite state at step {state.k + 1}")
    if sensor_injection_next is not None:
        xc_next = x_next + np.asarray(sensor_injection_next, dtype=float).ravel()
    else:
        xc_next = x_next
    return make_state(state.k + 1, x_next, xc_next)


@dataclass(frozen=True)
class ConsensusPrediction:
    """Attack-free asymptote k -> A^k (sum_i p_i x_i(0)), one vector per agent."""

    model: LtiModel
    weighted_initial: np.ndarray

    def value(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self.model.A, k) @ self.weighted_initial

    def trajectory(self, horizon: int) -> np.ndarray:
        out = np.empty((horizon + 1, self.model.state_dim))
        v = self.weighted_initial.copy()
        out[0] = v
        for k in range(horizon):
            v = self.model.A @ v
            out[k + 1] = v
        return out


def predict_consensus_value(model: LtiModel, spectrum: GraphSpectrum, x0) -> ConsensusPrediction:
    """Consensus trajectory of the nominal network; requires a spanning tree."""
    if spectrum.left_eigvec_zero is None:
        raise GraphError("consensus prediction needs a simple zero eigenvalue (spanning tree)")
    n = model.state_dim
    X0 = np.asarray(x0, dtype=float).reshape(-1, n)
    if X0.shape[0] != spectrum.left_eigvec_zero.size:
        raise ValueError("x0 does not match the number of agents")
    weighted = spectrum.left_eigvec_zero @ X0
    return ConsensusPrediction(model=model, weighted_initial=weighted)
