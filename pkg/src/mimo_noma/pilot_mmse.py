"""Pilot-phase simulation and MMSE channel estimation.

Supports arbitrary (possibly non-orthogonal) pilot books through the full
Kronecker-structured estimator, plus a fast path for orthogonal shared pilots
that only ever inverts M x M matrices.  The general path doubles as the
correctness oracle for the fast path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .spatial_channel import complex_gaussian

if TYPE_CHECKING:
    from .network_scenario import Scenario


@dataclass(frozen=True)
class PilotBook:
    """Pilot sequences (each with ||phi||^2 = tau_p) and their UE assignment."""

    sequences: np.ndarray  # (n_seq, tau_p)
    assignment: np.ndarray  # (L, K) -> sequence index

    def __post_init__(self):
        seqs = np.asarray(self.sequences, dtype=complex)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=int))
        tau_p = self.tau_p
        norms = np.sum(np.abs(seqs) ** 2, axis=1)
        if not np.allclose(norms, tau_p, rtol=1e-9):
            raise ValueError("every pilot must satisfy ||phi||^2 = tau_p")
        if self.assignment.max() >= seqs.shape[0] or self.assignment.min() < 0:
            raise ValueError("pilot assignment index out of range")

    @property
    def tau_p(self) -> int:
        return self.sequences.shape[1]

    def is_orthogonal(self, tol: float = 1e-9) -> bool:
        gram = self.sequences @ self.sequences.conj().T
        off = gram - np.diag(np.diag(gram))
        return bool(np.abs(off).max() <= tol * self.tau_p) if off.size else True

    def sequence_for(self, l: int, i: int) -> np.ndarray:
        return self.sequences[self.assignment[l, i]]


def dft_pilot_book(tau_p: int, assignment: np.ndarray) -> PilotBook:
    """Orthogonal unit-modulus pilot book from the tau_p-point DFT matrix."""
    n = np.arange(tau_p)
    seqs = np.exp(-2j * np.pi * np.outer(n, n) / tau_p)
    return PilotBook(seqs, assignment)


@dataclass
class EstimationOutput:
    """MMSE estimate of one (UE, BS) channel with its second-order statistics."""

    h_hat: np.ndarray  # (M,)
    Phi: np.ndarray  # (M, M) covariance of the estimate
    C: np.ndarray  # (M, M) covariance of the error, C = R - Phi


def simulate_pilot_phase(
    scenario: "Scenario", channels: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Received pilot blocks Y_j at every BS.

    channels[l, i, j] is the length-M channel of UE (l, i) to BS j.  Returns
    an (L, M, tau_p) array: desired plus inter-cell pilots plus CN(0, sigma^2)
    noise.
    """
    book = scenario.pilot_book
    seqs = book.sequences[book.assignment]  # (L, K, tau_p)
    amp = np.sqrt(scenario.powers)  # (L, K)
    Y = np.sqrt(scenario.noise_power) * complex_gaussian(
        rng, scenario.L, scenario.M, book.tau_p
    )
    # Y[j] += sum_{l,i} sqrt(p_li) h_{li}^j phi_{li}^T
    Y += np.einsum("li,lijm,lit->jmt", amp, channels, seqs)
    return Y


def build_Q(scenario: "Scenario", j: int) -> np.ndarray:
    """Covariance of vec(Y_j): sum_{l,i} p_li (phi phi^H) kron R_{li}^j + sigma^2 I.

    Depends only on the BS index (the sum runs over every UE), so it is built
    once per BS and shared by all estimation targets.
    """
    book = scenario.pilot_book
    M, tau_p = scenario.M, book.tau_p
    Q = scenario.noise_power * np.eye(M * tau_p, dtype=complex)
    for l in range(scenario.L):
        for i in range(scenario.K):
            phi = book.sequence_for(l, i)
            Q += scenario.powers[l, i] * np.kron(
                np.outer(phi, phi.conj()), scenario.R[l, i, j]
            )
    return 0.5 * (Q + Q.conj().T)


def mmse_estimate(
    Y_j: np.ndarray,
    target: tuple[int, int, int],
    scenario: "Scenario",
    Q: np.ndarray | None = None,
) -> EstimationOutput:
    """General MMSE estimate of h_{li}^j for an arbitrary pilot book.

    h_hat = sqrt(p) (phi^H kron R) Q^{-1} vec(Y_j), with
    Phi = p (phi^H kron R) Q^{-1} (phi kron R) and C = R - Phi.  Solves
    against a Cholesky factor of Q instead of inverting (sigma^2 > 0 keeps Q
    well conditioned).
    """
    l, i, j = target
    if Q is None:
        Q = build_Q(scenario, j)
    phi = scenario.pilot_book.sequence_for(l, i)
    R = scenario.R[l, i, j]
    p = scenario.powers[l, i]
    B = np.kron(phi.conj()[None, :], R)  # (M, M*tau_p), equals phi^H kron R
    cho = cho_factor(Q)
    y = Y_j.reshape(-1, order="F")  # vec() stacks columns
    h_hat = np.sqrt(p) * (B @ cho_solve(cho, y))
    Phi = p * (B @ cho_solve(cho, B.conj().T))
    Phi = 0.5 * (Phi + Phi.conj().T)
    C = R - Phi
    return EstimationOutput(h_hat=h_hat, Phi=Phi, C=0.5 * (C + C.conj().T))


def mmse_estimate_orthogonal_fastpath(
    Y_j: np.ndarray, target: tuple[int, int, int], scenario: "Scenario"
) -> EstimationOutput:
    """Orthogonal-pilot MMSE estimate using only M x M solves.

    Despreads y = Y phi^* / sqrt(tau_p) and inverts
    Psi = sum_{UEs sharing the pilot} p tau_p R + sigma^2 I.  Output is
    numerically identical to mmse_estimate whenever the book is orthogonal.
    """
    book = scenario.pilot_book
    if not book.is_orthogonal():
        raise ValueError("fast path requires an orthogonal pilot book")
    l, i, j = target
    tau_p = book.tau_p
    t = book.assignment[l, i]
    phi = book.sequences[t]
    R = scenario.R[l, i, j]
    p = scenario.powers[l, i]

    y = Y_j @ phi.conj() / np.sqrt(tau_p)
    Psi = scenario.noise_power * np.eye(scenario.M, dtype=complex)
    for lp in range(scenario.L):
        for ip in range(scenario.K):
            if book.assignment[lp, ip] == t:
                Psi += scenario.powers[lp, ip] * tau_p * scenario.R[lp, ip, j]
    cho = cho_factor(0.5 * (Psi + Psi.conj().T))
    h_hat = np.sqrt(p * tau_p) * (R @ cho_solve(cho, y))
    Phi = p * tau_p * (R @ cho_solve(cho, R))
    Phi = 0.5 * (Phi + Phi.conj().T)
    C = R - Phi
    return EstimationOutput(h_hat=h_hat, Phi=Phi, C=0.5 * (C + C.conj().T))


@dataclass
class EstimationStats:
    """Per-scenario estimation operators and error statistics (orthogonal pilots).

    W[l, i, j] maps the despread pilot observation at BS j on UE (l, i)'s
    pilot to the MMSE estimate; Phi and C are the corresponding estimate and
    error covariances.  All of these depend only on the scenario statistics,
    not on channel realizations, so they are computed once per drop.
    """

    W: np.ndarray  # (L, K, L, M, M)
    Phi: np.ndarray  # (L, K, L, M, M)
    C: np.ndarray  # (L, K, L, M, M)


def estimation_statistics(scenario: "Scenario") -> EstimationStats:
    book = scenario.pilot_book
    if not book.is_orthogonal():
        raise ValueError("batch estimation statistics require orthogonal pilots")
    L, K, M = scenario.L, scenario.K, scenario.M
    tau_p = book.tau_p
    W = np.zeros((L, K, L, M, M), dtype=complex)
    Phi = np.zeros_like(W)
    C = np.zeros_like(W)
    for j in range(L):
        # Psi per pilot index at BS j
        psi_inv_R: dict[int, np.ndarray] = {}
        for t in np.unique(book.assignment):
            Psi = scenario.noise_power * np.eye(M, dtype=complex)
            mask = book.assignment == t
            for lp, ip in zip(*np.nonzero(mask)):
                Psi += scenario.powers[lp, ip] * tau_p * scenario.R[lp, ip, j]
            psi_inv_R[int(t)] = cho_factor(0.5 * (Psi + Psi.conj().T))
        for l in range(L):
            for i in range(K):
                t = int(book.assignment[l, i])
                R = scenario.R[l, i, j]
                p = scenario.powers[l, i]
                solveR = cho_solve(psi_inv_R[t], R)  # Psi^{-1} R
                # R Psi^{-1} is the adjoint of Psi^{-1} R (both Hermitian)
                W[l, i, j] = np.sqrt(p * tau_p) * solveR.conj().T
                P = p * tau_p * (R @ solveR)
                Phi[l, i, j] = 0.5 * (P + P.conj().T)
                C[l, i, j] = scenario.R[l, i, j] - Phi[l, i, j]
    return EstimationStats(W=W, Phi=Phi, C=C)
