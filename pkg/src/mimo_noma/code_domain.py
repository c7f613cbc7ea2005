"""Orthogonal spreading books, effective channels and residual covariance.

A UE's data symbol is spread over N channel uses by a length-N sequence u,
so the receiver sees the MN-dimensional effective channel g = u kron h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard


@dataclass(frozen=True)
class SpreadingBook:
    """N orthogonal length-N spreading sequences, each with ||u||^2 = N."""

    sequences: np.ndarray  # (N, N), row i = sequence i

    def __post_init__(self):
        seqs = np.asarray(self.sequences, dtype=complex)
        object.__setattr__(self, "sequences", seqs)
        n = self.N
        gram = seqs @ seqs.conj().T
        if not np.allclose(gram, n * np.eye(seqs.shape[0]), atol=1e-9 * max(n, 1)):
            raise ValueError("spreading sequences must be orthogonal with norm^2 = N")

    @property
    def N(self) -> int:
        return self.sequences.shape[1]


def hadamard_book(N: int) -> SpreadingBook:
    """Orthogonal code book: Hadamard rows for power-of-two N, DFT otherwise."""
    if N < 1:
        raise ValueError("spreading length must be positive")
    if N & (N - 1) == 0:
        return SpreadingBook(hadamard(N).astype(complex))
    return dft_book(N)


def dft_book(N: int) -> SpreadingBook:
    """Orthogonal unit-modulus book from the N-point DFT matrix; valid for any N."""
    n = np.arange(N)
    return SpreadingBook(np.exp(-2j * np.pi * np.outer(n, n) / N))


def effective_channel(u: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Effective channel g = u kron h seen after stacking the N spread samples."""
    return np.kron(np.asarray(u), np.asarray(h))


def effective_channels_batch(u: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Vectorized u kron h over leading axes: (..., N), (..., M) -> (..., N*M)."""
    out = u[..., :, None] * h[..., None, :]
    return out.reshape(*out.shape[:-2], -1)


def build_Z(
    powers: np.ndarray,
    codes: np.ndarray,
    C: np.ndarray,
    noise_power: float,
) -> np.ndarray:
    """Residual interference-plus-noise covariance at one BS.

    Z = sum_i p_i (u_i u_i^H) kron C_i + sigma^2 I_{MN}, where the sum runs
    over every UE in the network, C_i is its channel-estimation error
    covariance at this BS, and u_i its spreading sequence.

    powers: (nUE,), codes: (nUE, N), C: (nUE, M, M).
    """
    n_ue, N = codes.shape
    M = C.shape[-1]
    if powers.shape[0] != n_ue or C.shape[0] != n_ue:
        raise ValueError("powers, codes and C must agree on the UE count")
    # (u u^H) kron C, accumulated over UEs without forming per-UE krons
    uu = np.einsum("ia,ib->iab", codes, codes.conj())  # (nUE, N, N)
    Z = np.einsum("i,iab,imn->ambn", powers, uu, C).reshape(M * N, M * N)
    Z += noise_power * np.eye(M * N)
    return 0.5 * (Z + Z.conj().T)
