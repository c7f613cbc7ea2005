import numpy as np
import pytest

from mimo_noma.code_domain import SpreadingBook, hadamard_book
from mimo_noma.network_scenario import CoherenceBudget, Scenario
from mimo_noma.pilot_mmse import PilotBook, dft_pilot_book
from mimo_noma.spatial_channel import ArrayGeometry


def random_psd(rng, M, scale=1.0):
    A = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2)
    R = A @ A.conj().T / M
    return scale * 0.5 * (R + R.conj().T)


def make_scenario(
    rng,
    L=2,
    K=2,
    M=4,
    N=2,
    tau_p=None,
    noise_power=1e-2,
    power=1.0,
    tau_c=200,
    R=None,
    pilot_book=None,
    model="2d",
):
    """Small synthetic scenario with random PSD correlation matrices."""
    tau_p = K if tau_p is None else tau_p
    if R is None:
        R = np.zeros((L, K, L, M, M), dtype=complex)
        for l in range(L):
            for i in range(K):
                for j in range(L):
                    R[l, i, j] = random_psd(rng, M)
    if pilot_book is None:
        pilot_book = dft_pilot_book(tau_p, np.tile(np.arange(K) % tau_p, (L, 1)))
    return Scenario(
        model=model,
        geometry=ArrayGeometry.linear(M),
        L=L,
        K=K,
        cell_side_m=250.0,
        bs_positions=np.zeros((L, 2)),
        ue_positions=np.zeros((L, K, 2)),
        powers=np.full((L, K), power),
        noise_power=noise_power,
        R=R,
        budget=CoherenceBudget(tau_c, tau_p, tau_c - tau_p),
        pilot_book=pilot_book,
        spreading_book=hadamard_book(N),
        code_assignment=np.tile(np.arange(K) % N, (L, 1)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
