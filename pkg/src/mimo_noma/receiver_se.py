"""Receive combining, instantaneous SINR, SE and the Monte-Carlo engine.

Two multiple-access schemes share one engine: "mmimo" (classical, combining
over the M antennas with the plain channel estimates) and "noma" (combining
over the MN-dimensional effective channels g = u kron h).  Data symbols are
never simulated: the SINR conditioned on the channel estimates is closed
form, so the Monte-Carlo loop averages only over channel realizations and
pilot noise.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .code_domain import build_Z, effective_channels_batch
from .network_scenario import CoherenceBudget, Scenario
from .pilot_mmse import estimation_statistics, simulate_pilot_phase
from .spatial_channel import complex_gaussian, psd_sqrt

SCHEMES = ("mmimo", "noma")
COMBINERS = ("mr", "mmse")


def mr_combiner(g_hat: np.ndarray) -> np.ndarray:
    """Maximum-ratio combining: the (effective) channel estimate itself."""
    return np.asarray(g_hat).copy()


def mmse_combiner(
    G: np.ndarray, powers: np.ndarray, Z: np.ndarray, k: int
) -> np.ndarray:
    """SINR-optimal multicell-MMSE combiner for UE column k.

    v = p_k (sum_i p_i g_i g_i^H + Z)^{-1} g_k, with G holding every UE's
    estimated (effective) channel as columns.  Solved against a Cholesky
    factor; Z includes sigma^2 I so the system is well conditioned.
    """
    A = (G * powers) @ G.conj().T + Z
    return powers[k] * cho_solve(cho_factor(0.5 * (A + A.conj().T)), G[:, k])


def instantaneous_sinr(
    v: np.ndarray, k: int, G: np.ndarray, powers: np.ndarray, Z: np.ndarray
) -> float:
    """Effective instantaneous SINR of UE column k for combiner v.

    gamma = p_k |v^H g_k|^2 / (sum_{i != k} p_i |v^H g_i|^2 + v^H Z v),
    where the sum runs over every other UE in the network and Z carries the
    estimation-error and noise contributions.
    """
    if not np.any(v):
        raise ValueError("combining vector must be nonzero")
    cross = np.abs(v.conj() @ G) ** 2
    signal = powers[k] * cross[k]
    interference = float(powers @ cross) - signal
    residual = float((v.conj() @ Z @ v).real)
    return float(signal / (interference + residual))


def max_sinr(G: np.ndarray, powers: np.ndarray, Z: np.ndarray, k: int) -> float:
    """Maximized SINR: p_k g_k^H (sum_{i != k} p_i g_i g_i^H + Z)^{-1} g_k."""
    others = np.delete(np.arange(G.shape[1]), k)
    A = (G[:, others] * powers[others]) @ G[:, others].conj().T + Z
    g = G[:, k]
    val = powers[k] * (g.conj() @ cho_solve(cho_factor(0.5 * (A + A.conj().T)), g))
    return float(val.real)


@dataclass
class SeRecord:
    """Aggregated Monte-Carlo result for one (scheme, combiner) pair."""

    scheme: str
    combiner: str
    model: str
    L: int
    K: int
    M: int
    N: int
    trials: int
    seed: int
    se_per_ue: np.ndarray  # (L, K) bit/s/Hz
    sum_se_mean: float  # cell-averaged sum SE
    sum_se_stderr: float


def prelog_factor(budget: CoherenceBudget, scheme: str, N: int) -> float:
    base = budget.tau_u / budget.tau_c
    return base / N if scheme == "noma" else base


def spectral_efficiency(
    gammas: np.ndarray,
    budget: CoherenceBudget,
    N: int,
    scheme: str = "noma",
) -> tuple[float, float]:
    """Mean SE and its standard error from per-trial SINR samples (trials,)."""
    gammas = np.asarray(gammas, dtype=float)
    if gammas.size == 0:
        raise ValueError("need at least one SINR sample")
    prelog = prelog_factor(budget, scheme, N)
    rates = prelog * np.log2(1.0 + gammas)
    stderr = rates.std(ddof=1) / np.sqrt(rates.size) if rates.size > 1 else 0.0
    return float(rates.mean()), float(stderr)


@dataclass
class DropData:
    """Per-drop precomputation shared by every Monte-Carlo trial."""

    sqrt_factors: np.ndarray  # (L, K, L, M, M)
    W: np.ndarray  # (L, K, L, M, M) estimation operators
    C: np.ndarray  # (L, K, L, M, M) error covariances
    Z_noma: np.ndarray  # (L, MN, MN)
    Z_classic: np.ndarray  # (L, M, M)
    codes: np.ndarray  # (L, K, N)


def prepare_drop(scenario: Scenario) -> DropData:
    L, K, M, N = scenario.L, scenario.K, scenario.M, scenario.N
    stats = estimation_statistics(scenario)
    sqrt_factors = np.zeros((L, K, L, M, M), dtype=complex)
    for l in range(L):
        for i in range(K):
            for j in range(L):
                sqrt_factors[l, i, j] = psd_sqrt(scenario.R[l, i, j])
    codes = scenario.spreading_sequences()
    powers_flat = scenario.powers.reshape(-1)
    codes_flat = codes.reshape(-1, N)
    Z_noma = np.zeros((L, M * N, M * N), dtype=complex)
    Z_classic = np.zeros((L, M, M), dtype=complex)
    for j in range(L):
        C_flat = stats.C[:, :, j].reshape(-1, M, M)
        Z_noma[j] = build_Z(powers_flat, codes_flat, C_flat, scenario.noise_power)
        Z_classic[j] = (
            np.einsum("i,imn->mn", powers_flat, C_flat)
            + scenario.noise_power * np.eye(M)
        )
    return DropData(
        sqrt_factors=sqrt_factors,
        W=stats.W,
        C=stats.C,
        Z_noma=Z_noma,
        Z_classic=Z_classic,
        codes=codes,
    )


def _bs_gammas(
    G: np.ndarray,
    powers: np.ndarray,
    Z: np.ndarray,
    served: np.ndarray,
    combiners: tuple[str, ...],
) -> dict[str, np.ndarray]:
    """SINR of the served UEs at one BS for the requested combiners.

    G: (dim, nUE) estimated channels of every UE in the network, powers
    aligned with its columns, served: column indices of this cell's UEs.
    """
    out: dict[str, np.ndarray] = {}
    if "mr" in combiners:
        V = G[:, served]
        cross = np.abs(V.conj().T @ G) ** 2  # (K, nUE)
        zquad = np.einsum("dk,dk->k", V.conj(), Z @ V).real
        sig = powers[served] * cross[np.arange(len(served)), served]
        den = cross @ powers - sig + zquad
        out["mr"] = sig / den
    if "mmse" in combiners:
        A = (G * powers) @ G.conj().T + Z
        cho = cho_factor(0.5 * (A + A.conj().T))
        V = cho_solve(cho, G[:, served]) * powers[served]
        cross = np.abs(V.conj().T @ G) ** 2
        zquad = np.einsum("dk,dk->k", V.conj(), Z @ V).real
        sig = powers[served] * cross[np.arange(len(served)), served]
        den = cross @ powers - sig + zquad
        out["mmse"] = sig / den
    return out


def trial_gammas(
    scenario: Scenario,
    drop: DropData,
    rng: np.random.Generator,
    pairs: tuple[tuple[str, str], ...],
) -> dict[tuple[str, str], np.ndarray]:
    """One Monte-Carlo trial: returns per-UE SINR arrays of shape (L, K)."""
    L, K, M = scenario.L, scenario.K, scenario.M
    z = complex_gaussian(rng, L, K, L, M)
    channels = np.einsum("lijmn,lijn->lijm", drop.sqrt_factors, z)
    Yp = simulate_pilot_phase(scenario, channels, rng)

    book = scenario.pilot_book
    despread = np.einsum(
        "jmt,st->jms", Yp, book.sequences.conj() / np.sqrt(book.tau_p)
    )  # (L, M, n_seq)
    y = _gather_despread(despread, book.assignment)  # (L, K, L_bs, M)
    h_hat = np.einsum("lijmn,lijn->lijm", drop.W, y)

    powers_flat = scenario.powers.reshape(-1)
    schemes = {s for s, _ in pairs}
    want = {
        s: tuple(c for sc, c in pairs if sc == s) for s in schemes
    }
    out: dict[tuple[str, str], np.ndarray] = {
        pair: np.zeros((L, K)) for pair in pairs
    }
    if "noma" in schemes:
        g_hat = effective_channels_batch(drop.codes[:, :, None, :], h_hat)
    for j in range(L):
        served = j * K + np.arange(K)
        if "mmimo" in schemes:
            G = h_hat[:, :, j].reshape(L * K, M).T
            res = _bs_gammas(G, powers_flat, drop.Z_classic[j], served, want["mmimo"])
            for c, gam in res.items():
                out[("mmimo", c)][j] = gam
        if "noma" in schemes:
            Gn = g_hat[:, :, j].reshape(L * K, -1).T
            res = _bs_gammas(Gn, powers_flat, drop.Z_noma[j], served, want["noma"])
            for c, gam in res.items():
                out[("noma", c)][j] = gam
    return out


def _gather_despread(despread: np.ndarray, assignment: np.ndarray) -> np.ndarray:
    """Pick each (UE, BS) pair's despread pilot column: -> (L, K, L, M)."""
    # despread: (L_bs, M, n_seq); assignment: (L, K)
    picked = despread[:, :, assignment]  # (L_bs, M, L, K)
    return picked.transpose(2, 3, 0, 1)


# ---------------------------------------------------------------------------
# Monte-Carlo driver with deterministic, worker-count-invariant parallelism
# ---------------------------------------------------------------------------

_POOL_STATE: dict = {}


def _pool_trial(seed_seq) -> dict:
    scenario = _POOL_STATE["scenario"]
    drop = _POOL_STATE["drop"]
    pairs = _POOL_STATE["pairs"]
    rng = np.random.default_rng(seed_seq)
    return trial_gammas(scenario, drop, rng, pairs)


def collect_gammas(
    scenario: Scenario,
    pairs: tuple[tuple[str, str], ...],
    trial_seeds: list[np.random.SeedSequence],
    workers: int = 1,
) -> dict[tuple[str, str], np.ndarray]:
    """Run one trial per seed and stack the SINRs: (trials, L, K) per pair.

    Results depend only on the seeds, not on the worker count: trials are
    mapped in order with pre-split rng streams and reduced in trial order.
    """
    drop = prepare_drop(scenario)
    if workers <= 1:
        results = [
            trial_gammas(scenario, drop, np.random.default_rng(s), pairs)
            for s in trial_seeds
        ]
    else:
        global _POOL_STATE
        _POOL_STATE = {"scenario": scenario, "drop": drop, "pairs": pairs}
        ctx = multiprocessing.get_context("fork")
        chunk = max(1, len(trial_seeds) // (4 * workers))
        with ctx.Pool(workers) as pool:
            results = pool.map(_pool_trial, trial_seeds, chunksize=chunk)
        _POOL_STATE = {}
    return {
        pair: np.stack([r[pair] for r in results]) for pair in pairs
    }


def run_monte_carlo(
    scenario_factory,
    pairs: tuple[tuple[str, str], ...],
    trials: int,
    seed: int,
    n_drops: int = 1,
    workers: int = 1,
) -> tuple[dict[tuple[str, str], np.ndarray], Scenario]:
    """Monte-Carlo over n_drops scenario drops x trials channel realizations.

    scenario_factory(rng) builds one drop; deterministic factories ignore the
    rng.  Returns stacked SINRs of shape (n_drops * trials, L, K) per
    (scheme, combiner) pair, plus the last drop's scenario for metadata.
    """
    root = np.random.SeedSequence(seed)
    drop_seeds = root.spawn(n_drops)
    all_gammas: dict[tuple[str, str], list[np.ndarray]] = {p: [] for p in pairs}
    scenario = None
    for dseed in drop_seeds:
        scen_seed, trial_root = dseed.spawn(2)
        scenario = scenario_factory(np.random.default_rng(scen_seed))
        gam = collect_gammas(scenario, pairs, trial_root.spawn(trials), workers)
        for p in pairs:
            all_gammas[p].append(gam[p])
    return {p: np.concatenate(all_gammas[p]) for p in pairs}, scenario


def aggregate(
    gammas: np.ndarray,
    scenario: Scenario,
    scheme: str,
    combiner: str,
    seed: int,
) -> SeRecord:
    """Reduce per-trial SINRs (trials, L, K) into an SeRecord."""
    n_eff = 1 if scheme == "mmimo" else scenario.N
    prelog = prelog_factor(scenario.budget, scheme, scenario.N)
    rates = prelog * np.log2(1.0 + gammas)  # (trials, L, K)
    se_per_ue = rates.mean(axis=0)
    cell_sum = rates.sum(axis=2).mean(axis=1)  # per-trial cell-averaged sum SE
    trials = gammas.shape[0]
    stderr = cell_sum.std(ddof=1) / np.sqrt(trials) if trials > 1 else 0.0
    return SeRecord(
        scheme=scheme,
        combiner=combiner,
        model=scenario.model,
        L=scenario.L,
        K=scenario.K,
        M=scenario.M,
        N=n_eff,
        trials=trials,
        seed=seed,
        se_per_ue=se_per_ue,
        sum_se_mean=float(cell_sum.mean()),
        sum_se_stderr=float(stderr),
    )
