"""Multi-cell network construction: geometry, fading statistics and books.

Default parameters follow the running network setup: 250 m square cells,
sigma^2 = -94 dBm, p = 20 dBm per UE, tau_c = 200 samples per coherence
block, urban path loss with log-normal shadowing, BS height 25 m and UE
height 1.5 m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .code_domain import SpreadingBook, hadamard_book
from .pilot_mmse import PilotBook, dft_pilot_book
from .spatial_channel import (
    AngularSpec,
    ArrayGeometry,
    correlation_2d,
    correlation_3d,
)

BS_HEIGHT_M = 25.0
UE_HEIGHT_M = 1.5
SHADOW_STD_DB = 10.0

DEFAULT_CELL_SIDE_M = 250.0
DEFAULT_TAU_C = 200
DEFAULT_P_DBM = 20.0
DEFAULT_NOISE_DBM = -94.0
DEFAULT_ASD_DEG = 2.0
TWO_USER_DISTANCE_M = 140.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def large_scale_gain(distance_km: float, shadow_db: float = 0.0) -> float:
    """Linear channel gain: -148.1 - 37.6 log10(d / 1 km) + F dB."""
    if distance_km <= 0:
        raise ValueError("distance must be positive")
    beta_db = -148.1 - 37.6 * np.log10(distance_km) + shadow_db
    return 10.0 ** (beta_db / 10.0)


@dataclass(frozen=True)
class CoherenceBudget:
    """Coherence-block sample split: tau_c = tau_p + tau_u + tau_d."""

    tau_c: int
    tau_p: int
    tau_u: int
    tau_d: int = 0

    def __post_init__(self):
        if min(self.tau_c, self.tau_p, self.tau_u, self.tau_d) < 0:
            raise ValueError("block budget entries must be non-negative")
        if self.tau_p + self.tau_u + self.tau_d != self.tau_c:
            raise ValueError("tau_p + tau_u + tau_d must equal tau_c")


@dataclass(frozen=True)
class ClusterSpec:
    """UE cluster geometry for the multi-cell drops."""

    radius_m: float = 10.0
    min_bs_dist_m: float = 25.0
    subcluster_size: int = 2

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("cluster radius must be positive")
        if self.subcluster_size < 1:
            raise ValueError("subcluster size must be positive")


@dataclass
class Scenario:
    """Immutable description of one network drop.

    R[l, i, j] is the spatial correlation matrix of the channel from UE i of
    cell l to BS j, already scaled by the large-scale gain (path loss plus
    shadowing).
    """

    model: str  # "2d" | "3d"
    geometry: ArrayGeometry
    L: int
    K: int
    cell_side_m: float
    bs_positions: np.ndarray  # (L, 2) meters
    ue_positions: np.ndarray  # (L, K, 2) meters
    powers: np.ndarray  # (L, K) linear watts
    noise_power: float  # linear watts
    R: np.ndarray  # (L, K, L, M, M)
    budget: CoherenceBudget
    pilot_book: PilotBook
    spreading_book: SpreadingBook
    code_assignment: np.ndarray  # (L, K) -> code index
    asd_deg: float = DEFAULT_ASD_DEG
    subcluster_assignment: np.ndarray | None = None  # (L, K) -> subcluster index

    @property
    def M(self) -> int:
        return self.geometry.M

    @property
    def N(self) -> int:
        return self.spreading_book.N

    def spreading_sequences(self) -> np.ndarray:
        """Per-UE spreading sequences, shape (L, K, N)."""
        return self.spreading_book.sequences[self.code_assignment]

    def __post_init__(self):
        if self.powers.shape != (self.L, self.K):
            raise ValueError("powers must be (L, K)")
        if np.any(self.powers < 0):
            raise ValueError("transmit powers must be non-negative")
        if self.noise_power < 0:
            raise ValueError("noise power must be non-negative")
        if self.R.shape != (self.L, self.K, self.L, self.M, self.M):
            raise ValueError("R must be (L, K, L, M, M)")


def _geometry_for(model: str, M: int) -> ArrayGeometry:
    if model == "2d":
        return ArrayGeometry.linear(M)
    if model == "3d":
        return ArrayGeometry.planar(M)
    raise ValueError(f"unknown channel model {model!r}")


def _link_correlation(
    geometry: ArrayGeometry,
    model: str,
    azimuth_deg: float,
    distance_m: float,
    asd_deg: float,
    beta: float,
) -> np.ndarray:
    """Correlation matrix of one (UE, BS) link, scaled to average gain beta."""
    if model == "2d":
        spec = AngularSpec(azimuth_deg, asd_deg)
        return correlation_2d(geometry, spec, beta).R
    elevation = -np.rad2deg(np.arctan((BS_HEIGHT_M - UE_HEIGHT_M) / distance_m))
    spec = AngularSpec(azimuth_deg, asd_deg, elevation_deg=elevation)
    return correlation_3d(geometry, spec, beta).R


def _wrap_angle(angle_deg: float) -> float:
    wrapped = (angle_deg + 180.0) % 360.0 - 180.0
    # keep +180 as +180 rather than mapping it to -180
    if wrapped == -180.0 and angle_deg > 0:
        return 180.0
    return wrapped


def build_two_user_scenario(
    interferer_angle_deg: float,
    model: str,
    M: int = 64,
    asd_deg: float = DEFAULT_ASD_DEG,
    N: int = 2,
    ue_distance_m: float = TWO_USER_DISTANCE_M,
    tau_c: int = DEFAULT_TAU_C,
    p_dbm: float = DEFAULT_P_DBM,
    noise_dbm: float = DEFAULT_NOISE_DBM,
) -> Scenario:
    """Single-cell two-user scenario for the interfering-angle sweep.

    UE 0 sits at a nominal azimuth of 30 degrees, UE 1 at the given angle,
    both at the same distance from the BS with no shadowing so that the sweep
    isolates angular effects.
    """
    angle = _wrap_angle(interferer_angle_deg)
    L, K = 1, 2
    geometry = _geometry_for(model, M)
    azimuths = np.array([30.0, angle])
    distance_km = ue_distance_m / 1000.0
    beta = large_scale_gain(distance_km)

    R = np.zeros((L, K, L, M, M), dtype=complex)
    ue_positions = np.zeros((L, K, 2))
    for i in range(K):
        az = azimuths[i]
        R[0, i, 0] = _link_correlation(geometry, model, az, ue_distance_m, asd_deg, beta)
        ue_positions[0, i] = ue_distance_m * np.array(
            [np.cos(np.deg2rad(az)), np.sin(np.deg2rad(az))]
        )

    tau_p = K
    budget = CoherenceBudget(tau_c=tau_c, tau_p=tau_p, tau_u=tau_c - tau_p)
    assignment = np.arange(K)[None, :]
    return Scenario(
        model=model,
        geometry=geometry,
        L=L,
        K=K,
        cell_side_m=DEFAULT_CELL_SIDE_M,
        bs_positions=np.zeros((L, 2)),
        ue_positions=ue_positions,
        powers=np.full((L, K), dbm_to_watt(p_dbm)),
        noise_power=dbm_to_watt(noise_dbm),
        R=R,
        budget=budget,
        pilot_book=dft_pilot_book(tau_p, assignment),
        spreading_book=hadamard_book(N),
        code_assignment=np.tile(np.arange(K) % N, (L, 1)),
        asd_deg=asd_deg,
    )


def build_cluster_scenario(
    K: int,
    N: int,
    rng: np.random.Generator,
    L: int = 4,
    M: int = 64,
    model: str = "3d",
    asd_deg: float = DEFAULT_ASD_DEG,
    cluster: ClusterSpec | None = None,
    cell_side_m: float = DEFAULT_CELL_SIDE_M,
    tau_c: int = DEFAULT_TAU_C,
    p_dbm: float = DEFAULT_P_DBM,
    noise_dbm: float = DEFAULT_NOISE_DBM,
) -> Scenario:
    """Multi-cell drop with one UE cluster per cell.

    Cells form a square grid with the BS at each cell center.  A cluster
    center is drawn uniformly in each cell, redrawn until it is at least
    min_bs_dist_m from its serving BS; K UEs are placed uniformly in the disk
    of radius radius_m around it.  UEs are partitioned uniformly at random
    into K/N subclusters of N UEs, and the N orthogonal codes are assigned by
    a random permutation within each subcluster.
    """
    if K % N != 0:
        raise ValueError(f"K={K} must be a multiple of the spreading length N={N}")
    if cluster is None:
        cluster = ClusterSpec(subcluster_size=N)
    grid = int(round(np.sqrt(L)))
    if grid * grid != L:
        raise ValueError("cluster scenario expects a square grid of cells")
    geometry = _geometry_for(model, M)

    bs_positions = np.array(
        [
            ((c + 0.5) * cell_side_m, (r + 0.5) * cell_side_m)
            for r in range(grid)
            for c in range(grid)
        ]
    )

    ue_positions = np.zeros((L, K, 2))
    for l in range(L):
        origin = bs_positions[l] - 0.5 * cell_side_m
        while True:
            center = origin + rng.uniform(0.0, cell_side_m, size=2)
            if np.linalg.norm(center - bs_positions[l]) >= cluster.min_bs_dist_m:
                break
        radius = cluster.radius_m * np.sqrt(rng.uniform(size=K))
        angle = rng.uniform(0.0, 2.0 * np.pi, size=K)
        ue_positions[l] = center + np.stack(
            [radius * np.cos(angle), radius * np.sin(angle)], axis=1
        )

    # shadow fading per (UE, BS) link, drawn once per drop
    shadow_db = rng.normal(0.0, SHADOW_STD_DB, size=(L, K, L))

    R = np.zeros((L, K, L, M, M), dtype=complex)
    for l in range(L):
        for i in range(K):
            for j in range(L):
                delta = ue_positions[l, i] - bs_positions[j]
                dist = float(np.linalg.norm(delta))
                azimuth = float(np.rad2deg(np.arctan2(delta[1], delta[0])))
                beta = large_scale_gain(dist / 1000.0, shadow_db[l, i, j])
                R[l, i, j] = _link_correlation(
                    geometry, model, azimuth, dist, asd_deg, beta
                )

    # random partition into subclusters, random code permutation within each
    code_assignment = np.zeros((L, K), dtype=int)
    subcluster_assignment = np.zeros((L, K), dtype=int)
    for l in range(L):
        order = rng.permutation(K)
        for s in range(K // N):
            members = order[s * N : (s + 1) * N]
            code_assignment[l, members] = rng.permutation(N)
            subcluster_assignment[l, members] = s

    tau_p = K
    budget = CoherenceBudget(tau_c=tau_c, tau_p=tau_p, tau_u=tau_c - tau_p)
    assignment = np.tile(np.arange(K), (L, 1))  # pilot reuse 1 across cells
    return Scenario(
        model=model,
        geometry=geometry,
        L=L,
        K=K,
        cell_side_m=cell_side_m,
        bs_positions=bs_positions,
        ue_positions=ue_positions,
        powers=np.full((L, K), dbm_to_watt(p_dbm)),
        noise_power=dbm_to_watt(noise_dbm),
        R=R,
        budget=budget,
        pilot_book=dft_pilot_book(tau_p, assignment),
        spreading_book=hadamard_book(N),
        code_assignment=code_assignment,
        asd_deg=asd_deg,
        subcluster_assignment=subcluster_assignment,
    )
