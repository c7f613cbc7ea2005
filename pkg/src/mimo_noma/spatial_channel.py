"""One-ring spatial correlation models and correlated Rayleigh fading.

Implements the 2D (uniform linear array) and 3D (square planar array)
local-scattering correlation matrices with a uniform scatterer distribution,
channel realization via the matrix square root, and the channel-orthogonality
variance used as a favorable-propagation diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import toeplitz

# Gauss-Legendre nodes per angular dimension; the integrands are analytic so
# this is far beyond convergence for the angular spreads of interest.
QUAD_NODES = 200

# Eigenvalues of a generated correlation matrix may be slightly negative due
# to roundoff; anything below -PSD_TOL * beta indicates a real failure.
PSD_TOL = 1e-10

# A uniform distribution with standard deviation s has half-width sqrt(3)*s.
# The angular spread is specified as a standard deviation.
UNIFORM_HALF_WIDTH = np.sqrt(3.0)


@dataclass(frozen=True)
class ArrayGeometry:
    """BS antenna array layout with half-wavelength spacing.

    Linear arrays have all M antennas on one axis.  Planar arrays are square:
    M_v rows of M_h antennas with M_h = M_v = sqrt(M), indexed vertical-major
    (antenna m sits at row m % M_v, column m // M_v).
    """

    kind: str  # "linear" | "planar"
    M: int
    M_h: int = 1
    M_v: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "planar"):
            raise ValueError(f"unknown array kind {self.kind!r}")
        if self.M < 1:
            raise ValueError("antenna count must be positive")
        if self.kind == "planar" and self.M_h * self.M_v != self.M:
            raise ValueError("planar array requires M_h * M_v == M")

    @staticmethod
    def linear(M: int) -> "ArrayGeometry":
        return ArrayGeometry("linear", M, M_h=M, M_v=1)

    @staticmethod
    def planar(M: int) -> "ArrayGeometry":
        root = round(np.sqrt(M))
        if root * root != M:
            raise ValueError(f"planar array needs a perfect-square M, got {M}")
        return ArrayGeometry("planar", M, M_h=root, M_v=root)


@dataclass(frozen=True)
class AngularSpec:
    """Nominal angles and angular spread of the scattering cluster.

    asd_deg is the angular standard deviation: scatterer azimuths are uniform
    over [azimuth - sqrt(3)*asd, azimuth + sqrt(3)*asd].  For the planar model
    the elevation is deterministic at elevation_deg unless elevation_asd_deg
    is given, in which case it is independently uniform with that standard
    deviation.
    """

    azimuth_deg: float
    asd_deg: float
    elevation_deg: float | None = None
    elevation_asd_deg: float | None = None

    def __post_init__(self):
        if self.asd_deg <= 0:
            raise ValueError("angular spread must be positive")
        if not -180.0 <= self.azimuth_deg <= 180.0:
            raise ValueError("azimuth must lie in [-180, 180] degrees")
        if self.elevation_asd_deg is not None and self.elevation_asd_deg <= 0:
            raise ValueError("elevation spread must be positive")


@dataclass
class CorrelationMatrix:
    """Hermitian PSD spatial correlation matrix with average gain beta = tr(R)/M."""

    R: np.ndarray
    beta: float = field(init=False)
    _sqrt: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        R = np.asarray(self.R, dtype=complex)
        herm_err = np.linalg.norm(R - R.conj().T)
        scale = np.linalg.norm(R)
        if scale > 0 and herm_err / scale > 1e-10:
            raise ValueError("correlation matrix is not Hermitian")
        self.R = 0.5 * (R + R.conj().T)
        self.beta = float(np.trace(self.R).real) / self.M

    @property
    def M(self) -> int:
        return self.R.shape[0]

    def sqrt_factor(self) -> np.ndarray:
        """Return F with F F^H = R, via eigendecomposition with PSD clipping.

        Cholesky is not usable here: small angular spreads make R numerically
        singular.
        """
        if self._sqrt is None:
            self._sqrt = psd_sqrt(self.R, self.beta)
        return self._sqrt


def psd_sqrt(R: np.ndarray, beta: float | None = None) -> np.ndarray:
    """Eigendecomposition-based square root of a Hermitian PSD matrix."""
    lam, U = np.linalg.eigh(R)
    if beta is None:
        beta = float(np.trace(R).real) / R.shape[0]
    if lam.size and lam[0] < -PSD_TOL * max(beta, 1e-300):
        raise ValueError(f"matrix is not PSD (min eigenvalue {lam[0]:.3e})")
    return U * np.sqrt(np.clip(lam, 0.0, None))


def correlation_2d(
    geometry: ArrayGeometry,
    angles: AngularSpec,
    beta: float,
    quad_nodes: int = QUAD_NODES,
) -> CorrelationMatrix:
    """Correlation matrix of a uniform linear array under the 2D one-ring model.

    Entry (m1, m2) is the expectation of exp(j*pi*(m1-m2)*sin(azimuth + phi))
    over the uniform scatterer azimuth offset phi, scaled by beta and
    evaluated by Gauss-Legendre quadrature.  The matrix is Hermitian Toeplitz.
    """
    if geometry.kind != "linear":
        raise ValueError("correlation_2d requires a linear array")
    delta = UNIFORM_HALF_WIDTH * np.deg2rad(angles.asd_deg)
    phi0 = np.deg2rad(angles.azimuth_deg)
    x, w = leggauss(quad_nodes)
    phi = phi0 + delta * x
    d = np.arange(geometry.M)
    # weights w sum to 2 on [-1,1]; the 1/(2*Delta) density cancels the
    # interval scaling, leaving w/2.
    col = beta * np.exp(1j * np.pi * np.outer(d, np.sin(phi))) @ (w / 2.0)
    return CorrelationMatrix(toeplitz(col))


def correlation_3d(
    geometry: ArrayGeometry,
    angles: AngularSpec,
    beta: float,
    quad_nodes: int = QUAD_NODES,
) -> CorrelationMatrix:
    """Correlation matrix of a square planar array under the 3D one-ring model.

    The integrand separates into a vertical factor exp(j*pi*dr*sin(theta)) over
    row-index differences and a horizontal factor
    exp(j*pi*dc*cos(theta)*sin(phi)) over column-index differences, averaged
    over the scatterer angle distribution (uniform azimuth; deterministic or
    uniform elevation).  The horizontal integral is contracted over phi first,
    which makes the cost O(M_h * n^2) instead of O(M^2 * n^2).
    """
    if geometry.kind != "planar":
        raise ValueError("correlation_3d requires a planar array")
    if angles.elevation_deg is None:
        raise ValueError("3D model requires a nominal elevation")
    x, w = leggauss(quad_nodes)
    wn = w / 2.0
    delta = UNIFORM_HALF_WIDTH * np.deg2rad(angles.asd_deg)
    phi = np.deg2rad(angles.azimuth_deg) + delta * x
    if angles.elevation_asd_deg is None:
        theta = np.array([np.deg2rad(angles.elevation_deg)])
        wth = np.array([1.0])
    else:
        delta_el = UNIFORM_HALF_WIDTH * np.deg2rad(angles.elevation_asd_deg)
        theta = np.deg2rad(angles.elevation_deg) + delta_el * x
        wth = wn

    M_h, M_v = geometry.M_h, geometry.M_v
    dcs = np.arange(-(M_h - 1), M_h)
    dvs = np.arange(-(M_v - 1), M_v)
    # D[dc, k] = E_phi[ exp(j*pi*dc*cos(theta_k)*sin(phi)) ]
    cross = np.cos(theta)[None, :] * np.sin(phi)[:, None]  # (phi, theta)
    D = np.einsum(
        "i,dik->dk", wn, np.exp(1j * np.pi * dcs[:, None, None] * cross[None, :, :])
    )
    A = np.exp(1j * np.pi * np.outer(dvs, np.sin(theta)))  # (dv, theta)
    ent = np.einsum("vk,ck,k->vc", A, D, wth)  # (dv, dc)

    m = np.arange(geometry.M)
    r_idx, c_idx = m % M_v, m // M_v
    R = beta * ent[
        r_idx[:, None] - r_idx[None, :] + (M_v - 1),
        c_idx[:, None] - c_idx[None, :] + (M_h - 1),
    ]
    return CorrelationMatrix(R)


def realize_channel(R: CorrelationMatrix, rng: np.random.Generator) -> np.ndarray:
    """Draw one correlated Rayleigh realization h = F z, z ~ CN(0, I)."""
    F = R.sqrt_factor()
    z = complex_gaussian(rng, R.M)
    return F @ z


def complex_gaussian(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """i.i.d. standard circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def favorable_propagation_variance(
    R1: CorrelationMatrix | np.ndarray, R2: CorrelationMatrix | np.ndarray
) -> float:
    """Variance of the normalized inner product of two UEs' channels.

    Equals tr(R1 R2) / (tr(R1) tr(R2)); lies in [0, 1], with 1/M for
    uncorrelated fading and 1 for fully aligned rank-one correlation.
    Smaller means better favorable propagation.
    """
    A = R1.R if isinstance(R1, CorrelationMatrix) else np.asarray(R1)
    B = R2.R if isinstance(R2, CorrelationMatrix) else np.asarray(R2)
    if A.shape != B.shape:
        raise ValueError("correlation matrices must have the same size")
    t1 = float(np.trace(A).real)
    t2 = float(np.trace(B).real)
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError("correlation matrices must have positive trace")
    # tr(A B) for Hermitian A, B
    val = float(np.sum(A * B.T).real) / (t1 * t2)
    return val
