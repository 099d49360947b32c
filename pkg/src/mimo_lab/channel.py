"""Spatial channel model for a uniform linear array.

Covers per-user power angle spectra, exact and large-array covariance
construction, correlated Rayleigh channel sampling, and the trace-inner-
product angle between covariance matrices.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_rng, complex_normal, hermitize, psd_project, psd_sqrt

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count, spacing, and visible interval.

    antenna_count : number of elements M
    spacing : element spacing in wavelengths (0.5 is half wavelength)
    aoa_interval : closed angle interval (radians) the array observes,
        contained in [-pi/2, pi/2]
    """

    antenna_count: int
    spacing: float = 0.5
    aoa_interval: tuple = (-HALF_PI, HALF_PI)

    def __post_init__(self):
        if self.antenna_count < 1:
            raise ValueError("antenna_count must be at least 1")
        if self.spacing <= 0.0:
            raise ValueError("antenna spacing must be positive")
        lo, hi = self.aoa_interval
        if not (-HALF_PI <= lo < hi <= HALF_PI):
            raise ValueError("aoa_interval must be a nonempty interval inside [-pi/2, pi/2]")


class PASKind(enum.Enum):
    TRUNCATED_LAPLACIAN = "truncated_laplacian"
    POINT_MASS = "point_mass"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class PowerAngleSpectrum:
    """Per-user power angle spectrum.

    kind : PASKind or its string value
    mean_aoa : mean angle of arrival in radians
    angular_spread : spread parameter in radians (unused for point masses)
    gain : large-scale channel gain beta
    """

    kind: PASKind
    mean_aoa: float
    angular_spread: float = 0.0
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PASKind(self.kind))
        if self.kind is not PASKind.POINT_MASS and self.angular_spread <= 0.0:
            raise ValueError("angular_spread must be positive for a %s spectrum" % self.kind.value)
        if self.gain <= 0.0:
            raise ValueError("gain must be positive")


def pas_density(pas, theta):
    """Evaluate the normalized angular density at angles theta (radians).

    The truncated Laplacian density is

        S(t) = exp(-sqrt(2) |t - mean| / sigma)
               / (sqrt(2) sigma (1 - exp(-sqrt(2) pi / sigma)))

    on [mean - pi, mean + pi] and zero outside, so it integrates to one
    over its support.  The uniform density is 1 / (2 sigma) on
    [mean - sigma, mean + sigma].  Point masses have no density.
    Accepts scalars or arrays.
    """
    if pas.kind is PASKind.POINT_MASS:
        raise NotImplementedError("a point-mass spectrum has no density to evaluate")
    theta = np.asarray(theta, dtype=float)
    dev = np.abs(theta - pas.mean_aoa)
    if pas.kind is PASKind.TRUNCATED_LAPLACIAN:
        sigma = pas.angular_spread
        scale = np.sqrt(2.0) / sigma
        norm = np.sqrt(2.0) * sigma * (1.0 - np.exp(-scale * np.pi))
        out = np.where(dev <= np.pi, np.exp(-scale * dev) / norm, 0.0)
    else:
        half = pas.angular_spread
        out = np.where(dev <= half, 0.5 / half, 0.0)
    return float(out) if out.ndim == 0 else out


def array_response(geometry, theta):
    """Array response vector(s) for angles theta (radians).

    For a scalar angle returns shape (M,); for a length-N array returns
    shape (M, N).  Angles outside the geometry's interval are rejected.
    """
    theta_arr = np.asarray(theta, dtype=float)
    lo, hi = geometry.aoa_interval
    if np.any(theta_arr < lo) or np.any(theta_arr > hi):
        raise ValueError("angle outside the array's observed interval")
    elements = np.arange(geometry.antenna_count)
    phases = -2j * np.pi * geometry.spacing * np.outer(elements, np.sin(theta_arr))
    v = np.exp(phases)
    return v[:, 0] if theta_arr.ndim == 0 else v


@dataclass
class ChannelCovariance:
    """M x M Hermitian PSD user covariance tagged with how it was obtained."""

    matrix: np.ndarray
    source: str = "exact_quadrature"
    _sqrt: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    SOURCES = ("exact_quadrature", "asymptotic_dft", "empirical")

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.source not in self.SOURCES:
            raise ValueError("unknown covariance source %r" % (self.source,))
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("covariance must be a square matrix")
        scale = max(np.linalg.norm(self.matrix), 1e-300)
        if np.linalg.norm(self.matrix - self.matrix.conj().T) > 1e-8 * scale:
            raise ValueError("covariance must be Hermitian")

    @property
    def antenna_count(self):
        return self.matrix.shape[0]

    def sqrt_factor(self):
        """PSD square root used for coloring channel draws; cached."""
        if self._sqrt is None:
            self._sqrt = psd_sqrt(self.matrix)
        return self._sqrt


@dataclass
class AsymptoticCovariance:
    """Large-array model R ~ V diag(r) V^H in the DFT-like basis V."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        self.eigenvectors = np.asarray(self.eigenvectors, dtype=complex)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        if self.eigenvectors.shape[0] != self.eigenvectors.shape[1]:
            raise ValueError("eigenvector matrix must be square")
        if self.eigenvalues.shape != (self.eigenvectors.shape[1],):
            raise ValueError("need one eigenvalue per eigenvector column")
        norms = np.linalg.norm(self.eigenvectors, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise ValueError("eigenvector columns must have unit norm")
        if np.any(self.eigenvalues < -1e-12):
            raise ValueError("eigenvalues must be nonnegative")

    def matrix(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass
class Scenario:
    """One user drop: shared geometry plus per-user spectra and covariances.

    spectra entries may be None for synthetic covariance-only setups.
    """

    geometry: ArrayGeometry
    spectra: list
    covariances: list

    def __post_init__(self):
        if len(self.spectra) != len(self.covariances):
            raise ValueError("need one spectrum entry per covariance")
        if not self.covariances:
            raise ValueError("scenario needs at least one user")
        for cov in self.covariances:
            if cov.antenna_count != self.geometry.antenna_count:
                raise ValueError("covariance size does not match the array geometry")

    @property
    def antenna_count(self):
        return self.geometry.antenna_count

    @property
    def user_count(self):
        return len(self.covariances)

    def covariance_matrices(self):
        return [cov.matrix for cov in self.covariances]

    def subset(self, indices):
        """New scenario restricted to the given user indices."""
        indices = list(indices)
        return Scenario(
            geometry=self.geometry,
            spectra=[self.spectra[i] for i in indices],
            covariances=[self.covariances[i] for i in indices],
        )


def cov_matrices(covariances):
    """Coerce a list of ChannelCovariance or plain arrays to plain arrays."""
    out = []
    for cov in covariances:
        out.append(cov.matrix if isinstance(cov, ChannelCovariance) else np.asarray(cov, dtype=complex))
    return out


def _support_pieces(pas, lo, hi):
    """Sub-intervals of [lo, hi] on which the density is smooth and resolvable.

    The Laplacian peak is graded dyadically: cuts at mean +/- spread * 2^i
    keep every decay scale of the exponential on its own piece, so a narrow
    spread cannot slip between quadrature nodes.
    """
    if pas.kind is PASKind.TRUNCATED_LAPLACIAN:
        a, b = pas.mean_aoa - np.pi, pas.mean_aoa + np.pi
        cuts = {pas.mean_aoa}
        offset = pas.angular_spread
        while offset < np.pi:
            cuts.update((pas.mean_aoa - offset, pas.mean_aoa + offset))
            offset *= 2.0
    else:
        a, b = pas.mean_aoa - pas.angular_spread, pas.mean_aoa + pas.angular_spread
        cuts = set()
    a, b = max(a, lo), min(b, hi)
    if b <= a:
        return []
    edges = [a] + sorted(c for c in cuts if a < c < b) + [b]
    return list(zip(edges[:-1], edges[1:]))


def _angular_mass(pas, lo, hi):
    """Density mass inside [lo, hi], in closed form."""
    if pas.kind is PASKind.POINT_MASS:
        return 1.0 if lo <= pas.mean_aoa <= hi else 0.0
    if pas.kind is PASKind.UNIFORM:
        half = pas.angular_spread
        overlap = min(hi, pas.mean_aoa + half) - max(lo, pas.mean_aoa - half)
        return max(overlap, 0.0) / (2.0 * half)
    scale = np.sqrt(2.0) / pas.angular_spread

    def cdf(x):
        # Signed mass between the mean and x, saturating at the support edge.
        d = min(abs(x - pas.mean_aoa), np.pi)
        half_mass = 0.5 * (1.0 - np.exp(-scale * d)) / (1.0 - np.exp(-scale * np.pi))
        return np.copysign(half_mass, x - pas.mean_aoa)

    return max(cdf(hi) - cdf(lo), 0.0)


def _simpson_nodes(a, b, intervals):
    """Composite Simpson nodes and (nonnegative) weights on [a, b]."""
    x = np.linspace(a, b, intervals + 1)
    w = np.ones(intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (b - a) / (3.0 * intervals)
    return x, w


def covariance_exact(geometry, pas, quadrature_points=2048):
    """Channel covariance R = beta * integral of v(t) v(t)^H S(t) dt over A.

    Integrates with composite Simpson quadrature split at the density's
    non-smooth points, then symmetrizes and clamps tiny negative
    eigenvalues.  Point masses reduce to the exact rank-one covariance.
    The trace equals beta * M * (density mass inside A) up to quadrature
    error.
    """
    m = geometry.antenna_count
    lo, hi = geometry.aoa_interval
    if pas.kind is PASKind.POINT_MASS:
        if lo <= pas.mean_aoa <= hi:
            v = array_response(geometry, pas.mean_aoa)
            mat = pas.gain * np.outer(v, v.conj())
        else:
            mat = np.zeros((m, m), dtype=complex)
        return ChannelCovariance(mat, source="exact_quadrature")
    if quadrature_points < 64:
        raise ValueError("quadrature_points must be at least 64")
    pieces = _support_pieces(pas, lo, hi)
    mat = np.zeros((m, m), dtype=complex)
    total = sum(b - a for a, b in pieces)
    for a, b in pieces:
        # Length-proportional budget with a floor, so short pieces near a
        # density peak keep enough nodes to resolve it.
        intervals = max(8, 2 * round(0.5 * quadrature_points * (b - a) / total))
        nodes, weights = _simpson_nodes(a, b, intervals)
        v = array_response(geometry, nodes)
        mat += (v * (pas.gain * weights * pas_density(pas, nodes))) @ v.conj().T
    if not np.all(np.isfinite(mat)):
        raise FloatingPointError("quadrature produced a non-finite covariance")
    return ChannelCovariance(psd_project(mat), source="exact_quadrature")


def covariance_asymptotic(geometry, pas):
    """Large-array covariance model (V, r) for a standard half-wavelength ULA.

    V is the column-reindexed unitary DFT matrix and r samples the density
    on the arcsin-warped grid, rescaled so that sum(r) equals the exact
    trace beta * M * (density mass inside the interval).  V diag(r) V^H
    then approaches the exact covariance entrywise as M grows.
    """
    if abs(geometry.spacing - 0.5) > 1e-12:
        raise NotImplementedError("large-array basis requires half-wavelength spacing")
    lo, hi = geometry.aoa_interval
    if abs(lo + HALF_PI) > 1e-12 or abs(hi - HALF_PI) > 1e-12:
        raise NotImplementedError("large-array basis requires the full [-pi/2, pi/2] interval")
    m = geometry.antenna_count
    grid = np.arange(m + 1) / m
    angles = np.arcsin(2.0 * grid - 1.0)
    # Column j has phases -pi * element * (2 j / M - 1); on the arcsin grid
    # this is exactly the array response at angles[j] scaled by 1/sqrt(M).
    sines = 2.0 * grid[:-1] - 1.0
    v = np.exp(-1j * np.pi * np.outer(np.arange(m), sines)) / np.sqrt(m)
    r = pas_density(pas, angles[:-1]) * np.diff(angles)
    trace = pas.gain * m * _angular_mass(pas, lo, hi)
    total = r.sum()
    if total <= 0.0:
        raise ValueError("density mass vanishes on the observed interval")
    return AsymptoticCovariance(v, r * (trace / total))


def sample_channels(scenario, rng_seed):
    """Draw one fading block: column k of the M x K result is CN(0, R_k)."""
    rng = as_rng(rng_seed)
    m, k = scenario.antenna_count, scenario.user_count
    white = complex_normal(rng, (m, k))
    out = np.empty((m, k), dtype=complex)
    for j, cov in enumerate(scenario.covariances):
        out[:, j] = cov.sqrt_factor() @ white[:, j]
    return out


def matrix_angle(a, b):
    """Angle between Hermitian PSD matrices under the trace inner product.

    Returns arccos(tr(a b) / (||a||_F ||b||_F)) with the cosine clamped to
    [0, 1].  Orthogonal supports give pi/2; proportional matrices give 0.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("matrix angle is undefined for a zero matrix")
    # tr(a b) equals <a, b> under vdot because a is Hermitian.
    cos = float(np.real(np.vdot(a, b))) / (norm_a * norm_b)
    return float(np.arccos(np.clip(cos, 0.0, 1.0)))


def empirical_covariance(samples):
    """Sample covariance (1/N) sum of g g^H from an (N, M) stack of draws."""
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ValueError("need a nonempty (N, M) stack of channel samples")
    mat = samples.T @ samples.conj() / samples.shape[0]
    return ChannelCovariance(hermitize(mat), source="empirical")
