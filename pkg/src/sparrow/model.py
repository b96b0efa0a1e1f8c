"""Sensor array geometry, steering vectors, snapshot simulation, grids.

Spatial frequencies live in the half-open interval [-1, 1); a far-field
source at frequency ``nu`` produces the array response
``a(nu)_m = exp(-1j * pi * nu * rho_m)`` where ``rho_m`` is the position of
sensor ``m`` in half signal wavelengths (``rho_1 = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .numerics import hermitian_part, is_hermitian


@dataclass(frozen=True)
class ArrayGeometry:
    """Sensor positions in half signal wavelengths, first sensor at 0."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 1 or pos.size < 2:
            raise ValidationError("geometry needs at least two sensor positions")
        if pos[0] != 0.0:
            raise ValidationError("first sensor position must be 0")
        if np.any(np.diff(pos) <= 0):
            raise ValidationError("sensor positions must be strictly increasing")

    @property
    def n_sensors(self) -> int:
        return self.positions.size

    @property
    def is_ula(self) -> bool:
        return bool(np.array_equal(self.positions, np.arange(self.n_sensors)))

    @classmethod
    def ula(cls, m: int) -> "ArrayGeometry":
        return cls(positions=np.arange(m, dtype=float))


@dataclass(frozen=True)
class SourceScene:
    """Static far-field sources: frequencies, powers, optional correlation."""

    frequencies: np.ndarray
    powers: np.ndarray
    correlation: np.ndarray | None = None

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        powers = np.atleast_1d(np.asarray(self.powers, dtype=float))
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "powers", powers)
        if freqs.size != powers.size:
            raise ValidationError("frequencies and powers must have equal length")
        if np.any(freqs < -1.0) or np.any(freqs >= 1.0):
            raise ValidationError("frequencies must lie in [-1, 1)")
        if np.unique(freqs).size != freqs.size:
            raise ValidationError("frequencies must be pairwise distinct")
        if np.any(powers < 0):
            raise ValidationError("powers must be nonnegative")
        if self.correlation is not None:
            corr = np.asarray(self.correlation, dtype=complex)
            object.__setattr__(self, "correlation", corr)
            l = freqs.size
            if corr.shape != (l, l) or not is_hermitian(corr, 1e-10):
                raise ValidationError("correlation must be an LxL Hermitian matrix")
            if np.linalg.eigvalsh(hermitian_part(corr)).min() < -1e-10:
                raise ValidationError("correlation must be positive semidefinite")

    @property
    def n_sources(self) -> int:
        return self.frequencies.size


@dataclass(frozen=True)
class MmvBatch:
    """Multiple measurement vectors: one column per snapshot."""

    y: np.ndarray
    noise_power: float | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=complex)
        object.__setattr__(self, "y", y)
        if y.ndim != 2 or y.shape[1] < 1:
            raise ValidationError("measurement matrix must be M x N with N >= 1")

    @property
    def n_sensors(self) -> int:
        return self.y.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class SampleCovariance:
    r: np.ndarray
    n_snapshots: int


@dataclass(frozen=True)
class FrequencyGrid:
    points: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.size < 1:
            raise ValidationError("grid needs at least one point")
        if np.any(pts < -1.0) or np.any(pts >= 1.0):
            raise ValidationError("grid points must lie in [-1, 1)")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("grid points must be ascending and distinct")

    @property
    def size(self) -> int:
        return self.points.size


def steering_vector(geometry: ArrayGeometry, nu: float) -> np.ndarray:
    """Array response to a unit source at spatial frequency ``nu``."""
    return np.exp(-1j * np.pi * nu * geometry.positions)


def steering_matrix(geometry: ArrayGeometry, freqs) -> np.ndarray:
    """Stack steering vectors column-wise for a vector of frequencies."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    return np.exp(-1j * np.pi * np.outer(geometry.positions, freqs))


def steering_derivative(geometry: ArrayGeometry, freqs) -> np.ndarray:
    """Entry-wise derivative of the steering matrix w.r.t. frequency."""
    a = steering_matrix(geometry, freqs)
    return (-1j * np.pi * geometry.positions)[:, None] * a


def mu_from_theta(theta_rad) -> np.ndarray:
    """Spatial frequency cos(theta) for broadside angles in radians."""
    return np.cos(np.asarray(theta_rad, dtype=float))


def trial_rng(seed: int, trial: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, trial): reproducible and order free."""
    return np.random.Generator(np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, trial & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def simulate_mmv(
    geometry: ArrayGeometry,
    scene: SourceScene,
    n_snapshots: int,
    noise_power: float,
    seed: int,
    trial: int = 0,
) -> MmvBatch:
    """Draw Y = A(mu) Psi + noise with circular white Gaussian noise.

    Source snapshots are zero-mean circular complex Gaussian with covariance
    ``diag(sqrt(p)) @ correlation @ diag(sqrt(p))`` (identity correlation by
    default); snapshots are independent over time.  The draw is a pure
    function of ``(seed, trial)``.
    """
    if n_snapshots < 1:
        raise ValidationError("need at least one snapshot")
    if noise_power < 0:
        raise ValidationError("noise power must be nonnegative")
    rng = trial_rng(seed, trial)
    l = scene.n_sources
    a = steering_matrix(geometry, scene.frequencies)
    sqrt_p = np.sqrt(scene.powers)
    if scene.correlation is not None:
        cov = np.outer(sqrt_p, sqrt_p) * scene.correlation
    else:
        cov = np.diag(scene.powers).astype(complex)
    w, v = np.linalg.eigh(hermitian_part(cov))
    w = np.clip(w, 0.0, None)
    root = v @ np.diag(np.sqrt(w)) @ v.conj().T
    psi = root @ _complex_normal(rng, (l, n_snapshots))
    noise = np.sqrt(noise_power) * _complex_normal(rng, (geometry.n_sensors, n_snapshots))
    return MmvBatch(y=a @ psi + noise, noise_power=noise_power)


def sample_covariance(batch: MmvBatch) -> SampleCovariance:
    """R = Y Y^H / N, hermitized against roundoff."""
    r = batch.y @ batch.y.conj().T / batch.n_snapshots
    return SampleCovariance(r=hermitian_part(r), n_snapshots=batch.n_snapshots)


def uniform_grid(k: int) -> FrequencyGrid:
    """K uniformly spaced points -1 + 2k/K covering [-1, 1)."""
    if k < 1:
        raise ValidationError("grid size must be positive")
    return FrequencyGrid(points=-1.0 + 2.0 * np.arange(k) / k)


def snr_to_noise_power(snr_db: float) -> float:
    """Noise power for unit source powers under SNR = 1/sigma^2 (in dB)."""
    return 10.0 ** (-snr_db / 10.0)
