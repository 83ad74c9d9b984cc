"""Microscale lattice diffusion with periodically repeating rough diffusivity.

The microscale model is discrete diffusion on a 1D lattice with spacing h,

    du_i/dt = [kappa_i (u_{i+1} - u_i) + kappa_{i-1} (u_{i-1} - u_i)] / h^2,

where kappa_i is the diffusivity on the half-integer bond between sites i and
i+1, and the K values (kappa_1, ..., kappa_K) repeat periodically along the
lattice.  This module holds the model definition, the ensemble of translated
and reflected diffusivity configurations used to restore broken symmetries,
a full-domain reference integrator, and the K x K Bloch-reduced operator
whose eigenvalues give the exact dispersion of the infinite lattice.

All functions are pure; the value types are immutable and safe to share
between threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiffusivityProfile",
    "VariationProfile",
    "MicroField",
    "EnsembleConfigurationSet",
    "micro_rhs",
    "make_ensemble",
    "full_domain_simulate",
    "bloch_matrix",
    "char_poly_bruteforce",
]

#: Imaginary parts below this are treated as exact zeros when a quantity is
#: real by Hermitian symmetry.
IMAG_TOLERANCE = 1e-10

#: Stability bound for the fixed-step explicit full-domain integrator:
#: step <= STABILITY_FACTOR * h^2 / max(kappa).
STABILITY_FACTOR = 0.2


@dataclass(frozen=True)
class DiffusivityProfile:
    """One period of bond diffusivities (kappa_1, ..., kappa_K), K >= 2.

    The geometric mean kappa_g and the harmonic mean kappa_h of the values
    control the exact macroscale behaviour: the harmonic mean is the leading
    effective diffusivity of the layered medium, and the two means satisfy
    kappa_h <= kappa_g with equality iff the medium is uniform.
    """

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ValueError("diffusivity profile needs period K >= 2")
        if any(v <= 0.0 for v in vals):
            raise ValueError("diffusivities must be strictly positive")
        object.__setattr__(self, "values", vals)

    @property
    def period(self) -> int:
        return len(self.values)

    @property
    def geometric_mean(self) -> float:
        return float(np.prod(self.values)) ** (1.0 / len(self.values))

    @property
    def harmonic_mean(self) -> float:
        return len(self.values) / float(np.sum(1.0 / np.asarray(self.values)))

    def as_array(self, dtype=float) -> np.ndarray:
        return np.asarray(self.values, dtype=dtype)

    def shifted(self, shift: int) -> "DiffusivityProfile":
        """Cyclic translation by `shift` bonds, preserving the ordering."""
        return DiffusivityProfile(tuple(np.roll(self.values, -shift)))

    def reversed(self) -> "DiffusivityProfile":
        """Reflection of the medium (order of the period reversed)."""
        return DiffusivityProfile(self.values[::-1])


@dataclass(frozen=True)
class VariationProfile:
    """Diffusivities written as kappa_0 (1 + eta_i) with dimensionless eta.

    The moderate-variation closed forms are quadratic in eta; callers that
    extract quadratic coefficients should keep max|eta_i| <= 0.2 so that the
    neglected cubic terms stay subordinate.
    """

    base: float
    variations: tuple[float, ...]

    def __post_init__(self):
        if self.base <= 0.0:
            raise ValueError("base diffusivity must be positive")
        etas = tuple(float(e) for e in self.variations)
        if len(etas) < 2:
            raise ValueError("variation profile needs period K >= 2")
        if any(1.0 + e <= 0.0 for e in etas):
            raise ValueError("variations must keep all diffusivities positive")
        object.__setattr__(self, "variations", etas)

    @property
    def period(self) -> int:
        return len(self.variations)

    @property
    def max_variation(self) -> float:
        return max(abs(e) for e in self.variations)

    def profile(self) -> DiffusivityProfile:
        return DiffusivityProfile(
            tuple(self.base * (1.0 + e) for e in self.variations)
        )


@dataclass(frozen=True)
class MicroField:
    """A microscale field sample u_i on a periodic lattice with spacing h."""

    sites: tuple[float, ...]
    spacing: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        if self.spacing <= 0.0:
            raise ValueError("lattice spacing h must be positive")
        object.__setattr__(self, "sites", tuple(float(u) for u in self.sites))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.sites)

    def __len__(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class EnsembleConfigurationSet:
    """The 2K translated/reflected orderings of one diffusivity period.

    Duplicate orderings (which occur for symmetric profiles, e.g. K = 2 or a
    uniform medium) are merged and carry integer multiplicities, so weighted
    averages over the ensemble always have total weight 2K.
    """

    configurations: tuple[DiffusivityProfile, ...]
    multiplicities: tuple[int, ...]

    def __post_init__(self):
        if len(self.configurations) != len(self.multiplicities):
            raise ValueError("configurations and multiplicities must pair up")
        if any(m < 1 for m in self.multiplicities):
            raise ValueError("multiplicities must be positive integers")

    @property
    def total_weight(self) -> int:
        return int(sum(self.multiplicities))

    def weights(self) -> np.ndarray:
        return np.asarray(self.multiplicities, dtype=float)

    def __len__(self) -> int:
        return len(self.configurations)


def micro_rhs(field: MicroField, profile: DiffusivityProfile) -> np.ndarray:
    """Time derivative of the lattice diffusion equation on a periodic field.

    The field length must be a multiple of the diffusivity period so the
    periodic wrap-around continues the kappa pattern seamlessly.
    """
    u = field.as_array()
    K = profile.period
    if len(u) % K != 0:
        raise ValueError(
            f"field length {len(u)} is not a multiple of the period {K}"
        )
    kap = np.tile(profile.as_array(), len(u) // K)
    kap_left = np.roll(kap, 1)  # kappa_{i-1}
    h2 = field.spacing**2
    return (kap * (np.roll(u, -1) - u) + kap_left * (np.roll(u, 1) - u)) / h2


def make_ensemble(profile: DiffusivityProfile) -> EnsembleConfigurationSet:
    """All K translations and K reflections of a profile, duplicates merged.

    For K = 2 there are only two distinct orderings, each of multiplicity 2;
    a uniform profile collapses to a single ordering of multiplicity 2K.
    """
    K = profile.period
    candidates = [profile.shifted(s).values for s in range(K)]
    rev = profile.reversed()
    candidates += [rev.shifted(s).values for s in range(K)]
    configs: list[DiffusivityProfile] = []
    mults: list[int] = []
    index: dict[tuple[float, ...], int] = {}
    for vals in candidates:
        if vals in index:
            mults[index[vals]] += 1
        else:
            index[vals] = len(configs)
            configs.append(DiffusivityProfile(vals))
            mults.append(1)
    return EnsembleConfigurationSet(tuple(configs), tuple(mults))


def full_domain_simulate(
    initial: MicroField,
    profile: DiffusivityProfile,
    duration: float,
    step: float,
) -> MicroField:
    """Integrate the full periodic lattice with a fixed-step 4th-order method.

    This is the reference trajectory against which patch simulations are
    measured.  The right-hand side is linear, so the classical one-step
    4th-order scheme is exact enough at desk scale; the step must satisfy
    step <= 0.2 h^2 / max(kappa) or the call is rejected.  The scheme
    conserves sum(u_i) to round-off because every stage increment sums to
    zero on a periodic field.
    """
    if duration < 0.0:
        raise ValueError("duration must be non-negative")
    h = initial.spacing
    limit = STABILITY_FACTOR * h * h / max(profile.values)
    if step <= 0.0 or step > limit:
        raise ValueError(
            f"unstable step {step}: explicit integration requires "
            f"0 < step <= {limit:.6g} (= {STABILITY_FACTOR} h^2 / max kappa)"
        )
    u = initial.as_array().copy()
    K = profile.period
    if len(u) % K != 0:
        raise ValueError("field length must be a multiple of the period")
    kap = np.tile(profile.as_array(), len(u) // K)
    kap_left = np.roll(kap, 1)
    h2 = h * h

    def rhs(v: np.ndarray) -> np.ndarray:
        return (kap * (np.roll(v, -1) - v) + kap_left * (np.roll(v, 1) - v)) / h2

    if duration == 0.0:
        return MicroField(tuple(u), h, initial.time)
    n_steps = max(1, math.ceil(duration / step))
    dt = duration / n_steps
    for _ in range(n_steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return MicroField(tuple(u), h, initial.time + duration)


def bloch_matrix(profile: DiffusivityProfile, phase: float) -> np.ndarray:
    """K x K operator matrix for lattice modes u_i = v_{i mod K} e^(i phase i).

    One period of the lattice couples to its neighbours through the corner
    entries, which carry the accumulated phase factor e^(-+ i K phase).  The
    matrix is Hermitian for every phase; at phase 0 it is the periodic graph
    Laplacian weighted by the diffusivities, whose kernel is the constant
    vector.  (For K = 2 the corner and interior couplings act between the
    same pair of sites and add.)
    """
    K = profile.period
    vals = profile.as_array()
    M = np.zeros((K, K), dtype=complex)
    for i in range(K):
        M[i, i] = -(vals[i - 1] + vals[i])
    for i in range(K - 1):
        M[i, i + 1] += vals[i]
        M[i + 1, i] += vals[i]
    M[0, K - 1] += vals[K - 1] * np.exp(-1j * K * phase)
    M[K - 1, 0] += vals[K - 1] * np.exp(1j * K * phase)
    return M


def char_poly_bruteforce(
    profile: DiffusivityProfile, phase: float
) -> np.ndarray:
    """Characteristic polynomial of the Bloch matrix by exact expansion.

    Returns the K+1 real coefficients (constant term first) of
    det(M - lambda I), sign-normalized so the lambda^K coefficient is +1.
    The expansion enumerates all permutations, so the period is capped at 8.
    The imaginary parts cancel analytically; a residual above tolerance
    indicates an internal inconsistency and raises.

    Serves as the independent oracle for the closed-form coefficients in
    :mod:`gaptooth.theory`.
    """
    K = profile.period
    if K > 8:
        raise ValueError("brute-force expansion is limited to K <= 8")
    M = bloch_matrix(profile, phase)
    det = np.zeros(K + 1, dtype=complex)
    for perm in itertools.permutations(range(K)):
        # permutation sign from cycle decomposition
        seen = [False] * K
        transpositions = 0
        for i in range(K):
            if not seen[i]:
                j = i
                cycle_len = 0
                while not seen[j]:
                    seen[j] = True
                    j = perm[j]
                    cycle_len += 1
                transpositions += cycle_len - 1
        sign = -1.0 if transpositions % 2 else 1.0
        # product over rows of (M - lambda I)[i, perm[i]], as a polynomial
        poly = np.zeros(K + 1, dtype=complex)
        poly[0] = sign
        deg = 0
        for i in range(K):
            entry0 = M[i, perm[i]]
            if perm[i] == i:
                # (entry0 - lambda): multiply by a degree-1 factor
                poly[: deg + 2] = np.convolve(
                    poly[: deg + 1], np.array([entry0, -1.0])
                )
                deg += 1
            else:
                poly[: deg + 1] *= entry0
        det += poly
    det *= (-1.0) ** K
    worst = float(np.max(np.abs(det.imag)))
    if worst > IMAG_TOLERANCE:
        raise RuntimeError(
            f"characteristic coefficients have imaginary residue {worst:.3e}; "
            "the Bloch matrix assembly is inconsistent"
        )
    return det.real.copy()
