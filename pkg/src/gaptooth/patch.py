"""The gap-tooth patch scheme: geometry, coupling, stepping, slow modes.

Each macroscale grid point X_j = j H carries a patch of 2n+1 microscale
sites on which the true lattice model runs.  The macroscale amplitude U_j is
the ensemble-and-core average of the patch fields; each patch edge is closed
by a coupling condition that pins the average over a buffer of 2b+1 edge
sites to an interpolation of the neighbouring amplitudes.  Because every
buffer site sits exactly (n-b) microsites from a core site, the buffer
average equals the core average shifted by the fractional macrostep
r = (n-b) h / H, and expanding that fractional shift in central difference
and mean operators gives the coupling target

    U_j + sum_{k=1}^{cutoff} [prod_{l<k} (r^2 - l^2)] gamma^k
          [ +- (2k/r) mu d^(2k-1) + d^(2k) ] U_j / (2k)!

(+ for the right buffer, - for the left), where d and mu are the macroscale
central difference and mean.  gamma in [0, 1] is the artificial coupling
strength; gamma = 0 isolates every patch and gamma = 1 is the physical case.

Time stepping freezes the coupling targets over one macro step, integrates
all patches and ensemble configurations, then re-reads the amplitudes.  The
coupling conditions are enforced by exact algebraic elimination of the two
edge unknowns, which keeps every buffer average equal to its target to
round-off and leaves a plain linear ODE for the interior sites.

The Fourier slow-mode solver closes the same equations on the ansatz
U_j = e^(i theta j), u_{j,i,e} = v_{i,e} e^(i theta j): the slow eigenvalue
lambda(theta) then defines the patch scheme's emergent evolution
dU/dt = lambda U / h^2, playing the role that a slow-manifold expansion
plays for the complete domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import solve_batched
from .lattice import (
    DiffusivityProfile,
    EnsembleConfigurationSet,
    make_ensemble,
)

__all__ = [
    "PatchGeometry",
    "CouplingSpec",
    "PatchEnsembleState",
    "MacroField",
    "SlowMode",
    "ConversionReport",
    "coupling_targets",
    "patch_rhs_reduced",
    "amplitude",
    "run_patch_simulation",
    "slow_eigenvalue",
    "conversion_series",
]


@dataclass(frozen=True)
class PatchGeometry:
    """Patch half-width n, buffer half-width b, spacings h and H = N h.

    Sites are indexed i = -n..n.  The core is i = -b..b and the buffers are
    i = +-(n-2b)..+-n, each of 2b+1 sites; geometry requires 0 <= b < n and
    non-overlapping patches 2n+1 <= N.  The fractional macrostep
    r = (n-b)/N satisfies r H = (n-b) h exactly.
    """

    n: int
    b: int
    h: float = 1.0
    macro_ratio: int = 0  # N = H / h; defaults to 2n+2 when left 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("patch half-width n must be >= 1")
        if not (0 <= self.b < self.n):
            raise ValueError("buffer half-width must satisfy 0 <= b < n")
        if self.h <= 0.0:
            raise ValueError("microscale spacing h must be positive")
        if self.macro_ratio == 0:
            object.__setattr__(self, "macro_ratio", 2 * self.n + 2)
        if 2 * self.n + 1 > self.macro_ratio:
            raise ValueError(
                f"patches overlap: 2n+1 = {2*self.n+1} exceeds N = {self.macro_ratio}"
            )

    @property
    def H(self) -> float:
        return self.macro_ratio * self.h

    @property
    def r(self) -> float:
        return (self.n - self.b) / self.macro_ratio

    @property
    def sites(self) -> int:
        return 2 * self.n + 1

    @property
    def core(self) -> slice:
        """Array slice of the core sites i = -b..b (array index i + n)."""
        return slice(self.n - self.b, self.n + self.b + 1)

    def right_buffer_indices(self) -> range:
        """Array indices of the right buffer i = n-2b..n."""
        return range(2 * self.n - 2 * self.b, 2 * self.n + 1)

    def left_buffer_indices(self) -> range:
        """Array indices of the left buffer i = -n..-(n-2b)."""
        return range(0, 2 * self.b + 1)


@dataclass(frozen=True)
class CouplingSpec:
    """Coupling strength gamma and interpolation cutoff.

    The default cutoff 2 needs macroscale neighbours j-2..j+2 and matches
    the s2^2 accuracy of the complete-domain reference; larger cutoffs are
    supported by the stencil generator but nothing downstream needs them.
    """

    gamma: float = 1.0
    cutoff: int = 2

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("coupling strength gamma must lie in [0, 1]")
        if self.cutoff < 1:
            raise ValueError("coupling cutoff must be >= 1")


@dataclass
class PatchEnsembleState:
    """Microscale fields u[j, i, e] for every patch and configuration."""

    fields: np.ndarray  # shape (J, 2n+1, E)
    time: float = 0.0

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=float)
        if self.fields.ndim != 3:
            raise ValueError("patch state must have shape (J, sites, E)")

    @property
    def patches(self) -> int:
        return self.fields.shape[0]


@dataclass(frozen=True)
class MacroField:
    """Macroscale amplitudes U_j on a periodic grid with spacing H."""

    values: tuple[float, ...]
    spacing: float
    time: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SlowMode:
    """One Fourier slow mode of the patch scheme.

    theta is the macroscale phase per patch; lam the slow eigenvalue in
    units where h = 1, so the emergent patch evolution is
    dU_j/dt = lam U_j / h^2.  lam is real (to round-off) whenever the full
    ensemble restores the medium's reflection symmetry; its imaginary part
    is kept for drift diagnostics.  profile_fields holds the complex site
    amplitudes v[i, e], normalized so the ensemble-and-core average is 1.
    """

    theta: float
    lam: complex
    profile_fields: np.ndarray
    normalization_residual: float
    iterations: int


# ---------------------------------------------------------------------------
# coupling conditions
# ---------------------------------------------------------------------------


def _difference_powers(U: np.ndarray, cutoff: int):
    """Periodic d^(2k) U and mu d^(2k-1) U for k = 1..cutoff."""
    even = {}
    odd = {}
    d2 = np.roll(U, -1) - 2.0 * U + np.roll(U, 1)
    even[1] = d2
    odd[1] = 0.5 * (np.roll(U, -1) - np.roll(U, 1))
    current = d2
    for k in range(2, cutoff + 1):
        odd[k] = 0.5 * (np.roll(current, -1) - np.roll(current, 1))
        current = np.roll(current, -1) - 2.0 * current + np.roll(current, 1)
        even[k] = current
    return even, odd


def _shift_product(r: float, k: int) -> float:
    out = 1.0
    for l in range(k):
        out *= r * r - l * l
    return out


def _targets_all(U: np.ndarray, geom: PatchGeometry, spec: CouplingSpec):
    """Left and right buffer targets for every patch (periodic wrap)."""
    r = geom.r
    even, odd = _difference_powers(np.asarray(U, dtype=float), spec.cutoff)
    left = np.array(U, dtype=float, copy=True)
    right = np.array(U, dtype=float, copy=True)
    for k in range(1, spec.cutoff + 1):
        weight = _shift_product(r, k) * spec.gamma**k / math.factorial(2 * k)
        right += weight * (+(2.0 * k / r) * odd[k] + even[k])
        left += weight * (-(2.0 * k / r) * odd[k] + even[k])
    return left, right


def coupling_targets(
    U: MacroField, j: int, geom: PatchGeometry, spec: CouplingSpec
) -> tuple[float, float]:
    """Required (left, right) buffer averages for patch j.

    A constant field maps to itself; a linear field maps to U_j -+ r times
    the slope, the exact fractional shift; gamma = 0 decouples the patches
    entirely (both targets collapse to U_j).
    """
    left, right = _targets_all(U.as_array(), geom, spec)
    return float(left[j]), float(right[j])


# ---------------------------------------------------------------------------
# constrained patch dynamics
# ---------------------------------------------------------------------------


def _site_kappas(config: DiffusivityProfile, n: int):
    """kappa_i and kappa_{i-1} for sites i = -n..n under cyclic indexing."""
    K = config.period
    vals = config.as_array()
    idx = np.arange(-n, n + 1)
    return vals[idx % K], vals[(idx - 1) % K]


def _eliminate_edges(
    interior: np.ndarray, targets_left, targets_right, geom: PatchGeometry
):
    """Edge values implied by the buffer constraints.

    interior has shape (..., 2n-1) ordered by site; the buffer averages of
    the full field then equal the targets identically.
    """
    b = geom.b
    width = 2 * b + 1
    # right buffer occupies array indices 2n-2b..2n (interior part minus the edge)
    right_sum = interior[..., 2 * geom.n - 2 * b - 1 : 2 * geom.n - 1].sum(axis=-1)
    left_sum = interior[..., 0 : 2 * b].sum(axis=-1)
    u_right = width * np.asarray(targets_right) - right_sum
    u_left = width * np.asarray(targets_left) - left_sum
    return u_left, u_right


def patch_rhs_reduced(
    state: PatchEnsembleState,
    targets: np.ndarray,
    geom: PatchGeometry,
    ensemble: EnsembleConfigurationSet,
):
    """Interior time derivatives with the edge unknowns eliminated.

    targets has shape (J, 2) holding (left, right) buffer targets per patch,
    frozen for the duration of a macro step.  Returns (derivatives, edges)
    where derivatives has shape (J, 2n-1, E) for the interior sites
    i = -(n-1)..(n-1) and edges has shape (J, 2, E) holding the eliminated
    u_{-n} and u_{+n}.  With b = 0 the elimination reduces to pinning the
    edge sites directly to the targets.
    """
    u = state.fields
    J, sites, E = u.shape
    n = geom.n
    if sites != geom.sites or E != len(ensemble):
        raise ValueError("state shape does not match geometry/ensemble")
    targets = np.asarray(targets, dtype=float)
    interior = u[:, 1:-1, :]
    derivs = np.empty_like(interior)
    edges = np.empty((J, 2, E))
    h2 = geom.h**2
    for e, config in enumerate(ensemble.configurations):
        kap, kap_left = _site_kappas(config, n)
        w = interior[:, :, e]
        u_left, u_right = _eliminate_edges(
            w, targets[:, 0], targets[:, 1], geom
        )
        full = np.concatenate(
            [u_left[:, None], w, u_right[:, None]], axis=1
        )
        lap = kap[1:-1] * (full[:, 2:] - full[:, 1:-1]) + kap_left[1:-1] * (
            full[:, :-2] - full[:, 1:-1]
        )
        derivs[:, :, e] = lap / h2
        edges[:, 0, e] = u_left
        edges[:, 1, e] = u_right
    return derivs, edges


def amplitude(
    state: PatchEnsembleState,
    geom: PatchGeometry,
    ensemble: EnsembleConfigurationSet,
) -> MacroField:
    """Macroscale amplitudes: multiplicity-weighted ensemble mean of the
    core means.  With b = 0 this is the centre-point reading."""
    core_means = state.fields[:, geom.core, :].mean(axis=1)  # (J, E)
    weights = ensemble.weights()
    U = core_means @ weights / weights.sum()
    return MacroField(tuple(U), geom.H, state.time)


def _interior_operator(
    config: DiffusivityProfile, geom: PatchGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Constant matrices A, B with du/dt = (A u + B targets) on the interior."""
    n, b = geom.n, geom.b
    m = 2 * n - 1
    kap, kap_left = _site_kappas(config, n)
    A = np.zeros((m, m))
    B = np.zeros((m, 2))
    right_set = [idx - 1 for idx in range(2 * n - 2 * b, 2 * n)]
    left_set = [idx - 1 for idx in range(1, 2 * b + 1)]
    width = 2 * b + 1
    for l in range(m):
        kp = kap[l + 1]
        km = kap_left[l + 1]
        A[l, l] -= kp + km
        if l + 1 < m:
            A[l, l + 1] += kp
        else:
            B[l, 1] += kp * width
            for l2 in right_set:
                A[l, l2] -= kp
        if l - 1 >= 0:
            A[l, l - 1] += km
        else:
            B[l, 0] += km * width
            for l2 in left_set:
                A[l, l2] -= km
    h2 = geom.h**2
    return A / h2, B / h2


def run_patch_simulation(
    U0,
    profile: DiffusivityProfile,
    geom: PatchGeometry,
    spec: CouplingSpec,
    duration: float,
    macro_step: float,
    substeps: int = 8,
    ensemble: EnsembleConfigurationSet | None = None,
    return_state: bool = False,
):
    """March the coupled patch ensemble and return the amplitude trajectory.

    Each macro step (1) freezes the coupling targets at the previous
    amplitudes, (2) integrates every patch and configuration with the
    trapezoidal rule over `substeps` substeps, and (3) re-reads the
    amplitudes; patch fields persist across steps.  Initial patch fields
    are seeded constant at U_j, so a constant initial amplitude is an exact
    fixed point.

    U0 may be a MacroField or a plain sequence of J amplitudes (macroscale
    periodic).  Raises on non-finite fields, which is the only way the
    A-stable inner integrator can misbehave.

    With return_state=True the return value is (trajectory, state, targets):
    the full end-of-run ensemble state including the eliminated edge sites,
    and the (J, 2) frozen targets of the final step, so callers can verify
    the buffer constraints directly.
    """
    if isinstance(U0, MacroField):
        U = U0.as_array().astype(float).copy()
    else:
        U = np.asarray(U0, dtype=float).copy()
    J = len(U)
    if J < 2 * spec.cutoff + 1:
        raise ValueError(
            f"need at least {2 * spec.cutoff + 1} patches for the cutoff-"
            f"{spec.cutoff} coupling stencil"
        )
    if macro_step <= 0.0 or duration < 0.0:
        raise ValueError("duration and macro_step must be positive")
    if ensemble is None:
        ensemble = make_ensemble(profile)
    E = len(ensemble)
    n = geom.n
    m = 2 * n - 1
    dt = macro_step / substeps
    eye = np.eye(m)
    propagators = []
    injections = []
    for config in ensemble.configurations:
        A, B = _interior_operator(config, geom)
        lhs = eye - 0.5 * dt * A
        propagators.append(np.linalg.solve(lhs, eye + 0.5 * dt * A))
        injections.append(np.linalg.solve(lhs, dt * B))
    # interior fields per configuration, patches as columns
    X = np.tile(U, (E, m, 1))
    t = 0.0
    trajectory = [MacroField(tuple(U), geom.H, t)]
    weights = ensemble.weights()
    core = slice(geom.n - geom.b - 1, geom.n + geom.b)  # interior-local
    n_steps = int(round(duration / macro_step))
    T = np.vstack([U, U])
    for _ in range(n_steps):
        left, right = _targets_all(U, geom, spec)
        T = np.vstack([left, right])  # (2, J)
        for e in range(E):
            P, Q = propagators[e], injections[e]
            QT = Q @ T
            Xe = X[e]
            for _s in range(substeps):
                Xe = P @ Xe + QT
            X[e] = Xe
        if not np.all(np.isfinite(X)):
            raise FloatingPointError(
                f"patch integration diverged at t = {t + macro_step:.6g}"
            )
        U = np.einsum("e,ej->j", weights, X[:, core, :].mean(axis=1))
        U /= weights.sum()
        t += macro_step
        trajectory.append(MacroField(tuple(U), geom.H, t))
    if return_state:
        targets = T.T.copy()  # (J, 2) of the final step
        state = state_from_simulation(X, targets, geom)
        state.time = t
        return trajectory, state, targets
    return trajectory


def state_from_simulation(
    X: np.ndarray,
    targets: np.ndarray,
    geom: PatchGeometry,
) -> PatchEnsembleState:
    """Assemble a full (J, 2n+1, E) state from interior fields and targets."""
    E, m, J = X.shape
    fields = np.empty((J, 2 * geom.n + 1, E))
    for e in range(E):
        w = X[e].T  # (J, m)
        u_left, u_right = _eliminate_edges(w, targets[:, 0], targets[:, 1], geom)
        fields[:, 0, e] = u_left
        fields[:, 1:-1, e] = w
        fields[:, -1, e] = u_right
    return PatchEnsembleState(fields)


# ---------------------------------------------------------------------------
# Fourier slow mode
# ---------------------------------------------------------------------------


def _coupling_symbols(theta, r, spec: CouplingSpec, real_dtype):
    """Numeric buffer targets for the unit Fourier amplitude U_j = e^(i theta j)."""
    th = np.array(theta, dtype=real_dtype)
    xbar = 2.0 * np.cos(th) - 2.0  # central second difference symbol
    mud = 1j * np.sin(th)  # mean-difference symbol
    cp = np.array(1.0, dtype=real_dtype) + 0j
    cm = np.array(1.0, dtype=real_dtype) + 0j
    for k in range(1, spec.cutoff + 1):
        P = np.array(1.0, dtype=real_dtype)
        for l in range(k):
            P = P * (r * r - l * l)
        weight = P * spec.gamma**k / math.factorial(2 * k)
        odd = mud * xbar ** (k - 1)
        even = xbar**k
        cp = cp + weight * (+(2.0 * k / r) * odd + even)
        cm = cm + weight * (-(2.0 * k / r) * odd + even)
    return cp, cm


def _slow_system(profile, geom, spec, theta, use_ensemble, dtype):
    """Assemble S0, D, rhs with S(lam) = S0 - lam D over the ensemble batch."""
    real_dtype = np.longdouble if dtype == np.clongdouble else float
    if use_ensemble:
        ens = make_ensemble(profile)
        configs, weights = ens.configurations, ens.weights()
    else:
        configs, weights = (profile,), np.array([1.0])
    E = len(configs)
    n, b = geom.n, geom.b
    m = geom.sites
    r = np.array(geom.n - geom.b, dtype=real_dtype) / geom.macro_ratio
    cp, cm = _coupling_symbols(theta, r, spec, real_dtype)
    S0 = np.zeros((E, m, m), dtype=dtype)
    D = np.zeros((m, m), dtype=dtype)
    rhs = np.zeros(m, dtype=dtype)
    inv_width = 1.0 / np.array(2 * b + 1, dtype=real_dtype)
    for e, config in enumerate(configs):
        vals = config.as_array(real_dtype)
        K = config.period
        for idx in range(1, m - 1):
            i = idx - n
            kp = vals[i % K]
            km = vals[(i - 1) % K]
            S0[e, idx, idx] = -(kp + km)
            S0[e, idx, idx + 1] = kp
            S0[e, idx, idx - 1] = km
        for idx in geom.right_buffer_indices():
            S0[e, m - 1, idx] += inv_width
        for idx in geom.left_buffer_indices():
            S0[e, 0, idx] += inv_width
    for idx in range(1, m - 1):
        D[idx, idx] = 1.0
    rhs[0] = cm
    rhs[m - 1] = cp
    return S0, D, rhs, weights


def slow_eigenvalue(
    profile: DiffusivityProfile,
    geom: PatchGeometry,
    spec: CouplingSpec,
    theta: float,
    use_ensemble: bool = True,
    extended_precision: bool = False,
) -> SlowMode:
    """Slow eigenvalue of the patch scheme at macroscale phase theta.

    Works in units h = 1: the interior rows read
    lam v_i = kappa_i (v_{i+1} - v_i) + kappa_{i-1} (v_{i-1} - v_i), the
    coupling rows constrain both buffer averages of v to the Fourier symbol
    values of the coupling targets, and the closure is the amplitude
    normalization (ensemble-and-core average of v equals 1).  lam is located
    as the root of the scalar secular residual

        rho(lam) = <core average of v(lam)> - 1,

    where v(lam) solves the square per-configuration linear system at fixed
    lam.  The secant iteration starts from the harmonic-mean dispersion
    kappa_h s2(theta/N) and 1.1 times it, and stops when the update falls
    below 1e-13 relative (tighter near convergence costs one extra solve and
    removes stagnation noise).  A singular solve perturbs the probe and
    retries up to 3 times before failing loudly; nothing is regularized
    silently.

    With the full ensemble the secular function is real on the real axis
    (mirrored configurations conjugate-pair), so the iteration is kept on
    the real axis and the returned eigenvalue is exactly real; a single
    asymmetric configuration may carry a genuine drift component, so that
    path iterates in complex arithmetic and reports the imaginary part.

    extended_precision switches the solves to 80-bit floats; coefficient
    extraction at tight tolerance needs the headroom, ordinary dispersion
    scans do not.
    """
    if theta == 0.0:
        raise ValueError("theta must be nonzero (the constant mode is neutral)")
    dtype = np.clongdouble if extended_precision else complex
    real_dtype = np.longdouble if extended_precision else float
    S0, D, rhs, weights = _slow_system(
        profile, geom, spec, theta, use_ensemble, dtype
    )
    E, m, _ = S0.shape
    core = geom.core
    wsum = weights.sum()
    RHS = np.broadcast_to(rhs[None, :], (E, m)).copy()
    real_secular = bool(use_ensemble)

    def residual(lam):
        for attempt in range(3):
            try:
                v = solve_batched(S0 - lam * D[None, :, :], RHS)
                break
            except np.linalg.LinAlgError:
                lam = lam * (1.0 + 1e-10) + 1e-300
        else:
            raise np.linalg.LinAlgError(
                f"patch slow-mode system singular near lam = {lam}"
            )
        core_avg = (v[:, core].mean(axis=1) * weights).sum() / wsum
        rho = core_avg - 1.0
        if real_secular:
            rho = rho.real
        return rho, v

    s2 = -4.0 * np.sin(np.array(theta, dtype=real_dtype) / (2 * geom.macro_ratio)) ** 2
    kappa_h = np.array(profile.harmonic_mean, dtype=real_dtype)
    lam_a = kappa_h * s2 if real_secular else kappa_h * s2 + 0j
    lam_b = 1.1 * lam_a
    rho_a, _ = residual(lam_a)
    rho_b, v = residual(lam_b)
    iterations = 2
    tol = 1e-13
    step_prev = None
    for _ in range(80):
        if rho_b == rho_a:
            break
        lam_new = lam_b - rho_b * (lam_b - lam_a) / (rho_b - rho_a)
        lam_a, rho_a = lam_b, rho_b
        lam_b = lam_new
        rho_b, v = residual(lam_b)
        iterations += 1
        step = abs(lam_b - lam_a)
        if step <= tol * max(1e-300, abs(lam_b)):
            break
        if (
            step_prev is not None
            and step >= step_prev
            and step <= 1e-8 * max(1e-300, abs(lam_b))
        ):
            break  # stagnating at the round-off floor
        step_prev = step
    core_avg = (v[:, core].mean(axis=1) * weights).sum() / wsum
    return SlowMode(
        theta=float(theta),
        lam=complex(lam_b),
        profile_fields=np.ascontiguousarray(v.T.astype(complex)),
        normalization_residual=float(abs(core_avg - 1.0)),
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# operator conversion identities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConversionReport:
    """Residuals of the truncated micro/macro operator conversions.

    rows maps identity name -> list of (phase, lhs, rhs, residual); orders
    maps identity name -> observed convergence order of the residual under
    phase halving (nan when the residual is already at round-off).
    """

    direction: str
    l_max: int
    rows: dict[str, list[tuple[float, complex, complex, float]]]
    orders: dict[str, float]


def _binomial_weight(x: float, l: int) -> float:
    out = 1.0
    for k in range(l):
        out *= x - k
    return out / math.factorial(l)


def conversion_series(
    direction: str,
    l_max: int,
    geom: PatchGeometry,
    phases: tuple[float, ...] = (0.08, 0.04, 0.02, 0.01),
) -> ConversionReport:
    """Check the truncated operator conversions on Fourier symbols.

    direction "macro_to_micro" expands the macroscale operators (central
    difference squared, mean-difference) in microscale ones via the binomial
    series of e^(+- i N phi) in (e^(+- i phi) - 1); "micro_to_macro" is the
    inverse expansion with exponent 1/N.  Both sides are evaluated
    numerically on a grid of halving phases and the observed convergence
    order of the residual is reported.  This is the self-test that the
    coupling stencil, the symbol substitutions, and the scale factor N are
    mutually consistent.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    if direction not in ("macro_to_micro", "micro_to_macro"):
        raise ValueError(f"unknown conversion direction: {direction}")
    N = geom.macro_ratio
    rows: dict[str, list] = {}
    for phi in phases:
        micro_step = np.exp(1j * phi) - 1.0  # mu d + d^2/2 on the fine scale
        micro_step_m = np.exp(-1j * phi) - 1.0
        macro_step = np.exp(1j * N * phi) - 1.0
        macro_step_m = np.exp(-1j * N * phi) - 1.0
        if direction == "macro_to_micro":
            exponent, plus, minus = float(N), micro_step, micro_step_m
            lhs_even = 2.0 * np.cos(N * phi) - 2.0
            lhs_odd = 1j * np.sin(N * phi)
        else:
            exponent, plus, minus = 1.0 / N, macro_step, macro_step_m
            lhs_even = 2.0 * np.cos(phi) - 2.0
            lhs_odd = 1j * np.sin(phi)
        rhs_even = 0.0 + 0j
        rhs_odd = 0.0 + 0j
        for l in range(1, l_max + 1):
            w = _binomial_weight(exponent, l)
            rhs_even += w * (plus**l + minus**l)
            rhs_odd += 0.5 * w * (plus**l - minus**l)
        for name, lhs, rhs in (
            ("difference_squared", lhs_even, rhs_even),
            ("mean_difference", lhs_odd, rhs_odd),
        ):
            rows.setdefault(name, []).append(
                (phi, complex(lhs), complex(rhs), float(abs(lhs - rhs)))
            )
    orders = {}
    for name, data in rows.items():
        res = [row[3] for row in data]
        slopes = []
        for a, b, (p1, _, _, _), (p2, _, _, _) in zip(
            res[:-1], res[1:], data[:-1], data[1:]
        ):
            if a > 1e-14 and b > 1e-14:
                slopes.append(math.log(a / b) / math.log(p1 / p2))
        orders[name] = float(np.mean(slopes)) if slopes else float("nan")
    return ConversionReport(direction, l_max, rows, orders)
