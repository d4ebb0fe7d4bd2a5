"""Driving noise and control geometry.

The covariance operator Q is diagonal in the shell basis; each complex shell
carries an independent complex Brownian increment whose real and imaginary
parts both have variance q_j * dt.  With that convention the Cameron-Martin
norm of the noise is exactly the RKHS norm |h|_0^2 = sum |h_j|^2 / q_j used
throughout, so quadratic control energy, Gaussian exponents and the measure
change implemented in :mod:`shellab.ldp` are mutually consistent without
correction factors.

Diffusion coefficients are diagonal state-dependent (Nemytskii) maps: shell n
of sigma(t, u) h is gain_n(t, u) * h_n with a real gain.  Because diagonal
maps commute with fractional powers of A, their growth/Lipschitz constants in
every weighted norm follow from the scalar gain profile in closed form; the
declared constants stored on each family are computed that way and can be
overridden (e.g. to exercise the failure path of ``verify_conditions``).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .spectral import ModelParams, ShellState

__all__ = [
    "CovarianceSpec",
    "RkhsVector",
    "ConditionConstants",
    "DiffusionSpec",
    "ComposedDiffusion",
    "NoisePath",
    "Control",
    "rkhs_norm",
    "rkhs_inner",
    "lq_norm",
    "sample_wiener",
    "wiener_stream",
    "apply_sigma",
    "compose_sigma_nu",
    "constant_diagonal",
    "linear_diagonal",
    "saturated_nemytskii",
    "verify_conditions",
]

CONSTANT_DIAGONAL = "ConstantDiagonal"
LINEAR_DIAGONAL = "LinearDiagonal"
SATURATED_NEMYTSKII = "SaturatedNemytskii"
FAMILIES = (CONSTANT_DIAGONAL, LINEAR_DIAGONAL, SATURATED_NEMYTSKII)


@dataclass(frozen=True)
class CovarianceSpec:
    """Eigenvalues q_j > 0 of the covariance operator on the shell basis."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).copy()
        if q.ndim != 1 or q.size == 0:
            raise DomainError("q must be a non-empty 1-d array")
        if not np.all(np.isfinite(q)) or np.any(q <= 0.0):
            raise DomainError("all covariance eigenvalues must be finite and > 0")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.q.size

    @property
    def trace(self) -> float:
        return float(np.sum(self.q))

    @classmethod
    def uniform(cls, m: int, value: float = 1.0) -> "CovarianceSpec":
        return cls(np.full(m, value))

    @classmethod
    def geometric(cls, m: int, first: float = 1.0, ratio: float = 0.25) -> "CovarianceSpec":
        return cls(first * ratio ** np.arange(m, dtype=np.float64))


@dataclass(frozen=True)
class RkhsVector:
    """Element of the Cameron-Martin space in shell coordinates."""

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coefficients, dtype=np.complex128).copy()
        if arr.ndim != 1:
            raise DomainError("coefficients must be 1-d")
        if not np.all(np.isfinite(arr)):
            raise DomainError("non-finite coefficient")
        arr.setflags(write=False)
        object.__setattr__(self, "coefficients", arr)

    @property
    def m(self) -> int:
        return self.coefficients.size

    @classmethod
    def zeros(cls, m: int) -> "RkhsVector":
        return cls(np.zeros(m, dtype=np.complex128))

    @classmethod
    def basis(cls, m: int, j: int, amplitude: complex = 1.0) -> "RkhsVector":
        arr = np.zeros(m, dtype=np.complex128)
        arr[j - 1] = amplitude
        return cls(arr)


def _coeffs(h) -> np.ndarray:
    return h.coefficients if isinstance(h, RkhsVector) else np.asarray(h, dtype=np.complex128)


def rkhs_norm(h, q: CovarianceSpec) -> float:
    """|h|_0 = sqrt(sum_j |h_j|^2 / q_j)."""
    arr = _coeffs(h)
    if arr.shape[-1] != q.m:
        raise DomainError("dimension mismatch between h and q")
    return float(np.sqrt(np.sum(np.abs(arr) ** 2 / q.q, axis=-1)))


def rkhs_inner(x, y, q: CovarianceSpec) -> float:
    """(x, y)_0 = Re sum_j x_j y_j^* / q_j."""
    xa, ya = _coeffs(x), _coeffs(y)
    if xa.shape[-1] != q.m or ya.shape[-1] != q.m:
        raise DomainError("dimension mismatch")
    return float(np.real(np.sum(xa * np.conj(ya) / q.q, axis=-1)))


def lq_norm(S, q: CovarianceSpec) -> float:
    """Hilbert-Schmidt size of S Q^{1/2}: sqrt(sum_{n,j} |S_nj|^2 q_j)."""
    mat = np.asarray(S, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[1] != q.m:
        raise DomainError("S must be a matrix with q.m columns")
    if not np.all(np.isfinite(mat)):
        raise DomainError("non-finite matrix entry")
    return float(np.sqrt(np.sum(np.abs(mat) ** 2 * q.q[None, :])))


@dataclass(frozen=True)
class ConditionConstants:
    """Declared growth/Lipschitz/Hoelder constants of a diffusion family.

    K*, L*  : trace-norm growth and Lipschitz constants (plain and A^{1/2}
              weighted forms share a set);
    Kt*, Lt*: operator-norm counterparts used for the control intensity;
    Kb*, Lb*: the viscosity-split constants of the base pair (sigma, sigma_bar)
              from which composed families derive the sets above;
    L3      : the A^alpha Lipschitz constant of sigma;
    gamma   : Hoelder exponent in time, with multiplier ``holder_C``.
    Constants bound the exact gain profiles for t in [0, 1].
    """

    K0: float = 0.0
    K1: float = 0.0
    K2: float = 0.0
    L1: float = 0.0
    L2: float = 0.0
    Kt0: float = 0.0
    Kt1: float = 0.0
    Kt2: float = 0.0
    KtH: float = 0.0
    Lt1: float = 0.0
    Lt2: float = 0.0
    Kb0: float = 0.0
    Kb1: float = 0.0
    Kb2: float = 0.0
    KbH: float = 0.0
    Lb1: float = 0.0
    Lb2: float = 0.0
    L3: float = 0.0
    gamma: float = 1.0
    holder_C: float = 0.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _family_constants(family, g, q, k, s, amp, gamma):
    """Closed-form condition constants for a diagonal family (t in [0,1])."""
    tau2 = (1.0 + amp) ** 2
    gq = g * g * q.q
    s0 = float(np.sum(gq))
    s1 = float(np.sum(k * k * gq))
    mx = float(np.max(gq)) if gq.size else 0.0
    mx_k = float(np.max(np.maximum(1.0, k * k) * gq)) if gq.size else 0.0
    k1sq = float(k[0] ** 2)  # smallest shell wavenumber squared
    if family == CONSTANT_DIAGONAL:
        return ConditionConstants(
            K0=tau2 * max(s0, s1),
            Kt0=tau2 * mx_k,
            Kb0=tau2 * max(s0, s1),
            gamma=gamma,
            holder_C=amp * math.sqrt(max(s0, s1)),
        )
    if family == LINEAR_DIAGONAL:
        return ConditionConstants(
            K0=2 * tau2 * max(s0, s1),
            K1=2 * tau2 * mx,
            L1=tau2 * mx,
            Kt0=2 * tau2 * mx_k,
            Kt1=2 * tau2 * mx,
            Lt1=tau2 * mx,
            Kb0=2 * tau2 * max(s0, s1),
            Kb1=2 * tau2 * mx,
            Kb2=2 * tau2 * mx / k1sq,
            KbH=2 * tau2 * mx / math.sqrt(k1sq),
            Lb1=tau2 * mx,
            Lb2=tau2 * mx / k1sq,
            L3=(1.0 + amp) * math.sqrt(mx),
            gamma=gamma,
            holder_C=amp * max(math.sqrt(2 * max(s0, s1)), math.sqrt(2 * mx / k1sq)),
        )
    if family == SATURATED_NEMYTSKII:
        return ConditionConstants(
            K0=tau2 * s * s * max(s0, s1),
            L1=tau2 * mx,
            Kt0=tau2 * s * s * mx_k,
            Lt1=tau2 * mx,
            Kb0=tau2 * s * s * max(s0, s1),
            Kb2=tau2 * mx / k1sq,
            KbH=tau2 * mx / math.sqrt(k1sq),
            Lb1=tau2 * mx,
            Lb2=tau2 * mx / k1sq,
            L3=(1.0 + amp) * math.sqrt(mx),
            gamma=gamma,
            holder_C=amp * s * math.sqrt(max(s0, s1)),
        )
    raise DomainError(f"unknown family {family!r}")


@dataclass(frozen=True)
class DiffusionSpec:
    """Diagonal diffusion coefficient with declared condition constants."""

    family: str
    gains: np.ndarray
    q: CovarianceSpec
    wavenumbers: np.ndarray = field(repr=False)
    saturation: float = 1.0
    time_amp: float = 0.0
    time_exponent: float = 1.0
    constants: ConditionConstants = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        g = np.asarray(self.gains, dtype=np.float64).copy()
        if g.shape != (self.q.m,):
            raise DomainError("gains must match the covariance dimension")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise DomainError("gains must be finite and >= 0")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)
        k = np.asarray(self.wavenumbers, dtype=np.float64).copy()
        if k.shape != (self.q.m,):
            raise DomainError("wavenumbers must match the covariance dimension")
        k.setflags(write=False)
        object.__setattr__(self, "wavenumbers", k)
        if self.saturation <= 0:
            raise DomainError("saturation scale must be > 0")
        if self.time_amp < 0:
            raise DomainError("time_amp must be >= 0")
        if not 0 < self.time_exponent <= 1:
            raise DomainError("time_exponent must lie in (0, 1]")
        if self.constants is None:
            object.__setattr__(
                self,
                "constants",
                _family_constants(
                    self.family, g, self.q, k,
                    self.saturation, self.time_amp, self.time_exponent,
                ),
            )

    @property
    def m(self) -> int:
        return self.q.m

    @property
    def is_state_dependent(self) -> bool:
        return self.family != CONSTANT_DIAGONAL

    def with_constants(self, **updates) -> "DiffusionSpec":
        return replace(self, constants=replace(self.constants, **updates))

    def _tau(self, t):
        if self.time_amp == 0.0:
            return 1.0
        return 1.0 + self.time_amp * np.abs(t) ** self.time_exponent

    def gain(self, t, u):
        """Real gain profile at time t and state batch u of shape (..., m)."""
        tau = self._tau(t)
        if self.family == CONSTANT_DIAGONAL:
            return np.broadcast_to(self.gains * tau, np.shape(u)).copy()
        r = np.abs(u)
        if self.family == LINEAR_DIAGONAL:
            return self.gains * (1.0 + r) * tau
        s = self.saturation
        return self.gains * (s * r / (s + r)) * tau

    def gain_and_deriv(self, t, u):
        """Gain profile and its derivative with respect to the shell modulus."""
        tau = self._tau(t)
        r = np.abs(u)
        if self.family == CONSTANT_DIAGONAL:
            g = np.broadcast_to(self.gains * tau, np.shape(u)).copy()
            return g, np.zeros_like(r)
        if self.family == LINEAR_DIAGONAL:
            return self.gains * (1.0 + r) * tau, np.broadcast_to(self.gains * tau, r.shape).copy()
        s = self.saturation
        return (
            self.gains * (s * r / (s + r)) * tau,
            self.gains * (s * s / (s + r) ** 2) * tau,
        )

    def apply(self, t, u, h):
        """sigma(t, u) h in shell coordinates, batched over leading axes."""
        return self.gain(t, u) * h


@dataclass(frozen=True)
class ComposedDiffusion:
    """The family sigma + sqrt(nu) * sigma_bar at a fixed viscosity.

    Exposes the same gain interface as :class:`DiffusionSpec`; the declared
    constants follow the composition rules (K0 = Kt0 = 4 Kb0, K1 = Kt1 = 2 Kb1,
    L1 = Lt1 = 2 Lb1, Kt2 = 2 Kb2, KtH = 2 KbH, and the viscosity-scaled
    K2 = 2 max(Kb2, KbH k0^{4 alpha - 2}) nu_max, L2 = 2 Lb2 nu_max,
    Lt2 = 2 Lb2), valid for viscosities up to ``nu_max``.
    """

    sigma: DiffusionSpec
    sigma_bar: DiffusionSpec
    nu: float
    nu_max: float
    alpha: float
    constants: ConditionConstants = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.nu < 0:
            raise DomainError("nu must be >= 0")
        if self.sigma.m != self.sigma_bar.m:
            raise DomainError("sigma and sigma_bar dimensions differ")
        if self.constants is None:
            cs, cb = self.sigma.constants, self.sigma_bar.constants
            kb0 = max(cs.Kb0, cb.Kb0)
            # base wavenumber of the geometric ladder k_n = k0 mu^n
            w = self.sigma.wavenumbers
            k0 = float(w[0] ** 2 / w[1])
            kfac = k0 ** (4.0 * self.alpha - 2.0)
            object.__setattr__(
                self,
                "constants",
                ConditionConstants(
                    K0=4 * kb0,
                    K1=2 * cs.Kb1,
                    K2=2 * max(cb.Kb2, cb.KbH * kfac) * self.nu_max,
                    L1=2 * cs.Lb1,
                    L2=2 * cb.Lb2 * self.nu_max,
                    Kt0=4 * kb0,
                    Kt1=2 * cs.Kb1,
                    Kt2=2 * cb.Kb2,
                    KtH=2 * cb.KbH,
                    Lt1=2 * cs.Lb1,
                    Lt2=2 * cb.Lb2,
                    Kb0=kb0,
                    Kb1=cs.Kb1,
                    Kb2=cb.Kb2,
                    KbH=cb.KbH,
                    Lb1=cs.Lb1,
                    Lb2=cb.Lb2,
                    L3=cs.L3,
                    gamma=min(cs.gamma, cb.gamma),
                    holder_C=cs.holder_C + math.sqrt(self.nu_max) * cb.holder_C,
                ),
            )

    @property
    def m(self) -> int:
        return self.sigma.m

    @property
    def is_state_dependent(self) -> bool:
        return self.sigma.is_state_dependent or (
            self.nu > 0 and self.sigma_bar.is_state_dependent
        )

    def gain(self, t, u):
        g = self.sigma.gain(t, u)
        if self.nu > 0:
            g = g + math.sqrt(self.nu) * self.sigma_bar.gain(t, u)
        return g

    def gain_and_deriv(self, t, u):
        g, d = self.sigma.gain_and_deriv(t, u)
        if self.nu > 0:
            gb, db = self.sigma_bar.gain_and_deriv(t, u)
            r = math.sqrt(self.nu)
            g, d = g + r * gb, d + r * db
        return g, d

    def apply(self, t, u, h):
        return self.gain(t, u) * h


def compose_sigma_nu(sigma, sigma_bar, nu, nu_max=None, alpha=0.25):
    """Build sigma + sqrt(nu) sigma_bar; at nu = 0 this is sigma itself."""
    if nu < 0:
        raise DomainError("nu must be >= 0")
    if nu == 0:
        return sigma
    if nu_max is None:
        nu_max = nu
    if nu_max < nu:
        raise DomainError("nu_max must be >= nu")
    return ComposedDiffusion(sigma=sigma, sigma_bar=sigma_bar, nu=nu, nu_max=nu_max, alpha=alpha)


def _wavenumbers_for(q, params):
    if params is not None:
        if params.m != q.m:
            raise DomainError("model truncation and covariance dimension differ")
        return params.shell_wavenumbers()
    return 2.0 ** np.arange(1, q.m + 1, dtype=np.float64)


def constant_diagonal(q, gains=1.0, params: ModelParams | None = None, **kw) -> DiffusionSpec:
    g = np.broadcast_to(np.asarray(gains, dtype=np.float64), (q.m,))
    return DiffusionSpec(CONSTANT_DIAGONAL, g, q, _wavenumbers_for(q, params), **kw)


def linear_diagonal(q, gains=1.0, params: ModelParams | None = None, **kw) -> DiffusionSpec:
    g = np.broadcast_to(np.asarray(gains, dtype=np.float64), (q.m,))
    return DiffusionSpec(LINEAR_DIAGONAL, g, q, _wavenumbers_for(q, params), **kw)


def saturated_nemytskii(q, gains=1.0, saturation=1.0, params: ModelParams | None = None, **kw) -> DiffusionSpec:
    g = np.broadcast_to(np.asarray(gains, dtype=np.float64), (q.m,))
    return DiffusionSpec(
        SATURATED_NEMYTSKII, g, q, _wavenumbers_for(q, params), saturation=saturation, **kw
    )


def apply_sigma(spec, t: float, u: ShellState, h: RkhsVector) -> ShellState:
    """sigma(t, u) h as a shell state."""
    if spec.m != u.params.m or h.m != u.params.m:
        raise DomainError("dimension mismatch")
    return u.with_components(spec.apply(t, u.components, h.coefficients))


# ---------------------------------------------------------------------------
# Wiener sampling


def wiener_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for trajectory ``stream`` of a seed.

    Splitting rule: stream i uses ``Philox(key=seed).jumped(i)``, so disjoint
    trajectory indices give independent streams reproducibly.
    """
    return np.random.Generator(np.random.Philox(key=seed).jumped(stream))


@dataclass(frozen=True)
class NoisePath:
    """Increments of a Q-Wiener path, regenerable from (seed, stream, dims).

    ``increments[k, j]`` is the shell-j increment over step k; its real and
    imaginary parts are independent N(0, q_j * dt).
    """

    seed: int
    dt: float
    q: CovarianceSpec
    increments: np.ndarray
    stream: int = 0

    def __post_init__(self):
        arr = np.asarray(self.increments, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[1] != self.q.m:
            raise DomainError("increments must have shape (steps, m)")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "increments", arr)

    @property
    def steps(self) -> int:
        return self.increments.shape[0]


def wiener_increments(rng, steps: int, dt: float, q: CovarianceSpec) -> np.ndarray:
    """Raw (steps, m) complex increments for a given generator."""
    z = rng.standard_normal((steps, 2, q.m))
    scale = np.sqrt(q.q * dt)
    return (z[:, 0, :] + 1j * z[:, 1, :]) * scale


def sample_wiener(seed: int, steps: int, dt: float, q: CovarianceSpec, stream: int = 0) -> NoisePath:
    if steps < 1:
        raise DomainError("steps must be >= 1")
    if not (np.isfinite(dt) and dt > 0):
        raise DomainError("dt must be finite and > 0")
    incr = wiener_increments(wiener_stream(seed, stream), steps, dt, q)
    return NoisePath(seed=seed, dt=dt, q=q, increments=incr, stream=stream)


# ---------------------------------------------------------------------------
# Controls


@dataclass(frozen=True)
class Control:
    """Piecewise-constant RKHS-valued path on a uniform grid over [0, T].

    ``values[c]`` is the (complex, shell-coordinate) value on cell c; the
    quadratic energy 0.5 * integral of |h|_0^2 is cached at construction.
    Membership in the energy ball of level M means 2 * energy <= M.
    """

    horizon: float
    values: np.ndarray
    q: CovarianceSpec
    energy: float = field(default=None, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise DomainError("horizon must be finite and > 0")
        vals = np.asarray(self.values, dtype=np.complex128).copy()
        if vals.ndim != 2 or vals.shape[1] != self.q.m or vals.shape[0] < 1:
            raise DomainError("values must have shape (n_cells, m)")
        if not np.all(np.isfinite(vals)):
            raise DomainError("non-finite control value")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        dt = self.horizon / vals.shape[0]
        e = 0.5 * dt * float(np.sum(np.abs(vals) ** 2 / self.q.q[None, :]))
        object.__setattr__(self, "energy", e)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def cell_width(self) -> float:
        return self.horizon / self.n_cells

    def cell(self, c: int) -> RkhsVector:
        return RkhsVector(self.values[c])

    def value_at(self, t: float) -> np.ndarray:
        """Cell value at time t (right-open cells; t = T uses the last cell)."""
        c = min(int(t / self.cell_width), self.n_cells - 1)
        return self.values[max(c, 0)]

    def on_step_grid(self, steps: int) -> np.ndarray:
        """(steps, m) array of cell values on an aligned step grid."""
        if steps % self.n_cells != 0:
            raise DomainError(
                f"steps ({steps}) must be a multiple of the control cells ({self.n_cells})"
            )
        return np.repeat(self.values, steps // self.n_cells, axis=0)

    def scaled(self, factor: float) -> "Control":
        return Control(self.horizon, self.values * factor, self.q)

    def in_energy_ball(self, level: float) -> bool:
        return 2.0 * self.energy <= level * (1.0 + 1e-12)

    @classmethod
    def zero(cls, horizon: float, n_cells: int, q: CovarianceSpec) -> "Control":
        return cls(horizon, np.zeros((n_cells, q.m), dtype=np.complex128), q)

    @classmethod
    def constant(cls, horizon: float, q: CovarianceSpec, vector, n_cells: int = 1) -> "Control":
        row = np.asarray(_coeffs(vector), dtype=np.complex128)
        return cls(horizon, np.tile(row, (n_cells, 1)), q)


# ---------------------------------------------------------------------------
# Numeric spot checks of the growth/Lipschitz/Hoelder conditions


@dataclass(frozen=True)
class ConditionEntry:
    name: str
    empirical_max: float
    declared: str
    passed: bool


@dataclass(frozen=True)
class ConditionReport:
    entries: tuple
    passed: bool

    def entry(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def _diag_lq_sq(gain, q, weights=None):
    w = q.q if weights is None else q.q * weights
    return np.sum(gain**2 * w, axis=-1)


def _diag_op_sq(gain, q, weights=None):
    w = q.q if weights is None else q.q * weights
    return np.max(gain**2 * w, axis=-1)


def _ratio(lhs, rhs):
    out = np.zeros_like(lhs)
    pos = rhs > 0
    out[pos] = lhs[pos] / rhs[pos]
    out[~pos & (lhs > 1e-300)] = np.inf
    return float(np.max(out)) if out.size else 0.0


def verify_conditions(
    spec,
    samples: int = 200,
    nu_grid=(0.0,),
    alpha: float = 0.25,
    seed: int = 0,
    state_scale: float = 2.0,
) -> ConditionReport:
    """Empirically check the declared growth/Lipschitz constants of a family.

    Random (t, u, v) triples are drawn with t in [0, 1]; every ratio
    lhs / declared-bound appearing in the growth, Lipschitz (plain, A^{1/2}
    and A^alpha weighted) and time-Hoelder conditions is evaluated, with the
    viscosity-dependent terms instantiated at each value of ``nu_grid``.
    The report passes iff every empirical maximum stays at or below 1 (up to
    roundoff slack).
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    q = spec.sigma.q if isinstance(spec, ComposedDiffusion) else spec.q
    k = spec.sigma.wavenumbers if isinstance(spec, ComposedDiffusion) else spec.wavenumbers
    c = spec.constants
    m = q.m
    rng = np.random.default_rng(seed)

    t = rng.uniform(0.0, 1.0, samples)
    s = rng.uniform(0.0, 1.0, samples)
    u = state_scale * (rng.standard_normal((samples, m)) + 1j * rng.standard_normal((samples, m))) / k
    v = state_scale * (rng.standard_normal((samples, m)) + 1j * rng.standard_normal((samples, m))) / k
    # include nearby pairs so Lipschitz ratios probe the local regime too
    half = samples // 2
    v[:half] = u[:half] + 0.05 * v[:half]

    k2 = k * k
    k4a = k ** (4.0 * alpha)
    nh = np.sum(np.abs(u) ** 2, axis=1)
    nv = np.sum(k2 * np.abs(u) ** 2, axis=1)
    nH = np.sum(k * np.abs(u) ** 2, axis=1)
    nA = np.sum(k2 * k2 * np.abs(u) ** 2, axis=1)
    d = u - v
    dh = np.sum(np.abs(d) ** 2, axis=1)
    dv = np.sum(k2 * np.abs(d) ** 2, axis=1)
    dA = np.sum(k2 * k2 * np.abs(d) ** 2, axis=1)
    da = np.sum(k4a * np.abs(d) ** 2, axis=1)

    gu = np.stack([spec.gain(ti, ui) for ti, ui in zip(t, u)])
    gv = np.stack([spec.gain(ti, vi) for ti, vi in zip(t, v)])
    gs = np.stack([spec.gain(si, ui) for si, ui in zip(s, u)])
    dg = gu - gv

    entries = []

    def add(name, lhs, rhs, declared):
        r = _ratio(lhs, rhs)
        entries.append(ConditionEntry(name, r, declared, bool(r <= 1.0 + 1e-9)))

    nus = sorted(set(float(x) for x in nu_grid))
    for nu in nus:
        tag = f"@nu={nu:g}"
        add(f"growth_trace{tag}", _diag_lq_sq(gu, q), c.K0 + c.K1 * nh + c.K2 * nv, "K0+K1|u|^2+K2||u||^2")
        add(f"lip_trace{tag}", _diag_lq_sq(dg, q), c.L1 * dh + c.L2 * dv, "L1|u-v|^2+L2||u-v||^2")
        add(f"growth_op{tag}", _diag_op_sq(gu, q), c.Kt0 + c.Kt1 * nh + nu * c.KtH * nH, "Kt0+Kt1|u|^2+nu KtH ||u||_H^2")
        add(f"lip_op{tag}", _diag_op_sq(dg, q), c.Lt1 * dh + nu * c.Lt2 * dv, "Lt1|u-v|^2+nu Lt2 ||u-v||^2")
        add(f"growth_op_A12{tag}", _diag_op_sq(gu, q, k2), c.Kt0 + c.Kt1 * nv + nu * c.Kt2 * nA, "Kt0+Kt1||u||^2+nu Kt2|Au|^2")
        add(f"lip_op_A12{tag}", _diag_op_sq(dg, q, k2), c.Lt1 * dv + nu * c.Lt2 * dA, "Lt1||u-v||^2+nu Lt2|Au-Av|^2")
        add(f"growth_trace_A12{tag}", _diag_lq_sq(gu, q, k2), c.K0 + c.K1 * nv + c.K2 * nA, "K0+K1||u||^2+K2|Au|^2")
        add(f"lip_trace_A12{tag}", _diag_lq_sq(dg, q, k2), c.L1 * dv + c.L2 * dA, "L1||u-v||^2+L2|Au-Av|^2")

    add("lip_trace_Aalpha", np.sqrt(_diag_lq_sq(dg, q, k4a)), c.L3 * np.sqrt(da), "L3||u-v||_alpha")
    add(
        "holder_time",
        np.sqrt(_diag_lq_sq(gu - gs, q)),
        c.holder_C * (1.0 + np.sqrt(nv)) * np.abs(t - s) ** c.gamma,
        "C(1+||u||)|t-s|^gamma",
    )

    return ConditionReport(entries=tuple(entries), passed=all(e.passed for e in entries))
