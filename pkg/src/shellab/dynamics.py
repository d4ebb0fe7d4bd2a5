"""Time integration of the inviscid controlled equation and the viscous
stochastic dynamics, with norm monitors and dyadic time-increment studies.

The inviscid solver is classical RK4 on du/dt = -B(u) + sigma(t,u) h(t) with
an adaptive substep guard for the explicit quadratic term.  The viscous
solvers treat the stiff dissipation exactly (per-shell factor
exp(-nu k_n^2 dt)) or semi-implicitly, and the quadratic drift, control drift
and noise explicitly:

    u_{k+1} = E o [ u_k + dt (-B(u_k) + sigma~(t_k,u_k) h_k)
                    + sqrt(nu) sigma(t_k,u_k) dW_k ].

All steppers run on (batch, m) arrays; a single trajectory is batch 1.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import trajio
from .errors import BlowUpError, DegenerateFitError, DomainError, NumericalError, StepSizeError
from .noise import NoisePath
from .spectral import ModelParams, ShellState, bilinear_batch

RK4 = "RK4"
SEMI_IMPLICIT_EM = "SemiImplicitEM"
EXPONENTIAL_EM = "ExponentialEM"
DETERMINISTIC_SCHEMES = (RK4,)
STOCHASTIC_SCHEMES = (SEMI_IMPLICIT_EM, EXPONENTIAL_EM)

BLOWUP_FACTOR = 1e6
MAX_SUBSTEPS = 4096


@dataclass(frozen=True)
class SolverConfig:
    """Horizon, resolution and scheme for one integration.

    ``monitor_N`` is the gate level used by increment studies; ``guard_factor``
    scales the step bound dt <= c / (k_m max|u_n|) for the explicit quadratic
    term (None disables the guard).
    """

    T: float
    steps: int
    nu: float = 0.0
    scheme: str = RK4
    monitor_N: float = math.inf
    record_every: int = 1
    guard_factor: float | None = 0.1
    alpha_channel: float = 0.25

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise DomainError("T must be finite and > 0")
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if not np.isfinite(self.nu) or self.nu < 0:
            raise DomainError("nu must be finite and >= 0")
        if self.scheme in DETERMINISTIC_SCHEMES:
            if self.nu != 0.0:
                raise DomainError("deterministic schemes require nu = 0")
        elif self.scheme in STOCHASTIC_SCHEMES:
            if self.nu <= 0.0:
                raise DomainError("stochastic schemes require nu > 0")
        else:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.record_every < 1 or self.steps % self.record_every != 0:
            raise DomainError("record_every must divide steps")

    @property
    def dt(self) -> float:
        return self.T / self.steps


@dataclass(frozen=True)
class Trajectory:
    """Recorded times, states and per-time monitor channels."""

    times: np.ndarray
    states: np.ndarray  # (n_records, m) complex
    channels: dict
    params: ModelParams
    nu: float
    steps: int

    @property
    def n_records(self) -> int:
        return self.times.shape[0]

    def state(self, i: int) -> ShellState:
        return ShellState(self.states[i], self.params)

    @property
    def initial_state(self) -> ShellState:
        return self.state(0)

    @property
    def final_state(self) -> ShellState:
        return self.state(-1)

    def channel(self, name: str) -> np.ndarray:
        return self.channels[name]

    def to_csv(self, path, meta=None):
        cols = {"t": self.times}
        cols.update(self.channels)
        trajio.write_csv(path, cols, meta)

    def save_snapshot(self, path):
        trajio.write_snapshot(path, self.times, self.states, self.steps)


CHANNEL_NAMES = ("h_norm", "v_norm", "calh_norm", "alpha_norm", "au_norm", "energy_residual")


def _norm_channels(params, states, alpha):
    k = params.shell_wavenumbers()
    p2 = np.abs(states) ** 2
    return {
        "h_norm": np.sqrt(p2.sum(axis=-1)),
        "v_norm": np.sqrt((k**2 * p2).sum(axis=-1)),
        "calh_norm": np.sqrt((k * p2).sum(axis=-1)),
        "alpha_norm": np.sqrt((k ** (4 * alpha) * p2).sum(axis=-1)),
        "au_norm": np.sqrt((k**4 * p2).sum(axis=-1)),
    }


def _control_grid(h, steps, m):
    if h is None:
        return None
    if h.m != m:
        raise DomainError("control dimension does not match the model")
    return h.on_step_grid(steps)


def _blowup_gate(u, xi_hnorm, step):
    amax = np.sqrt(np.max(np.sum(np.abs(u) ** 2, axis=-1)))
    if not np.isfinite(amax) or amax > BLOWUP_FACTOR * (1.0 + xi_hnorm):
        raise BlowUpError(
            f"|u| = {amax:.3e} exceeded the blow-up guard at step {step}; "
            "the step may be too large or a growth condition violated"
        )


def _guard_scale(params):
    """k-scale of the explicit quadratic term: (|a|+|b|) k_m, zero if B is off."""
    return (abs(params.a) + abs(params.b)) * params.k0 * params.mu**params.m


def skeleton_rhs(params, sigma, t, u, eta):
    """-B(u) + sigma(t, u) eta on a (batch, m) state block."""
    out = -bilinear_batch(params, u, u)
    if eta is not None and sigma is not None:
        out = out + sigma.gain(t, u) * eta
    return out


def rk4_sweep(params, sigma, h, xi, cfg, energy_channel=True):
    """Batched RK4 for the inviscid controlled equation.

    Returns (times, recorded states (n_rec, batch, m), energy residual
    (n_rec, batch)).  The residual co-integrates z' = 2 (sigma h, u) with the
    same stages, so |u|^2 - |xi|^2 - z inherits the O(dt^4) accuracy and is
    exactly the energy error when h = 0.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=np.complex128))
    batch, m = xi.shape
    steps, dt = cfg.steps, cfg.dt
    hgrid = _control_grid(h, steps, m)
    guard_k = _guard_scale(params)
    xi_hnorm = float(np.sqrt(np.max(np.sum(np.abs(xi) ** 2, axis=-1))))

    n_rec = steps // cfg.record_every + 1
    rec_states = np.empty((n_rec, batch, m), dtype=np.complex128)
    rec_resid = np.empty((n_rec, batch))
    times = np.empty(n_rec)

    u = xi.copy()
    z = np.zeros(batch)
    e0 = np.sum(np.abs(xi) ** 2, axis=-1)
    rec_states[0], rec_resid[0], times[0] = u, 0.0, 0.0
    ptr = 1

    def f(t, y, eta):
        return skeleton_rhs(params, sigma, t, y, eta)

    def fz(t, y, eta):
        if eta is None or sigma is None:
            return np.zeros(batch)
        drive = sigma.gain(t, y) * eta
        return 2.0 * np.real(np.sum(drive * np.conj(y), axis=-1))

    for i in range(steps):
        t = i * dt
        eta = None if hgrid is None else hgrid[i]
        n_sub = 1
        if cfg.guard_factor is not None and guard_k > 0:
            amax = float(np.max(np.abs(u)))
            if amax > 0:
                allowed = cfg.guard_factor / (guard_k * amax)
                n_sub = min(max(1, math.ceil(dt / allowed)), MAX_SUBSTEPS + 1)
                if n_sub > MAX_SUBSTEPS:
                    raise StepSizeError(
                        f"step {i}: dt = {dt:.3e} needs more than {MAX_SUBSTEPS} "
                        f"substeps under the guard dt <= c/(k_m max|u|)"
                    )
        hsub = dt / n_sub
        for j in range(n_sub):
            ts = t + j * hsub
            k1 = f(ts, u, eta)
            z1 = fz(ts, u, eta)
            u2 = u + 0.5 * hsub * k1
            k2 = f(ts + 0.5 * hsub, u2, eta)
            z2 = fz(ts + 0.5 * hsub, u2, eta)
            u3 = u + 0.5 * hsub * k2
            k3 = f(ts + 0.5 * hsub, u3, eta)
            z3 = fz(ts + 0.5 * hsub, u3, eta)
            u4 = u + hsub * k3
            k4 = f(ts + hsub, u4, eta)
            z4 = fz(ts + hsub, u4, eta)
            u = u + (hsub / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            z = z + (hsub / 6.0) * (z1 + 2.0 * z2 + 2.0 * z3 + z4)
        _blowup_gate(u, xi_hnorm, i)
        if (i + 1) % cfg.record_every == 0:
            rec_states[ptr] = u
            rec_resid[ptr] = np.sum(np.abs(u) ** 2, axis=-1) - e0 - z if energy_channel else 0.0
            times[ptr] = (i + 1) * dt
            ptr += 1
    return times, rec_states, rec_resid


def em_sweep(
    params,
    sigma_nu,
    sigma_tilde,
    h,
    xi,
    cfg,
    increments,
    q=None,
    girsanov_control=None,
    record=True,
):
    """Batched explicit-noise step sweep for the viscous dynamics.

    ``increments`` is either a (steps, m) array shared by the batch or a
    callable step -> (batch, m) block.  When ``girsanov_control`` is given the
    per-path log-weight of the measure change that removes that control drift
    is accumulated (requires ``q``).  Returns (times, states or None,
    residuals or None, terminal state, log-weights or None).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=np.complex128))
    batch, m = xi.shape
    steps, dt, nu = cfg.steps, cfg.dt, cfg.nu
    if dt <= 0:
        raise DomainError("dt must be > 0")
    hgrid = _control_grid(h, steps, m)
    ggrid = _control_grid(girsanov_control, steps, m)
    k = params.shell_wavenumbers()
    guard_k = _guard_scale(params)
    k2 = k * k
    if cfg.scheme == EXPONENTIAL_EM:
        damp = np.exp(-nu * k2 * dt)
    elif cfg.scheme == SEMI_IMPLICIT_EM:
        damp = 1.0 / (1.0 + nu * k2 * dt)
    else:
        raise DomainError(f"{cfg.scheme} is not a stochastic scheme")
    sq_nu = math.sqrt(nu)
    xi_hnorm = float(np.sqrt(np.max(np.sum(np.abs(xi) ** 2, axis=-1))))

    n_rec = steps // cfg.record_every + 1
    if record:
        rec_states = np.empty((n_rec, batch, m), dtype=np.complex128)
        rec_resid = np.empty((n_rec, batch))
        times = np.empty(n_rec)
        rec_states[0], rec_resid[0], times[0] = xi, 0.0, 0.0
    else:
        rec_states = rec_resid = times = None

    u = xi.copy()
    e0 = np.sum(np.abs(xi) ** 2, axis=-1)
    balance = np.zeros(batch)
    logw = np.zeros(batch) if girsanov_control is not None else None
    if logw is not None and q is None:
        raise DomainError("Girsanov weights need the covariance spec")

    get_incr = increments if callable(increments) else (lambda i: increments[i][None, :])
    ptr = 1
    for i in range(steps):
        t = i * dt
        if cfg.guard_factor is not None and guard_k > 0:
            amax = float(np.max(np.abs(u)))
            if amax > 0 and dt > cfg.guard_factor / (guard_k * amax):
                raise StepSizeError(
                    f"step {i}: dt = {dt:.3e} violates the guard "
                    f"dt <= c/(k_m max|u|) = {cfg.guard_factor / (guard_k * amax):.3e}; "
                    "increase steps"
                )
        drift = -bilinear_batch(params, u, u)
        if hgrid is not None and sigma_tilde is not None:
            drive = sigma_tilde.gain(t, u) * hgrid[i]
            drift = drift + drive
            balance = balance + 2.0 * dt * np.real(np.sum(drive * np.conj(u), axis=-1))
        dw = get_incr(i)
        if sigma_nu is not None:
            gn = sigma_nu.gain(t, u)
            shot = sq_nu * gn * dw
            balance = balance + 2.0 * np.real(np.sum(shot * np.conj(u), axis=-1))
            if q is not None:
                balance = balance + 2.0 * nu * dt * np.sum(gn**2 * q.q, axis=-1)
        else:
            shot = 0.0
        balance = balance - 2.0 * nu * dt * np.sum(k2 * np.abs(u) ** 2, axis=-1)
        if logw is not None:
            eta = ggrid[i]
            logw = logw - np.real(np.sum(eta[None, :] * np.conj(dw) / q.q, axis=-1)) / sq_nu
        u = damp * (u + dt * drift + shot)
        _blowup_gate(u, xi_hnorm, i)
        if record and (i + 1) % cfg.record_every == 0:
            rec_states[ptr] = u
            rec_resid[ptr] = np.sum(np.abs(u) ** 2, axis=-1) - e0 - balance
            times[ptr] = (i + 1) * dt
            ptr += 1
    if logw is not None:
        cells = girsanov_control.values
        width = girsanov_control.horizon / cells.shape[0]
        energy2 = width * float(np.sum(np.abs(cells) ** 2 / q.q[None, :]))
        logw = logw - energy2 / (2.0 * nu)
    return times, rec_states, rec_resid, u, logw


def _build_trajectory(params, cfg, times, states, resid):
    chans = _norm_channels(params, states[:, 0, :], cfg.alpha_channel)
    chans["energy_residual"] = resid[:, 0]
    return Trajectory(
        times=times,
        states=states[:, 0, :],
        channels=chans,
        params=params,
        nu=cfg.nu,
        steps=cfg.steps,
    )


def solve_inviscid(params, sigma, h, xi: ShellState, cfg: SolverConfig) -> Trajectory:
    """RK4 trajectory of the controlled inviscid equation."""
    if cfg.nu != 0.0 or cfg.scheme != RK4:
        raise DomainError("inviscid solves require nu = 0 and the RK4 scheme")
    if not params.enstrophy_exact:
        warnings.warn(
            "coefficients do not satisfy a(1+mu^2)+b mu^2 = 0; the gradient-norm "
            "bound for the inviscid dynamics is not guaranteed",
            stacklevel=2,
        )
    times, states, resid = rk4_sweep(params, sigma, h, xi.components, cfg)
    return _build_trajectory(params, cfg, times, states, resid)


def solve_viscous(
    params,
    sigma_nu,
    sigma_tilde,
    h,
    xi: ShellState,
    noise: NoisePath,
    cfg: SolverConfig,
) -> Trajectory:
    """One path of the viscous stochastic dynamics driven by ``noise``."""
    if cfg.nu <= 0.0:
        raise DomainError("viscous solves require nu > 0")
    if noise.steps != cfg.steps:
        raise DomainError("noise path resolution does not match the solver steps")
    if abs(noise.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise DomainError("noise path dt does not match the solver dt")
    times, states, resid, _, _ = em_sweep(
        params, sigma_nu, sigma_tilde, h, xi.components, cfg, noise.increments, q=noise.q
    )
    return _build_trajectory(params, cfg, times, states, resid)


# ---------------------------------------------------------------------------
# Monitors


@dataclass(frozen=True)
class MonitorReport:
    """A-priori bound tripwires for one trajectory.

    H-ladder quantities (sup |u|^4, nu int ||u||^2, nu int ||u||_H^4) are
    compared against ceiling_h * (1 + |xi|^4); gradient-ladder quantities
    (sup ||u||^2, nu int |Au|^2) against ceiling_v * (1 + ||xi||)^2.
    """

    values: dict
    ceilings: dict
    flags: dict
    passed: bool
    energy_cap: float


def apriori_monitor(traj: Trajectory, cfg: SolverConfig, M: float,
                    ceiling_h: float = 1e3, ceiling_v: float = 1e3) -> MonitorReport:
    t = traj.times
    h2 = traj.channel("h_norm") ** 2
    v2 = traj.channel("v_norm") ** 2
    ch = traj.channel("calh_norm")
    au2 = traj.channel("au_norm") ** 2
    nu = traj.nu
    values = {
        "sup_h4": float(np.max(h2**2)),
        "nu_int_v2": float(nu * np.trapezoid(v2, t)),
        "nu_int_calh4": float(nu * np.trapezoid(ch**4, t)),
        "sup_v2": float(np.max(v2)),
        "nu_int_au2": float(nu * np.trapezoid(au2, t)),
    }
    xi = traj.initial_state
    xih = float(np.sqrt(np.sum(np.abs(xi.components) ** 2)))
    xiv = float(np.sqrt(np.sum(traj.params.shell_wavenumbers() ** 2 * np.abs(xi.components) ** 2)))
    cap_h = ceiling_h * (1.0 + xih**4)
    cap_v = ceiling_v * (1.0 + xiv) ** 2
    ceilings = {
        "sup_h4": cap_h,
        "nu_int_v2": cap_h,
        "nu_int_calh4": cap_h,
        "sup_v2": cap_v,
        "nu_int_au2": cap_v,
    }
    flags = {kname: values[kname] <= ceilings[kname] for kname in values}
    return MonitorReport(
        values=values,
        ceilings=ceilings,
        flags=flags,
        passed=all(flags.values()),
        energy_cap=M,
    )


# ---------------------------------------------------------------------------
# Dyadic time-increment study


@dataclass(frozen=True)
class IncrementStats:
    """Integrated squared gradient-norm increments I_n against the dyadic
    step map, and the decay rate of log2 I_n in n (positive slope = decay)."""

    n_values: tuple
    values: tuple
    fitted_slope: float
    n_paths_kept: int
    n_paths_total: int


def dyadic_step_map(steps: int, n: int) -> np.ndarray:
    """Index j(i) of the right dyadic cell edge: time i -> k T 2^-n with
    (k-1) T 2^-n <= t_i < k T 2^-n, clipped to the horizon."""
    if steps % (1 << n) != 0:
        raise DomainError(f"steps ({steps}) must be divisible by 2^{n}")
    i = np.arange(steps)
    block = steps >> n
    return np.minimum((i // block + 1) * block, steps)


def time_increment_study(solve_fn, n_range, cfg: SolverConfig, n_paths: int = 1) -> IncrementStats:
    """Average I_n = int ||u(s) - u(step_n(s))||^2 ds over gate-passing paths.

    ``solve_fn(i)`` must return a full-resolution trajectory (record_every=1)
    for path index i.  Paths whose monitors sup ||u||^2 or int |Au|^2 dt
    exceed ``cfg.monitor_N`` are discarded, mirroring the indicator gate the
    increment bounds carry.
    """
    n_range = sorted(int(n) for n in n_range)
    if n_range and (n_range[0] < 2 or (1 << n_range[-1]) > cfg.steps):
        raise DomainError("n_range must lie within [2, log2(steps)]")
    k = None
    acc = np.zeros(len(n_range))
    kept = 0
    for ipath in range(n_paths):
        traj = solve_fn(ipath)
        if traj.n_records != cfg.steps + 1:
            raise DomainError("increment study needs full-resolution trajectories")
        if k is None:
            k = traj.params.shell_wavenumbers()
        v2 = traj.channel("v_norm") ** 2
        if np.max(v2) > cfg.monitor_N:
            continue
        au2 = traj.channel("au_norm") ** 2
        if np.trapezoid(au2, traj.times) > cfg.monitor_N:
            continue
        kept += 1
        states = traj.states
        w = k * k
        ds = cfg.dt
        for idx, n in enumerate(n_range):
            jmap = dyadic_step_map(cfg.steps, n)
            diff = states[:-1] - states[jmap]
            acc[idx] += float(np.sum(w * np.abs(diff) ** 2) * ds)
    if kept == 0:
        raise NumericalError("every path was discarded by the monitor gate")
    vals = acc / kept

    positive = vals > 0.0
    if not np.any(positive):
        slope = math.inf  # increments identically zero: faster than any rate
    elif np.count_nonzero(positive) < 3:
        raise DegenerateFitError("fewer than 3 positive increment values to fit")
    else:
        ns = np.asarray(n_range, dtype=float)[positive]
        slope = -float(np.polyfit(ns, np.log2(vals[positive]), 1)[0])
    return IncrementStats(
        n_values=tuple(n_range),
        values=tuple(float(v) for v in vals),
        fitted_slope=slope,
        n_paths_kept=kept,
        n_paths_total=n_paths,
    )
