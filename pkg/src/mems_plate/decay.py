"""Lyapunov functionals for the shifted displacement v = u - u0.

Along a trajectory of gamma^2 v'' + v' + A v = f with f = -lam g(u) - A u0:

    E = ||A^(1/2) v||_a^2 + gamma^2 ||v'||_a^2
    F = gamma <v, v'>_a
    G = E + b gamma F

where ||.||_a is the order-alpha spectral norm, so ||A^(1/2) v||_a is the
order-(1+alpha) norm. The constants are

    b     = min(2 / (2 gamma1^2 + c1 + 1), 1 / (2 c1), 1 / (gamma1 c1))
    omega = b / (2 + c1 b gamma1)

and the integrated estimate checked here is

    E(t) <= (b/omega) e^(-omega t) E(0)
            + (b+2)/(b omega) (1 - e^(-omega t)) sup_{s<=t} ||f(s)||_a^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FractionalNormContext, ModelParams, check_S_alpha, fractional_norm
from .errors import DimensionError, ParameterError
from .potential import PotentialSolver


@dataclass(frozen=True)
class LyapunovConfig:
    gamma1: float
    b: float
    omega: float
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0

    @property
    def sandwich_upper(self) -> float:
        return 1.0 + 0.5 * self.c1 * self.b * self.gamma1


def decay_constants(gamma1: float, c1: float = 1.0) -> LyapunovConfig:
    if not gamma1 > 0:
        raise ParameterError(f"gamma1 must be > 0, got {gamma1}")
    b = min(2.0 / (2.0 * gamma1**2 + c1 + 1.0), 1.0 / (2.0 * c1), 1.0 / (gamma1 * c1))
    omega = b / (2.0 + c1 * b * gamma1)
    return LyapunovConfig(gamma1, b, omega, c1, c1, c1)


@dataclass
class DecayTrace:
    gamma: float
    t: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    f_norm: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def sandwich_ok(self) -> bool:
        return not self.violations


def evaluate_decay_trace(rec, u0, config: LyapunovConfig, params: ModelParams, ctx: FractionalNormContext,
                         potential: PotentialSolver | None = None, rtol: float = 1e-12) -> DecayTrace:
    """E, F, G and ||f|| on the trajectory snapshots, with the sandwich checks."""
    U, V, t = rec.snapshots_u, rec.snapshots_v, rec.times
    n = ctx.grid.n_interior
    if U.ndim != 2 or U.shape[1] != n:
        raise DimensionError(f"trajectory snapshots have shape {U.shape}, grid has {n} nodes")
    u0 = ctx.grid.check(u0)
    a, gam = ctx.alpha, params.gamma
    v = U - u0
    cv, cw = ctx.coefficients(v), ctx.coefficients(V)
    wa = ctx.weights(a)
    E = np.sum(ctx.weights(1.0 + a) * cv * cv, axis=1) + gam**2 * np.sum(wa * cw * cw, axis=1)
    F = gam * np.sum(wa * cv * cw, axis=1)
    G = E + config.b * gam * F
    Au0 = ctx.power(u0, 1.0)
    if params.lam != 0:
        potential = potential or PotentialSolver(params)
        f = np.array([-params.lam * potential.g(u) - Au0 for u in U])
    else:
        f = np.tile(-Au0, (len(U), 1))
    f_norm = np.asarray(fractional_norm(f, a, ctx))
    trace = DecayTrace(gam, t, E, F, G, f_norm)
    slack = rtol * E + 1e-300
    c1 = config.c1
    for i in range(len(t)):
        if abs(F[i]) > 0.5 * c1 * E[i] + slack[i]:
            trace.violations.append((float(t[i]), "|F| > (c1/2) E"))
        if 0.5 * E[i] > G[i] + slack[i]:
            trace.violations.append((float(t[i]), "G < E/2"))
        if G[i] > config.sandwich_upper * E[i] + slack[i]:
            trace.violations.append((float(t[i]), "G > (1 + c1 b gamma1/2) E"))
    return trace


@dataclass(frozen=True)
class DecayReport:
    passed: bool
    margin: float
    tolerance: float
    fitted_rate: float
    omega: float
    b: float
    n_samples: int


def gronwall_envelope(trace: DecayTrace, config: LyapunovConfig) -> np.ndarray:
    b, w = config.b, config.omega
    decay = np.exp(-w * trace.t)
    sup_f2 = np.maximum.accumulate(trace.f_norm**2)
    return (b / w) * decay * trace.E[0] + (b + 2) / (b * w) * (1 - decay) * sup_f2


def fit_decay_rate(t, E, start_fraction: float = 0.5, floor: float = 1e-250) -> float:
    """Least-squares slope of -log E over the trailing part of the window."""
    t, E = np.asarray(t), np.asarray(E)
    keep = (t >= t[0] + start_fraction * (t[-1] - t[0])) & (E > floor)
    if keep.sum() < 2:
        return math.nan
    slope = np.polyfit(t[keep], np.log(E[keep]), 1)[0]
    return float(-slope)


def verify_decay_inequality(trace: DecayTrace, config: LyapunovConfig, tol: float = 1e-8,
                            start_fraction: float = 0.5) -> DecayReport:
    env = gronwall_envelope(trace, config)
    margin = float(np.min(env - trace.E))
    tolerance = tol * trace.E[0]
    rate = fit_decay_rate(trace.t, trace.E, start_fraction)
    return DecayReport(margin >= -tolerance, margin, tolerance, rate, config.omega, config.b, len(trace.t))


@dataclass(frozen=True)
class Surrogates:
    """Concrete stand-ins for the nonconstructive constants M, c3(kappa), c4."""

    M: float
    c3: float
    c4: float
    provenance: dict = field(default_factory=dict)


def embedding_constant(ctx: FractionalNormContext) -> float:
    """max_k ||e_k||_inf / ||e_k||_(1+alpha) over the eigenbasis, at least 1."""
    e = ctx.vectors / math.sqrt(ctx.grid.h)
    vals = np.max(np.abs(e), axis=0) / ctx.eigenvalues ** (0.5 * (1.0 + ctx.alpha))
    return max(1.0, float(vals.max()))


def random_admissible_samples(ctx: FractionalNormContext, kappa: float, count: int, rng,
                              n_modes: int = 8) -> list:
    """Random smooth displacements in S_alpha(kappa) built from the first eigenmodes."""
    n_modes = min(n_modes, ctx.grid.n_interior)
    basis = ctx.vectors[:, :n_modes] / math.sqrt(ctx.grid.h)
    out = []
    while len(out) < count:
        w = basis @ (rng.standard_normal(n_modes) / np.arange(1, n_modes + 1) ** 2)
        s_norm = (1.0 / kappa) / float(fractional_norm(w, 1.0 + ctx.alpha, ctx))
        lo = float(np.min(w))
        s_gap = (1.0 - kappa) / -lo if lo < 0 else math.inf
        w = w * (0.999 * rng.uniform() * min(s_norm, s_gap))
        if check_S_alpha(w, kappa, ctx).member:
            out.append(w)
    return out


def compute_surrogates(params: ModelParams, ctx: FractionalNormContext, config: LyapunovConfig,
                       n_samples: int = 200, seed: int = 0, potential: PotentialSolver | None = None) -> Surrogates:
    potential = potential or PotentialSolver(params)
    rng = np.random.default_rng(seed)
    kappa = params.kappa
    c3 = 0.0
    for w in random_admissible_samples(ctx, kappa / 2, n_samples, rng):
        c3 = max(c3, float(fractional_norm(potential.g(w), ctx.alpha, ctx)))
    b, w_ = config.b, config.omega
    M = 2.0 * max(b / w_, (b + 2) / (b * w_))
    c4 = embedding_constant(ctx)
    prov = {
        "M": "2*max(b/omega, (b+2)/(b*omega))",
        "c3": f"max ||g(w)||_(alpha) over {n_samples} random samples of S_alpha(kappa/2), seed {seed} (lower bound)",
        "c4": "max over eigenbasis of ||e_k||_inf / ||e_k||_(1+alpha), floored at 1",
    }
    return Surrogates(M, c3, c4, prov)


@dataclass(frozen=True)
class SmallnessReport:
    threshold: float
    gamma_lhs: float
    gamma_condition: bool
    bracket: float
    T_hat: float
    global_condition: bool
    surrogate: bool = True


def smallness_conditions(u0, u1, params: ModelParams, config: LyapunovConfig, ctx: FractionalNormContext,
                         surrogates: Surrogates) -> SmallnessReport:
    """Evaluate the gamma-condition and the minimal-existence-time estimate T_hat."""
    if not (surrogates.M > 0 and surrogates.c3 >= 0 and surrogates.c4 > 0):
        raise ParameterError(f"surrogate constants must be positive: {surrogates}")
    a = ctx.alpha
    theta = params.kappa**2 / (8.0 * surrogates.M * surrogates.c4**2)
    gamma_lhs = params.gamma**2 * float(fractional_norm(u1, a, ctx)) ** 2
    bracket = params.lam**2 * surrogates.c3**2 + float(fractional_norm(u0, 2.0 + a, ctx)) ** 2
    return SmallnessReport(theta, gamma_lhs, gamma_lhs < theta, bracket,
                           t_hat(bracket, theta, config.omega), bracket < theta)


def t_hat(bracket: float, threshold: float, omega: float) -> float:
    """Largest t with bracket * (1 - e^(-omega t)) < threshold (inf if always)."""
    if bracket < threshold:
        return math.inf
    return -math.log(1.0 - threshold / bracket) / omega
