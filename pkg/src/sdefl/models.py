"""SDE model definitions and Euler-Maruyama simulators.

Every simulator consumes a RandomSource and draws each noise source from its
own fixed substream (diffusion shocks, jump triggers, jump sizes).  Because
the streams are separated, switching a jump intensity to zero reproduces the
jump-free model path bitwise, and adding observation machinery downstream
never perturbs the simulated paths.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    STREAM_JUMP_SIZE,
    STREAM_JUMP_TRIGGER,
    STREAM_W1,
    STREAM_W2,
    DomainError,
    Path,
    RandomSource,
)

FELLER_WARNING = "feller-condition-violated"


def _require(cond, msg):
    if not cond:
        raise DomainError(msg)


def _finite(*vals):
    return all(math.isfinite(float(v)) for v in vals)


@dataclass(frozen=True)
class OuParams:
    """Mean-reverting diffusion: dX = theta*(mu - X) dt + sigma dW."""

    theta: float
    mu: float
    sigma: float

    def __post_init__(self):
        _require(_finite(self.theta, self.mu, self.sigma), "parameters must be finite")
        _require(self.theta >= 0.0, "theta must be >= 0")
        _require(self.sigma >= 0.0, "sigma must be >= 0")


@dataclass(frozen=True)
class JumpParams:
    """Additive jump layer: intensity lambda_j, size N(mu_j, sigma_j^2)."""

    lambda_j: float
    mu_j: float
    sigma_j: float

    def __post_init__(self):
        _require(_finite(self.lambda_j, self.mu_j, self.sigma_j), "parameters must be finite")
        _require(self.lambda_j >= 0.0, "lambda_j must be >= 0")
        _require(self.sigma_j >= 0.0, "sigma_j must be >= 0")


@dataclass(frozen=True)
class BkParams:
    """Log-space mean reversion: d(ln r) = (theta - alpha*ln r) dt + sigma dW."""

    theta: float
    alpha: float
    sigma: float

    def __post_init__(self):
        _require(_finite(self.theta, self.alpha, self.sigma), "parameters must be finite")
        _require(self.alpha > 0.0, "alpha must be > 0")
        _require(self.sigma >= 0.0, "sigma must be >= 0")


@dataclass(frozen=True)
class HestonParams:
    """Stochastic-variance model: log-price plus square-root variance."""

    mu_s: float
    kappa: float
    theta_v: float
    xi: float
    rho: float

    def __post_init__(self):
        _require(
            _finite(self.mu_s, self.kappa, self.theta_v, self.xi, self.rho),
            "parameters must be finite",
        )
        _require(self.kappa > 0.0, "kappa must be > 0")
        _require(self.theta_v > 0.0, "theta_v must be > 0")
        _require(self.xi >= 0.0, "xi must be >= 0")
        _require(-1.0 <= self.rho <= 1.0, "rho must lie in [-1, 1]")

    def feller_ok(self):
        """True when 2*kappa*theta_v > xi^2 (variance stays positive)."""
        return 2.0 * self.kappa * self.theta_v > self.xi * self.xi


@dataclass(frozen=True)
class BatesParams:
    """Heston dynamics plus lognormal price jumps of fixed relative size."""

    heston: HestonParams
    lam: float
    jump_size: float

    def __post_init__(self):
        _require(_finite(self.lam, self.jump_size), "parameters must be finite")
        _require(self.lam >= 0.0, "lam must be >= 0")
        _require(0.0 <= self.jump_size < 1.0, "jump_size must lie in [0, 1)")

    @property
    def mu_eff(self):
        # jump compensation shifts the observed drift
        return self.heston.mu_s + self.lam * self.jump_size


def _check_grid(dt, n_steps):
    _require(float(dt) > 0.0 and math.isfinite(float(dt)), "dt must be positive and finite")
    if not isinstance(n_steps, (int, np.integer)) or n_steps < 1:
        raise DomainError("n_steps must be a positive integer")


def simulate_ou(params: OuParams, x0: float, dt: float, n_steps: int, src: RandomSource) -> Path:
    _check_grid(dt, n_steps)
    _require(_finite(x0), "x0 must be finite")
    z = src.substream(STREAM_W1).normals(n_steps)
    values = _kernels.ou_path(float(x0), params.theta, params.mu, params.sigma, float(dt), z)
    return Path(t0=0.0, dt=float(dt), values=values, seed=src)


def simulate_ou_jump(
    params: OuParams,
    jump: JumpParams,
    x0: float,
    dt: float,
    n_steps: int,
    src: RandomSource,
    convention: str = "cdf_dt",
) -> Path:
    """OU diffusion with at most one additive jump per step.

    A standard normal trigger gamma fires a jump when gamma < threshold.
    convention "cdf_dt" scales the threshold by dt (per-step firing
    probability Phi(lambda_j*dt)); "cdf_raw" uses lambda_j directly.
    """
    _check_grid(dt, n_steps)
    _require(_finite(x0), "x0 must be finite")
    if convention not in ("cdf_dt", "cdf_raw"):
        raise DomainError("convention must be 'cdf_dt' or 'cdf_raw'")
    z = src.substream(STREAM_W1).normals(n_steps)
    gamma = src.substream(STREAM_JUMP_TRIGGER).normals(n_steps)
    sizes = src.substream(STREAM_JUMP_SIZE).normals(n_steps)
    threshold = jump_threshold(jump.lambda_j, dt, convention)
    fired = gamma < threshold
    jump_add = np.where(fired, jump.mu_j + jump.sigma_j * sizes, 0.0)
    values = _kernels.ou_jump_path(
        float(x0), params.theta, params.mu, params.sigma, float(dt), z, jump_add
    )
    return Path(t0=0.0, dt=float(dt), values=values, seed=src)


def jump_threshold(lambda_j, dt, convention):
    """Jump-trigger threshold for the chosen convention."""
    if convention == "cdf_dt":
        return lambda_j * dt
    return lambda_j


def simulate_bk(params: BkParams, r0: float, dt: float, n_steps: int, src: RandomSource) -> Path:
    """Euler in ln r; returned values are the positive rates exp(ln r)."""
    _check_grid(dt, n_steps)
    _require(_finite(r0) and r0 > 0.0, "r0 must be > 0")
    z = src.substream(STREAM_W1).normals(n_steps)
    log_values = _kernels.bk_log_path(
        math.log(float(r0)), params.theta, params.alpha, params.sigma, float(dt), z
    )
    return Path(t0=0.0, dt=float(dt), values=np.exp(log_values), seed=src)


def _heston_like(params, mu_eff, jump_add, s0, v0, dt, n_steps, src):
    _require(_finite(s0) and s0 > 0.0, "s0 must be > 0")
    _require(_finite(v0) and v0 >= 0.0, "v0 must be >= 0")
    z1 = src.substream(STREAM_W1).normals(n_steps)
    z2 = src.substream(STREAM_W2).normals(n_steps)
    lns, v = _kernels.heston_paths(
        math.log(float(s0)),
        float(v0),
        mu_eff,
        params.kappa,
        params.theta_v,
        params.xi,
        params.rho,
        float(dt),
        z1,
        z2,
        jump_add,
    )
    warnings = () if params.feller_ok() else (FELLER_WARNING,)
    log_price = Path(t0=0.0, dt=float(dt), values=lns, seed=src, warnings=warnings)
    variance = Path(t0=0.0, dt=float(dt), values=v, seed=src, warnings=warnings)
    return log_price, variance


def simulate_heston(params: HestonParams, s0: float, v0: float, dt: float, n_steps: int, src: RandomSource):
    """Returns (log-price path, variance path)."""
    _check_grid(dt, n_steps)
    jump_add = np.zeros(n_steps)
    return _heston_like(params, params.mu_s, jump_add, s0, v0, dt, n_steps, src)


def simulate_bates(params: BatesParams, s0: float, v0: float, dt: float, n_steps: int, src: RandomSource):
    """Heston plus Poisson price jumps; returns (log-price path, variance path).

    Each step draws a Poisson(lam*dt) jump count; every jump multiplies the
    price by (1 - jump_size), i.e. adds ln(1 - jump_size) to the log price.
    The drift carries the compensator lam*jump_size.
    """
    _check_grid(dt, n_steps)
    h = params.heston
    counts = src.substream(STREAM_JUMP_TRIGGER).poissons(params.lam * float(dt), n_steps)
    jump_add = math.log1p(-params.jump_size) * counts.astype(np.float64)
    return _heston_like(h, params.mu_eff, jump_add, s0, v0, dt, n_steps, src)
