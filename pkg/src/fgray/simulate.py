"""Synthetic competing-risks data generators.

Two designs are provided.  The independent design draws i.i.d. standard
normal covariates; cause 1 follows a proportional subdistribution
hazards model whose conditional incidence is
``1 - [1 - p_mix (1 - e^{-t})]^{exp(b1'Z)}``, so the cause-1
probability given Z is ``1 - (1 - p_mix)^{exp(b1'Z)}``.  Conditional on
a competing event, times are exponential with rate ``exp(b2'Z)``.  The
block design reuses the same event mechanism with block-exchangeable
correlated covariates.

Cause-1 times are drawn by closed-form inversion of the conditional
incidence (two nested logarithms, implemented with log1p/expm1 for
stability); a numeric root-finding cross-check lives in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import CompetingRisksData


@dataclass(frozen=True)
class CensoringSpec:
    """Censoring mechanism: none, uniform(0, bound) or exponential(rate).

    For the uniform kind, either ``param`` (the upper bound) is given or
    it is calibrated by bisection so the expected censored fraction
    matches ``target_rate``.
    """

    kind: str = "uniform"
    param: float | None = None
    target_rate: float = 0.3

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "exponential"):
            raise ValueError(f"unknown censoring kind {self.kind!r}")
        if self.kind == "exponential" and self.param is None:
            raise ValueError("exponential censoring needs a rate parameter")


def _default_beta1_independent(p: int) -> np.ndarray:
    beta = np.zeros(p)
    beta[0] = 0.5
    if p > 1:
        beta[1] = 0.5
    return beta


def _default_beta2_independent(p: int) -> np.ndarray:
    if p % 2 != 0:
        raise ValueError(
            "the default alternating cause-2 coefficient pattern is only "
            "defined for even p; pass beta2 explicitly"
        )
    beta = np.empty(p)
    beta[0::2] = -0.5
    beta[1::2] = 0.5
    return beta


@dataclass(frozen=True)
class IndependentDesign:
    """Simulation design with i.i.d. standard normal covariates."""

    n: int
    p: int
    beta1: np.ndarray | None = None
    beta2: np.ndarray | None = None
    mixture_p: float = 0.6
    censoring: CensoringSpec = field(default_factory=CensoringSpec)

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0 < self.mixture_p < 1:
            raise ValueError("mixture_p must be in (0, 1)")
        b1 = (
            _default_beta1_independent(self.p)
            if self.beta1 is None
            else np.asarray(self.beta1, dtype=np.float64)
        )
        b2 = (
            _default_beta2_independent(self.p)
            if self.beta2 is None
            else np.asarray(self.beta2, dtype=np.float64)
        )
        if b1.shape != (self.p,) or b2.shape != (self.p,):
            raise ValueError("beta1/beta2 must have length p")
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)

    def draw_covariates(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((self.n, self.p))


@dataclass(frozen=True)
class BlockDesign:
    """Block-exchangeable correlated covariates, same event mechanism.

    Blocks of sizes (4, 4, 8) carry within-block correlations
    (0.5, 0.35, 0.05); the remaining coordinates are independent.
    Default signal: the first 8 coefficients of cause 1 are 0.5, the
    next 4 are -0.5.
    """

    n: int
    p: int
    beta1: np.ndarray | None = None
    beta2: np.ndarray | None = None
    mixture_p: float = 0.6
    censoring: CensoringSpec = field(default_factory=CensoringSpec)
    block_sizes: tuple[int, ...] = (4, 4, 8)
    block_rhos: tuple[float, ...] = (0.5, 0.35, 0.05)

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0 < self.mixture_p < 1:
            raise ValueError("mixture_p must be in (0, 1)")
        if len(self.block_sizes) != len(self.block_rhos):
            raise ValueError("block_sizes and block_rhos must align")
        if any(not 0 <= r < 1 for r in self.block_rhos):
            raise ValueError("block correlations must lie in [0, 1)")
        if sum(self.block_sizes) > self.p:
            raise ValueError("block sizes exceed p")
        if self.beta1 is None:
            if self.p < 12:
                raise ValueError("default block coefficients need p >= 12")
            b1 = np.zeros(self.p)
            b1[0:8] = 0.5
            b1[8:12] = -0.5
        else:
            b1 = np.asarray(self.beta1, dtype=np.float64)
        if self.beta2 is None:
            if self.p < 16:
                raise ValueError("default block coefficients need p >= 16")
            b2 = np.zeros(self.p)
            b2[0:4] = 0.5
            b2[4:8] = -0.5
            b2[12:16] = 0.5
        else:
            b2 = np.asarray(self.beta2, dtype=np.float64)
        if b1.shape != (self.p,) or b2.shape != (self.p,):
            raise ValueError("beta1/beta2 must have length p")
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)

    def draw_covariates(self, rng: np.random.Generator) -> np.ndarray:
        Z = np.empty((self.n, self.p))
        start = 0
        for size, rho in zip(self.block_sizes, self.block_rhos):
            shared = rng.standard_normal((self.n, 1))
            idio = rng.standard_normal((self.n, size))
            Z[:, start:start + size] = np.sqrt(rho) * shared + np.sqrt(1 - rho) * idio
            start += size
        if start < self.p:
            Z[:, start:] = rng.standard_normal((self.n, self.p - start))
        return Z


def cause1_probability(design, Z: np.ndarray) -> np.ndarray:
    """P(cause-1 event | Z): the limit of the conditional incidence."""
    eta = Z @ design.beta1
    return -np.expm1(np.log1p(-design.mixture_p) * np.exp(eta))


def invert_cause1_cif(u: np.ndarray, eta1: np.ndarray, mixture_p: float) -> np.ndarray:
    """Solve F1(t | Z) = u * P(cause-1 | Z) for t, in closed form."""
    rel = np.exp(eta1)
    p1 = -np.expm1(np.log1p(-mixture_p) * rel)
    inner = -np.expm1(np.log1p(-u * p1) / rel)
    return -np.log1p(-inner / mixture_p)


def _draw_censoring(spec: CensoringSpec, n: int, rng: np.random.Generator):
    if spec.kind == "none":
        return np.full(n, np.inf)
    if spec.kind == "uniform":
        if spec.param is None:
            raise ValueError(
                "uniform censoring bound not resolved; call "
                "resolve_censoring(design) first"
            )
        return rng.uniform(0.0, spec.param, size=n)
    return rng.exponential(1.0 / spec.param, size=n)


def draw_event_times(design, Z: np.ndarray, rng: np.random.Generator):
    """Latent (cause, time) pairs for each subject; no censoring applied."""
    eta1 = Z @ design.beta1
    eta2 = Z @ design.beta2
    p1 = cause1_probability(design, Z)
    cause = np.where(rng.random(Z.shape[0]) < p1, 1, 2)
    u = rng.random(Z.shape[0])
    t1 = invert_cause1_cif(u, eta1, design.mixture_p)
    t2 = rng.exponential(1.0, size=Z.shape[0]) * np.exp(-eta2)
    return cause, np.where(cause == 1, t1, t2)


def generate(design, seed=None, rng: np.random.Generator | None = None,
             horizon: float | None = None) -> CompetingRisksData:
    """Draw one dataset from a design.  Censoring must be resolved."""
    if rng is None:
        rng = np.random.default_rng(seed)
    Z = design.draw_covariates(rng)
    cause, T = draw_event_times(design, Z, rng)
    C = _draw_censoring(design.censoring, design.n, rng)
    observed = T <= C
    times = np.where(observed, T, C)
    status = np.where(observed, cause, 0)
    return CompetingRisksData(
        times=times, status=status, covariates=Z, horizon=horizon
    )


def calibrate_uniform_bound(
    design, target_rate: float | None = None,
    n_draws: int = 100_000, seed: int = 202_406,
    tol: float = 1e-4,
) -> float:
    """Bisection for the uniform-censoring bound hitting a censored fraction.

    Against a fixed Monte Carlo sample of latent event times T, the
    censored fraction under C ~ U(0, c) is mean(min(T/c, 1)), which is
    decreasing in c; bisect on c.
    """
    if target_rate is None:
        target_rate = design.censoring.target_rate
    if not 0 < target_rate < 1:
        raise ValueError("target censoring rate must be in (0, 1)")
    rng = np.random.default_rng(seed)
    sample = replace(design, n=n_draws)
    Z = sample.draw_covariates(rng)
    _, T = draw_event_times(sample, Z, rng)

    def rate(c):
        return float(np.mean(np.minimum(T / c, 1.0)))

    lo, hi = 1e-6, 1.0
    while rate(hi) > target_rate:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("censoring calibration failed to bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rate(mid) > target_rate:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * hi:
            break
    return 0.5 * (lo + hi)


def resolve_censoring(design):
    """Return the design with a concrete uniform bound, calibrating if needed."""
    spec = design.censoring
    if spec.kind == "uniform" and spec.param is None:
        bound = calibrate_uniform_bound(design)
        return replace(design, censoring=replace(spec, param=bound))
    return design
