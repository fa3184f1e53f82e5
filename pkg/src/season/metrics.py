"""Estimators and exact calculators for divergences, gains, and bounds.

Conventions: the f-divergence takes its expectation under the second
argument, I_f(nu : mu) = E_mu[f(d nu / d mu)], and the variational
objective is R(h) = E_nu[h] - E_mu[f* o h].  On finite supports every
quantity here is an exact weighted sum; on sample batches the estimators
are Monte Carlo means that report their standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .discriminator import (
    Discriminator,
    TabularDiscriminator,
    TrainConfig,
    init_discriminator,
    train_linear_sup,
)
from .distributions import DiscreteDistribution, as_generator, split_seeds
from .errors import AbsoluteContinuityError, DomainError
from .generators import GeneratorSpec, get_generator
from .refine import solve_lambda

__all__ = [
    "MCEstimate",
    "BoundReport",
    "ConvergenceBoundInputs",
    "LemmaCheck",
    "VIDualityResult",
    "exact_fdiv",
    "est_gain_direct",
    "est_gain_pushforward",
    "est_DfH",
    "ipm_tabular_exact",
    "ipm_at_witness",
    "est_ipm",
    "TabularClass",
    "SingletonClass",
    "NetClass",
    "rademacher_empirical",
    "slow_rate_term",
    "generalization_report",
    "convergence_bound",
    "fdiv_kl_lemma_check",
    "vi_duality_check",
    "perturbed_score",
    "score_error_mc",
]


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    n: int

    def agrees_with(self, other: "MCEstimate", k: float = 3.0) -> bool:
        combined = math.hypot(self.stderr, other.stderr)
        return abs(self.value - other.value) <= k * combined

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n}


def _mc(values: np.ndarray) -> MCEstimate:
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return MCEstimate(float(values.mean()), se, n)


def _masked_dot(weights: np.ndarray, values: np.ndarray) -> float:
    """sum w_i v_i skipping zero-weight terms, so 0 * (+-inf) contributes 0."""
    mask = weights > 0
    return float(np.sum(weights[mask] * values[mask])) if mask.any() else 0.0


def exact_fdiv(nu: DiscreteDistribution, mu: DiscreteDistribution,
               gen: GeneratorSpec) -> float:
    """I_f(nu : mu) = sum_i mu_i f(nu_i / mu_i); +inf without absolute continuity."""
    from .distributions import discrete_ratio

    try:
        ratio = discrete_ratio(nu, mu)
    except AbsoluteContinuityError:
        return math.inf
    return _masked_dot(mu.weights, np.asarray(gen.f(ratio)))


def _h_values_on(disc, target) -> np.ndarray:
    if isinstance(target, DiscreteDistribution):
        if isinstance(disc, TabularDiscriminator):
            return disc.h_for(target)
        return disc.h_batch(target.support)
    if isinstance(disc, TabularDiscriminator):
        raise DomainError("tabular discriminators need discrete evaluation targets")
    return disc.h_batch(np.atleast_2d(np.asarray(target, dtype=float)))


def est_gain_direct(gen: GeneratorSpec, disc, mu_ref) -> MCEstimate:
    """Refinement gain I_f(mu_refined : mu) = E_mu[f(f'^-1(h - lambda))].

    Exact on a finite mu (stderr 0), Monte Carlo on a sample batch.
    """
    lam = solve_lambda(disc, gen, mu_ref)
    h = _h_values_on(disc, mu_ref)
    vals = np.asarray(gen.f(np.asarray(gen.f_prime_inv(h - lam))))
    if isinstance(mu_ref, DiscreteDistribution):
        return MCEstimate(_masked_dot(mu_ref.weights, vals), 0.0, mu_ref.n)
    return _mc(vals)


def est_gain_pushforward(gen: GeneratorSpec, disc, mu_samples: np.ndarray) -> MCEstimate:
    """Gain through the class-probability pushforward: mean of f(eta / (1 - eta)).

    eta is recovered from h as f'^-1(h) / (1 + f'^-1(h)); identical to the
    direct estimator when lambda = 0.  eta = 1 contributes +inf and is the
    boundary flag.
    """
    h = _h_values_on(disc, mu_samples)
    r = np.asarray(gen.f_prime_inv(h))
    eta = r / (1.0 + r)
    with np.errstate(divide="ignore", invalid="ignore"):
        odds = np.where(eta < 1.0, eta / (1.0 - eta), np.inf)
    vals = np.asarray(gen.f(odds))
    return _mc(vals)


def est_DfH(disc, gen: GeneratorSpec, nu_eval, mu_eval) -> Union[float, MCEstimate]:
    """Plug-in value of R(h) = E_nu[h] - E_mu[f* o h].

    Exact sums on discrete inputs (the exact sup when disc is the tabular
    optimum); a Monte Carlo estimate with standard error on batches.
    """
    h_nu = _h_values_on(disc, nu_eval)
    h_mu = _h_values_on(disc, mu_eval)
    conj = np.asarray(gen.conjugate_fn(h_mu))
    if isinstance(nu_eval, DiscreteDistribution) and isinstance(mu_eval, DiscreteDistribution):
        return _masked_dot(nu_eval.weights, h_nu) - _masked_dot(mu_eval.weights, conj)
    a, b = _mc(h_nu), _mc(conj)
    return MCEstimate(a.value - b.value, math.hypot(a.stderr, b.stderr), min(a.n, b.n))


def _aligned_weights(nu: DiscreteDistribution, mu: DiscreteDistribution):
    """Weights of nu and mu on the union of their supports."""
    rows = {row.tobytes(): row for row in nu.support}
    rows.update({row.tobytes(): row for row in mu.support})
    keys = list(rows)
    index = {k: i for i, k in enumerate(keys)}
    wn = np.zeros(len(keys))
    wm = np.zeros(len(keys))
    for row, w in zip(nu.support, nu.weights):
        wn[index[row.tobytes()]] = w
    for row, w in zip(mu.support, mu.weights):
        wm[index[row.tobytes()]] = w
    return wn, wm


def ipm_tabular_exact(nu: DiscreteDistribution, mu: DiscreteDistribution,
                      norm: float = 1.0) -> float:
    """Exact sup over the per-point class with |h_i| <= norm: norm * l1(nu - mu)."""
    wn, wm = _aligned_weights(nu, mu)
    return norm * float(np.abs(wn - wm).sum())


def ipm_at_witness(h_values: np.ndarray, nu: DiscreteDistribution,
                   mu: DiscreteDistribution) -> float:
    """Mean difference sum_i (nu_i - mu_i) h_i at a given witness on mu's support.

    Zero-weight differences skip +-inf witness values.  This is the exact
    IPM whenever the witness attains the sup over the class.
    """
    from .distributions import discrete_ratio

    nu_aligned = discrete_ratio(nu, mu) * mu.weights
    diff = nu_aligned - mu.weights
    h = np.asarray(h_values, dtype=float)
    mask = diff != 0.0
    return float(np.sum(diff[mask] * h[mask])) if mask.any() else 0.0


def est_ipm(nu_eval, mu_eval, *, norm: float = 1.0,
            trainer: Optional[TrainConfig] = None) -> Union[float, tuple[float, bool]]:
    """IPM over the norm-bounded class.

    Discrete pairs are exact (sign-function optimum).  Batches train a
    clamp-head net and return (plug-in sup estimate, convergence flag).
    """
    if isinstance(nu_eval, DiscreteDistribution) and isinstance(mu_eval, DiscreteDistribution):
        return ipm_tabular_exact(nu_eval, mu_eval, norm)
    cfg = trainer or TrainConfig()
    x_nu = np.atleast_2d(np.asarray(nu_eval, dtype=float))
    x_mu = np.atleast_2d(np.asarray(mu_eval, dtype=float))
    x = np.vstack([x_nu, x_mu])
    coeffs = np.concatenate([
        np.full(x_nu.shape[0], 1.0 / x_nu.shape[0]),
        np.full(x_mu.shape[0], -1.0 / x_mu.shape[0]),
    ])
    disc = init_discriminator(None, x.shape[1], cfg.width, cfg.seed,
                              activation=cfg.activation, head="clamp", norm_bound=norm)
    disc = train_linear_sup(disc, x, coeffs, cfg)
    return disc.final_objective, bool(disc.converged)


@dataclass(frozen=True)
class TabularClass:
    """Per-point functions bounded by norm; sup is exact per sign draw."""

    norm: float = 1.0


@dataclass(frozen=True)
class SingletonClass:
    """A single fixed function; the sup is vacuous."""

    h: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NetClass:
    """Clamp-head nets trained afresh for every sign draw."""

    config: TrainConfig
    norm: float = 1.0


def _group_indices(samples: np.ndarray) -> list[np.ndarray]:
    groups: dict[bytes, list[int]] = {}
    for i, row in enumerate(samples):
        groups.setdefault(row.tobytes(), []).append(i)
    return [np.asarray(ix) for ix in groups.values()]


def rademacher_empirical(class_spec, samples: np.ndarray, n_sign_draws: int,
                         seed=0) -> MCEstimate:
    """Average over sign draws of sup_h (1/n) sum_i zeta_i h(x_i).

    The tabular class admits the exact per-draw sup norm * (1/n)
    sum_groups |sum zeta|, grouping repeated sample points.
    """
    if n_sign_draws < 1:
        raise DomainError("n_sign_draws must be >= 1")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    rng = as_generator(seed)
    draws = np.empty(n_sign_draws)

    if isinstance(class_spec, TabularClass):
        groups = _group_indices(samples)
        for d in range(n_sign_draws):
            zeta = rng.choice([-1.0, 1.0], size=n)
            draws[d] = class_spec.norm / n * sum(abs(zeta[g].sum()) for g in groups)
    elif isinstance(class_spec, SingletonClass):
        hx = np.asarray(class_spec.h(samples), dtype=float).ravel()
        for d in range(n_sign_draws):
            zeta = rng.choice([-1.0, 1.0], size=n)
            draws[d] = float(zeta @ hx) / n
    elif isinstance(class_spec, NetClass):
        rngs = split_seeds(seed if isinstance(seed, int) else 0, n_sign_draws)
        for d, sub in enumerate(rngs):
            zeta = sub.choice([-1.0, 1.0], size=n)
            disc = init_discriminator(None, samples.shape[1], class_spec.config.width,
                                      sub, activation=class_spec.config.activation,
                                      head="clamp", norm_bound=class_spec.norm)
            disc = train_linear_sup(disc, samples, zeta / n, class_spec.config)
            draws[d] = disc.final_objective
    else:
        raise DomainError(f"unknown class spec {class_spec!r}")
    return _mc(draws)


def slow_rate_term(norm_H: float, delta: float, n: int) -> float:
    """2 ||H|| sqrt(ln(1/delta) / (2n)), the concentration penalty."""
    if not (0.0 < delta < 1.0) or n < 1:
        raise DomainError("need delta in (0, 1) and n >= 1")
    return 2.0 * norm_H * math.sqrt(math.log(1.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class BoundReport:
    """All terms of the generalization bound, with provenance."""

    d_H_lhs: float
    D_fH: float
    gain_If: float
    rademacher: float
    slow_rate: float
    delta: float
    n: int
    norm_H: float
    tol: float = 1e-9
    holds: bool = field(init=False)

    def __post_init__(self):
        rhs = self.D_fH - self.gain_If + self.rademacher + self.slow_rate
        object.__setattr__(self, "holds", bool(self.d_H_lhs <= rhs + self.tol))

    @property
    def rhs(self) -> float:
        return self.D_fH - self.gain_If + self.rademacher + self.slow_rate

    def to_dict(self) -> dict:
        return {
            "d_H_lhs": self.d_H_lhs,
            "D_fH": self.D_fH,
            "gain_If": self.gain_If,
            "rademacher": self.rademacher,
            "slow_rate": self.slow_rate,
            "rhs": self.rhs,
            "delta": self.delta,
            "n": self.n,
            "norm_H": self.norm_H,
            "tol": self.tol,
            "holds": self.holds,
        }


def generalization_report(d_H_lhs: float, D_fH: float, gain_If: float, rademacher: float,
                          *, norm_H: float, delta: float, n: int,
                          tol: float = 1e-9) -> BoundReport:
    """Assemble the bound lhs <= D - gain + R_n + slow_rate with a holds flag."""
    return BoundReport(
        d_H_lhs=d_H_lhs, D_fH=D_fH, gain_If=gain_If, rademacher=rademacher,
        slow_rate=slow_rate_term(norm_H, delta, n), delta=delta, n=n,
        norm_H=norm_H, tol=tol,
    )


@dataclass(frozen=True)
class ConvergenceBoundInputs:
    """Ingredients of the sampling convergence bound."""

    eps_theta: float  # score approximation error
    L: float  # Lipschitz constant of the noised scores
    m2: float  # second-moment bound of the data
    d: int
    T: float
    K: int
    norm_H: float
    forward_gap_If: float  # I_f between fully noised data and the prior

    def __post_init__(self):
        vals = (self.eps_theta, self.L, self.m2, self.T, self.norm_H, self.forward_gap_If)
        if any(v < 0 for v in vals) or self.d < 1 or self.K < 1:
            raise DomainError("all convergence-bound inputs must be nonnegative")

    @property
    def s(self) -> float:
        return self.T / self.K


def convergence_bound(inp: ConvergenceBoundInputs) -> float:
    """||H|| (1 - exp(-(eps^2 + L^2 d s + L^2 m2^2 s^2) T)) + forward gap."""
    s = inp.s
    rate = inp.eps_theta ** 2 + inp.L ** 2 * inp.d * s + inp.L ** 2 * inp.m2 ** 2 * s ** 2
    return inp.norm_H * (-math.expm1(-rate * inp.T)) + inp.forward_gap_If


@dataclass(frozen=True)
class LemmaCheck:
    lhs: float
    rhs: float
    holds: bool


def fdiv_kl_lemma_check(nu: DiscreteDistribution, mu: DiscreteDistribution,
                        gen: GeneratorSpec) -> LemmaCheck:
    """Check I_f(nu : mu) <= sup_i |f'(r_i)| sqrt(KL(nu : mu)) exactly."""
    from .distributions import discrete_ratio

    ratio = discrete_ratio(nu, mu)
    lhs = exact_fdiv(nu, mu, gen)
    kl = exact_fdiv(nu, mu, get_generator("kl"))
    with np.errstate(divide="ignore"):
        wit = np.abs(np.asarray(gen.f_prime(ratio[mu.weights > 0])))
    rhs = float(wit.max()) * math.sqrt(kl)
    return LemmaCheck(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + 1e-12))


@dataclass(frozen=True)
class VIDualityResult:
    lhs: float  # log sum mu exp(-L), the log-partition value
    rhs: float  # E_gibbs[L] + KL(gibbs : mu), the objective at the Gibbs posterior
    gibbs: DiscreteDistribution
    residual: float  # |lhs + rhs|
    holds: bool


def vi_duality_check(mu: DiscreteDistribution, L_values: Sequence[float],
                     tol: float = 1e-10) -> VIDualityResult:
    """Log-partition duality: log sum mu e^-L = -(E_gibbs[L] + KL(gibbs : mu)).

    The Gibbs posterior gibbs_i proportional to mu_i e^-L_i minimizes
    E_Q[L] + KL(Q : mu) over all Q on the support.
    """
    L = np.asarray(L_values, dtype=float)
    if L.shape != (mu.n,):
        raise DomainError(f"need one loss value per support point, got shape {L.shape}")
    logw = np.log(mu.weights) - L
    m = logw.max()
    lhs = float(m + math.log(np.exp(logw - m).sum()))
    g = np.exp(logw - m)
    g /= g.sum()
    gibbs = mu.reweighted(g)
    rhs = _masked_dot(g, L) + exact_fdiv(gibbs, mu, get_generator("kl"))
    residual = abs(lhs + rhs)
    return VIDualityResult(lhs=lhs, rhs=rhs, gibbs=gibbs, residual=residual,
                           holds=bool(residual <= tol))


def perturbed_score(score: Callable[[np.ndarray], np.ndarray], amplitude: float,
                    wavenumber: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Add a bounded smooth field to an exact score (emulates a learned score)."""

    def perturbed(x: np.ndarray) -> np.ndarray:
        return score(x) + amplitude * np.sin(wavenumber * np.asarray(x, dtype=float))

    return perturbed


def score_error_mc(score_a, score_b, sampler, n: int, seed=0) -> MCEstimate:
    """Monte Carlo estimate of E ||score_a(X) - score_b(X)||^2 under the sampler."""
    rng = as_generator(seed)
    x = sampler(rng, n)
    d2 = np.sum((np.asarray(score_a(x)) - np.asarray(score_b(x))) ** 2, axis=1)
    return _mc(d2)
