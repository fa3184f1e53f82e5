"""Construct the refined model from a trained discriminator.

The refined model reweights the base model mu by f'^-1(h - lambda): on a
finite support this is an explicit reweighting, on a continuous model it
is exposed as a score field (for samplers) plus an unnormalized density
(for quadrature oracles).  The normalizer lambda solves

    E_mu[f'^-1(h - lambda)] = 1

by bisection: the expectation is strictly decreasing in lambda because
f'^-1 is increasing for strictly convex f.  At an exactly optimal
discriminator from a class closed under additive constants the solution
is lambda = 0; it is still always solved rather than assumed, since
finitely trained discriminators are inexact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .discriminator import Discriminator, TabularDiscriminator, input_grad
from .distributions import ContinuousModel, DiscreteDistribution, as_generator
from .errors import DegenerateDistributionError, DomainError, LambdaSolveError
from .generators import GeneratorSpec

__all__ = [
    "RefinedModel",
    "solve_lambda",
    "refine_discrete",
    "refine_continuous",
    "refined_score",
    "refined_density_unnormalized",
    "export_refined_csv",
]

_MAX_DOUBLINGS = 200
_BISECT_ITERS = 200


def _h_values(disc, x: np.ndarray) -> np.ndarray:
    if isinstance(disc, TabularDiscriminator):
        raise DomainError("tabular discriminators evaluate on distributions, not batches")
    if isinstance(disc, Discriminator):
        return disc.h_batch(x)
    return np.asarray(disc(x), dtype=float)  # plain callable


def _h_on_discrete(disc, mu: DiscreteDistribution) -> np.ndarray:
    if isinstance(disc, TabularDiscriminator):
        return disc.h_for(mu)
    return _h_values(disc, mu.support)


def solve_lambda(disc, gen: GeneratorSpec,
                 mu_ref: Union[DiscreteDistribution, np.ndarray], *,
                 tol: Optional[float] = None) -> float:
    """Solve E_mu[f'^-1(h - lambda)] = 1 by bracketed bisection.

    mu_ref is either a finite distribution (exact weighted sum, tolerance
    1e-10) or a sample batch from mu (Monte Carlo mean, tolerance 1e-6).
    """
    if isinstance(mu_ref, DiscreteDistribution):
        h = _h_on_discrete(disc, mu_ref)
        w = mu_ref.weights
        tol = 1e-10 if tol is None else tol
    else:
        x = np.atleast_2d(np.asarray(mu_ref, dtype=float))
        h = _h_values(disc, x)
        w = np.full(h.shape[0], 1.0 / h.shape[0])
        tol = 1e-6 if tol is None else tol

    finite = np.isfinite(h)
    if not finite.any():
        raise DegenerateDistributionError("discriminator is -inf everywhere on mu")

    def expect(lam: float) -> float:
        return float(w @ np.asarray(gen.f_prime_inv(h - lam)))

    hi_dom = gen.conjugate_domain[1]
    if math.isfinite(hi_dom):
        # lambda must exceed max(h) - hi_dom for every h - lambda to stay in dom
        base = float(h[finite].max()) - hi_dom
        delta = 1.0
        for _ in range(_MAX_DOUBLINGS):
            if expect(base + delta) >= 1.0:
                break
            delta *= 0.5
        else:
            raise LambdaSolveError("expectation never reaches 1 near the domain edge")
        lo = base + delta
        width = max(1.0, delta)
        for _ in range(_MAX_DOUBLINGS):
            if expect(base + width) <= 1.0:
                break
            width *= 2.0
        else:
            raise LambdaSolveError("expectation stays above 1; bracket expansion failed")
        hi = base + width
    else:
        center = float(h[finite].mean())
        step = 1.0
        lo = center - step
        for _ in range(_MAX_DOUBLINGS):
            if expect(lo) >= 1.0:
                break
            step *= 2.0
            lo = center - step
        else:
            raise LambdaSolveError("expectation stays below 1; bracket expansion failed")
        step = 1.0
        hi = center + step
        for _ in range(_MAX_DOUBLINGS):
            if expect(hi) <= 1.0:
                break
            step *= 2.0
            hi = center + step
        else:
            raise LambdaSolveError("expectation stays above 1; bracket expansion failed")

    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if expect(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    lam = 0.5 * (lo + hi)
    if abs(expect(lam) - 1.0) > tol:
        raise LambdaSolveError(
            f"bisection stalled: |E - 1| = {abs(expect(lam) - 1.0):.3e} > {tol}"
        )
    return lam


def refine_discrete(mu: DiscreteDistribution, disc, gen: GeneratorSpec, *,
                    lam: Optional[float] = None) -> DiscreteDistribution:
    """Reweight mu by f'^-1(h - lambda) and renormalize exactly.

    lam=None solves the normalizer equation (the default contract);
    passing lam=0.0 reproduces the ratio-renormalization heuristic used
    when the discriminator class is not closed under additive constants.
    """
    h = _h_on_discrete(disc, mu)
    if lam is None:
        lam = solve_lambda(disc, gen, mu)
    ratios = np.asarray(gen.f_prime_inv(h - lam))
    weights = mu.weights * ratios
    total = float(weights.sum())
    if not math.isfinite(total) or total <= 0.0:
        raise DegenerateDistributionError(f"refined mass is {total!r}")
    return mu.reweighted(weights / total)


def refined_score(base_score: Callable[[np.ndarray], np.ndarray], disc, gen: GeneratorSpec,
                  x: np.ndarray, *, lam: float = 0.0) -> np.ndarray:
    """Score of the refined model: base score plus the guidance term.

    guidance(x) = (d/ds log f'^-1)(h(x) - lam) * grad_x h(x), with the
    closed-form derivative from the generator (no numeric differentiation).
    """
    if not isinstance(disc, Discriminator):
        raise DomainError("refined_score needs a net discriminator with input gradients")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = disc.h_batch(x) - lam
    lo, hi = gen.conjugate_domain
    if np.any(h <= lo) or np.any(h >= hi):
        bad = int(np.flatnonzero((h <= lo) | (h >= hi))[0])
        raise DomainError(
            f"h - lambda = {h[bad]} at x = {x[bad]} leaves the range of f' {gen.conjugate_domain}"
        )
    factor = np.asarray(gen.log_ratio_deriv(h))[:, None]
    return base_score(x) + factor * input_grad(disc, x)


def refined_density_unnormalized(base: ContinuousModel, disc, gen: GeneratorSpec,
                                 x: np.ndarray, *, lam: float = 0.0) -> np.ndarray:
    """density(x) * f'^-1(h(x) - lam); used by 1-d and 2-d quadrature oracles."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    h = _h_values(disc, x) - lam
    return np.exp(base.log_density(x)) * np.asarray(gen.f_prime_inv(h))


@dataclass(frozen=True)
class RefinedModel:
    """A refined model, either a reweighted finite distribution or a score field."""

    kind: str  # "discrete" | "continuous-score"
    gen: GeneratorSpec
    disc: object
    lambda_h: float
    base: object
    refined: Optional[DiscreteDistribution] = None
    mc_residual: float = 0.0  # |E_mu[f'^-1(h - lambda)] - 1| recorded at construction
    mc_se: float = 0.0

    def score(self, x: np.ndarray) -> np.ndarray:
        if self.kind != "continuous-score":
            raise DomainError("score only defined for continuous refined models")
        return refined_score(self.base.score, self.disc, self.gen, x, lam=self.lambda_h)

    def unnormalized_density(self, x: np.ndarray) -> np.ndarray:
        if self.kind != "continuous-score":
            raise DomainError("density only defined for continuous refined models")
        return refined_density_unnormalized(self.base, self.disc, self.gen, x, lam=self.lambda_h)


def refine_continuous(base: ContinuousModel, disc, gen: GeneratorSpec, *,
                      n_mc: int = 10_000, seed=0) -> RefinedModel:
    """Build the continuous refined model, solving lambda by Monte Carlo."""
    rng = as_generator(seed)
    batch = base.sample(rng, n_mc)
    lam = solve_lambda(disc, gen, batch)
    ratios = np.asarray(gen.f_prime_inv(_h_values(disc, batch) - lam))
    residual = abs(float(ratios.mean()) - 1.0)
    se = float(ratios.std(ddof=1) / math.sqrt(n_mc))
    return RefinedModel(kind="continuous-score", gen=gen, disc=disc, lambda_h=lam,
                        base=base, mc_residual=residual, mc_se=se)


def refine_model_discrete(mu: DiscreteDistribution, disc, gen: GeneratorSpec) -> RefinedModel:
    lam = solve_lambda(disc, gen, mu)
    refined = refine_discrete(mu, disc, gen, lam=lam)
    return RefinedModel(kind="discrete", gen=gen, disc=disc, lambda_h=lam,
                        base=mu, refined=refined)


def export_refined_csv(path, mu: DiscreteDistribution, disc, gen: GeneratorSpec, *,
                       lam: Optional[float] = None) -> None:
    """Write (support, base weight, ratio, refined weight) rows."""
    h = _h_on_discrete(disc, mu)
    if lam is None:
        lam = solve_lambda(disc, gen, mu)
    ratios = np.asarray(gen.f_prime_inv(h - lam))
    weights = mu.weights * ratios
    weights = weights / weights.sum()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim_cols = [f"x{j}" for j in range(mu.dim)]
        writer.writerow(dim_cols + ["base_weight", "ratio", "refined_weight"])
        for i in range(mu.n):
            row = [f"{v:.17g}" for v in mu.support[i]]
            row += [f"{mu.weights[i]:.17g}", f"{ratios[i]:.17g}", f"{weights[i]:.17g}"]
            writer.writerow(row)
