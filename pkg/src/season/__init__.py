"""Discriminator-guided refinement of generative models at desk scale.

The package splits into f-divergence generator machinery (`generators`),
toy distributions and the forward noising process (`distributions`),
discriminator nets with exact gradients (`discriminator`), refined-model
construction (`refine`), samplers (`samplers`), divergence and bound
estimators (`metrics`), brute-force oracles (`oracle`), and the
experiment pipelines plus CLI (`experiments`, `verify`, `cli`).
"""

from .generators import (
    GENERATOR_NAMES,
    GeneratorSpec,
    PartialLossPair,
    bayes_pointwise_loss,
    conjugate,
    conjugate_numeric,
    eval_f,
    get_generator,
    inv_fprime,
    inverse_link,
    link,
    partial_losses,
    perspective_prior,
)
from .distributions import (
    ContinuousModel,
    DiscreteDistribution,
    OUSchedule,
    constant_schedule,
    discrete_ratio,
    gaussian_mixture,
    noise_sample,
    ou_params,
    standard_normal_model,
)
from .discriminator import (
    Discriminator,
    TabularDiscriminator,
    TrainConfig,
    forward,
    grads,
    input_grad,
    objective_R,
    train,
)
from .refine import (
    RefinedModel,
    refine_continuous,
    refine_discrete,
    refined_density_unnormalized,
    refined_score,
    solve_lambda,
)
from .samplers import LangevinConfig, ReverseDiffusionConfig, langevin, reverse_em, w1_1d
from .metrics import (
    BoundReport,
    ConvergenceBoundInputs,
    convergence_bound,
    est_DfH,
    est_gain_direct,
    est_gain_pushforward,
    est_ipm,
    exact_fdiv,
    fdiv_kl_lemma_check,
    generalization_report,
    rademacher_empirical,
    vi_duality_check,
)
from .oracle import HSpec, dual_grid_min, exact_optimal_h, primal_sup_tabular

__version__ = "0.1.0"
