"""Sequential Bayesian adaptive estimation.

Grid posteriors, information-gain and cost-aware placement strategies,
determinant-optimal reference designs, and the diagnostics that check the
engine's long-run behavior against those references.
"""

from .config import ExperimentConfig, config_from_dict, read_config
from .diagnostics import (AsymptoticReport, TrialTrace, build_report,
                          entropy_plus_prior_kl, entropy_residual,
                          gain_cost_ratio, info_budget_check,
                          most_trials_converges, rho, track_B)
from .doptimal import (CandidateInformationSet, DesignWeights,
                       candidate_information_set, h_star, offline_reference,
                       refine_scalar_optimum, solve_doptimal)
from .errors import (DegenerateDesignError, EmptyWindowError,
                     ImpossibleObservationError, ModelViolationError,
                     SeqgainError, ValidationError)
from .harness import (RNG_NAME, RunResult, read_trace_csv, reference_designs,
                      run_experiment, run_sweep, summary_dict, write_trace_csv)
from .models import (CostModel, LinearGaussianModel, PsychometricModel,
                     Question, TwentyQuestionsModel, constant_cost,
                     expected_cost_at, fisher_numeric, fisher_psychometric,
                     outcome_linear_cost, sample_outcome)
from .posterior import (GridPosterior, ParameterGrid, PosteriorSummary,
                        bayes_update, differential_entropy, local_summary,
                        posterior_from_density, predictive, regular_grid,
                        summarize, uniform_posterior)
from .strategies import (GainContext, PlacementDecision, choose_baseline,
                         choose_greedy, choose_myopic_cost_aware,
                         expected_information_gain, information_gain_kl_form,
                         sweep_order)

__version__ = "0.1.0"
