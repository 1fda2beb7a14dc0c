"""Offline multi-action policy learning.

Cross-fitted doubly robust scoring, exact and hybrid policy-tree search,
baseline policy classes, a synthetic two-phase experiment simulator and
cluster-robust evaluation regression.
"""

from .dataset import (CsvSchema, DataError, Dataset, ParseError, SchemaError,
                      ValidationReport, known_propensities, load_csv, validate)
from .evaluate import (Contrast, Design, DesignSpec, OlsFit, build_design,
                       contrast, fit_design, ols_cluster)
from .forest import ForestParams, RegressionForest
from .nuisance import (FoldAssignment, NuisanceFit, fit_nuisance,
                       fit_outcome_models, fit_propensities, forest_fit,
                       make_folds)
from .policies import (ConstantPolicy, CubicPolicy, Leaf, LinearPolicy,
                       PlugInPolicy, Policy, QuadrantPolicy, Split,
                       StochasticPolicy, TreeNode, TreePolicy, export_tree,
                       plug_in_policy, tree_depth, tree_from_json, tree_to_json)
from .scores import (GroupEffect, RewardEstimate, ScoreMatrix, aipw_scores,
                     group_effects, ipw_reward, ipw_scores, policy_reward,
                     reward_difference, stochastic_reward)
from .simulate import (ComparisonMatrix, DgpConfig, DgpOracle, FeatureSpec,
                       HeterogeneityRule, TwoPhaseConfig, TwoPhaseResult,
                       block_randomize, default_heterogeneity, gen_population,
                       oracle_regret, run_two_phase, validation_exercise)
from .treesearch import (PolicyTreeLearner, SearchConfig, SearchResult,
                         candidate_thresholds, exact_search, hybrid_search)

__version__ = "0.1.0"
