"""Highway-graph reinforcement learning.

Compresses the empirical state-transition graph of a deterministic
environment into intersections joined by non-branching highways, runs an
accelerated value-iteration loop over the compressed graph, and turns the
result into a policy (optionally distilled into a small neural
approximator).
"""

from .encoder import RandomProjector, encode_tabular, project_step, vec_to_state
from .environments import EnvSpec, StepResult, ground_truth_values, make_env
from .errors import (DeterminismViolation, DimensionMismatch, KeyMismatch,
                     MissingArtifact, NotInterior)
from .highway_graph import (Highway, HighwayGraph, Location, detect_intersections_against,
                            detect_intersections_within, expand_to_empirical, graph_stats,
                            highway_reward, locate)
from .policy import PolicySnapshot, epsilon_greedy, greedy_action, select_action
from .reparam import ApproxConfig, QApproximator, QDataset, act, extract_dataset, fit
from .trainer import EvalResult, RunMetrics, TrainConfig, TrainResult, detect_convergence, evaluate, train
from .transition_model import (EmpiricalGraph, Trajectory, TransitionSample,
                               empirical_reward, empirical_transition, record_trajectory,
                               vanilla_value_iteration)
from .value_iteration import (ValueTables, bellman_sweep, completeness_report,
                              contraction_probe, interior_values, ops_per_second_benchmark,
                              value_update_loop)

__version__ = "0.1.0"
