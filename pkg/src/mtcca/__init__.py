"""Measure-transformed canonical correlation analysis."""

__version__ = "0.1.0"

from .errors import (DegenerateNull, DegenerateWeights, DimensionMismatch, EmptyInput,
                     MtccaError, NodeSetMismatch, NonFiniteInput, ParseError,
                     RowCountMismatch, SingularCovariance, TooManyFailures, ZeroVariance,
                     ZeroVector)
from .moments import (Family, MtFunctionSpec, PairedSample, TransformedMoments,
                      log_weights, normalized_weights, transformed_moments)
from .solver import CcaSolution, mtcca, solve_cca
from .selection import (SelectionConfig, SelectionResult, build_search_region,
                        default_gaussian_widths, psi_objective, select_parameters)
from .significance import Reselect, SignificanceReport, permutation_test, permutation_test_orders
from .simulation import ModelName, SimulationModel, generate
from .experiments import MethodConfig, MonteCarloSummary, alignment, run_monte_carlo
from .graph import (DependencyGraph, build_graph, closest_graph_by_edit_distance,
                    symmetric_difference)
from .io import ingest_csv
