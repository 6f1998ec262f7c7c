"""Combinatorial p-choose-r control barrier functions with a QP safety filter."""

from .constraints import (ConstraintRow, barrier_values, build_indefinite_rows,
                          build_rows, build_rows_mcbf_diag, per_level_values)
from .logic import (Choose, Leaf, LogicTree, PivotResult, TreeValidationError,
                    ValidationReport, choose, evaluate_pivot, kth_largest, leaf,
                    membership_oracle, naive_combination_count, tree_from_json,
                    tree_to_json, validate)
from .mcbf import (EigenSystem, SymmetricBarrierMatrix, apply_classK_matrix,
                   build_Hprime, eigen_sorted, eigenvalue_pivot_inputs)
from .primitives import (ClassKappa, ControlAffineSystem, LieDerivatives,
                         PrimitiveBarrier, check_gradient, lie_derivatives,
                         make_agent_block, make_ball_interior, make_halfspace,
                         single_integrator)
from .qp import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, KKTReport, QPProblem,
                 QPSolution, solve, solve_bruteforce, verify_kkt)
from .sim import (AuditReport, RegionSpec, ScenarioConfig, ScenarioError,
                  SimResult, TrajectoryRecord, audit, region_counts, run,
                  run_batch)

__version__ = "0.1.0"
