"""Cell-level secure views that stay deniable under denial and function-based constraints."""

from .constraints import (DenialConstraint, DependencySet, FunctionConstraint, ParseError,
                          TrivialPredicate, format_constraint, parse_constraints, validate_instance)
from .detect import Cueset, detect, detect_oblivious, detect_query_based, filter_owner
from .engine import EngineOptions, RunReport, compute_leakage, is_deniable, protect_cells, run_binning, run_full
from .model import (AttributeDef, CellRef, Policy, QuerierView, RelationInstance, Schema, base_view,
                    load_policies, load_relation, load_schema, sensitivity_determination)
from .protect import protect_cloak, protect_mvc, protect_random
from .verify import (attack_constraint_propagation, attack_weighted_sampling, check_full_deniability,
                     dependency_connectivity, oracle_inferred_set)

__version__ = "0.1.0"
