"""Scenario builders, fidelity oracles, observed data and reference presets."""

from .builders import (build_assemblage_bound, build_pm_bound, build_steering_bound, pm_span)
from .curve import CurvePoint, bound_curve
from .data import (ObservedData, bell_table, evaluate_functional, pm_table, steering_assemblage,
                   table_of)
from .oracle import (FidelityWeights, OracleError, assemblage_weights, bb_contract, fidelity_operator,
                     fidelity_oracle_choi, fidelity_oracle_dual, steering_fidelity_operator,
                     strategy_fidelity)
from .presets import (ReferenceAssemblage, ReferenceBipartiteState, ReferenceEnsemble, bb84_assemblage,
                      mix_strategies, phi_plus_state, preset_reference, preset_strategy, rac2_ensemble,
                      random_assemblage_strategy, random_bipartite_strategy, random_ensemble_strategy)

__all__ = [
    "CurvePoint", "FidelityWeights", "ObservedData", "OracleError", "ReferenceAssemblage",
    "ReferenceBipartiteState", "ReferenceEnsemble", "assemblage_weights", "bb84_assemblage",
    "bb_contract", "bell_table", "bound_curve", "build_assemblage_bound", "build_pm_bound",
    "build_steering_bound", "evaluate_functional", "fidelity_operator", "fidelity_oracle_choi",
    "fidelity_oracle_dual", "mix_strategies", "phi_plus_state", "pm_span", "pm_table",
    "preset_reference", "preset_strategy", "rac2_ensemble", "random_assemblage_strategy",
    "random_bipartite_strategy", "random_ensemble_strategy", "steering_assemblage",
    "steering_fidelity_operator", "strategy_fidelity", "table_of",
]
