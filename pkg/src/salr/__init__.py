"""Seed-point detection by damped dynamics of SALR-interacting particles."""

from .cluster import ConsensusConfig, SeedPoint, consensus, extract_seeds
from .dynamics import SolverConfig, TrajectoryState, integrate, minkowski_distance, pairwise_force, to_solver_space
from .particles import InitConfig, ParticleSystem, init_particles, particle_count
from .pipeline import (DetectionResult, EvalReport, PipelineConfig, benchmark, detect_image, detect_scatter,
                       run_baseline_dt_maxima)
from .potential import (ConfiningPotential, InteractionParams, InteractionSpec, confining_from_density,
                        confining_from_mask, solve_interaction_params, v_int, v_int_prime)

__all__ = [
    "ConfiningPotential", "ConsensusConfig", "DetectionResult", "EvalReport", "InitConfig",
    "InteractionParams", "InteractionSpec", "ParticleSystem", "PipelineConfig", "SeedPoint",
    "SolverConfig", "TrajectoryState", "benchmark", "confining_from_density", "confining_from_mask",
    "consensus", "detect_image", "detect_scatter", "extract_seeds", "init_particles", "integrate",
    "minkowski_distance", "pairwise_force", "particle_count", "run_baseline_dt_maxima",
    "solve_interaction_params", "to_solver_space", "v_int", "v_int_prime",
]
__version__ = "0.1.0"
