"""Implicit MPM for deformable bodies with tet-level frictional contact.

Particles carry tetrahedra of the input mesh; contact is detected between
deformed tets and resolved as a coupled cone-complementarity problem over
contact impulses, solved with ADMM against each object's implicit system.
"""

from .constitutive import (MaterialLaw, MaterialParams, Plasticity,
                           plastic_project, plastic_project_batch, proper_svd,
                           stress, stress_batch)
from .driver import SimState, StepDiagnostics, run, step, sweep_mu
from .errors import (ConfigError, DegenerateError, DegeneratePrimitiveError,
                     EmptySupportError, FactorizationError, NonInvertibleError,
                     OutOfGridError, ParseError, TetMPMError)
from .kernels import KernelType, stencil, stencil_batch
from .meshgen import box_mesh, rotated, rotation_x
from .presets import preset, resolve_scene
from .scene import (BodySpec, ParticleArrays, SceneConfig, TetMesh, load_mesh,
                    parse_scene, save_mesh, seed_particles, write_scene)
from .solver import SolverResult, de_saxce, ncp_residual, project_cone, solve
from .transfers import Grid, TransferType, g2p, internal_forces, p2g

__version__ = "0.1.0"

__all__ = [
    "BodySpec", "ConfigError", "DegenerateError", "DegeneratePrimitiveError",
    "EmptySupportError", "FactorizationError", "Grid", "KernelType",
    "MaterialLaw", "MaterialParams", "NonInvertibleError", "OutOfGridError",
    "ParseError", "ParticleArrays", "Plasticity", "SceneConfig", "SimState",
    "SolverResult", "StepDiagnostics", "TetMPMError", "TetMesh",
    "TransferType", "box_mesh", "de_saxce", "g2p", "internal_forces",
    "load_mesh", "ncp_residual", "p2g", "parse_scene", "plastic_project",
    "plastic_project_batch", "preset", "project_cone", "proper_svd",
    "resolve_scene", "rotated", "rotation_x", "run", "save_mesh",
    "seed_particles", "solve", "step", "stencil", "stencil_batch", "stress",
    "stress_batch", "sweep_mu", "write_scene",
]
