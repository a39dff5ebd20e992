"""Built-in demonstration scenes.

Every preset is a plain SceneConfig factory so tests and the CLI share the
exact same setups.  Resolve "preset:NAME" strings with resolve_scene.
"""

import numpy as np

from .constitutive import MaterialLaw, MaterialParams, Plasticity
from .errors import ConfigError
from .meshgen import box_mesh, rotated, rotation_x
from .scene import BodySpec, SceneConfig

RUBBER = dict(youngs_modulus=1.0e5, poisson_ratio=0.3, density=1000.0)


def _body(mesh, law=MaterialLaw.NEOHOOKEAN, kinematic=False, velocity=(0.0, 0.0, 0.0),
          plasticity=Plasticity.NONE, theta_c=0.025, theta_s=0.0075, **mat):
    params = dict(RUBBER)
    params.update(mat)
    return BodySpec(
        mesh=mesh,
        material=MaterialParams(law=law, plasticity=plasticity,
                                theta_c=theta_c, theta_s=theta_s, **params),
        kinematic=kinematic,
        initial_velocity=np.asarray(velocity, dtype=np.float64),
    )


def cube_drop() -> SceneConfig:
    """Soft cube dropped onto a fixed floor slab.

    The cube uses cubic cells: flattened cells (e.g. 5x5x4 over the same
    volume) produce noticeably harder contact problems on landing.
    """
    floor = _body(box_mesh((0.9, 0.9, 0.05), (3, 3, 1), origin=(0.05, 0.05, 0.0)),
                  kinematic=True)
    cube = _body(box_mesh((0.2, 0.2, 0.2), (5, 5, 5), origin=(0.4, 0.4, 0.13)))
    return SceneConfig(
        bodies=[floor, cube],
        dt=2e-3,
        grid_spacing=0.05,
        grid_origin=(0.0, 0.0, 0.0),
        grid_dims=(24, 24, 16),
        friction_default=0.5,
    )


def block_stack() -> SceneConfig:
    """Two blocks stacked with a lateral offset, dropped onto a fixed floor.

    The pair starts clear of the floor (15 mm > contact margin) while the
    inter-block gap (3 mm) is already inside it, so the first steps exercise
    pure block-block contact before the floor enters.
    """
    floor = _body(box_mesh((0.7, 0.7, 0.05), (3, 3, 1), origin=(0.225, 0.225, 0.0)),
                  kinematic=True)
    lower = _body(box_mesh((0.15, 0.15, 0.15), (3, 3, 3), origin=(0.5, 0.5, 0.065)))
    upper = _body(box_mesh((0.12, 0.12, 0.12), (3, 3, 3), origin=(0.545, 0.515, 0.218)))
    return SceneConfig(
        bodies=[floor, lower, upper],
        dt=2e-3,
        grid_spacing=0.05,
        grid_origin=(0.0, 0.0, 0.0),
        grid_dims=(24, 24, 13),
        friction_default=0.5,
    )


def incline_slide(angle: float = np.pi / 6) -> SceneConfig:
    """Block resting on a tilted slab; sticks or slides depending on friction."""
    R = rotation_x(-angle)
    slab = _body(rotated(box_mesh((0.5, 1.6, 0.08), (2, 8, 1),
                                  origin=(-0.25, -0.3, -0.08)), R),
                 kinematic=True)
    block = _body(rotated(box_mesh((0.12, 0.12, 0.12), (3, 3, 3),
                                   origin=(-0.06, 0.0, 0.002)), R))
    return SceneConfig(
        bodies=[slab, block],
        dt=2e-3,
        grid_spacing=0.05,
        grid_origin=(-0.3, -0.3, -0.35),
        grid_dims=(13, 27, 12),
        friction_default=0.3,
    )


def plastic_walls() -> SceneConfig:
    """Plastic cube driven into a slot that narrows toward the bottom.

    The walls lean inward slightly: the opening clears the cube, the bottom
    is 10 mm narrower, so descending forces lateral compression past the
    elastic clamp range.
    """
    lean = 0.02  # radians; ~8 mm of lean over the 0.4 m wall height
    wall = box_mesh((0.05, 0.3, 0.4), (1, 3, 4), origin=(-0.105, -0.15, 0.0))
    left = _body(_rot_y(wall, -lean, pivot=(-0.055, 0.0, 0.0)), kinematic=True)
    wall = box_mesh((0.05, 0.3, 0.4), (1, 3, 4), origin=(0.055, -0.15, 0.0))
    right = _body(_rot_y(wall, lean, pivot=(0.055, 0.0, 0.0)), kinematic=True)
    floor = _body(box_mesh((0.4, 0.4, 0.05), (2, 2, 1), origin=(-0.2, -0.2, -0.05)),
                  kinematic=True)
    cube = _body(box_mesh((0.12, 0.12, 0.12), (3, 3, 3), origin=(-0.06, -0.06, 0.405)),
                 law=MaterialLaw.COROTATIONAL,
                 plasticity=Plasticity.BOX_CLAMP, theta_c=0.025, theta_s=0.0075,
                 velocity=(0.0, 0.0, -1.0))
    return SceneConfig(
        bodies=[left, right, floor, cube],
        dt=2e-3,
        grid_spacing=0.05,
        grid_origin=(-0.35, -0.35, -0.1),
        grid_dims=(15, 15, 16),
        friction_default=0.6,
    )


def eraser_bed() -> SceneConfig:
    """Stiff block dropped into a very soft bed whose shear memory is erased.

    The kinematic floor uses a coarse tessellation on purpose: collision
    geometry does not need fine cells, and a fine floor under the whole bed
    multiplies the persistent contact count several-fold.
    """
    floor = _body(box_mesh((0.5, 0.5, 0.05), (2, 2, 1), origin=(-0.25, -0.25, -0.05)),
                  kinematic=True)
    bed = _body(box_mesh((0.3, 0.3, 0.12), (5, 5, 2), origin=(-0.15, -0.15, 0.002)),
                youngs_modulus=2.0e4,
                plasticity=Plasticity.DEVIATORIC_ERASER)
    block = _body(box_mesh((0.1, 0.1, 0.1), (2, 2, 2), origin=(-0.05, -0.05, 0.17)),
                  youngs_modulus=2.0e5, density=1500.0)
    return SceneConfig(
        bodies=[floor, bed, block],
        dt=2e-3,
        grid_spacing=0.05,
        grid_origin=(-0.25, -0.25, -0.15),
        grid_dims=(11, 11, 10),
        friction_default=0.3,
        boundary_layers=1,
    )


def _rot_y(mesh, angle, pivot):
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return rotated(mesh, R, pivot)


PRESETS = {
    "cube-drop": cube_drop,
    "block-stack": block_stack,
    "incline-slide": incline_slide,
    "plastic-walls": plastic_walls,
    "eraser-bed": eraser_bed,
}

DEFAULT_FRAMES = {
    "cube-drop": 200,
    "block-stack": 160,
    "incline-slide": 180,
    "plastic-walls": 160,
    "eraser-bed": 120,
}

DESCRIPTIONS = {
    "cube-drop": "soft cube falls onto a fixed floor and settles",
    "block-stack": "two offset blocks stack on a floor",
    "incline-slide": "block on a 30-degree slab; per-friction stick/slip",
    "plastic-walls": "plastic cube wedged into a narrowing slot",
    "eraser-bed": "stiff block sinks into a soft bed with erased shear memory",
}


def preset(name: str) -> SceneConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None


def resolve_scene(spec: str):
    """Map 'preset:NAME' to its config; return other strings unchanged."""
    if spec.startswith("preset:"):
        return preset(spec[len("preset:"):])
    return spec
