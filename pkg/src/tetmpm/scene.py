"""Scene description: tet meshes, bodies, configuration, particle seeding.

Mesh file format (plain text): first non-blank line is ``nv nt``, followed by
nv vertex lines ``x y z`` and nt tet lines of four 0-based vertex indices.
Tets are reordered on load so their signed volume is positive.

Scene files are key-value lines mirroring SceneConfig; see parse_scene for
the exact keys.  Unknown keys are errors.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .constitutive import MaterialLaw, MaterialParams, Plasticity
from .errors import ConfigError, DegenerateError, ParseError
from .kernels import KernelType
from .transfers import TransferType


def tet_volume(verts: np.ndarray) -> np.ndarray:
    """Signed volume(s) of tets given as (..., 4, 3) vertex arrays."""
    e = verts[..., 1:, :] - verts[..., :1, :]
    return np.linalg.det(e) / 6.0


@dataclass
class TetMesh:
    vertices: np.ndarray  # (nv, 3) float
    tets: np.ndarray      # (nt, 4) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        nv = len(self.vertices)
        if self.tets.size and (self.tets.min() < 0 or self.tets.max() >= nv):
            raise IndexError("tet references a vertex outside the mesh")
        self._orient()

    def _orient(self):
        """Flip tets in place so every signed volume is positive."""
        if not len(self.tets):
            return
        verts = self.vertices[self.tets]
        vol = tet_volume(verts)
        edge = np.linalg.norm(verts[:, 1:] - verts[:, :1], axis=-1).max(axis=-1)
        edge = np.maximum(edge, np.linalg.norm(verts[:, 2] - verts[:, 1], axis=-1))
        tiny = vol_floor(edge)
        if np.any(np.abs(vol) <= tiny):
            bad = int(np.argmax(np.abs(vol) <= tiny))
            raise DegenerateError(f"tet {bad} has (near) zero volume")
        neg = vol < 0
        self.tets[neg, 2], self.tets[neg, 3] = (
            self.tets[neg, 3].copy(),
            self.tets[neg, 2].copy(),
        )

    @property
    def volumes(self) -> np.ndarray:
        return tet_volume(self.vertices[self.tets])


def vol_floor(edge_scale):
    # degenerate threshold: far below any healthy tet of that edge length
    return 1e-12 * np.maximum(edge_scale, 1e-30) ** 3


def load_mesh(path: str) -> TetMesh:
    """Read a tet mesh from the plain-text format described in the module docstring."""
    with open(path) as f:
        raw = [(i + 1, line.strip()) for i, line in enumerate(f)]
    lines = [(no, text) for no, text in raw if text]
    if not lines:
        raise ParseError(f"{path}: empty mesh file")
    no, head = lines[0]
    parts = head.split()
    if len(parts) != 2:
        raise ParseError(f"{path}:{no}: expected 'nv nt' header")
    try:
        nv, nt = int(parts[0]), int(parts[1])
    except ValueError as e:
        raise ParseError(f"{path}:{no}: bad header: {e}") from None
    if len(lines) != 1 + nv + nt:
        raise ParseError(
            f"{path}: expected {1 + nv + nt} data lines, found {len(lines)}"
        )
    verts = np.empty((nv, 3))
    for k in range(nv):
        no, text = lines[1 + k]
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"{path}:{no}: expected 3 coordinates")
        try:
            verts[k] = [float(p) for p in parts]
        except ValueError as e:
            raise ParseError(f"{path}:{no}: {e}") from None
    tets = np.empty((nt, 4), dtype=np.int64)
    for k in range(nt):
        no, text = lines[1 + nv + k]
        parts = text.split()
        if len(parts) != 4:
            raise ParseError(f"{path}:{no}: expected 4 vertex indices")
        try:
            tets[k] = [int(p) for p in parts]
        except ValueError as e:
            raise ParseError(f"{path}:{no}: {e}") from None
    return TetMesh(verts, tets)


def save_mesh(mesh: TetMesh, path: str):
    with open(path, "w") as f:
        f.write(f"{len(mesh.vertices)} {len(mesh.tets)}\n")
        for v in mesh.vertices:
            f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.tets:
            f.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")


@dataclass
class BodySpec:
    mesh: TetMesh
    material: MaterialParams
    kinematic: bool = False
    initial_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.initial_velocity = np.asarray(self.initial_velocity, dtype=float).reshape(3)
        self.initial_translation = np.asarray(self.initial_translation, dtype=float).reshape(3)
        if self.kinematic and np.any(self.initial_velocity != 0.0):
            raise ConfigError("kinematic bodies are static obstacles; velocity must be zero")


@dataclass
class SceneConfig:
    bodies: list
    dt: float = 2e-3
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    grid_spacing: float = 0.05
    grid_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grid_dims: tuple = (32, 32, 32)
    kernel: KernelType = KernelType.QUADRATIC
    transfer: TransferType = TransferType.BASIC
    friction_default: float = 0.5
    friction_pairs: dict = field(default_factory=dict)
    rayleigh_alpha: float = 0.0
    rayleigh_beta: float = 0.0
    contact_margin: float | None = None
    admm_tol: float = 1e-6
    admm_max_iters: int = 1000
    boundary_layers: int = 0
    fixed_corotational_tangent: bool = False
    tangent_projection: bool = False

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(3)
        self.grid_origin = np.asarray(self.grid_origin, dtype=float).reshape(3)
        self.grid_dims = tuple(int(d) for d in self.grid_dims)
        self.kernel = KernelType(self.kernel)
        self.transfer = TransferType(self.transfer)
        if not 0 < self.dt <= 0.1:
            raise ConfigError("dt must lie in (0, 0.1] seconds")
        if self.grid_spacing <= 0:
            raise ConfigError("grid_spacing must be positive")
        if any(d < 4 for d in self.grid_dims):
            raise ConfigError("grid_dims must be at least 4 nodes per axis")
        if self.friction_default < 0:
            raise ConfigError("friction coefficients must be non-negative")
        for (a, b), mu in list(self.friction_pairs.items()):
            if mu < 0:
                raise ConfigError("friction coefficients must be non-negative")
            self.friction_pairs[(b, a)] = mu
        if self.rayleigh_alpha < 0 or self.rayleigh_beta < 0:
            raise ConfigError("rayleigh coefficients must be non-negative")
        if self.contact_margin is None:
            self.contact_margin = 0.1 * self.grid_spacing
        if self.contact_margin <= 0:
            raise ConfigError("contact_margin must be positive")
        if self.admm_tol <= 0:
            raise ConfigError("admm_tol must be positive")
        if self.admm_max_iters < 1:
            raise ConfigError("admm_max_iters must be at least 1")
        if self.boundary_layers < 0:
            raise ConfigError("boundary_layers must be non-negative")
        if self.transfer == TransferType.MLS and self.kernel != KernelType.QUADRATIC:
            raise ConfigError("mls transfer requires the quadratic kernel")

    def mu(self, body_a: int, body_b: int) -> float:
        return self.friction_pairs.get((body_a, body_b), self.friction_default)


@dataclass
class Particle:
    """One material point carrying a tetrahedral contact primitive."""

    mass: float
    volume: float
    position: np.ndarray
    velocity: np.ndarray
    F: np.ndarray
    F_elastic: np.ndarray
    F_plastic: np.ndarray
    affine: np.ndarray            # APIC / MLS velocity-gradient carrier
    primitive: np.ndarray         # (4, 3) rest offsets of the tet vertices
    body_id: int = 0


def seed_particles(body: BodySpec, body_id: int = 0) -> list:
    """One particle per mesh tet, placed at the barycenter.

    Particle volume is the tet volume, mass is density * volume, and the
    primitive stores the vertex offsets relative to the barycenter.
    """
    mesh = body.mesh
    out = []
    verts_all = mesh.vertices[mesh.tets] + body.initial_translation
    vols = tet_volume(verts_all)
    for verts, vol in zip(verts_all, vols):
        center = verts.mean(axis=0)
        out.append(
            Particle(
                mass=body.material.density * float(vol),
                volume=float(vol),
                position=center,
                velocity=body.initial_velocity.copy(),
                F=np.eye(3),
                F_elastic=np.eye(3),
                F_plastic=np.eye(3),
                affine=np.zeros((3, 3)),
                primitive=verts - center,
                body_id=body_id,
            )
        )
    return out


class ParticleArrays:
    """Structure-of-arrays particle storage used by the simulation loop."""

    FIELDS = ("mass", "volume", "x", "v", "F", "F_elastic", "F_plastic", "affine", "offsets")

    def __init__(self, mass, volume, x, v, F, F_elastic, F_plastic, affine, offsets, body_id=0):
        self.mass = np.asarray(mass, dtype=float)
        self.volume = np.asarray(volume, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.F = np.asarray(F, dtype=float)
        self.F_elastic = np.asarray(F_elastic, dtype=float)
        self.F_plastic = np.asarray(F_plastic, dtype=float)
        self.affine = np.asarray(affine, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.body_id = body_id
        self.stress = np.zeros_like(self.F)

    @classmethod
    def from_particles(cls, particles: list) -> "ParticleArrays":
        body_id = particles[0].body_id if particles else 0
        return cls(
            mass=[p.mass for p in particles],
            volume=[p.volume for p in particles],
            x=np.array([p.position for p in particles]).reshape(-1, 3),
            v=np.array([p.velocity for p in particles]).reshape(-1, 3),
            F=np.array([p.F for p in particles]).reshape(-1, 3, 3),
            F_elastic=np.array([p.F_elastic for p in particles]).reshape(-1, 3, 3),
            F_plastic=np.array([p.F_plastic for p in particles]).reshape(-1, 3, 3),
            affine=np.array([p.affine for p in particles]).reshape(-1, 3, 3),
            offsets=np.array([p.primitive for p in particles]).reshape(-1, 4, 3),
            body_id=body_id,
        )

    def __len__(self):
        return len(self.mass)

    def state_backup(self):
        return {k: getattr(self, k).copy() for k in ("x", "v", "F", "F_elastic", "F_plastic", "affine")}

    def state_restore(self, backup):
        for k, arr in backup.items():
            setattr(self, k, arr)


# ---------------------------------------------------------------------------
# scene file I/O

_SCALAR_KEYS = {
    "dt": float,
    "grid_spacing": float,
    "friction_default": float,
    "rayleigh_alpha": float,
    "rayleigh_beta": float,
    "contact_margin": float,
    "admm_tol": float,
    "admm_max_iters": int,
    "boundary_layers": int,
    "fixed_corotational_tangent": lambda s: bool(int(s)),
    "tangent_projection": lambda s: bool(int(s)),
}

_BODY_SCALARS = {
    "youngs_modulus": float,
    "poisson_ratio": float,
    "density": float,
}


def parse_scene(path: str) -> SceneConfig:
    """Parse a scene file.  Mesh paths are resolved relative to the scene file."""
    base = os.path.dirname(os.path.abspath(path))
    kwargs = {}
    friction_pairs = {}
    bodies = []
    body = None
    with open(path) as f:
        lines = list(enumerate(f, start=1))
    for no, raw in lines:
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        key, args = parts[0], parts[1:]
        try:
            if body is None:
                if key == "body" and args == ["begin"]:
                    body = {}
                elif key in _SCALAR_KEYS:
                    kwargs[key] = _SCALAR_KEYS[key](args[0])
                elif key == "gravity":
                    kwargs["gravity"] = np.array([float(a) for a in args])
                elif key == "grid_origin":
                    kwargs["grid_origin"] = np.array([float(a) for a in args])
                elif key == "grid_dims":
                    kwargs["grid_dims"] = tuple(int(a) for a in args)
                elif key == "kernel":
                    kwargs["kernel"] = KernelType(args[0])
                elif key == "transfer":
                    kwargs["transfer"] = TransferType(args[0])
                elif key == "friction_pair":
                    friction_pairs[(int(args[0]), int(args[1]))] = float(args[2])
                else:
                    raise ConfigError(f"{path}:{no}: unknown key '{key}'")
            else:
                if key == "body" and args == ["end"]:
                    bodies.append(_finish_body(body, base, path, no))
                    body = None
                elif key == "mesh":
                    body["mesh"] = args[0]
                elif key == "law":
                    body["law"] = MaterialLaw(args[0])
                elif key in _BODY_SCALARS:
                    body[key] = _BODY_SCALARS[key](args[0])
                elif key == "plasticity":
                    body["plasticity"] = Plasticity(args[0])
                    if body["plasticity"] == Plasticity.BOX_CLAMP:
                        body["theta_c"], body["theta_s"] = float(args[1]), float(args[2])
                elif key == "kinematic":
                    body["kinematic"] = bool(int(args[0]))
                elif key == "initial_velocity":
                    body["initial_velocity"] = np.array([float(a) for a in args])
                elif key == "initial_translation":
                    body["initial_translation"] = np.array([float(a) for a in args])
                else:
                    raise ConfigError(f"{path}:{no}: unknown body key '{key}'")
        except ConfigError:
            raise
        except (ValueError, IndexError) as e:
            raise ConfigError(f"{path}:{no}: {e}") from None
    if body is not None:
        raise ConfigError(f"{path}: unterminated body block")
    if not bodies:
        raise ConfigError(f"{path}: scene has no bodies")
    return SceneConfig(bodies=bodies, friction_pairs=friction_pairs, **kwargs)


def _finish_body(d: dict, base: str, path: str, no: int) -> BodySpec:
    if "mesh" not in d:
        raise ConfigError(f"{path}:{no}: body block is missing a mesh")
    mesh_path = d.pop("mesh")
    if not os.path.isabs(mesh_path):
        mesh_path = os.path.join(base, mesh_path)
    mesh = load_mesh(mesh_path)
    kinematic = d.pop("kinematic", False)
    velocity = d.pop("initial_velocity", np.zeros(3))
    translation = d.pop("initial_translation", np.zeros(3))
    material = MaterialParams(**d)
    return BodySpec(
        mesh=mesh,
        material=material,
        kinematic=kinematic,
        initial_velocity=velocity,
        initial_translation=translation,
    )


def write_scene(config: SceneConfig, out_dir: str, name: str = "scene") -> str:
    """Write a scene (plus its meshes) into out_dir; returns the scene path."""
    os.makedirs(out_dir, exist_ok=True)
    scene_path = os.path.join(out_dir, f"{name}.scene")
    lines = [
        f"dt {float(config.dt)!r}",
        "gravity " + " ".join(repr(float(g)) for g in config.gravity),
        f"grid_spacing {float(config.grid_spacing)!r}",
        "grid_origin " + " ".join(repr(float(g)) for g in config.grid_origin),
        "grid_dims " + " ".join(str(d) for d in config.grid_dims),
        f"kernel {config.kernel.value}",
        f"transfer {config.transfer.value}",
        f"friction_default {float(config.friction_default)!r}",
        f"rayleigh_alpha {float(config.rayleigh_alpha)!r}",
        f"rayleigh_beta {float(config.rayleigh_beta)!r}",
        f"contact_margin {float(config.contact_margin)!r}",
        f"admm_tol {float(config.admm_tol)!r}",
        f"admm_max_iters {config.admm_max_iters}",
        f"boundary_layers {config.boundary_layers}",
        f"fixed_corotational_tangent {int(config.fixed_corotational_tangent)}",
        f"tangent_projection {int(config.tangent_projection)}",
    ]
    seen = set()
    for (a, b), mu in sorted(config.friction_pairs.items()):
        if (b, a) in seen:
            continue
        seen.add((a, b))
        lines.append(f"friction_pair {a} {b} {float(mu)!r}")
    for i, body in enumerate(config.bodies):
        mesh_name = f"{name}_body{i:02d}.mesh"
        save_mesh(body.mesh, os.path.join(out_dir, mesh_name))
        m = body.material
        lines.append("body begin")
        lines.append(f"  mesh {mesh_name}")
        lines.append(f"  law {m.law.value}")
        lines.append(f"  youngs_modulus {float(m.youngs_modulus)!r}")
        lines.append(f"  poisson_ratio {float(m.poisson_ratio)!r}")
        lines.append(f"  density {float(m.density)!r}")
        if m.plasticity == Plasticity.BOX_CLAMP:
            lines.append(f"  plasticity box_clamp {float(m.theta_c)!r} {float(m.theta_s)!r}")
        else:
            lines.append(f"  plasticity {m.plasticity.value}")
        lines.append(f"  kinematic {int(body.kinematic)}")
        lines.append("  initial_velocity " + " ".join(repr(float(v)) for v in body.initial_velocity))
        lines.append("  initial_translation " + " ".join(repr(float(v)) for v in body.initial_translation))
        lines.append("body end")
    with open(scene_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return scene_path
