"""Problem configuration: dataclasses, parser, serializer.

The on-disk format is flat ``section.key = value`` lines with ``#`` comments.
No nesting, no quoting; floats use repr-style decimal so that
parse(serialize(cfg)) round-trips exactly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigurationError

SIDES = ("left", "right", "bottom", "top")
PHI_KINDS = ("dirichlet", "neumann", "robin")
SPECIES_BC_MODES = ("noflux", "dirichlet")
LINEAR_SOLVERS = ("direct", "bicgstab", "gmres")
EAFE_AVERAGES = ("arithmetic", "harmonic")


@dataclass(frozen=True)
class MeshParams:
    Lx: float
    Ly: float
    nx: int
    ny: int


@dataclass(frozen=True)
class SpeciesParams:
    z: int
    nu: float
    C: float
    rho0: float


@dataclass(frozen=True)
class PhysConstants:
    epsilon: float
    k: float
    k_B: float = 1.0
    e: float = 1.0
    q_src: float = 0.0
    rho_fixed: float = 0.0
    # recorded from the experiment description; enters no equation here
    l_B: float = 0.0


@dataclass(frozen=True)
class BoundaryParams:
    phi_left_kind: str = "neumann"
    phi_right_kind: str = "neumann"
    phi_bottom_kind: str = "neumann"
    phi_top_kind: str = "neumann"
    phi_left_value: float = 0.0
    phi_right_value: float = 0.0
    phi_bottom_value: float = 0.0
    phi_top_value: float = 0.0
    phi_neumann_value: float = 0.0
    robin_kappa: float = 0.0
    robin_C: float = 0.0
    T_dirichlet: float = 1.0
    T_dirichlet_sides: tuple = SIDES
    species_bc: str = "noflux"

    def phi_kind(self, side):
        return getattr(self, f"phi_{side}_kind")

    def phi_value(self, side):
        return getattr(self, f"phi_{side}_value")


@dataclass(frozen=True)
class SolverControls:
    t_end: float
    dt: float = 1e-3
    dt_min: float = 1e-9
    picard_tol: float = 1e-8
    picard_max_iter: int = 100
    linear_tol: float = 1e-12
    linear_solver: str = "direct"
    relaxation: float = 1.0
    steady_tol: float = 0.0
    eafe_average: str = "arithmetic"


@dataclass(frozen=True)
class OutputParams:
    csv_path: str = ""
    vtk_every_n_steps: int = 0
    snapshot_dir: str = ""
    x_cut: float = -1.0  # current-diagnostic cut plane; -1 means Lx/2


@dataclass(frozen=True)
class ProblemConfig:
    mesh: MeshParams
    physics: PhysConstants
    species: tuple
    boundary: BoundaryParams
    solver: SolverControls
    output: OutputParams = field(default_factory=OutputParams)

    @property
    def n_species(self):
        return len(self.species)

    def cut_position(self):
        x = self.output.x_cut
        return 0.5 * self.mesh.Lx if x < 0.0 else x


class _Raw:
    """Key-value store from the flat file, tracking lines and consumption."""

    def __init__(self, text):
        self.items = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigurationError(
                    f"expected 'section.key = value' (line {lineno}): {body!r}"
                )
            key, _, value = body.partition("=")
            key = key.strip()
            value = value.strip()
            if "." not in key or not key.replace(".", "").replace("_", "").isalnum():
                raise ConfigurationError(f"malformed key {key!r} (line {lineno})")
            if key in self.items:
                raise ConfigurationError(f"duplicate key {key} (line {lineno})")
            self.items[key] = (value, lineno)
        self.seen = set()

    def take(self, key):
        self.seen.add(key)
        return self.items.get(key)

    def unknown(self):
        extra = [(ln, k) for k, (_, ln) in self.items.items() if k not in self.seen]
        extra.sort()
        return extra


def _conv_float(key, raw, lineno):
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(
            f"bad value for {key} (line {lineno}): {raw!r} is not a number"
        ) from None


def _conv_int(key, raw, lineno):
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(
            f"bad value for {key} (line {lineno}): {raw!r} is not an integer"
        ) from None


def _require(raw, key, conv):
    item = raw.take(key)
    if item is None:
        raise ConfigurationError(f"missing key {key}")
    return conv(key, item[0], item[1])


def _optional(raw, key, conv, default):
    item = raw.take(key)
    if item is None:
        return default
    return conv(key, item[0], item[1])


def _positive(key, value, lineno=None):
    if not value > 0:
        where = f" (line {lineno})" if lineno is not None else ""
        raise ConfigurationError(f"{key} must be positive{where}, got {value!r}")
    return value


def _nonneg(key, value, lineno=None):
    if value < 0:
        where = f" (line {lineno})" if lineno is not None else ""
        raise ConfigurationError(f"{key} must be nonnegative{where}, got {value!r}")
    return value


def _choice(options):
    def conv(key, raw, lineno):
        if raw not in options:
            raise ConfigurationError(
                f"bad value for {key} (line {lineno}): {raw!r} "
                f"(choose from {', '.join(options)})"
            )
        return raw

    return conv


def _string(key, raw, lineno):
    return raw


def _sides_list(key, raw, lineno):
    if raw in ("", "none"):
        return ()
    parts = tuple(p.strip() for p in raw.split(","))
    for p in parts:
        if p not in SIDES:
            raise ConfigurationError(
                f"bad value for {key} (line {lineno}): unknown side {p!r}"
            )
    if len(set(parts)) != len(parts):
        raise ConfigurationError(f"bad value for {key} (line {lineno}): repeated side")
    return parts


def _lineno(raw, key):
    item = raw.items.get(key)
    return item[1] if item else None


def parse_config(text):
    """Parse the flat text format into a fully validated ProblemConfig."""
    raw = _Raw(text)

    mesh = MeshParams(
        Lx=_require(raw, "mesh.Lx", _conv_float),
        Ly=_require(raw, "mesh.Ly", _conv_float),
        nx=_require(raw, "mesh.nx", _conv_int),
        ny=_require(raw, "mesh.ny", _conv_int),
    )
    _positive("mesh.Lx", mesh.Lx, _lineno(raw, "mesh.Lx"))
    _positive("mesh.Ly", mesh.Ly, _lineno(raw, "mesh.Ly"))
    _positive("mesh.nx", mesh.nx, _lineno(raw, "mesh.nx"))
    _positive("mesh.ny", mesh.ny, _lineno(raw, "mesh.ny"))

    physics = PhysConstants(
        epsilon=_require(raw, "physics.epsilon", _conv_float),
        k=_require(raw, "physics.k", _conv_float),
        k_B=_optional(raw, "physics.k_B", _conv_float, 1.0),
        e=_optional(raw, "physics.e", _conv_float, 1.0),
        q_src=_optional(raw, "physics.q_src", _conv_float, 0.0),
        rho_fixed=_optional(raw, "physics.rho_fixed", _conv_float, 0.0),
        l_B=_optional(raw, "physics.l_B", _conv_float, 0.0),
    )
    _positive("physics.epsilon", physics.epsilon, _lineno(raw, "physics.epsilon"))
    _positive("physics.k", physics.k, _lineno(raw, "physics.k"))
    _positive("physics.k_B", physics.k_B, _lineno(raw, "physics.k_B"))
    _positive("physics.e", physics.e, _lineno(raw, "physics.e"))

    count = _require(raw, "species.count", _conv_int)
    _positive("species.count", count, _lineno(raw, "species.count"))
    species = []
    for i in range(1, count + 1):
        pre = f"species{i}"
        sp = SpeciesParams(
            z=_require(raw, f"{pre}.z", _conv_int),
            nu=_require(raw, f"{pre}.nu", _conv_float),
            C=_require(raw, f"{pre}.C", _conv_float),
            rho0=_require(raw, f"{pre}.rho0", _conv_float),
        )
        _positive(f"{pre}.nu", sp.nu, _lineno(raw, f"{pre}.nu"))
        _positive(f"{pre}.C", sp.C, _lineno(raw, f"{pre}.C"))
        _positive(f"{pre}.rho0", sp.rho0, _lineno(raw, f"{pre}.rho0"))
        species.append(sp)

    kind_conv = _choice(PHI_KINDS)
    bvals = {}
    for side in SIDES:
        bvals[f"phi_{side}_kind"] = _optional(
            raw, f"boundary.phi_{side}_kind", kind_conv, "neumann"
        )
        bvals[f"phi_{side}_value"] = _optional(
            raw, f"boundary.phi_{side}_value", _conv_float, 0.0
        )
    boundary = BoundaryParams(
        phi_neumann_value=_optional(raw, "boundary.phi_neumann_value", _conv_float, 0.0),
        robin_kappa=_optional(raw, "boundary.robin_kappa", _conv_float, 0.0),
        robin_C=_optional(raw, "boundary.robin_C", _conv_float, 0.0),
        T_dirichlet=_optional(raw, "boundary.T_dirichlet", _conv_float, 1.0),
        T_dirichlet_sides=_optional(
            raw, "boundary.T_dirichlet_sides", _sides_list, SIDES
        ),
        species_bc=_optional(
            raw, "boundary.species_bc", _choice(SPECIES_BC_MODES), "noflux"
        ),
        **bvals,
    )
    _nonneg("boundary.robin_kappa", boundary.robin_kappa,
            _lineno(raw, "boundary.robin_kappa"))
    _positive("boundary.T_dirichlet", boundary.T_dirichlet,
              _lineno(raw, "boundary.T_dirichlet"))

    solver = SolverControls(
        t_end=_require(raw, "solver.t_end", _conv_float),
        dt=_optional(raw, "solver.dt", _conv_float, 1e-3),
        dt_min=_optional(raw, "solver.dt_min", _conv_float, 1e-9),
        picard_tol=_optional(raw, "solver.picard_tol", _conv_float, 1e-8),
        picard_max_iter=_optional(raw, "solver.picard_max_iter", _conv_int, 100),
        linear_tol=_optional(raw, "solver.linear_tol", _conv_float, 1e-12),
        linear_solver=_optional(
            raw, "solver.linear_solver", _choice(LINEAR_SOLVERS), "direct"
        ),
        relaxation=_optional(raw, "solver.relaxation", _conv_float, 1.0),
        steady_tol=_optional(raw, "solver.steady_tol", _conv_float, 0.0),
        eafe_average=_optional(
            raw, "solver.eafe_average", _choice(EAFE_AVERAGES), "arithmetic"
        ),
    )
    _nonneg("solver.t_end", solver.t_end, _lineno(raw, "solver.t_end"))
    _positive("solver.dt", solver.dt, _lineno(raw, "solver.dt"))
    _positive("solver.dt_min", solver.dt_min, _lineno(raw, "solver.dt_min"))
    if solver.dt_min > solver.dt:
        raise ConfigurationError(
            f"solver.dt_min ({solver.dt_min!r}) exceeds solver.dt ({solver.dt!r})"
        )
    _positive("solver.picard_tol", solver.picard_tol, _lineno(raw, "solver.picard_tol"))
    _positive("solver.picard_max_iter", solver.picard_max_iter,
              _lineno(raw, "solver.picard_max_iter"))
    _positive("solver.linear_tol", solver.linear_tol, _lineno(raw, "solver.linear_tol"))
    if not 0.0 < solver.relaxation <= 1.0:
        raise ConfigurationError(
            f"solver.relaxation must lie in (0, 1], got {solver.relaxation!r}"
        )
    _nonneg("solver.steady_tol", solver.steady_tol, _lineno(raw, "solver.steady_tol"))

    output = OutputParams(
        csv_path=_optional(raw, "output.csv_path", _string, ""),
        vtk_every_n_steps=_optional(raw, "output.vtk_every_n_steps", _conv_int, 0),
        snapshot_dir=_optional(raw, "output.snapshot_dir", _string, ""),
        x_cut=_optional(raw, "output.x_cut", _conv_float, -1.0),
    )
    _nonneg("output.vtk_every_n_steps", output.vtk_every_n_steps,
            _lineno(raw, "output.vtk_every_n_steps"))
    if output.vtk_every_n_steps > 0 and not output.snapshot_dir:
        raise ConfigurationError(
            "output.vtk_every_n_steps set but output.snapshot_dir is empty"
        )

    extra = raw.unknown()
    if extra:
        lineno, key = extra[0]
        raise ConfigurationError(f"unknown key {key} (line {lineno})")

    cfg = ProblemConfig(
        mesh=mesh,
        physics=physics,
        species=tuple(species),
        boundary=boundary,
        solver=solver,
        output=output,
    )
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg):
    b = cfg.boundary
    pinned = any(b.phi_kind(s) == "dirichlet" for s in SIDES) or (
        any(b.phi_kind(s) == "robin" for s in SIDES) and b.robin_kappa > 0
    )
    if not pinned:
        raise ConfigurationError(
            "potential is never pinned: need a dirichlet side or robin with "
            "positive boundary.robin_kappa"
        )
    x = cfg.output.x_cut
    if x >= 0.0 and not 0.0 < x < cfg.mesh.Lx:
        raise ConfigurationError(
            f"output.x_cut must lie strictly inside (0, Lx), got {x!r}"
        )


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg):
    """Emit the canonical flat text form; parse_config inverts it exactly."""
    lines = []

    def put(key, value):
        lines.append(f"{key} = {_fmt(value)}")

    m = cfg.mesh
    put("mesh.Lx", m.Lx)
    put("mesh.Ly", m.Ly)
    put("mesh.nx", m.nx)
    put("mesh.ny", m.ny)
    p = cfg.physics
    put("physics.epsilon", p.epsilon)
    put("physics.k", p.k)
    put("physics.k_B", p.k_B)
    put("physics.e", p.e)
    put("physics.q_src", p.q_src)
    put("physics.rho_fixed", p.rho_fixed)
    put("physics.l_B", p.l_B)
    put("species.count", len(cfg.species))
    for i, sp in enumerate(cfg.species, start=1):
        put(f"species{i}.z", sp.z)
        put(f"species{i}.nu", sp.nu)
        put(f"species{i}.C", sp.C)
        put(f"species{i}.rho0", sp.rho0)
    b = cfg.boundary
    for side in SIDES:
        put(f"boundary.phi_{side}_kind", b.phi_kind(side))
        put(f"boundary.phi_{side}_value", b.phi_value(side))
    put("boundary.phi_neumann_value", b.phi_neumann_value)
    put("boundary.robin_kappa", b.robin_kappa)
    put("boundary.robin_C", b.robin_C)
    put("boundary.T_dirichlet", b.T_dirichlet)
    lines.append(
        "boundary.T_dirichlet_sides = " + ",".join(b.T_dirichlet_sides)
        if b.T_dirichlet_sides
        else "boundary.T_dirichlet_sides = none"
    )
    put("boundary.species_bc", b.species_bc)
    s = cfg.solver
    put("solver.t_end", s.t_end)
    put("solver.dt", s.dt)
    put("solver.dt_min", s.dt_min)
    put("solver.picard_tol", s.picard_tol)
    put("solver.picard_max_iter", s.picard_max_iter)
    put("solver.linear_tol", s.linear_tol)
    put("solver.linear_solver", s.linear_solver)
    put("solver.relaxation", s.relaxation)
    put("solver.steady_tol", s.steady_tol)
    put("solver.eafe_average", s.eafe_average)
    o = cfg.output
    put("output.csv_path", o.csv_path)
    put("output.vtk_every_n_steps", o.vtk_every_n_steps)
    put("output.snapshot_dir", o.snapshot_dir)
    put("output.x_cut", o.x_cut)
    return "\n".join(lines) + "\n"


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dirichlet_phi_sides(cfg):
    return tuple(s for s in SIDES if cfg.boundary.phi_kind(s) == "dirichlet")


def with_voltage(cfg, voltage):
    """Rewrite the potential gap between the two Dirichlet sides.

    The side holding the smaller value keeps it; the other is set to that
    value plus ``voltage``.  Used by the current-voltage sweep driver.
    """
    dsides = dirichlet_phi_sides(cfg)
    if len(dsides) != 2:
        raise ConfigurationError(
            f"voltage sweep needs exactly 2 dirichlet potential sides, "
            f"found {len(dsides)}"
        )
    lo, hi = sorted(dsides, key=lambda s: (cfg.boundary.phi_value(s), SIDES.index(s)))
    base = cfg.boundary.phi_value(lo)
    boundary = dataclasses.replace(
        cfg.boundary, **{f"phi_{hi}_value": base + float(voltage)}
    )
    return dataclasses.replace(cfg, boundary=boundary)
