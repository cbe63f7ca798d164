"""Benchmark problems with closed-form oracles and convergence studies.

Each case builder returns a ProblemDefinition bundling mesh, materials,
friction and the load schedule; run_case discretizes and solves it.  The
analytic oracles are pure functions of the case parameters, evaluated
face-by-face along the fault for the error norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .contact import FrictionParams
from .mesh import (
    FaultPlaneSpec,
    Mesh,
    build_structured_hex_grid,
    build_structured_tet_grid,
    build_structured_wedge_grid,
)
from .solver import (
    Discretization,
    DirichletBC,
    LoadStep,
    SolveResult,
    SolverOptions,
    TractionBC,
)

HEX = "hex8"
TET = "tet4"
WEDGE = "wedge6"

_BUILDERS = {
    HEX: build_structured_hex_grid,
    TET: build_structured_tet_grid,
    WEDGE: build_structured_wedge_grid,
}


class BenchmarkError(RuntimeError):
    """A benchmark run failed to converge; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# Case parameter types


@dataclass(frozen=True)
class InclinedFaultParams:
    """Single inclined crack under remote uniaxial compression."""

    youngs_modulus: float = 1e5
    poisson_ratio: float = 0.4
    angle_deg: float = 20.0
    half_length: float = 1.0
    friction_angle_deg: float = 30.0
    compression: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.angle_deg < 90.0:
            raise ValueError("inclination angle must lie in (0, 90) degrees")
        if self.half_length <= 0.0:
            raise ValueError("half_length must be positive")


@dataclass(frozen=True)
class VerticalFaultParams:
    """Dislocated reservoir compartments meeting at a vertical fault."""

    a: float = 75.0
    b: float = 150.0
    height: float = 4500.0
    width: float = 4500.0
    shear_modulus: float = 6500e6
    poisson_ratio: float = 0.15
    friction_angle_deg: float = 30.0
    pressure: float = -25e6
    biot: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.a < self.b < self.height / 2.0:
            raise ValueError("reservoir geometry needs 0 < a < b < height/2")

    @property
    def youngs_modulus(self) -> float:
        return 2.0 * self.shear_modulus * (1.0 + self.poisson_ratio)

    @property
    def dislocation_constant(self) -> float:
        nu = self.poisson_ratio
        return (1.0 - 2.0 * nu) * self.biot * self.pressure / (
            2.0 * math.pi * (1.0 - nu)
        )


# ---------------------------------------------------------------------------
# Analytic oracles


def inclined_fault_analytic(params: InclinedFaultParams, xi):
    """Normal traction and slip magnitude at abscissa xi in [0, 2b]."""
    xi = np.asarray(xi, dtype=float)
    b = params.half_length
    if np.any(xi < -1e-12) or np.any(xi > 2.0 * b + 1e-12):
        raise ValueError("abscissa outside the fracture [0, 2b]")
    alpha = math.radians(params.angle_deg)
    theta = math.radians(params.friction_angle_deg)
    sigma = params.compression
    t_n = -sigma * math.sin(alpha) ** 2 * np.ones_like(xi)
    drop = sigma * math.sin(alpha) * (
        math.cos(alpha) - math.sin(alpha) * math.tan(theta)
    )
    factor = 4.0 * (1.0 - params.poisson_ratio**2) / params.youngs_modulus
    slip = factor * drop * np.sqrt(np.maximum(b**2 - (b - xi) ** 2, 0.0))
    return t_n, slip


def vertical_fault_analytic(params: VerticalFaultParams, y):
    """Shear traction magnitude (pre-slip) and slip magnitude at depth y.

    The slip tent is the full-stress-drop solution: a piecewise-constant
    edge-dislocation density +/- C/A on (a, b) and (-b, -a) reproduces the
    logarithmic pre-slip shear exactly when A equals the plane-strain
    dislocation kernel G / (2 pi (1 - nu)), leaving the slipping region
    traction free.  The plateau is then (1-2nu) alpha |p| (b-a) / G.
    """
    y = np.asarray(y, dtype=float)
    a, b = params.a, params.b
    for s in (a, -a, b, -b):
        if np.any(np.abs(y - s) < 1e-9 * b):
            raise ValueError("traction formula is singular at y = +/-a, +/-b")
    c = params.dislocation_constant
    ratio = ((y - a) ** 2 * (y + a) ** 2) / ((y - b) ** 2 * (y + b) ** 2)
    t_t = np.abs(0.5 * c * np.log(ratio))
    tent = np.zeros_like(y)
    left = (-b < y) & (y <= -a)
    mid = (-a < y) & (y < a)
    right = (a <= y) & (y < b)
    tent[left] = -(y[left] + b)
    tent[mid] = a - b
    tent[right] = y[right] - b
    kernel = params.shear_modulus / (2.0 * math.pi * (1.0 - params.poisson_ratio))
    slip = np.abs(c / kernel * tent)
    return t_t, slip


# ---------------------------------------------------------------------------
# Problem container


@dataclass
class ProblemDefinition:
    name: str
    mesh: Mesh
    materials: object
    friction: object
    steps: list
    eigenstress: np.ndarray | None = None
    penalty_scale: float = 10.0

    def discretize(self, enriched=True) -> Discretization:
        return Discretization(
            self.mesh,
            self.materials,
            friction=self.friction,
            eigenstress=self.eigenstress,
            enriched=enriched,
            penalty_scale=self.penalty_scale,
        )


def run_case(problem: ProblemDefinition, opts: SolverOptions | None = None,
             enriched=True, keep_history=False):
    disc = problem.discretize(enriched=enriched)
    result = disc.solve(problem.steps, opts, keep_history=keep_history)
    if not result.converged:
        raise BenchmarkError(
            f"{problem.name}: solve did not converge", report=result.reports
        )
    return disc, result


# ---------------------------------------------------------------------------
# Mesh grading helper


def graded_ticks(lo, hi, windows, ratio=1.5):
    """Tick vector with uniform spacing inside each refinement window and
    geometrically coarsening cells across the gaps.

    windows is one (w_lo, w_hi, h) triple or a list of non-overlapping
    triples in ascending order.  Interior gaps are filled by cells growing
    from both neighbouring windows, the outermost gaps by one-sided
    growth; rescaling the pure geometric width sequences to fit a gap
    keeps the grading monotone.
    """
    span = hi - lo
    wins = np.atleast_2d(np.asarray(windows, dtype=float))
    if wins.shape[1] != 3:
        raise ValueError("windows must be (lo, hi, h) triples")
    wins = wins[np.argsort(wins[:, 0])]
    if wins[0, 0] < lo - 1e-9 * span or wins[-1, 1] > hi + 1e-9 * span:
        raise ValueError("window outside the domain")

    def march_one(gap, h0):
        if gap <= 1e-12 * span:
            return np.zeros(0)
        n = 1
        while h0 * ratio * (ratio**n - 1.0) / (ratio - 1.0) < gap:
            n += 1
        widths = h0 * ratio ** np.arange(1, n + 1)
        return widths * (gap / widths.sum())

    def march_two(gap, h_l, h_r):
        if gap < -1e-9 * span:
            raise ValueError("windows overlap")
        if gap <= 1e-12 * span:
            return np.zeros(0)
        left, right = [], []
        w_l, w_r = h_l * ratio, h_r * ratio
        while sum(left) + sum(right) < gap:
            if w_l <= w_r:
                left.append(w_l)
                w_l *= ratio
            else:
                right.append(w_r)
                w_r *= ratio
        widths = np.array(left + right[::-1])
        return widths * (gap / widths.sum())

    segs = []
    lead = march_one(wins[0, 0] - lo, wins[0, 2])
    segs.append((wins[0, 0] - np.cumsum(lead))[::-1])
    for i, (w_lo, w_hi, h) in enumerate(wins):
        n = round((w_hi - w_lo) / h)
        if n < 1 or abs(w_lo + n * h - w_hi) > 1e-9 * span:
            raise ValueError("window spacing must divide the window")
        segs.append(w_lo + h * np.arange(n + 1))
        if i + 1 < len(wins):
            widths = march_two(wins[i + 1, 0] - w_hi, h, wins[i + 1, 2])
            if len(widths):
                segs.append(w_hi + np.cumsum(widths)[:-1])
    tail = march_one(hi - wins[-1, 1], wins[-1, 2])
    segs.append(wins[-1, 1] + np.cumsum(tail))
    ticks = np.unique(np.concatenate(segs))
    keep = np.concatenate([[True], np.diff(ticks) > 1e-9 * span])
    ticks = ticks[keep]
    ticks[0], ticks[-1] = lo, hi
    return ticks


def _boundary_pins(mesh, *set_names):
    out = mesh.node_sets[set_names[0]]
    for name in set_names[1:]:
        out = np.intersect1d(out, mesh.node_sets[name])
    return out


def faces_in_box(mesh, faces, lo, hi):
    """Subset of (cell, local_face) pairs whose centroids fall in the box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    kept = []
    for cid, lf in faces:
        cell = mesh.cells[cid]
        lnodes, _ = fem.CELL_FACES[cell.kind][lf]
        centroid = mesh.nodes[[cell.node_ids[i] for i in lnodes]].mean(axis=0)
        if np.all(centroid >= lo - 1e-9) and np.all(centroid <= hi + 1e-9):
            kept.append((cid, lf))
    return kept


# ---------------------------------------------------------------------------
# Case builders


def inclined_fault_case(
    params: InclinedFaultParams | None = None,
    mesh_size: float = 0.25,
    element_kind: str = HEX,
) -> ProblemDefinition:
    """Plane-strain slab with a centered fault inclined to the load.

    The fault sits on a grid line and the compression axis is rotated by
    the inclination angle; a 40b square slab keeps boundary influence
    below discretization error.  The grid columns are sheared parallel to
    the compression axis, reproducing the skewed elements a body-fitted
    mesh of an obliquely embedded fault necessarily has.  A grid left
    mirror-symmetric about the fault would reproduce the constant normal
    traction to solver precision and leave the convergence study nothing
    to measure.
    """
    params = params or InclinedFaultParams()
    b = params.half_length
    side = 40.0 * b
    center = side / 2.0
    h = mesh_size
    # The square-root fields at the slip tips control the crack compliance,
    # so fixed bands of width b/4 around each tip and around the fault plane
    # carry finer cells.  Tip cells shrink quadratically in h: coarse levels
    # stay uniform while fine levels resolve the tip region, keeping the
    # whole refinement path inside one mesh family.  Band widths are fixed
    # in physical units; widths proportional to h would make the near-fault
    # mesh self-similar across levels and freeze its error contribution.
    w = b / 8.0
    tip_h = 4.0 * h * h / b
    x_lo, x_hi = center - b, center + b
    if tip_h >= h - 1e-12 * b:
        tx = graded_ticks(0.0, side, (x_lo, x_hi, h))
    else:
        tx = graded_ticks(0.0, side, [
            (x_lo - w, x_lo + w, tip_h),
            (x_lo + w + 2.0 * h, x_hi - w - 2.0 * h, h),
            (x_hi - w, x_hi + w, tip_h),
        ])
    ty = graded_ticks(0.0, side, (center - w, center + w, h / 8.0))
    tz = np.array([0.0, h])
    fault = FaultPlaneSpec(
        axis=1,
        value=center,
        bounds=((x_lo, x_hi), (0.0, h)),
    )
    mesh = _BUILDERS[element_kind](ticks=[tx, ty, tz], faults=[fault])

    alpha = math.radians(params.angle_deg)
    ca, sa = math.cos(alpha), math.sin(alpha)
    # nodes on the fault plane stay put, so face frames remain valid
    mesh.nodes[:, 0] += (sa / ca) * (mesh.nodes[:, 1] - center)
    d = np.array([ca, sa, 0.0])
    sigma_inf = -params.compression * np.outer(d, d)
    normals = {"xmin": [-ca, sa, 0.0], "xmax": [ca, -sa, 0.0],
               "ymin": [0.0, -1.0, 0.0], "ymax": [0.0, 1.0, 0.0]}
    tractions = [
        TractionBC(mesh.face_sets[name], sigma_inf @ np.asarray(n, dtype=float))
        for name, n in normals.items()
    ]
    pin_a = _boundary_pins(mesh, "xmin", "ymin")
    pin_b = _boundary_pins(mesh, "xmax", "ymin")
    dirichlet = [
        DirichletBC(mesh.node_sets["zmin"], 2, 0.0),
        DirichletBC(mesh.node_sets["zmax"], 2, 0.0),
        DirichletBC(pin_a, 0, 0.0),
        DirichletBC(pin_a, 1, 0.0),
        DirichletBC(pin_b, 1, 0.0),
    ]
    theta = math.radians(params.friction_angle_deg)
    return ProblemDefinition(
        name=f"inclined-{element_kind}-h{mesh_size:g}",
        mesh=mesh,
        materials=fem.ElasticMaterial(params.youngs_modulus, params.poisson_ratio),
        friction=FrictionParams(cohesion=0.0, tan_theta=math.tan(theta)),
        steps=[LoadStep(dirichlet=dirichlet, tractions=tractions)],
    )


def vertical_fault_case(
    params: VerticalFaultParams | None = None,
    mesh_size: float = 37.5,
    element_kind: str = HEX,
    scenario: str = "traction",
) -> ProblemDefinition:
    """Dislocated reservoir with a vertical fault, driven by eigenstress.

    scenario "traction" ties the fault (large cohesion) and compares the
    shear transmitted across it; scenario "slip" removes fault strength so
    the full stress drop is released as the piecewise-linear slip profile.
    A uniform fault-normal compression keeps every face closed in both.
    """
    params = params or VerticalFaultParams()
    half_w = params.width / 2.0
    half_h = params.height / 2.0
    h = mesh_size
    a, b = params.a, params.b
    # The transmitted shear is log-singular at the compartment corners
    # +/-a and +/-b.  Bands of half-width b/8 bracketing each corner carry
    # h/4 cells along the fault and a slab of h/8 columns hugs the fault
    # plane: the corner fields vary on the distance-to-corner scale in
    # both directions, and the fault-normal resolution is what limits the
    # face-averaged shear read off the first element layer.
    pad = b / 8.0
    outer = 2.125 * b
    ty = graded_ticks(-half_h, half_h, [
        (-outer, -b - pad, 2.0 * h),
        (-b - pad, -b + pad, h / 4.0),
        (-b + pad, -a - pad, h),
        (-a - pad, -a + pad, h / 4.0),
        (-a + pad, a - pad, h),
        (a - pad, a + pad, h / 4.0),
        (a + pad, b - pad, h),
        (b - pad, b + pad, h / 4.0),
        (b + pad, outer, 2.0 * h),
    ])
    # the slab is b/16 wide; coarse levels keep a single column so the
    # corner fields stay under-resolved until the band ratio can build up
    qx = h / 4.0 if h >= b / 8.0 else h / 8.0
    tx = graded_ticks(-half_w, half_w, (-b / 32.0, b / 32.0, qx))
    tz = np.array([0.0, h])
    fault = FaultPlaneSpec(axis=0, value=0.0)
    mesh = _BUILDERS[element_kind](ticks=[tx, ty, tz], faults=[fault])

    confine = 30e6
    eig = np.zeros((len(mesh.cells), 6))
    eig[:, 0] = -confine
    pore = -params.biot * params.pressure  # depletion shrinks the reservoir
    vols = {"left": (-half_w, -params.a, params.b),
            "right": (0.0, -params.b, params.a)}
    for cell in mesh.cells:
        lnodes = mesh.nodes[list(cell.node_ids)]
        cx, cy = lnodes[:, 0].mean(), lnodes[:, 1].mean()
        x_lo, y_lo, y_hi = vols["left"] if cx < 0.0 else vols["right"]
        if y_lo < cy < y_hi:
            eig[cell.id, :3] += pore

    dirichlet = [
        DirichletBC(mesh.node_sets["zmin"], 2, 0.0),
        DirichletBC(mesh.node_sets["zmax"], 2, 0.0),
        DirichletBC(mesh.node_sets["xmin"], 0, 0.0),
        DirichletBC(mesh.node_sets["xmax"], 0, 0.0),
        DirichletBC(mesh.node_sets["ymin"], 1, 0.0),
        DirichletBC(mesh.node_sets["ymax"], 1, 0.0),
    ]
    if scenario == "traction":
        friction = FrictionParams(cohesion=1e9, tan_theta=0.0)
    elif scenario == "slip":
        friction = FrictionParams(cohesion=0.0, tan_theta=0.0)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return ProblemDefinition(
        name=f"reservoir-{scenario}-{element_kind}-h{mesh_size:g}",
        mesh=mesh,
        materials=fem.ElasticMaterial(params.youngs_modulus, params.poisson_ratio),
        friction=friction,
        steps=[LoadStep(dirichlet=dirichlet)],
        eigenstress=eig,
    )


def constant_slip_case(divisions=(10, 2, 10)) -> ProblemDefinition:
    """Two blocks sheared past each other by a prescribed top displacement.

    The imposed offset (0.1, 0, 0.1) activates both tangential directions,
    so the slip magnitude is 0.1 sqrt(2).  A small uniform normal
    compression keeps every face in frictional sliding; the elastic shear
    lag it induces is orders of magnitude below the slip.
    """
    mesh = build_structured_hex_grid(
        extents=(1.0, 1.0, 1.0),
        divisions=divisions,
        faults=[FaultPlaneSpec(axis=1, value=0.5)],
    )
    eig = np.zeros((len(mesh.cells), 6))
    eig[:, 1] = -1e3
    top = mesh.node_sets["ymax"]
    bot = mesh.node_sets["ymin"]
    dirichlet = [
        DirichletBC(bot, 0, 0.0),
        DirichletBC(bot, 1, 0.0),
        DirichletBC(bot, 2, 0.0),
        DirichletBC(top, 0, 0.1),
        DirichletBC(top, 1, 0.0),
        DirichletBC(top, 2, 0.1),
    ]
    theta = math.radians(5.71)
    return ProblemDefinition(
        name="constant-slip",
        mesh=mesh,
        materials=fem.ElasticMaterial(250e6, 0.3),
        friction=FrictionParams(cohesion=0.0, tan_theta=math.tan(theta)),
        steps=[LoadStep(dirichlet=dirichlet)],
        eigenstress=eig,
    )


def sso_load_history(t: float) -> tuple[float, float]:
    """Applied stresses (sigma_x, sigma_z) in Pa at time t in [0, 10]."""
    sx = np.interp(t, [0.0, 5.0, 10.0], [0.0, -15e6, 15e6])
    sz = np.interp(t, [0.0, 5.0, 10.0], [0.0, -5e6, 5e6])
    return float(sx), float(sz)


def stick_slip_open_case(confinement=5e6) -> ProblemDefinition:
    """Two blocks split by a vertical crack, cycled into stick, slip, open.

    A uniform initial x-compression (eigenstress balanced by constant
    confining tractions on both x faces) preloads the crack; sigma_x then
    ramps to tension while sigma_z shears the right block's top.  Step 0
    solves the preload state alone.
    """
    mesh = build_structured_hex_grid(
        extents=(8.0, 20.0, 20.0),
        divisions=(4, 10, 10),
        faults=[FaultPlaneSpec(axis=0, value=4.0)],
    )
    eig = np.zeros((len(mesh.cells), 6))
    eig[:, 0] = -confinement
    top_right = faces_in_box(
        mesh, mesh.face_sets["zmax"], (4.0, 0.0, 0.0), (8.0, 20.0, 20.0)
    )
    clamp = [DirichletBC(mesh.node_sets["zmin"], c, 0.0) for c in range(3)]
    steps = []
    for t in range(0, 11):
        sx, sz = sso_load_history(float(t))
        tractions = [
            TractionBC(mesh.face_sets["xmin"], np.array([confinement, 0.0, 0.0])),
            TractionBC(mesh.face_sets["xmax"], np.array([sx - confinement, 0.0, 0.0])),
        ]
        if sz != 0.0:
            tractions.append(TractionBC(top_right, np.array([0.0, 0.0, sz])))
        steps.append(LoadStep(dirichlet=clamp, tractions=tractions))
    return ProblemDefinition(
        name="stick-slip-open",
        mesh=mesh,
        materials=fem.ElasticMaterial(450e6, 0.3),
        friction=FrictionParams(cohesion=0.0, tan_theta=math.tan(math.radians(30.0))),
        steps=steps,
        eigenstress=eig,
    )


def t_crack_case(scale_factor: int = 1, n_steps: int = 10) -> ProblemDefinition:
    """Pressurized vertical crack ending on a horizontal frictional crack.

    Default grid 60x60x2 with a 10 m fine band around the cracks and 45 m
    cells outside (ratio preserved under scale_factor; scale_factor=5
    recovers the full 300x300x2 grid).
    """
    if scale_factor < 1:
        raise ValueError("scale_factor must be a positive integer")
    k = int(scale_factor)
    h_fine = 10.0 / k
    side = 1650.0
    fine_lo, fine_hi = 675.0, 975.0
    coarse = np.linspace(0.0, fine_lo, 15 * k + 1)
    inner = fine_lo + h_fine * np.arange(round((fine_hi - fine_lo) / h_fine) + 1)
    txy = np.concatenate([coarse[:-1], inner, side - coarse[-2::-1]])
    tz = np.array([0.0, h_fine, 2.0 * h_fine])
    mid = 825.0
    main = FaultPlaneSpec(
        axis=1, value=mid, bounds=((725.0, 925.0), (0.0, 2.0 * h_fine)),
        group="horizontal",
    )
    branch = FaultPlaneSpec(
        axis=0, value=mid, bounds=((725.0, mid), (0.0, 2.0 * h_fine)),
        group="vertical",
    )
    mesh = build_structured_hex_grid(ticks=[txy, txy, tz], faults=[main, branch])

    remote = 5e6
    dirichlet = [
        DirichletBC(mesh.node_sets["zmin"], 2, 0.0),
        DirichletBC(mesh.node_sets["zmax"], 2, 0.0),
        DirichletBC(mesh.node_sets["xmin"], 0, 0.0),
        DirichletBC(mesh.node_sets["xmax"], 0, 0.0),
        DirichletBC(mesh.node_sets["ymin"], 1, 0.0),
    ]
    steps = []
    for j in range(1, n_steps + 1):
        p = 10e6 * j / n_steps
        steps.append(
            LoadStep(
                dirichlet=dirichlet,
                tractions=[
                    TractionBC(mesh.face_sets["ymax"], np.array([0.0, -remote, 0.0]))
                ],
                fault_pressure={"vertical": p},
            )
        )
    fr = FrictionParams(cohesion=0.0, tan_theta=math.tan(math.radians(30.0)))
    return ProblemDefinition(
        name="t-crack",
        mesh=mesh,
        materials=fem.ElasticMaterial(10e9, 0.25),
        friction={"horizontal": fr, "vertical": fr},
        steps=steps,
    )


# ---------------------------------------------------------------------------
# Fault profiles and error norms


@dataclass
class FaultProfile:
    position: np.ndarray
    normal_traction: np.ndarray
    shear_magnitude: np.ndarray
    slip_magnitude: np.ndarray
    area: np.ndarray
    width: np.ndarray
    span: tuple[float, float] = (0.0, 0.0)


def fault_profile(
    disc: Discretization,
    result: SolveResult,
    group: str | None = None,
    axis: int = 0,
    origin: float = 0.0,
) -> FaultProfile:
    """Per-face state along one fault, ordered by the profile coordinate."""
    mesh = disc.mesh
    if group is None:
        ids = list(range(len(mesh.fault_faces)))
    else:
        ids = list(mesh.fault_groups[group])
    pos, t_n, t_t, slip, area, width = [], [], [], [], [], []
    for fid in ids:
        face = mesh.fault_faces[fid]
        coords = mesh.nodes[list(face.minus_node_ids)][:, axis]
        pos.append(coords.mean() - origin)
        width.append(coords.max() - coords.min())
        t = result.states[fid].traction
        t_n.append(t[0])
        t_t.append(np.linalg.norm(t[1:]))
        slip.append(np.linalg.norm(result.gaps[fid][1:]))
        area.append(disc.ops[fid].area)
    order = np.argsort(pos)
    pos = np.asarray(pos)[order]
    width = np.asarray(width)[order]
    lo = float((pos - width / 2.0).min())
    hi = float((pos + width / 2.0).max())
    return FaultProfile(
        position=pos,
        normal_traction=np.asarray(t_n)[order],
        shear_magnitude=np.asarray(t_t)[order],
        slip_magnitude=np.asarray(slip)[order],
        area=np.asarray(area)[order],
        width=width,
        span=(lo, hi),
    )


def fault_l2_error(
    profile: FaultProfile,
    values: np.ndarray,
    analytic,
    trim_fraction: float = 0.9,
    exclude=(),
    face_mean: bool = False,
) -> float:
    """Area-weighted relative L2 error of a face profile against an oracle.

    trim_fraction keeps the central part of the span; exclude drops faces
    within one face-width of the given positions (singular points).
    face_mean compares against the oracle averaged over each face span
    instead of its centre value, the consistent reference for the
    face-averaged multipliers when the oracle has steep gradients.
    """
    lo, hi = profile.span
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * trim_fraction
    keep = np.abs(profile.position - center) <= half + 1e-12
    for s in exclude:
        keep &= np.abs(profile.position - s) > profile.width
    if not np.any(keep):
        raise ValueError("no faces left after trimming")
    if face_mean:
        gx, gw = np.polynomial.legendre.leggauss(8)
        q = (profile.position[keep, None]
             + 0.5 * profile.width[keep, None] * gx[None, :])
        fq = np.asarray(analytic(q.ravel()), dtype=float).reshape(q.shape)
        ana = 0.5 * fq @ gw
    else:
        ana = np.asarray(analytic(profile.position[keep]), dtype=float)
    num = np.asarray(values)[keep]
    w = profile.area[keep]
    denom = math.sqrt(float(np.sum(w * ana**2)))
    if denom == 0.0:
        raise ValueError("analytic profile vanishes on the trimmed region")
    return math.sqrt(float(np.sum(w * (num - ana) ** 2))) / denom


def fault_slip_nodes(
    disc: Discretization,
    result: SolveResult,
    group: str | None = None,
    axis: int = 0,
    origin: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodal slip magnitudes along one fault, ordered by the profile
    coordinate.

    The split-node pairs carry the piecewise-linear jump field the
    per-face averages are built from; positions sharing a coordinate
    (through-thickness duplicates) are averaged.  Rim nodes are not
    duplicated, so the profile closes with exact zeros at the tips.
    """
    mesh = disc.mesh
    if group is None:
        ids = range(len(mesh.fault_faces))
    else:
        ids = mesh.fault_groups[group]
    pairs = {}
    for fid in ids:
        face = mesh.fault_faces[fid]
        for m, p in zip(face.minus_node_ids, face.plus_node_ids):
            pairs[(m, p)] = face.frame.normal
    u = result.u.reshape(-1, 3)
    agg: dict[float, list[float]] = {}
    for (m, p), normal in pairs.items():
        g = u[p] - u[m]
        g_t = g - np.dot(g, normal) * normal
        key = round(float(mesh.nodes[m][axis] - origin), 9)
        agg.setdefault(key, []).append(float(np.linalg.norm(g_t)))
    xs = np.array(sorted(agg))
    vals = np.array([float(np.mean(agg[x])) for x in xs])
    return xs, vals


def profile_l2_error(xs, values, analytic) -> float:
    """Relative L2 error of a piecewise-linear profile against a callable.

    Integrated segment by segment with 4-point Gauss, so root-like
    oracles are resolved well below the profile's own accuracy.
    """
    xs = np.asarray(xs, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(xs) < 2:
        raise ValueError("need at least two profile nodes")
    gx, gw = np.polynomial.legendre.leggauss(4)
    h = np.diff(xs)
    mid = 0.5 * (xs[:-1] + xs[1:])
    q = mid[:, None] + 0.5 * h[:, None] * gx[None, :]
    w = 0.5 * h[:, None] * gw[None, :]
    t = (q - xs[:-1, None]) / h[:, None]
    fh = vals[:-1, None] * (1.0 - t) + vals[1:, None] * t
    f = np.asarray(analytic(q.ravel()), dtype=float).reshape(q.shape)
    denom = math.sqrt(float(np.sum(w * f**2)))
    if denom == 0.0:
        raise ValueError("analytic profile vanishes on the span")
    return math.sqrt(float(np.sum(w * (fh - f) ** 2))) / denom


# ---------------------------------------------------------------------------
# Convergence studies


@dataclass
class ErrorReport:
    case: str
    kind: str
    h: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)

    def fit_rates(self):
        logs = np.log(np.asarray(self.h))
        for name, errs in self.errors.items():
            if np.any(np.asarray(errs) <= 0.0):
                self.rates[name] = math.inf  # exact to roundoff
                continue
            slope = np.polyfit(logs, np.log(np.asarray(errs)), 1)[0]
            self.rates[name] = float(slope)
        return self


def inclined_fault_errors(
    params: InclinedFaultParams, mesh_size: float, element_kind: str,
    opts: SolverOptions | None = None,
):
    """Solve one refinement level; relative L2 errors for t_N and slip."""
    problem = inclined_fault_case(params, mesh_size, element_kind)
    disc, result = run_case(problem, opts)
    origin = 19.0 * params.half_length  # fault left tip, center sits at 20b
    prof = fault_profile(disc, result, axis=0, origin=origin)

    def ana_tn(xi):
        return inclined_fault_analytic(params, xi)[0]

    def ana_slip(xi):
        return inclined_fault_analytic(params, xi)[1]

    err_tn = fault_l2_error(prof, prof.normal_traction, ana_tn, trim_fraction=0.9)
    xs, slip_nodes = fault_slip_nodes(disc, result, axis=0, origin=origin)
    err_slip = profile_l2_error(xs, slip_nodes, ana_slip)
    return err_tn, err_slip, prof, result


def vertical_fault_errors(
    params: VerticalFaultParams, mesh_size: float, element_kind: str,
    opts: SolverOptions | None = None,
):
    """Tied-fault shear error and free-slip plateau for one level."""
    tied = vertical_fault_case(params, mesh_size, element_kind, "traction")
    disc, result = run_case(tied, opts)
    prof = fault_profile(disc, result, axis=1)

    def ana_tt(y):
        return vertical_fault_analytic(params, y)[0]

    err_tt = fault_l2_error(
        prof,
        prof.shear_magnitude,
        ana_tt,
        trim_fraction=2.5 * params.b / (0.5 * params.height),
        exclude=(params.a, -params.a, params.b, -params.b),
        face_mean=True,
    )

    free = vertical_fault_case(params, mesh_size, element_kind, "slip")
    disc2, result2 = run_case(free, opts)
    prof2 = fault_profile(disc2, result2, axis=1)
    inner = np.abs(prof2.position) < params.a - prof2.width
    plateau = float(
        np.sum(prof2.slip_magnitude[inner] * prof2.area[inner])
        / np.sum(prof2.area[inner])
    )
    return err_tt, plateau, prof, prof2


def convergence_study(case: str, levels, kinds, params=None,
                      opts: SolverOptions | None = None) -> list[ErrorReport]:
    """Run a refinement sequence per element kind and fit log-log rates."""
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    reports = []
    for kind in kinds:
        report = ErrorReport(case=case, kind=kind, h=list(levels))
        if case == "inclined":
            p = params or InclinedFaultParams()
            tn, slip = [], []
            for h in levels:
                try:
                    err_tn, err_slip, _, _ = inclined_fault_errors(p, h, kind, opts)
                except BenchmarkError as exc:
                    raise BenchmarkError(
                        f"inclined {kind} h={h} failed: {exc}", report
                    ) from exc
                tn.append(err_tn)
                slip.append(err_slip)
            report.errors = {"traction": tn, "slip": slip}
        elif case == "reservoir":
            p = params or VerticalFaultParams()
            tt, plat = [], []
            for h in levels:
                try:
                    err_tt, plateau, _, _ = vertical_fault_errors(p, h, kind, opts)
                except BenchmarkError as exc:
                    raise BenchmarkError(
                        f"reservoir {kind} h={h} failed: {exc}", report
                    ) from exc
                tt.append(err_tt)
                plat.append(plateau)
            report.errors = {"traction": tt}
            report.rates["plateau"] = plat[-1]
        else:
            raise ValueError(f"unknown convergence case {case!r}")
        report.fit_rates()
        reports.append(report)
    return reports
