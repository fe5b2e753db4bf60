"""Structured meshes, element matrices, interpolated assembly and load programs.

Grids are regular with square (2D) or cubic (3D) elements.  Node numbering
runs y-fastest in 2D (node id = ix*(nely+1) + iy) and z-fastest in 3D;
element ids follow the same convention.  DOFs interleave per node
(ux, uy[, uz]).  Assembly eliminates fixed DOFs, so every assembled matrix
lives on the free DOFs only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import materials, sparse

_GP = 1.0 / math.sqrt(3.0)  # 2-point Gauss abscissa


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material with a void floor for stiffness."""

    e0: float = 201e9
    e_min: float | None = None  # defaults to 1e-9 * e0
    nu: float = 0.33
    rho: float = 7850.0
    thickness: float = 0.01  # out-of-plane, 2D only

    def __post_init__(self):
        if self.e_min is None:
            object.__setattr__(self, "e_min", 1e-9 * self.e0)
        if not self.e0 > self.e_min > 0.0:
            raise ValueError("need e0 > e_min > 0")
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio out of (0, 0.5): {self.nu}")
        if self.rho <= 0.0 or self.thickness <= 0.0:
            raise ValueError("density and thickness must be positive")


class Mesh:
    """Regular structured grid with fixed DOFs and passive element masks."""

    def __init__(self, etype, nelx, nely, nelz, elem_size, coords, conn,
                 fixed_dofs, passive_void=None, passive_solid=None):
        self.etype = etype
        self.nelx, self.nely, self.nelz = int(nelx), int(nely), int(nelz)
        self.elem_size = float(elem_size)
        self.coords = np.asarray(coords, dtype=float)
        self.conn = np.asarray(conn, dtype=np.int64)
        self.dim = 3 if etype == "hex8" else 2
        self.n_nodes = self.coords.shape[0]
        self.n_elems = self.conn.shape[0]
        self.ndof_full = self.dim * self.n_nodes

        fixed = np.unique(np.asarray(fixed_dofs, dtype=np.int64))
        if fixed.size == 0:
            raise ValueError("fixed DOF set must be non-empty (rigid-body modes)")
        if fixed.min() < 0 or fixed.max() >= self.ndof_full:
            raise ValueError("fixed DOF index out of range")
        if self.conn.min() < 0 or self.conn.max() >= self.n_nodes:
            raise ValueError("connectivity index out of range")
        self.fixed_dofs = fixed

        n = self.n_elems
        self.passive_void = (np.zeros(n, dtype=bool) if passive_void is None
                             else np.asarray(passive_void, dtype=bool).copy())
        self.passive_solid = (np.zeros(n, dtype=bool) if passive_solid is None
                              else np.asarray(passive_solid, dtype=bool).copy())
        if np.any(self.passive_void & self.passive_solid):
            raise ValueError("an element cannot be both passive void and passive solid")

        free_map = np.full(self.ndof_full, -1, dtype=np.int64)
        free = np.setdiff1d(np.arange(self.ndof_full), fixed)
        free_map[free] = np.arange(free.size)
        self.free_map = free_map
        self.free_dofs = free
        self.h = free.size

        # element -> global DOFs, interleaved per node
        nn = self.conn.shape[1]
        edof = np.empty((n, nn * self.dim), dtype=np.int64)
        for k in range(self.dim):
            edof[:, k::self.dim] = self.dim * self.conn + k
        self.edof = edof
        self.edof_free = free_map[edof]

        # lower-triangle scatter cache: each unordered local DOF pair once
        li, lj = np.tril_indices(nn * self.dim)
        fr = self.edof_free[:, li]
        fc = self.edof_free[:, lj]
        keep = (fr >= 0) & (fc >= 0)
        self._tri_rows = np.maximum(fr, fc)[keep]
        self._tri_cols = np.minimum(fr, fc)[keep]
        self._tri_elem = np.broadcast_to(np.arange(n)[:, None], fr.shape)[keep]
        self._tri_pair = np.broadcast_to(np.arange(li.size)[None, :], fr.shape)[keep]
        self._tri_li, self._tri_lj = li, lj

    @property
    def elem_volume(self) -> float:
        a = self.elem_size
        return a * a * a if self.dim == 3 else a * a

    def element_centers(self) -> np.ndarray:
        return self.coords[self.conn].mean(axis=1)

    def grid_shape(self):
        if self.dim == 3:
            return (self.nelx, self.nely, self.nelz)
        return (self.nelx, self.nely)

    def node_id(self, ix, iy, iz=0):
        if self.dim == 3:
            return (ix * (self.nely + 1) + iy) * (self.nelz + 1) + iz
        return ix * (self.nely + 1) + iy

    def __repr__(self):
        return (f"Mesh({self.etype}, {self.nelx}x{self.nely}"
                f"{'x%d' % self.nelz if self.dim == 3 else ''}, h={self.h})")


def grid_mesh_2d(nelx, nely, elem_size, fixed_dofs,
                 passive_void=None, passive_solid=None) -> Mesh:
    nx, ny = nelx + 1, nely + 1
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    coords = np.column_stack([ix.ravel() * elem_size, iy.ravel() * elem_size])
    ex, ey = np.meshgrid(np.arange(nelx), np.arange(nely), indexing="ij")
    ex, ey = ex.ravel(), ey.ravel()
    n = lambda a, b: a * ny + b
    conn = np.column_stack([n(ex, ey), n(ex + 1, ey), n(ex + 1, ey + 1), n(ex, ey + 1)])
    return Mesh("quad4", nelx, nely, 0, elem_size, coords, conn,
                fixed_dofs, passive_void, passive_solid)


def grid_mesh_3d(nelx, nely, nelz, elem_size, fixed_dofs,
                 passive_void=None, passive_solid=None) -> Mesh:
    nx, ny, nz = nelx + 1, nely + 1, nelz + 1
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    coords = np.column_stack([ix.ravel() * elem_size, iy.ravel() * elem_size,
                              iz.ravel() * elem_size])
    ex, ey, ez = np.meshgrid(np.arange(nelx), np.arange(nely), np.arange(nelz),
                             indexing="ij")
    ex, ey, ez = ex.ravel(), ey.ravel(), ez.ravel()
    n = lambda a, b, c: (a * ny + b) * nz + c
    conn = np.column_stack([
        n(ex, ey, ez), n(ex + 1, ey, ez), n(ex + 1, ey + 1, ez), n(ex, ey + 1, ez),
        n(ex, ey, ez + 1), n(ex + 1, ey, ez + 1), n(ex + 1, ey + 1, ez + 1),
        n(ex, ey + 1, ez + 1),
    ])
    return Mesh("hex8", nelx, nely, nelz, elem_size, coords, conn,
                fixed_dofs, passive_void, passive_solid)


def _quad4_matrices(nu, a, thickness, rho):
    D = np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    D /= 1.0 - nu**2
    xn = np.array([-1.0, 1.0, 1.0, -1.0])
    yn = np.array([-1.0, -1.0, 1.0, 1.0])
    det = (a / 2.0) ** 2
    k0 = np.zeros((8, 8))
    m0 = np.zeros((8, 8))
    for xi in (-_GP, _GP):
        for eta in (-_GP, _GP):
            dNdx = 0.25 * xn * (1.0 + eta * yn) * (2.0 / a)
            dNdy = 0.25 * yn * (1.0 + xi * xn) * (2.0 / a)
            B = np.zeros((3, 8))
            B[0, 0::2] = dNdx
            B[1, 1::2] = dNdy
            B[2, 0::2] = dNdy
            B[2, 1::2] = dNdx
            k0 += thickness * det * (B.T @ D @ B)
            N = 0.25 * (1.0 + xi * xn) * (1.0 + eta * yn)
            Nm = np.zeros((2, 8))
            Nm[0, 0::2] = N
            Nm[1, 1::2] = N
            m0 += rho * thickness * det * (Nm.T @ Nm)
    return k0, m0


def _hex8_matrices(nu, a, rho):
    c = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu))
    D = np.zeros((6, 6))
    D[:3, :3] = nu
    np.fill_diagonal(D[:3, :3], 1.0 - nu)
    D[3:, 3:] = np.eye(3) * (1.0 - 2.0 * nu) / 2.0
    D *= c
    xn = np.array([-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0])
    yn = np.array([-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0])
    zn = np.array([-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0])
    det = (a / 2.0) ** 3
    k0 = np.zeros((24, 24))
    m0 = np.zeros((24, 24))
    for xi in (-_GP, _GP):
        for eta in (-_GP, _GP):
            for zeta in (-_GP, _GP):
                dNdx = 0.125 * xn * (1 + eta * yn) * (1 + zeta * zn) * (2.0 / a)
                dNdy = 0.125 * yn * (1 + xi * xn) * (1 + zeta * zn) * (2.0 / a)
                dNdz = 0.125 * zn * (1 + xi * xn) * (1 + eta * yn) * (2.0 / a)
                B = np.zeros((6, 24))
                B[0, 0::3] = dNdx
                B[1, 1::3] = dNdy
                B[2, 2::3] = dNdz
                B[3, 0::3] = dNdy
                B[3, 1::3] = dNdx
                B[4, 1::3] = dNdz
                B[4, 2::3] = dNdy
                B[5, 0::3] = dNdz
                B[5, 2::3] = dNdx
                k0 += det * (B.T @ D @ B)
                N = 0.125 * (1 + xi * xn) * (1 + eta * yn) * (1 + zeta * zn)
                Nm = np.zeros((3, 24))
                Nm[0, 0::3] = N
                Nm[1, 1::3] = N
                Nm[2, 2::3] = N
                m0 += rho * det * (Nm.T @ Nm)
    return k0, m0


def element_matrices(etype: str, material: Material, elem_size: float):
    """Element stiffness at unit modulus and consistent mass at full density."""
    if etype == "quad4":
        return _quad4_matrices(material.nu, elem_size, material.thickness, material.rho)
    if etype == "hex8":
        return _hex8_matrices(material.nu, elem_size, material.rho)
    raise ValueError(f"unknown element type {etype!r}")


@dataclass
class DensityField:
    """Per-element design variables in [b_min, 1]."""

    values: np.ndarray
    b_min: float = 1e-3

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not 0.0 < self.b_min < 1.0:
            raise ValueError(f"b_min out of (0, 1): {self.b_min}")
        lo = self.values.min() if self.values.size else self.b_min
        hi = self.values.max() if self.values.size else self.b_min
        if lo < self.b_min - 1e-12 or hi > 1.0 + 1e-12:
            raise ValueError("density values out of [b_min, 1]")

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy(), self.b_min)


def pin_passive(values: np.ndarray, mesh: Mesh, b_min: float) -> np.ndarray:
    out = values.copy()
    out[mesh.passive_void] = b_min
    out[mesh.passive_solid] = 1.0
    return out


def uniform_density(mesh: Mesh, volfrac: float, b_min: float = 1e-3) -> DensityField:
    vals = np.full(mesh.n_elems, float(volfrac))
    return DensityField(pin_passive(vals, mesh, b_min), b_min)


def _scaled_assembly(mesh: Mesh, elem_matrix: np.ndarray, scale: np.ndarray):
    flat = elem_matrix[mesh._tri_li, mesh._tri_lj]
    vals = scale[mesh._tri_elem] * flat[mesh._tri_pair]
    return sparse.assemble(mesh._tri_rows, mesh._tri_cols, vals, mesh.h)


def assemble_K(mesh: Mesh, material: Material, density: DensityField,
               p: float, p0: float, law: str = "projected") -> sparse.SparseSymMatrix:
    """Global stiffness on free DOFs with interpolated element moduli."""
    k0, _ = element_matrices(mesh.etype, material, mesh.elem_size)
    e = materials.interpolate_stiffness(density.values, p, p0,
                                        material.e0, material.e_min, law)
    return _scaled_assembly(mesh, k0, e)


def assemble_M(mesh: Mesh, material: Material, density: DensityField,
               p0: float, law: str = "projected") -> sparse.SparseSymMatrix:
    """Global consistent mass on free DOFs with interpolated volume scaling."""
    _, m0 = element_matrices(mesh.etype, material, mesh.elem_size)
    v = materials.volume_measure(density.values, p0, law)
    return _scaled_assembly(mesh, m0, v)


# ---------------------------------------------------------------------------
# Load programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointLoad:
    """Sinusoidal point load A*sin(2*pi*f*t + phase) on one free DOF."""

    dof: int
    amplitude: float
    frequency: float
    phase: float = 0.0

    def value(self, t: float) -> float:
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)


@dataclass(frozen=True)
class MovingLoad:
    """Uniform line load of fixed total force sweeping along a node path."""

    total_force: float
    length: float
    speed: float
    path_x: np.ndarray   # ascending node positions along the path
    path_dofs: np.ndarray  # free-DOF index per path node

    def segment(self, t: float):
        front = self.speed * t
        return front - self.length, front


@dataclass(frozen=True)
class RandomLoad:
    """Piecewise-constant random amplitude applied to a fixed spatial pattern.

    ``values[i]`` holds on the i-th interval (t in (t_i-1, t_i]); the
    amplitude at t = 0 is zero so runs start from rest.
    """

    weights: np.ndarray  # length-h spatial pattern
    values: np.ndarray   # one amplitude per interval
    seed: int
    bounds: tuple


@dataclass(frozen=True)
class LoadProgram:
    """Time grid plus the active load variants (summed)."""

    h: int
    t_end: float
    intervals: int
    point_loads: tuple = ()
    moving: MovingLoad | None = None
    random: RandomLoad | None = None

    def __post_init__(self):
        if self.t_end <= 0.0 or self.intervals < 1:
            raise ValueError("need t_end > 0 and at least one interval")

    @property
    def dt(self) -> float:
        return self.t_end / self.intervals

    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.intervals + 1)


def _moving_contribution(mv: MovingLoad, t: float, out: np.ndarray) -> None:
    lo, hi = mv.segment(t)
    x = mv.path_x
    u0, u1 = max(lo, x[0]), min(hi, x[-1])
    if u1 <= u0:
        return
    q = mv.total_force / mv.length
    spacing = x[1] - x[0]
    first = max(0, int(math.floor((u0 - x[0]) / spacing)))
    last = min(len(x) - 2, int(math.ceil((u1 - x[0]) / spacing)))
    for j in range(first, last + 1):
        xl, xr = x[j], x[j + 1]
        c0, c1 = max(u0, xl), min(u1, xr)
        if c1 <= c0:
            continue
        right_moment = ((c1 - xl) ** 2 - (c0 - xl) ** 2) / (2.0 * spacing)
        out[mv.path_dofs[j]] += q * ((c1 - c0) - right_moment)
        out[mv.path_dofs[j + 1]] += q * right_moment


def force_at(program: LoadProgram, t: float, h: int) -> np.ndarray:
    """Global force vector on free DOFs at time t."""
    if h != program.h:
        raise ValueError(f"dimension mismatch: program h={program.h}, requested {h}")
    if t < -1e-12 or t > program.t_end * (1.0 + 1e-12):
        raise ValueError(f"time {t} outside [0, {program.t_end}]")
    f = np.zeros(h)
    for pl in program.point_loads:
        f[pl.dof] += pl.value(t)
    if program.moving is not None:
        _moving_contribution(program.moving, t, f)
    if program.random is not None:
        idx = int(math.ceil(t / program.dt - 1e-9))
        if idx >= 1:
            f += program.random.weights * program.random.values[min(idx, program.intervals) - 1]
    return f


def peak_static_force(program: LoadProgram, h: int) -> np.ndarray:
    """Loads frozen at their peak amplitudes (for static comparison runs)."""
    f = np.zeros(h)
    for pl in program.point_loads:
        f[pl.dof] += pl.amplitude
    if program.moving is not None:
        mv = program.moving
        mid = 0.5 * (mv.path_x[0] + mv.path_x[-1] + mv.length)
        _moving_contribution(mv, mid / mv.speed, f)
    if program.random is not None:
        peak = program.random.values[np.argmax(np.abs(program.random.values))]
        f += program.random.weights * peak
    return f


# ---------------------------------------------------------------------------
# Case presets
# ---------------------------------------------------------------------------

def _require_free(mesh: Mesh, dof_full: int) -> int:
    idx = mesh.free_map[dof_full]
    if idx < 0:
        raise ValueError(f"load DOF {dof_full} is fixed")
    return int(idx)


def _cantilever_case(nelx=100, nely=50, length=2.0, height=1.0, thickness=0.01,
                     hole_center=(0.5, 0.5), hole_radius=0.2,
                     amplitude=-1000.0, frequency=50.0,
                     t_end=0.05, intervals=200, material=None):
    a = length / nelx
    if abs(nely * a - height) > 1e-9:
        raise ValueError("grid must tile the domain with square elements")
    cx, cy = hole_center
    r = hole_radius
    if r > 0:
        if cx - r < 0 or cx + r > length or cy - r < 0 or cy + r > height:
            raise ValueError("hole extends outside the domain")
        if 2.0 * r / a < 4.0:
            raise ValueError("resolution too coarse to resolve the hole "
                             "(< 4 elements across the diameter)")

    mat = material or Material(thickness=thickness)
    ny = nely + 1
    fixed_nodes = np.arange(ny)  # ix = 0 column
    fixed = np.concatenate([2 * fixed_nodes, 2 * fixed_nodes + 1])

    ex, ey = np.meshgrid(np.arange(nelx), np.arange(nely), indexing="ij")
    centers_x = (ex.ravel() + 0.5) * a
    centers_y = (ey.ravel() + 0.5) * a
    void = np.zeros(nelx * nely, dtype=bool)
    if r > 0:
        void = (centers_x - cx) ** 2 + (centers_y - cy) ** 2 <= r**2

    mesh = grid_mesh_2d(nelx, nely, a, fixed, passive_void=void)
    corner = mesh.node_id(nelx, nely)       # upper right
    mid_bottom = mesh.node_id(nelx // 2, 0)  # lower middle
    loads = (
        PointLoad(_require_free(mesh, 2 * corner + 1), amplitude, frequency),
        PointLoad(_require_free(mesh, 2 * mid_bottom + 1), amplitude, frequency),
    )
    program = LoadProgram(h=mesh.h, t_end=t_end, intervals=intervals,
                          point_loads=loads)
    return mesh, mat, program


def _bridge_case(nelx=60, nely=27, length=30.0, height=13.5, thickness=0.1,
                 total_force=-100e3, footprint=5.0, speed_kmh=30.0,
                 t_end=None, intervals=200, deck_solid=True, material=None):
    a = length / nelx
    if abs(nely * a - height) > 1e-9:
        raise ValueError("grid must tile the domain with square elements")
    mat = material or Material(thickness=thickness)
    speed = speed_kmh / 3.6
    if t_end is None:
        t_end = (length + footprint) / speed * 1.07  # small tail of free vibration

    ny = nely + 1
    left = 0 * ny + 0          # bottom-left node
    right = nelx * ny + 0      # bottom-right node
    fixed = np.array([2 * left, 2 * left + 1, 2 * right + 1])  # pin + roller

    solid = np.zeros(nelx * nely, dtype=bool)
    if deck_solid:
        solid[nely - 1::nely] = True  # top element row carries the roadway

    mesh = grid_mesh_2d(nelx, nely, a, fixed, passive_solid=solid)
    deck_nodes = np.array([mesh.node_id(ix, nely) for ix in range(nelx + 1)])
    path_dofs = np.array([_require_free(mesh, 2 * n + 1) for n in deck_nodes])
    moving = MovingLoad(total_force=total_force, length=footprint, speed=speed,
                        path_x=np.arange(nelx + 1) * a, path_dofs=path_dofs)
    program = LoadProgram(h=mesh.h, t_end=t_end, intervals=intervals, moving=moving)
    return mesh, mat, program


def _box3d_case(nelx=15, nely=10, nelz=6, size_x=0.15, size_y=0.10, size_z=0.06,
                amplitude_bounds=(0.0, 2000.0), seed=0, t_end=0.05, intervals=200,
                material=None):
    a = size_x / nelx
    if abs(nely * a - size_y) > 1e-9 or abs(nelz * a - size_z) > 1e-9:
        raise ValueError("grid must tile the box with cubic elements")
    mat = material or Material()

    nyz = (nely + 1) * (nelz + 1)
    face0 = np.arange(nyz)  # ix = 0 plane
    fixed = np.concatenate([3 * face0, 3 * face0 + 1, 3 * face0 + 2])

    mesh = grid_mesh_3d(nelx, nely, nelz, a, fixed)
    tip = np.array([mesh.node_id(nelx, iy, iz)
                    for iy in range(nely + 1) for iz in range(nelz + 1)])
    weights = np.zeros(mesh.h)
    for n in tip:
        weights[_require_free(mesh, 3 * n + 1)] = -1.0 / tip.size

    rng = np.random.default_rng(seed)
    lo, hi = amplitude_bounds
    values = rng.uniform(lo, hi, intervals)
    random = RandomLoad(weights=weights, values=values, seed=seed,
                        bounds=(float(lo), float(hi)))
    program = LoadProgram(h=mesh.h, t_end=t_end, intervals=intervals, random=random)
    return mesh, mat, program


PRESETS = {
    "cantilever_hole": _cantilever_case,
    "bridge": _bridge_case,
    "box3d": _box3d_case,
}


def build_case(preset: str, **overrides):
    """Mesh, material and load program for a named case."""
    try:
        builder = PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return builder(**overrides)
