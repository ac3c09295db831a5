"""Discrete complex Hessian and Monge-Ampere determinant on classified grids.

At every active node the stencil is stored in "plane" form: for plane j

    P_j = sum_k w[j, k] * u[idx[j, k]] - c[j] * u[node]

equals 4 * u_{j jbar} (Cartesian) or u_{r r} + u_r / r (radial reduction),
with Shortley-Weller arms where an axis edge crosses the boundary. The
unknown vector is laid out as [active nodes | fixed boundary entries].
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import AxisSingularity, MissingNeighbor, NotPSD
from .geometry import BOUNDARY, Grid


@dataclass(frozen=True)
class HermitianPair:
    """Entries of a 1x1 or 2x2 complex Hessian (u21 is the conjugate of u12)."""

    u11: float
    u22: Optional[float] = None
    u12: complex = 0j

    @property
    def n(self) -> int:
        return 1 if self.u22 is None else 2

    def matrix(self) -> np.ndarray:
        if self.n == 1:
            return np.array([[self.u11]], dtype=complex)
        return np.array([[self.u11, self.u12], [np.conj(self.u12), self.u22]], dtype=complex)


def ma_det(hp: HermitianPair) -> float:
    if hp.n == 1:
        return float(hp.u11)
    return float(hp.u11 * hp.u22 - abs(hp.u12) ** 2)


def default_psd_tol(hp: HermitianPair) -> float:
    return 1e-10 * (1.0 + abs(hp.u11) + abs(hp.u22 or 0.0))


def psh_check(hp: HermitianPair, tol: Optional[float] = None) -> bool:
    tol = default_psd_tol(hp) if tol is None else tol
    if hp.u11 < -tol:
        return False
    if hp.n == 2 and hp.u22 < -tol:
        return False
    return ma_det(hp) >= -tol


def det_shift_bound(hp: HermitianPair, beta: float, tol: Optional[float] = None):
    """(det(H + beta I), sum_k beta^k det(H)^((n-k)/n)) for PSD H."""
    if not psh_check(hp, tol):
        raise NotPSD("Hessian is not positive semidefinite")
    return det_shift_bound_matrix(hp.matrix(), beta, check=False)


def det_shift_bound_matrix(a, beta: float, check: bool = True, tol: Optional[float] = None):
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    lam = np.linalg.eigvalsh(a)
    scale = 1.0 + float(np.max(np.abs(lam)))
    tol = 1e-10 * scale if tol is None else tol
    if check and lam[0] < -tol:
        raise NotPSD("matrix is not positive semidefinite")
    lhs = float(np.prod(lam + beta))
    det = float(np.prod(lam))
    if det < 0:
        det = 0.0
    rhs = sum(beta**k * (det ** ((n - k) / n) if k < n else 1.0) for k in range(n + 1))
    return lhs, float(rhs)


# ---------------------------------------------------------------------------
# stencil assembly


@dataclass(eq=False)
class Stencil:
    grid: Grid
    nodes: np.ndarray  # flat grid indices of active nodes (lexicographic)
    planes: int
    pidx: np.ndarray  # (nA, planes, 4) int64
    pw: np.ndarray  # (nA, planes, 4)
    pc: np.ndarray  # (nA, planes)
    midx: np.ndarray  # (nA, 16) int64, slots 0..7 real part, 8..15 imaginary part
    mw: np.ndarray  # (nA, 16)
    mok: np.ndarray  # (nA,) bool
    fixed_points: np.ndarray  # (nF, dim) coordinates of fixed entries
    fixed_nodes: np.ndarray  # (nF,) flat node index, or -1 for crossing points
    arm_owner: np.ndarray = field(default=None)  # (nF,) active row owning a crossing
    arm_other: np.ndarray = field(default=None)  # (nF,) index of the node opposite the crossing
    arm_theta: np.ndarray = field(default=None)  # (nF,) crossing fraction

    @property
    def n_active(self) -> int:
        return self.nodes.size

    @property
    def n_fixed(self) -> int:
        return self.fixed_points.shape[0]

    def fixed_values(self, boundary: Callable) -> np.ndarray:
        if self.n_fixed == 0:
            return np.zeros(0)
        return np.asarray(boundary(self.fixed_points), dtype=float)

    def node_points(self) -> np.ndarray:
        idx = np.stack(np.unravel_index(self.nodes, self.grid.shape), axis=1)
        return self.grid.origin + self.grid.spacing * idx

    def scatter(self, active_values, fill=np.nan) -> np.ndarray:
        out = np.full(int(np.prod(self.grid.shape)), fill, dtype=float)
        out[self.nodes] = active_values
        return out.reshape(self.grid.shape)

    def gather(self, grid_values) -> np.ndarray:
        return np.asarray(grid_values, dtype=float).ravel()[self.nodes]

    def planes_and_mixed(self, u_all):
        """P_j at every active node and the mixed entry m (complex)."""
        u0 = u_all[: self.n_active]
        P = np.einsum("apk,apk->ap", self.pw, u_all[self.pidx]) - self.pc * u0[:, None]
        mv = self.mw * u_all[self.midx]
        m = mv[:, :8].sum(axis=1) + 1j * mv[:, 8:].sum(axis=1)
        m = np.where(self.mok, m, np.nan)
        return P, m


_CACHE: "weakref.WeakKeyDictionary[Grid, Stencil]" = weakref.WeakKeyDictionary()


def assemble(grid: Grid) -> Stencil:
    st = _CACHE.get(grid)
    if st is None:
        st = _assemble_radial(grid) if grid.radial else _assemble_cartesian(grid)
        _CACHE[grid] = st
    return st


class _Fixed:
    """Accumulates fixed entries: boundary nodes (deduplicated) and crossing points."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.parts = []
        self.count = 0
        self.node_slot = {}

    def _append(self, points, nodes, owner, other, theta):
        k = points.shape[0]
        self.parts.append((points, nodes, owner, other, theta))
        slots = np.arange(self.count, self.count + k)
        self.count += k
        return slots

    def nodes(self, flats):
        flats = np.asarray(flats, dtype=np.int64)
        fresh = [f for f in np.unique(flats).tolist() if f not in self.node_slot]
        if fresh:
            arr = np.asarray(fresh, dtype=np.int64)
            idx = np.stack(np.unravel_index(arr, self.grid.shape), axis=1)
            pts = self.grid.origin + self.grid.spacing * idx
            k = arr.size
            slots = self._append(pts, arr, np.full(k, -1), np.full(k, -1), np.ones(k))
            self.node_slot.update(zip(fresh, slots.tolist()))
        return np.array([self.node_slot[f] for f in flats.tolist()], dtype=np.int64)

    def crossings(self, points, owner, other, theta):
        return self._append(points, np.full(points.shape[0], -1, dtype=np.int64), owner, other, theta)

    def arrays(self, dim):
        if not self.parts:
            e = np.zeros(0, dtype=np.int64)
            return np.zeros((0, dim)), e, e, e, np.zeros(0)
        cols = list(zip(*self.parts))
        return (np.concatenate(cols[0]).reshape(-1, dim),) + tuple(
            np.concatenate(c).astype(t) for c, t in zip(cols[1:], (np.int64, np.int64, np.int64, float)))


def _axis_arms(grid: Grid, nodes, pos, fixed: _Fixed, axis: int, n_active: int):
    """Neighbor index and arm fraction on both sides of ``axis`` for every active node."""
    shape = grid.shape
    stride = int(np.prod(shape[axis + 1:]))
    cls = grid.cls.ravel()
    if grid.ba_nodes.size:
        ba_rows = np.minimum(np.searchsorted(grid.ba_nodes, nodes), grid.ba_nodes.size - 1)
        is_ba = grid.ba_nodes[ba_rows] == nodes
    else:
        ba_rows = np.zeros(nodes.size, dtype=np.int64)
        is_ba = np.zeros(nodes.size, dtype=bool)
    idx = np.empty((nodes.size, 2), dtype=np.int64)
    frac = np.ones((nodes.size, 2))
    coords = grid.origin + grid.spacing * np.stack(np.unravel_index(nodes, shape), axis=1)
    for side, sgn in ((0, -1), (1, 1)):
        nb = nodes + sgn * stride
        nb_pos = pos[nb]
        act = nb_pos >= 0
        idx[act, side] = nb_pos[act]
        on = ~act & (cls[nb] == BOUNDARY)
        if np.any(on):
            idx[on, side] = n_active + fixed.nodes(nb[on])
        cr = ~act & ~on
        if np.any(cr):
            rows = np.flatnonzero(cr)
            theta = np.where(is_ba[rows], grid.ba_theta[ba_rows[rows], axis, side], 1.0)
            pts = coords[rows].copy()
            pts[:, axis] += sgn * theta * grid.spacing
            opp = pos[nodes[rows] - sgn * stride]
            idx[rows, side] = n_active + fixed.crossings(pts, rows, np.where(opp >= 0, opp, -1), theta)
            frac[rows, side] = theta
    return idx, frac


def _mixed_slot(nodes, pos, cls, fixed: _Fixed, n_active, offset):
    tgt = nodes + offset
    out = np.full(nodes.size, -1, dtype=np.int64)
    p = pos[tgt]
    out[p >= 0] = p[p >= 0]
    on = (p < 0) & (cls[tgt] == BOUNDARY)
    if np.any(on):
        out[on] = n_active + fixed.nodes(tgt[on])
    return out


def _active_nodes(grid: Grid, extra_mask=None):
    mask = grid.active
    if extra_mask is not None:
        mask = mask & extra_mask
    nodes = np.flatnonzero(mask.ravel())
    pos = np.full(int(np.prod(grid.shape)), -1, dtype=np.int64)
    pos[nodes] = np.arange(nodes.size)
    return nodes, pos


def _finish(grid, nodes, planes, pidx, pw, pc, midx, mw, mok, fixed: _Fixed):
    pts, fnodes, owner, other, theta = fixed.arrays(grid.dim)
    # unavailable mixed slots point at the node itself with zero weight
    self_idx = np.arange(nodes.size)
    bad = midx < 0
    midx = np.where(bad, self_idx[:, None], midx)
    mw = np.where(bad, 0.0, mw)
    return Stencil(grid, nodes, planes, pidx, pw, pc, midx, mw, mok, pts, fnodes, owner, other, theta)


def _assemble_cartesian(grid: Grid) -> Stencil:
    nodes, pos = _active_nodes(grid)
    nA = nodes.size
    h = grid.spacing
    n = grid.n
    fixed = _Fixed(grid)
    pidx = np.zeros((nA, n, 4), dtype=np.int64)
    pw = np.zeros((nA, n, 4))
    pc = np.zeros((nA, n))
    for j in range(n):
        for k, axis in enumerate((2 * j, 2 * j + 1)):
            idx, frac = _axis_arms(grid, nodes, pos, fixed, axis, nA)
            am, ap = frac[:, 0] * h, frac[:, 1] * h
            pidx[:, j, 2 * k] = idx[:, 0]
            pidx[:, j, 2 * k + 1] = idx[:, 1]
            pw[:, j, 2 * k] = 2.0 / (am * (am + ap))
            pw[:, j, 2 * k + 1] = 2.0 / (ap * (am + ap))
            pc[:, j] += 2.0 / (am * ap)
    midx = np.full((nA, 16), -1, dtype=np.int64)
    mw = np.zeros((nA, 16))
    mok = np.zeros(nA, dtype=bool)
    if n == 2:
        strides = [int(np.prod(grid.shape[a + 1:])) for a in range(4)]
        cls = grid.cls.ravel()
        w = 1.0 / (16.0 * h * h)
        # (axis a, axis b, slot base, sign): m = [u_x1x2 + u_y1y2 + i (u_x1y2 - u_y1x2)] / 4
        combos = ((0, 2, 0, 1.0), (1, 3, 4, 1.0), (0, 3, 8, 1.0), (1, 2, 12, -1.0))
        for a, b, base, sign in combos:
            for k, (sa, sb) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
                off = sa * strides[a] + sb * strides[b]
                midx[:, base + k] = _mixed_slot(nodes, pos, cls, fixed, nA, off)
                mw[:, base + k] = sign * sa * sb * w
        mok = np.all(midx >= 0, axis=1)
    return _finish(grid, nodes, n, pidx, pw, pc, midx, mw, mok, fixed)


def _assemble_radial(grid: Grid) -> Stencil:
    h = grid.spacing
    idx_grid = np.indices(grid.shape)
    not_ghost = (idx_grid[0] >= 1) & (idx_grid[1] >= 1)
    nodes, pos = _active_nodes(grid, not_ghost)
    nA = nodes.size
    fixed = _Fixed(grid)
    multi = np.stack(np.unravel_index(nodes, grid.shape), axis=1)
    radius = grid.origin + h * multi
    pidx = np.zeros((nA, 2, 4), dtype=np.int64)
    pw = np.zeros((nA, 2, 4))
    pc = np.zeros((nA, 2))
    on_axis = np.zeros(nA, dtype=bool)
    for axis in range(2):
        idx, frac = _axis_arms(grid, nodes, pos, fixed, axis, nA)
        am, ap = frac[:, 0] * h, frac[:, 1] * h
        rho = radius[:, axis]
        axis_node = multi[:, axis] == 1
        on_axis |= axis_node
        safe = np.where(axis_node, 1.0, rho)
        wm = 2.0 / (am * (am + ap)) - ap / (safe * am * (am + ap))
        wp = 2.0 / (ap * (am + ap)) + am / (safe * ap * (am + ap))
        c = 2.0 / (am * ap) - (ap - am) / (safe * am * ap)
        # on the axis u_r / r -> u_rr and the minus arm reflects onto the plus arm
        wm = np.where(axis_node, 0.0, wm)
        wp = np.where(axis_node, 4.0 / ap**2, wp)
        c = np.where(axis_node, 4.0 / ap**2, c)
        pidx[:, axis, 0] = np.where(axis_node, idx[:, 1], idx[:, 0])
        pidx[:, axis, 1] = idx[:, 1]
        pw[:, axis, 0] = wm
        pw[:, axis, 1] = wp
        pidx[:, axis, 2:] = np.arange(nA)[:, None]
        pc[:, axis] = c
    strides = [grid.shape[1], 1]
    cls = grid.cls.ravel()
    midx = np.full((nA, 16), -1, dtype=np.int64)
    mw = np.zeros((nA, 16))
    w = 1.0 / (16.0 * h * h)  # m = u_{r1 r2} / 4
    for k, (sa, sb) in enumerate(((1, 1), (1, -1), (-1, 1), (-1, -1))):
        off = sa * strides[0] + sb * strides[1]
        midx[:, k] = _mixed_slot(nodes, pos, cls, fixed, nA, off)
        mw[:, k] = sa * sb * w
    mok = np.all(midx[:, :4] >= 0, axis=1) & ~on_axis
    midx[:, 4:] = np.arange(nA)[:, None]
    return _finish(grid, nodes, 2, pidx, pw, pc, midx, mw, mok, fixed)


# ---------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class ScalarField:
    """Values on grid nodes (NaN off the domain) plus boundary data for crossings."""

    grid: Grid
    values: np.ndarray
    boundary: Optional[Callable] = None

    @classmethod
    def from_function(cls, grid: Grid, func: Callable, boundary: Optional[Callable] = None):
        pts = grid.points()
        vals = np.full(grid.shape, np.nan)
        inside = grid.active | (grid.cls == BOUNDARY)
        vals[inside] = func(pts[inside])
        return cls(grid, vals, boundary if boundary is not None else func)

    def unknown_vector(self, st: Optional[Stencil] = None) -> np.ndarray:
        st = st or assemble(self.grid)
        fixed = np.zeros(st.n_fixed)
        if st.n_fixed:
            on_node = st.fixed_nodes >= 0
            if np.any(on_node):
                node_vals = self.values.ravel()[st.fixed_nodes[on_node]]
                if np.any(np.isnan(node_vals)) and self.boundary is not None:
                    node_vals = self.boundary(st.fixed_points[on_node])
                fixed[on_node] = node_vals
            if np.any(~on_node):
                if self.boundary is None:
                    fixed[~on_node] = np.nan
                else:
                    fixed[~on_node] = self.boundary(st.fixed_points[~on_node])
        return np.concatenate([st.gather(self.values), fixed])


@dataclass(eq=False)
class HermitianField:
    """Complex Hessian entries at active nodes (u12 is NaN where the cross stencil is incomplete)."""

    stencil: Stencil
    u11: np.ndarray
    u22: Optional[np.ndarray]
    u12: np.ndarray

    @property
    def det(self) -> np.ndarray:
        if self.u22 is None:
            return self.u11.copy()
        return self.u11 * self.u22 - np.abs(self.u12) ** 2

    def psh(self, tol=None) -> np.ndarray:
        u22 = self.u22 if self.u22 is not None else np.zeros_like(self.u11)
        tol = 1e-10 * (1 + np.abs(self.u11) + np.abs(u22)) if tol is None else tol
        return (self.u11 >= -tol) & (u22 >= -tol) & (self.det >= -tol)

    def min_eigenvalue(self) -> np.ndarray:
        if self.u22 is None:
            return self.u11.copy()
        tr = self.u11 + self.u22
        disc = np.sqrt((self.u11 - self.u22) ** 2 + 4 * np.abs(self.u12) ** 2)
        return 0.5 * (tr - disc)

    def on_grid(self, values) -> np.ndarray:
        return self.stencil.scatter(values)

    def export_csv(self, path):
        import csv

        pts = self.stencil.node_points()
        u22 = self.u22 if self.u22 is not None else np.full_like(self.u11, np.nan)
        det = self.det
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "u11", "u22", "re_u12", "im_u12", "det"])
            for k in range(pts.shape[0]):
                w.writerow([" ".join(repr(float(x)) for x in pts[k]), repr(float(self.u11[k])),
                            repr(float(u22[k])), repr(float(self.u12[k].real)),
                            repr(float(self.u12[k].imag)), repr(float(det[k]))])


def hessian_field(f: ScalarField) -> HermitianField:
    st = assemble(f.grid)
    u_all = f.unknown_vector(st)
    P, m = st.planes_and_mixed(u_all)
    if st.planes == 1:
        return HermitianField(st, P[:, 0] / 4.0, None, np.zeros(st.n_active, complex))
    if f.grid.radial:
        # radial planes carry u_rr + u_r/r = 4 u_{j jbar}; |m| = |u_{r1 r2}| / 4
        return HermitianField(st, P[:, 0] / 4.0, P[:, 1] / 4.0, m)
    return HermitianField(st, P[:, 0] / 4.0, P[:, 1] / 4.0, m)


def complex_hessian(f: ScalarField, node) -> HermitianPair:
    """Complex Hessian at one grid node (multi-index)."""
    grid = f.grid
    st = assemble(grid)
    flat = int(np.ravel_multi_index(tuple(node), grid.shape))
    row = np.searchsorted(st.nodes, flat)
    if row >= st.n_active or st.nodes[row] != flat:
        raise MissingNeighbor(f"node {tuple(node)} is not an active node")
    u_all = f.unknown_vector(st)
    P = np.array([np.dot(st.pw[row, j], u_all[st.pidx[row, j]]) - st.pc[row, j] * u_all[row]
                  for j in range(st.planes)])
    if np.any(np.isnan(P)):
        raise MissingNeighbor(f"boundary values unavailable at node {tuple(node)}")
    if st.planes == 1:
        return HermitianPair(float(P[0] / 4.0))
    if not st.mok[row]:
        if grid.radial:
            return HermitianPair(float(P[0] / 4.0), float(P[1] / 4.0), 0j)
        raise MissingNeighbor(f"cross stencil incomplete at node {tuple(node)}")
    mv = st.mw[row] * u_all[st.midx[row]]
    m = complex(mv[:8].sum(), mv[8:].sum())
    return HermitianPair(float(P[0] / 4.0), float(P[1] / 4.0), m)


def radial_det(f: ScalarField, node) -> float:
    """det of the complex Hessian of a rotation-invariant field from its (r1, r2) section."""
    grid = f.grid
    if not grid.radial:
        raise ValueError("radial_det needs a field on a radial grid")
    node = tuple(int(i) for i in node)
    if min(node) < 1:
        raise AxisSingularity("ghost layer nodes carry no data")
    vals = f.values
    for axis in range(2):
        if node[axis] == 1:
            step = [0, 0]
            step[axis] = 1
            u0 = vals[node]
            u1 = vals[node[0] + step[0], node[1] + step[1]]
            u2 = vals[node[0] + 2 * step[0], node[1] + 2 * step[1]]
            # an even smooth profile has u(h) - u(0) ~ (u(2h) - u(h)) / 3
            if abs(u1 - u0) > 0.6 * abs(u2 - u1) + 1e-12 * (1 + abs(u0)):
                raise AxisSingularity("field is not smooth across the axis")
    return ma_det(complex_hessian(f, node))


# ---------------------------------------------------------------------------
# point-cloud finite differences (for callables)


def gradient_fd(func: Callable, pts, step: float) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    out = np.empty_like(pts)
    for a in range(pts.shape[-1]):
        e = np.zeros(pts.shape[-1])
        e[a] = step
        out[..., a] = (func(pts + e) - func(pts - e)) / (2 * step)
    return out


def real_hessian_fd(func: Callable, pts, step: float) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    dim = pts.shape[-1]
    f0 = np.asarray(func(pts), dtype=float)
    H = np.empty(pts.shape[:-1] + (dim, dim))
    eye = np.eye(dim) * step
    for a in range(dim):
        H[..., a, a] = (func(pts + eye[a]) - 2 * f0 + func(pts - eye[a])) / step**2
        for b in range(a + 1, dim):
            v = (func(pts + eye[a] + eye[b]) - func(pts + eye[a] - eye[b])
                 - func(pts - eye[a] + eye[b]) + func(pts - eye[a] - eye[b])) / (4 * step**2)
            H[..., a, b] = H[..., b, a] = v
    return H


def complex_from_real_hessian(R: np.ndarray) -> np.ndarray:
    """u_{j kbar} = [R_xx + R_yy + i (R_xj yk - R_yj xk)] / 4."""
    n = R.shape[-1] // 2
    C = np.empty(R.shape[:-2] + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            C[..., j, k] = 0.25 * (R[..., xj, xk] + R[..., yj, yk]
                                   + 1j * (R[..., xj, yk] - R[..., yj, xk]))
    return C


def complex_hessian_fd(func: Callable, pts, step: float, n: Optional[int] = None) -> np.ndarray:
    return complex_from_real_hessian(real_hessian_fd(func, pts, step))
