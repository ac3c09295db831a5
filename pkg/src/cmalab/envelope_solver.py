"""Pointwise nonlinear Gauss-Seidel for det[u_{j kbar}] = h with Dirichlet data.

Each node update solves the local equation in closed form with the mixed
entry u_12 frozen from the current iterate (a lagged off-diagonal scheme).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .catalog import BoundaryDatum, Density, h_from_catalog, oracle_for, phi_from_catalog
from .errors import GridMismatch, NegativeDiscriminant, RadialModeInvalid
from .geometry import DomainSpec, Grid, classify_grid, from_catalog, radial_grid, sample_boundary, interior_samples
from .ma_operator import ScalarField, Stencil, assemble, hessian_field
from .reports import SCHEMA_VERSION


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    domain: DomainSpec
    phi: BoundaryDatum
    h: Density
    alpha: float = 1.0

    @property
    def n(self) -> int:
        return self.domain.n

    @classmethod
    def from_names(cls, domain: str, phi: str, h: str, alpha: float = 1.0) -> "ProblemSpec":
        return cls(from_catalog(domain), phi_from_catalog(phi, alpha), h_from_catalog(h), float(alpha))

    def oracle(self) -> Optional[Callable]:
        return oracle_for(self.domain, self.phi, self.h)


@dataclass
class SolverConfig:
    spacing: float = 1.0 / 16
    tol: Optional[float] = None
    max_sweeps: Optional[int] = None
    radial_mode: bool = False
    nodes_per_axis: int = 129
    relax: Optional[float] = None
    variant: str = "symmetric"  # or "red-black"


def embed(grid: Grid, pts) -> np.ndarray:
    """Map grid coordinates to points of C^n (radial grids carry (|z1|, |z2|))."""
    pts = np.asarray(pts, dtype=float)
    if not grid.radial:
        return pts
    full = np.zeros(pts.shape[:-1] + (4,))
    full[..., 0] = np.abs(pts[..., 0])
    full[..., 2] = np.abs(pts[..., 1])
    return full


def _boundary_fn(p: ProblemSpec, grid: Grid) -> Callable:
    return lambda pts: p.phi(embed(grid, pts))


@dataclass
class SolveReport:
    field: ScalarField
    sweeps: int
    final_update: float
    residual: float
    boundary_mismatch: float
    monotonicity_log: list
    converged: bool
    tol: float
    variant: str
    relax: float
    oracle_error: Optional[float] = None
    seconds: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.field.grid

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "schema_version": SCHEMA_VERSION,
            "domain": g.domain.name,
            "radial": g.radial,
            "spacing": g.spacing,
            "active_nodes": int(np.count_nonzero(g.active)),
            "sweeps": self.sweeps,
            "final_update": self.final_update,
            "residual": self.residual,
            "boundary_mismatch": self.boundary_mismatch,
            "min_update_first": self.monotonicity_log[0] if self.monotonicity_log else None,
            "min_update_last": self.monotonicity_log[-1] if self.monotonicity_log else None,
            "decreasing_sweeps": int(sum(1 for v in self.monotonicity_log if v < -self.tol)),
            "converged": self.converged,
            "tol": self.tol,
            "variant": self.variant,
            "relax": self.relax,
            "oracle_error": self.oracle_error,
        }


# ---------------------------------------------------------------------------
# kernel


@numba.njit(cache=True)
def _relax_pass(u, order, pidx, pw, pc, midx, mw, mok, hv, planes, relax):
    max_upd = 0.0
    min_upd = np.inf
    bad = 0
    for k in range(order.size):
        a = order[k]
        u0 = u[a]
        if planes == 1:
            s = 0.0
            for q in range(4):
                s += pw[a, 0, q] * u[pidx[a, 0, q]]
            new = (s - 4.0 * hv[a]) / pc[a, 0]
        else:
            s1 = 0.0
            s2 = 0.0
            for q in range(4):
                s1 += pw[a, 0, q] * u[pidx[a, 0, q]]
                s2 += pw[a, 1, q] * u[pidx[a, 1, q]]
            m2 = 0.0
            if mok[a]:
                re = 0.0
                im = 0.0
                for q in range(8):
                    re += mw[a, q] * u[midx[a, q]]
                    im += mw[a, 8 + q] * u[midx[a, 8 + q]]
                m2 = re * re + im * im
            c1 = pc[a, 0]
            c2 = pc[a, 1]
            diff = c1 * s2 - c2 * s1
            disc = diff * diff + 64.0 * c1 * c2 * (hv[a] + m2)
            if disc < 0.0:
                bad += 1
                disc = 0.0
            new = ((c1 * s2 + c2 * s1) - math.sqrt(disc)) / (2.0 * c1 * c2)
        new = u0 + relax * (new - u0)
        d = new - u0
        u[a] = new
        if abs(d) > max_upd:
            max_upd = abs(d)
        if d < min_upd:
            min_upd = d
    return max_upd, min_upd, bad


def _orders(st: Stencil, variant: str):
    n = st.n_active
    if variant == "red-black":
        multi = np.stack(np.unravel_index(st.nodes, st.grid.shape), axis=1)
        parity = multi.sum(axis=1) % 2
        fwd = np.concatenate([np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)])
    elif variant == "symmetric":
        fwd = np.arange(n)
    else:
        raise ValueError(f"unknown sweep variant {variant!r}")
    return fwd.astype(np.int64), fwd[::-1].copy().astype(np.int64)


def _pass(st: Stencil, u_all, order, hv, relax):
    upd, low, bad = _relax_pass(u_all, order, st.pidx, st.pw, st.pc, st.midx, st.mw, st.mok,
                                hv, st.planes, relax)
    if bad:
        raise NegativeDiscriminant(f"{bad} nodes produced a negative discriminant")
    return upd, low


# ---------------------------------------------------------------------------
# operations


def _phi_min(p: ProblemSpec) -> float:
    if p.phi.const is not None:
        return p.phi.const
    if p.phi.minimum is not None:
        return p.phi.minimum
    mesh = sample_boundary(p.domain, 720 if p.n == 1 else 2048)
    return float(np.min(p.phi(mesh.points)))


def _h_scale(p: ProblemSpec, pts) -> float:
    if p.h.const is not None:
        return p.h.const ** (1.0 / p.n)
    return float(np.max(p.h(pts))) ** (1.0 / p.n)


def initial_subsolution(p: ProblemSpec, grid: Grid, envelope=None) -> ScalarField:
    """A(|z|^2 - R^2) + min phi, with A = 0 for h = 0 and max(1, max h^(1/n)) otherwise."""
    pts = grid.points()
    inside = grid.active
    full = embed(grid, pts[inside])
    A = 0.0 if p.h.is_zero else max(1.0, _h_scale(p, full))
    R = p.domain.circumradius()
    vals = np.full(grid.shape, np.nan)
    vals[inside] = A * (np.sum(full**2, axis=-1) - R**2) + _phi_min(p)
    if envelope is not None:
        env = envelope.values if hasattr(envelope, "values") else np.asarray(envelope)
        if env.shape != grid.shape:
            raise GridMismatch("barrier envelope lives on a different grid")
        vals[inside] = np.fmax(vals[inside], env[inside])
    return ScalarField(grid, vals, _boundary_fn(p, grid))


def _node_density(p: ProblemSpec, st: Stencil) -> np.ndarray:
    return np.ascontiguousarray(p.h(embed(st.grid, st.node_points())), dtype=float)


def sweep(p: ProblemSpec, grid: Grid, f: ScalarField, relax: float = 1.0,
          variant: str = "symmetric"):
    """One symmetric Gauss-Seidel sweep (forward then reversed). Returns (field', max_update)."""
    st = assemble(grid)
    u_all = f.unknown_vector(st)
    hv = _node_density(p, st)
    fwd, bwd = _orders(st, variant)
    a, _ = _pass(st, u_all, fwd, hv, relax)
    b, _ = _pass(st, u_all, bwd, hv, relax)
    vals = st.scatter(u_all[: st.n_active])
    return ScalarField(grid, vals, f.boundary), max(a, b)


def check_rotation_invariance(p: ProblemSpec, samples: int = 256, seed: int = 0, tol: float = 1e-12):
    if p.n != 2:
        raise RadialModeInvalid("radial mode needs a problem in C^2")
    rng = np.random.default_rng(seed)
    mesh = sample_boundary(p.domain, samples)
    inner = interior_samples(p.domain, samples, seed)
    for pts, fn, what in ((mesh.points, p.phi, "boundary datum"), (inner, p.h, "density"),
                          (inner, p.domain, "domain")):
        z = pts[:, 0::2] + 1j * pts[:, 1::2]
        rot = np.exp(2j * np.pi * rng.random(z.shape))
        zr = z * rot
        moved = np.empty_like(pts)
        moved[:, 0::2] = zr.real
        moved[:, 1::2] = zr.imag
        a, b = np.asarray(fn(pts), float), np.asarray(fn(moved), float)
        if np.max(np.abs(a - b) / (1 + np.abs(a))) > tol:
            raise RadialModeInvalid(f"{what} is not invariant under the torus action")


def _default_sweeps(p: ProblemSpec, radial: bool) -> int:
    if radial or p.n == 1:
        return 100_000
    return 20_000


def _residual_and_mismatch(p: ProblemSpec, f: ScalarField, st: Stencil):
    hf = hessian_field(f)
    deep = f.grid.deep_mask(2).ravel()[st.nodes]
    hv = _node_density(p, st)
    res = np.abs(hf.det - hv)[deep]
    residual = float(np.max(res)) if res.size else 0.0
    u_all = f.unknown_vector(st)
    cross = (st.fixed_nodes < 0) & (st.arm_owner >= 0) & (st.arm_other >= 0)
    if f.grid.radial:
        cross &= np.all(st.fixed_points >= 0, axis=1)
    if not np.any(cross):
        return residual, 0.0
    own = u_all[st.arm_owner[cross]]
    oth = u_all[st.arm_other[cross]]
    extrap = own + st.arm_theta[cross] * (own - oth)
    phi = u_all[st.n_active:][cross]
    return residual, float(np.max(np.abs(extrap - phi)))


def solve(p: ProblemSpec, cfg: Optional[SolverConfig] = None, start: Optional[ScalarField] = None) -> SolveReport:
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    if cfg.radial_mode:
        check_rotation_invariance(p)
        grid = radial_grid(p.domain, cfg.nodes_per_axis)
    else:
        grid = classify_grid(p.domain, cfg.spacing)
    st = assemble(grid)
    f0 = start if start is not None else initial_subsolution(p, grid)
    u_all = f0.unknown_vector(st)
    fixed = u_all[st.n_active:]
    scale = 1.0 + (float(np.max(np.abs(fixed))) if fixed.size else 0.0)
    tol = cfg.tol if cfg.tol is not None else 1e-8 * scale
    max_sweeps = cfg.max_sweeps if cfg.max_sweeps is not None else _default_sweeps(p, cfg.radial_mode)
    if cfg.relax is not None:
        relax = cfg.relax
    elif p.n == 1 and not cfg.radial_mode:
        diam = 2.0 * p.domain.circumradius()
        relax = 2.0 / (1.0 + math.sin(math.pi * grid.spacing / diam))
    else:
        relax = 1.0
    hv = _node_density(p, st)
    fwd, bwd = _orders(st, cfg.variant)
    log = []
    upd = math.inf
    sweeps = 0
    while sweeps < max_sweeps:
        a, lo_a = _pass(st, u_all, fwd, hv, relax)
        b, lo_b = _pass(st, u_all, bwd, hv, relax)
        sweeps += 1
        upd = max(a, b)
        log.append(float(min(lo_a, lo_b)))
        if upd < tol:
            break
    vals = st.scatter(u_all[: st.n_active])
    f = ScalarField(grid, vals, _boundary_fn(p, grid))
    residual, mismatch = _residual_and_mismatch(p, f, st)
    oracle = p.oracle()
    err = None
    if oracle is not None:
        exact = oracle(embed(grid, st.node_points()))
        err = float(np.max(np.abs(u_all[: st.n_active] - exact)))
    return SolveReport(f, sweeps, float(upd), residual, mismatch, log, bool(upd < tol), float(tol),
                       cfg.variant, float(relax), err, time.perf_counter() - t0)


@dataclass
class ComparisonReport:
    lower_violation: float
    upper_violation: float
    nodes: int
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return self.lower_violation <= self.tol and self.upper_violation <= self.tol

    def to_dict(self):
        return {"lower_violation": self.lower_violation, "upper_violation": self.upper_violation,
                "nodes": self.nodes, "tol": self.tol, "passed": self.passed}


def _values_of(obj):
    return obj.values if hasattr(obj, "values") else np.asarray(obj, dtype=float)


def sandwich_check(report, v, w, tol: float = 0.0) -> ComparisonReport:
    """max(v - u) and max(u - w) over active nodes; positive values are violations."""
    f = report.field if hasattr(report, "field") else report
    grid = f.grid
    for b in (v, w):
        bg = getattr(b, "grid", grid)
        if bg is not grid and (bg.shape != grid.shape or bg.spacing != grid.spacing):
            raise GridMismatch("barrier and solution grids differ")
    act = grid.active
    u = f.values[act]
    lower = float(np.max(_values_of(v)[act] - u))
    upper = float(np.max(u - _values_of(w)[act]))
    return ComparisonReport(max(lower, 0.0), max(upper, 0.0), int(act.sum()), tol)
