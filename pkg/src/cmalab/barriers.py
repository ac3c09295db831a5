"""Defining function from peak functions, barrier families, the harmonic
upper barrier, the constant ledger and the translation comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import GridMismatch, LedgerViolation, PeakFamilyInvalid, ShiftOutsideGrid, SolverDiverged
from .geometry import INTERIOR, BoundaryMesh, DomainSpec, Grid, PeakFamily, interior_samples, sample_boundary, validate_peak
from .index_calculus import GIndex, ModulusOmega
from .ma_operator import ScalarField, assemble, hessian_field
from .regularity_lab import ModulusConfig, dyadic_scales, estimate_modulus, estimate_modulus_function

CHUNK = 16384


@dataclass
class ConstantLedger:
    alpha: float
    c_phi: float
    K: float
    h_root_sup: float = 0.0  # sup of h^(1/n)
    bracket_max: float = 0.0  # max of -2 rho(z) + |z - zeta|^2
    K1: Optional[float] = None
    K2: Optional[float] = None
    K3: Optional[float] = None
    C0: Optional[float] = None
    max_abs_z2: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    @property
    def K_required(self) -> float:
        a = self.alpha
        return max((2.0 / a) * self.bracket_max ** (1 - a / 2) * self.h_root_sup, self.c_phi)

    def violations(self) -> list:
        out = []
        if self.K < self.K_required * (1 - 1e-12):
            out.append(f"K = {self.K:.6g} below required {self.K_required:.6g}")
        if self.K1 is not None and self.K2 is not None and self.max_abs_z2 is not None:
            if self.K2 < self.K1 * self.max_abs_z2 * (1 - 1e-12):
                out.append("K2 below K1 * max|z|^2")
        return out

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "c_phi": self.c_phi, "K": self.K, "K_required": self.K_required,
                "h_root_sup": self.h_root_sup, "bracket_max": self.bracket_max, "K1": self.K1,
                "K2": self.K2, "K3": self.K3, "C0": self.C0, "max_abs_z2": self.max_abs_z2,
                "provenance": self.provenance}


def cphi(points, values, alpha: float) -> float:
    """Largest pairwise quotient |phi(z) - phi(w)| / |z - w|^alpha."""
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError("need at least two samples")
    best = 0.0
    for s in range(0, pts.shape[0], 512):
        d = np.linalg.norm(pts[s:s + 512, None, :] - pts[None, :, :], axis=2)
        dv = np.abs(vals[s:s + 512, None] - vals[None, :])
        ok = d > 1e-14
        if np.any(ok):
            best = max(best, float(np.max(dv[ok] / d[ok] ** alpha)))
    return best


# ---------------------------------------------------------------------------
# defining function


@dataclass(eq=False)
class DefiningRho:
    func: Callable
    domain: DomainSpec
    grid: Optional[Grid] = None
    values: Optional[np.ndarray] = None
    mesh: Optional[BoundaryMesh] = None
    coefficient: Optional[float] = None  # 2 c2^2
    c2: Optional[float] = None
    lambda_min: Optional[float] = None
    seminorm: Optional[float] = None
    seminorm_spread: Optional[float] = None
    envelope_gap: Optional[float] = None
    provenance: str = ""

    def __call__(self, pts):
        return self.func(np.asarray(pts, dtype=float))

    @classmethod
    def from_function(cls, d: DomainSpec, func: Callable, grid: Optional[Grid] = None,
                      provenance: str = "supplied") -> "DefiningRho":
        vals = None
        if grid is not None:
            vals = ScalarField.from_function(grid, func).values
        return cls(func, d, grid, vals, provenance=provenance)

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "coefficient": self.coefficient, "c2": self.c2,
                "lambda_min": self.lambda_min, "seminorm": self.seminorm,
                "seminorm_spread": self.seminorm_spread, "envelope_gap": self.envelope_gap,
                "mesh_count": None if self.mesh is None else len(self.mesh)}


def _rho_envelope(mesh: BoundaryMesh, nu, coef, m: ModulusOmega):
    anchors = mesh.points
    offs = np.sum(nu * anchors, axis=1)

    def rho(pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        out = np.empty(flat.shape[0])
        for s in range(0, flat.shape[0], CHUNK // 4):
            p = flat[s:s + CHUNK // 4]
            psi = p @ nu.T - offs  # (points, anchors)
            dist2 = np.sum((p[:, None, :] - anchors[None, :, :]) ** 2, axis=2)
            vals = -coef * m.extended(np.maximum(-psi, 0.0)) + dist2
            out[s:s + p.shape[0]] = np.max(vals, axis=1)
        return out.reshape(pts.shape[:-1])

    return rho


def envelope_gap(rho: Callable, d: DomainSpec, count: int = 1009) -> float:
    """max of -rho over boundary points that are not mesh points."""
    probe = sample_boundary(d, count)
    return float(max(0.0, np.max(-rho(probe.points))))


def build_rho(d: DomainSpec, fam: PeakFamily, m: ModulusOmega, mesh: BoundaryMesh, grid: Grid,
              samples: int = 2000, seed: int = 0) -> DefiningRho:
    """rho(z) = max over mesh points w of -2 c2^2 omega(-psi_w(z)) + |z - w|^2."""
    if fam.c2 is None:
        rep = validate_peak(fam, d, m.g, interior_samples(d, samples, seed), seed=seed)
        if not rep.valid:
            raise PeakFamilyInvalid(f"peak family fails on {d.name}: {rep.negativity_violations} violations")
        c2, prov = rep.c2, "c2 fitted by validate_peak"
    else:
        c2, prov = fam.c2, fam.provenance
    if not math.isfinite(c2):
        raise PeakFamilyInvalid("c2 is not finite")
    coef = 2.0 * c2**2
    lin = PeakFamily(mesh.points, mesh.normals, fam.eta)
    func = _rho_envelope(mesh, lin.normals, coef, m)
    field_ = ScalarField.from_function(grid, func)
    hf = hessian_field(field_)
    st = hf.stencil
    inner = (grid.cls.ravel()[st.nodes] == INTERIOR)
    lam = hf.min_eigenvalue()
    lam = lam[inner & np.isfinite(lam)]
    pts = st.node_points()
    vals = field_.values.ravel()[st.nodes]
    mod = estimate_modulus(pts, vals, m.g, 2.0, ModulusConfig(seed=seed),
                           scales=dyadic_scales(0.5, 2 * grid.spacing))
    return DefiningRho(func, d, grid, field_.values, mesh, coef, c2,
                       float(np.min(lam)) if lam.size else math.nan,
                       mod.seminorm, mod.spread, envelope_gap(func, d), prov)


# ---------------------------------------------------------------------------
# barriers


@dataclass(eq=False)
class Barrier:
    kind: str  # sub, sub_envelope, upper, translated
    grid: Grid
    values: np.ndarray
    func: Optional[Callable] = None
    anchor: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, pts):
        if self.func is None:
            raise ValueError("barrier has grid values only")
        return self.func(np.asarray(pts, dtype=float))


def bracket_max(rho: Callable, d: DomainSpec, grid: Optional[Grid], mesh: BoundaryMesh,
                samples: int = 2000, seed: int = 0) -> float:
    """max over z in the closure and mesh points zeta of -2 rho(z) + |z - zeta|^2."""
    if grid is not None:
        pts = grid.points()[grid.active]
    else:
        pts = interior_samples(d, samples, seed)
    pts = np.concatenate([pts, mesh.points])
    r = rho(pts)
    best = 0.0
    for s in range(0, pts.shape[0], 2048):
        p = pts[s:s + 2048]
        d2 = np.sum((p[:, None, :] - mesh.points[None, :, :]) ** 2, axis=2)
        best = max(best, float(np.max(-2 * r[s:s + 2048, None] + d2)))
    return best


def choose_K(alpha: float, c_phi: float, h_root_sup: float, bracket: float) -> float:
    return max((2.0 / alpha) * bracket ** (1 - alpha / 2) * h_root_sup, c_phi)


def barrier_v(zeta, phi_zeta: float, ledger: ConstantLedger, rho: DefiningRho, grid: Grid) -> Barrier:
    """v_zeta(z) = phi(zeta) - K (-2 rho(z) + |z - zeta|^2)^(alpha/2)."""
    if ledger.violations():
        raise LedgerViolation("; ".join(ledger.violations()))
    zeta = np.asarray(zeta, dtype=float)
    K, a, pz = ledger.K, ledger.alpha, float(phi_zeta)
    # a sampled anchor carries a rounding residual in rho; remove it so the bracket vanishes at zeta
    r0 = float(rho(zeta[None])[0])

    def v(pts):
        pts = np.asarray(pts, dtype=float)
        b = -2.0 * (rho(pts) - r0) + np.sum((pts - zeta) ** 2, axis=-1)
        return pz - K * np.maximum(b, 0.0) ** (a / 2)

    vals = ScalarField.from_function(grid, v).values
    return Barrier("sub", grid, vals, v, zeta)


def boundary_domination(b: Barrier, phi: Callable, mesh: BoundaryMesh) -> float:
    """max over mesh points of v - phi (nonpositive when v is dominated)."""
    return float(np.max(b(mesh.points) - phi(mesh.points)))


def det_margin(b: Barrier, h: Callable, layers: int = 2) -> float:
    """min over nodes `layers` cells inside of det H(v) - h."""
    f = ScalarField(b.grid, b.values, b.func)
    hf = hessian_field(f)
    st = hf.stencil
    deep = b.grid.deep_mask(layers).ravel()[st.nodes]
    hv = h(st.node_points())
    return float(np.min((hf.det - hv)[deep]))


def barrier_seminorm(b: Barrier, d: DomainSpec, g: GIndex, alpha: float,
                     scales: Optional[Sequence[float]] = None, pairs: int = 2000, seed: int = 0):
    scales = dyadic_scales(0.5, 2.0**-9) if scales is None else scales
    return estimate_modulus_function(b.func, d, g, alpha, scales, ModulusConfig(pairs=pairs, seed=seed))


def barrier_envelope(barriers: Sequence[Barrier]) -> Barrier:
    if not barriers:
        raise ValueError("no barriers")
    grid = barriers[0].grid
    for b in barriers[1:]:
        if b.grid is not grid and (b.grid.shape != grid.shape or b.grid.spacing != grid.spacing):
            raise GridMismatch("barriers live on different grids")
    vals = np.fmax.reduce([b.values for b in barriers])
    funcs = [b.func for b in barriers if b.func is not None]

    def func(pts):
        return np.max(np.stack([f(pts) for f in funcs]), axis=0)

    return Barrier("sub_envelope", grid, vals, func if len(funcs) == len(barriers) else None)


def upper_barrier(phi: Callable, d: DomainSpec, grid: Grid) -> Barrier:
    """Discrete harmonic extension of phi (Shortley-Weller boundary rows)."""
    st = assemble(grid)
    nA = st.n_active
    fixed = st.fixed_values(phi)
    rows, cols, data = [], [], []
    rhs = np.zeros(nA)
    diag = -st.pc.sum(axis=1)
    rows.append(np.arange(nA))
    cols.append(np.arange(nA))
    data.append(diag)
    for j in range(st.planes):
        for q in range(4):
            idx = st.pidx[:, j, q]
            w = st.pw[:, j, q]
            act = idx < nA
            rows.append(np.flatnonzero(act))
            cols.append(idx[act])
            data.append(w[act])
            np.add.at(rhs, np.flatnonzero(~act), -w[~act] * fixed[idx[~act] - nA])
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(nA, nA))
    if grid.dim <= 2:
        u = spla.spsolve(A.tocsc(), rhs)
    else:
        # direct factorization fills in badly in 4D; Jacobi-preconditioned BiCGSTAB instead
        inv_diag = 1.0 / A.diagonal()
        M = spla.LinearOperator(A.shape, lambda x: inv_diag * x)
        u, info = spla.bicgstab(A, rhs, rtol=1e-13, atol=0.0, M=M, maxiter=20000)
        if info != 0:
            raise SolverDiverged(f"harmonic extension did not converge (info={info})")
    if not np.all(np.isfinite(u)):
        raise SolverDiverged("harmonic extension solve failed")
    return Barrier("upper", grid, st.scatter(u), None, None, {"nodes": nA})


# ---------------------------------------------------------------------------
# translation comparison


def gadget_constants(n: int, h_root_norm: float, max_abs_z2: float, v_norm: float, w_norm: float):
    """K1 = max_k C(n,k)^(1/k) * ||h^(1/n)||, K2 = K1 max|z|^2, K3 = max(||v||, ||w||)."""
    K1 = max(comb(n, k) ** (1.0 / k) for k in range(1, n + 1)) * h_root_norm
    return K1, K1 * max_abs_z2, max(v_norm, w_norm)


@dataclass
class GadgetReport:
    tau_norm: float
    max_excess: float  # max over nodes of V - u
    tol: float
    modulus_slack: float  # min over nodes of bound - (u(z+tau) - u(z))
    nodes: int
    warnings: list = field(default_factory=list)

    @property
    def comparison_passed(self) -> bool:
        return self.max_excess <= self.tol

    @property
    def modulus_passed(self) -> bool:
        return self.modulus_slack >= 0

    def to_dict(self) -> dict:
        return {"tau_norm": self.tau_norm, "max_excess": self.max_excess, "tol": self.tol,
                "comparison_passed": self.comparison_passed, "modulus_slack": self.modulus_slack,
                "modulus_passed": self.modulus_passed, "nodes": self.nodes, "warnings": self.warnings}


def translation_gadget(u: ScalarField, tau, ledger: ConstantLedger, g: GIndex, alpha: float,
                       grid: Optional[Grid] = None, tol: Optional[float] = None):
    """V(z, tau) = max(u(z), u(z + tau) + (K1|z|^2 - K2 - K3) g(1/|tau|)^(-alpha)).

    Shifted values use multilinear interpolation; nodes whose interpolation
    cell leaves the domain keep V = u.
    """
    grid = grid or u.grid
    if grid is not u.grid and (grid.shape != u.grid.shape or grid.spacing != u.grid.spacing):
        raise GridMismatch("field and grid differ")
    tau = np.asarray(tau, dtype=float)
    tn = float(np.linalg.norm(tau))
    if tn > 8 * grid.spacing:
        raise ShiftOutsideGrid(f"|tau| = {tn:g} exceeds 8 grid spacings")
    tol = 10 * grid.spacing**2 if tol is None else tol
    warnings = list(ledger.violations())
    act = grid.active
    pts = grid.points()[act]
    u0 = u.values[act]
    if tn == 0:
        return (Barrier("translated", grid, u.values.copy()),
                GadgetReport(0.0, 0.0, tol, math.inf, int(act.sum()), warnings))
    axes = [grid.origin[a] + grid.spacing * np.arange(grid.shape[a]) for a in range(grid.dim)]
    valid = np.isfinite(u.values)
    filled = np.where(valid, u.values, 0.0)
    interp = RegularGridInterpolator(axes, filled, bounds_error=False, fill_value=np.nan)
    bad = RegularGridInterpolator(axes, (~valid).astype(float), bounds_error=False, fill_value=1.0)
    shifted = pts + tau
    ok = bad(shifted) < 1e-12
    us = interp(shifted)
    gm = float(g(1.0 / tn)) ** -alpha
    V_tau = us + (ledger.K1 * np.sum(pts**2, axis=1) - ledger.K2 - ledger.K3) * gm
    V = np.where(ok, np.maximum(u0, V_tau), u0)
    excess = float(np.max(V - u0))
    bound = (ledger.K2 + ledger.K3) * gm
    slack = float(np.min(bound - (us[ok] - u0[ok]))) if np.any(ok) else math.inf
    vals = np.full(grid.shape, np.nan)
    vals[act] = V
    rep = GadgetReport(tn, excess, tol, slack, int(ok.sum()), warnings)
    if not rep.comparison_passed and warnings:
        rep.warnings.append("comparison failed with an inconsistent ledger")
    return Barrier("translated", grid, vals, None, None, {"tau": tau.tolist()}), rep
