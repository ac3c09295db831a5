"""Catalog domains, grid classification, boundary meshes and linear peak functions.

Points are real arrays of shape (..., 2n) ordered (x1, y1, x2, y2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateGrid, NonConvexDomain, RootNotBracketed

EXTERIOR, INTERIOR, BOUNDARY_ADJACENT, BOUNDARY = 0, 1, 2, 3
CLASS_NAMES = {EXTERIOR: "exterior", INTERIOR: "interior",
               BOUNDARY_ADJACENT: "boundary_adjacent", BOUNDARY: "boundary"}
ON_BOUNDARY_TOL = 1e-14


def to_complex(pts):
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0::2] + 1j * pts[..., 1::2]


def to_real(z):
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def _abs2(pts, j):
    return pts[..., 2 * j] ** 2 + pts[..., 2 * j + 1] ** 2


def _exp_term(modulus, s):
    # exp(1 - 1/|z1|^s), continuously extended by 0 at z1 = 0
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(1.0 - 1.0 / modulus**s)


@dataclass(frozen=True, eq=False)
class DomainSpec:
    catalog_id: str
    n: int
    r: Callable = field(repr=False)
    box_lo: tuple = ()
    box_hi: tuple = ()
    convex: bool = True
    param: Optional[float] = None
    radial: bool = False
    # half-width of an axis box known to contain the closure; sizes grids
    extent: float = 1.0

    @property
    def name(self) -> str:
        if self.catalog_id == "power_ellipsoid":
            return f"power-ellipsoid:{int(self.param)}"
        if self.catalog_id == "exp_ellipsoid":
            return f"exp-ellipsoid:{self.param:g}"
        return self.catalog_id

    @property
    def dim(self) -> int:
        return 2 * self.n if not self.radial else 2

    def __call__(self, pts):
        return self.r(np.asarray(pts, dtype=float))

    def contains(self, pts):
        return self(pts) < 0

    def gradient(self, pts, step=1e-7):
        pts = np.asarray(pts, dtype=float)
        out = np.empty_like(pts)
        for a in range(pts.shape[-1]):
            e = np.zeros(pts.shape[-1])
            e[a] = step
            out[..., a] = (self(pts + e) - self(pts - e)) / (2 * step)
        return out

    def circumradius(self) -> float:
        cached = _CIRCUMRADIUS.get(self.name)
        if cached is None:
            mesh = sample_boundary(self, 4000 if self.n == 2 else 720)
            cached = float(np.max(np.linalg.norm(mesh.points, axis=1)))
            _CIRCUMRADIUS[self.name] = cached
        return cached


_CIRCUMRADIUS: dict = {}


def disk() -> DomainSpec:
    return DomainSpec("disk", 1, lambda p: _abs2(p, 0) - 1.0, (-2.25,) * 2, (2.25,) * 2)


def ball2() -> DomainSpec:
    return DomainSpec("ball2", 2, lambda p: _abs2(p, 0) + _abs2(p, 1) - 1.0,
                      (-2.25,) * 4, (2.25,) * 4)


def power_ellipsoid(m: int) -> DomainSpec:
    m = int(m)
    if m < 1:
        raise ValueError("power ellipsoid needs m >= 1")
    return DomainSpec("power_ellipsoid", 2, lambda p: _abs2(p, 0) ** m + _abs2(p, 1) - 1.0,
                      (-2.25,) * 4, (2.25,) * 4, True, float(m))


def exp_ellipsoid(s: float) -> DomainSpec:
    if not 0 < s < 1:
        raise ValueError("exp ellipsoid needs s in (0, 1)")

    def r(p):
        return _exp_term(np.sqrt(_abs2(p, 0)), s) + _abs2(p, 1) - 1.0

    return DomainSpec("exp_ellipsoid", 2, r, (-2.25,) * 4, (2.25,) * 4, False, float(s))


def from_catalog(name: str) -> DomainSpec:
    name = name.strip()
    if name == "disk":
        return disk()
    if name == "ball2":
        return ball2()
    head, _, arg = name.partition(":")
    if head == "power-ellipsoid":
        return power_ellipsoid(int(arg))
    if head == "exp-ellipsoid":
        num, _, den = arg.partition("/")
        return exp_ellipsoid(float(num) / float(den) if den else float(num))
    raise ValueError(f"unknown domain {name!r}")


def reduced_domain(d: DomainSpec) -> DomainSpec:
    """The (r1, r2) = (|z1|, |z2|) section of a rotation-invariant C^2 domain.

    Mirrored in both radii so the classifier sees a symmetric region.
    """
    if d.n != 2:
        raise ValueError("radial reduction needs a domain in C^2")

    def r(p):
        p = np.asarray(p, dtype=float)
        full = np.zeros(p.shape[:-1] + (4,))
        full[..., 0] = np.abs(p[..., 0])
        full[..., 2] = np.abs(p[..., 1])
        return d.r(full)

    return DomainSpec(d.catalog_id, 2, r, (d.box_lo[0], d.box_lo[2]), (d.box_hi[0], d.box_hi[2]),
                      d.convex, d.param, radial=True, extent=d.extent)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid:
    domain: DomainSpec
    spacing: float
    origin: np.ndarray
    shape: tuple
    cls: np.ndarray = field(repr=False)
    # crossing fractions for boundary-adjacent nodes: flat node index -> (dim, 2) array,
    # column 0 for the minus side, 1 for the plus side; 1.0 where no crossing
    ba_nodes: np.ndarray = field(repr=False, default=None)
    ba_theta: np.ndarray = field(repr=False, default=None)
    max_residual: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def radial(self) -> bool:
        return self.domain.radial

    def coords(self, index) -> np.ndarray:
        return self.origin + self.spacing * np.asarray(index, dtype=float)

    def points(self) -> np.ndarray:
        axes = [self.origin[a] + self.spacing * np.arange(self.shape[a]) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def index_of(self, point) -> tuple:
        idx = np.rint((np.asarray(point, dtype=float) - self.origin) / self.spacing).astype(int)
        return tuple(int(i) for i in idx)

    @property
    def active(self) -> np.ndarray:
        return (self.cls == INTERIOR) | (self.cls == BOUNDARY_ADJACENT)

    def theta_of(self, flat_index: int) -> np.ndarray:
        pos = np.searchsorted(self.ba_nodes, flat_index)
        if pos < self.ba_nodes.size and self.ba_nodes[pos] == flat_index:
            return self.ba_theta[pos]
        return np.ones((self.dim, 2))

    def deep_mask(self, layers: int = 2) -> np.ndarray:
        """Interior nodes whose axis neighbors out to ``layers`` steps and whose
        diagonal neighbors are all interior."""
        inner = self.cls == INTERIOR
        out = inner.copy()
        for a in range(self.dim):
            for k in range(1, layers + 1):
                for sgn in (1, -1):
                    out &= _shifted(inner, a, sgn * k)
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                for sa in (1, -1):
                    for sb in (1, -1):
                        out &= _shifted(_shifted(inner, a, sa), b, sb)
        return out

    def export_csv(self, path, values=None, name="value"):
        pts = self.points().reshape(-1, self.dim)
        cls = self.cls.ravel()
        vals = None if values is None else np.asarray(values, dtype=float).ravel()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{a}" for a in range(self.dim)] + ["class"] + ([name] if vals is not None else []))
            for k in range(pts.shape[0]):
                row = [repr(float(x)) for x in pts[k]] + [CLASS_NAMES[int(cls[k])]]
                if vals is not None:
                    row.append(repr(float(vals[k])))
                w.writerow(row)

    def export_binary(self, path, values=None):
        """Flat little-endian float64 records: coordinates, class code, value."""
        pts = self.points().reshape(-1, self.dim)
        cols = [pts, self.cls.reshape(-1, 1).astype(float)]
        if values is not None:
            cols.append(np.asarray(values, dtype=float).reshape(-1, 1))
        np.hstack(cols).astype("<f8").tofile(path)


def _shifted(mask, axis, k):
    """out[i] = mask[i + k] along ``axis`` (False off the array)."""
    out = np.zeros_like(mask)
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if k > 0:
        src[axis] = slice(k, None)
        dst[axis] = slice(None, -k)
    else:
        src[axis] = slice(None, k)
        dst[axis] = slice(-k, None)
    out[tuple(dst)] = mask[tuple(src)]
    return out


def _bisect_edges(d: DomainSpec, starts, direction, length, iters=64):
    """Vectorized bisection for r(start + t*length*direction) = 0, t in (0, 1]."""
    lo = np.zeros(starts.shape[0])
    hi = np.ones(starts.shape[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = d(starts + (mid * length)[:, None] * direction) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.all(hi - lo <= 1e-17):
            break
    # pick whichever end has the smaller residual
    r_lo = np.abs(d(starts + (lo * length)[:, None] * direction))
    r_hi = np.abs(d(starts + (hi * length)[:, None] * direction))
    t = np.where(r_lo < r_hi, lo, hi)
    t = np.where(t <= 0, hi, t)
    return t, np.minimum(r_lo, r_hi)


def classify_grid(d: DomainSpec, spacing: float, origin=None, shape=None) -> Grid:
    """Classify a uniform grid with nodes at integer multiples of ``spacing``."""
    lo = np.asarray(d.box_lo, dtype=float)
    hi = np.asarray(d.box_hi, dtype=float)
    if spacing >= np.min(hi - lo) / 8:
        raise DegenerateGrid(f"spacing {spacing} too coarse for the bounding box")
    if origin is None:
        klo = np.full(lo.size, -np.ceil(d.extent / spacing) - 1)
        khi = -klo
        origin = klo * spacing
        shape = tuple(int(k) for k in (khi - klo + 1))
    origin = np.asarray(origin, dtype=float)
    dim = len(shape)
    axes = [origin[a] + spacing * np.arange(shape[a]) for a in range(dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rv = d(pts)
    inside = rv < -ON_BOUNDARY_TOL
    on = np.abs(rv) <= ON_BOUNDARY_TOL
    cls = np.full(shape, EXTERIOR, dtype=np.int8)
    cls[on] = BOUNDARY
    cls[inside] = INTERIOR
    ba = np.zeros(shape, dtype=bool)
    for a in range(dim):
        for sgn in (1, -1):
            ba |= inside & ~_shifted(inside, a, sgn)
    cls[ba] = BOUNDARY_ADJACENT
    if not np.any(cls == INTERIOR):
        raise DegenerateGrid("grid has no interior nodes")

    ba_nodes = np.flatnonzero(ba.ravel())
    theta = np.ones((ba_nodes.size, dim, 2))
    flat_pts = pts.reshape(-1, dim)
    flat_inside = inside.ravel()
    flat_on = on.ravel()
    strides = np.array([int(np.prod(shape[a + 1:])) for a in range(dim)])
    multi = np.stack(np.unravel_index(ba_nodes, shape), axis=1)
    max_res = 0.0
    for a in range(dim):
        for side, sgn in ((0, -1), (1, 1)):
            nb_idx = multi[:, a] + sgn
            valid = (nb_idx >= 0) & (nb_idx < shape[a])
            nb_flat = ba_nodes + sgn * strides[a]
            nb_in = np.zeros(ba_nodes.size, dtype=bool)
            nb_on = np.zeros(ba_nodes.size, dtype=bool)
            nb_in[valid] = flat_inside[nb_flat[valid]]
            nb_on[valid] = flat_on[nb_flat[valid]]
            cross = ~nb_in & ~nb_on
            if np.any(cross):
                e = np.zeros(dim)
                e[a] = sgn
                t, res = _bisect_edges(d, flat_pts[ba_nodes[cross]], e, np.full(cross.sum(), spacing))
                theta[cross, a, side] = t
                max_res = max(max_res, float(np.max(res)))
    return Grid(d, float(spacing), origin, tuple(shape), cls, ba_nodes, theta, max_res)


def radial_grid(d: DomainSpec, nodes_per_axis: int = 129, extent: float = 1.0) -> Grid:
    """Classify the reduced (r1, r2) grid on [0, extent]^2 with one ghost layer at -h."""
    red = d if d.radial else reduced_domain(d)
    h = extent / (nodes_per_axis - 1)
    count = int(np.ceil(red.extent / h)) + 2
    return classify_grid(red, h, origin=np.array([-h, -h]), shape=(count + 1, count + 1))


# ---------------------------------------------------------------------------
# boundary meshes


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.points.shape[0]


_PLASTIC = 1.324717957244746


def _directions(n: int, count: int, graded: bool = False) -> np.ndarray:
    k = np.arange(count)
    if n == 1:
        ang = 2 * np.pi * k / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    u = (k + 0.5) / count
    if graded:
        # z1 share of the direction log-uniform in [1e-6, 1]: resolves z1 -> 0
        u = 1.0 - 10.0 ** (-12.0 * u)
    t1 = 2 * np.pi * np.mod(k / _PLASTIC, 1.0)
    t2 = 2 * np.pi * np.mod(k / _PLASTIC**2, 1.0)
    a, b = np.sqrt(1 - u), np.sqrt(u)
    return np.stack([a * np.cos(t1), a * np.sin(t1), b * np.cos(t2), b * np.sin(t2)], axis=1)


def shoot_rays(d: DomainSpec, directions, anchor=None) -> np.ndarray:
    """Boundary points along rays from an interior anchor."""
    dirs = np.asarray(directions, dtype=float)
    anchor = np.zeros(dirs.shape[1]) if anchor is None else np.asarray(anchor, dtype=float)
    if d(anchor[None])[0] >= 0:
        raise RootNotBracketed("anchor is not interior")
    reach = float(np.linalg.norm(np.asarray(d.box_hi) - np.asarray(d.box_lo)))
    step = reach / 64
    lo = np.zeros(dirs.shape[0])
    hi = np.full(dirs.shape[0], np.nan)
    t = step
    while np.any(np.isnan(hi)) and t <= reach:
        out = d(anchor + t * dirs) >= 0
        newly = out & np.isnan(hi)
        hi[newly] = t
        lo[~out & np.isnan(hi)] = t
        t += step
    if np.any(np.isnan(hi)):
        raise RootNotBracketed("ray left the bounding box before the sign change")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        inside = d(anchor + mid[:, None] * dirs) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.all(hi - lo <= 4e-16 * hi):
            break
    r_lo = np.abs(d(anchor + lo[:, None] * dirs))
    r_hi = np.abs(d(anchor + hi[:, None] * dirs))
    t = np.where(r_lo <= r_hi, lo, hi)
    return anchor + t[:, None] * dirs


def sample_boundary(d: DomainSpec, count: int, anchor=None, graded: bool = False) -> BoundaryMesh:
    if count < 4:
        raise ValueError("need at least 4 boundary points")
    dirs = _directions(d.n, count, graded)
    pts = shoot_rays(d, dirs, anchor)
    grad = d.gradient(pts)
    normals = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    radius = np.linalg.norm(pts, axis=1)
    cosang = np.abs(np.sum(normals * dirs, axis=1))
    w = radius ** (2 * d.n - 1) / np.maximum(cosang, 1e-12)
    return BoundaryMesh(pts, normals, w / w.sum())


def interior_samples(d: DomainSpec, count: int, seed: int = 0) -> np.ndarray:
    """Uniform random interior points by rejection from the bounding box."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(d.box_lo), np.asarray(d.box_hi)
    out = []
    got = 0
    while got < count:
        cand = lo + (hi - lo) * rng.random((4 * count, lo.size))
        keep = cand[d(cand) < 0]
        out.append(keep)
        got += keep.shape[0]
    return np.concatenate(out)[:count]


# ---------------------------------------------------------------------------
# peak functions


def peak_linear(d: DomainSpec, zeta, candidate: bool = False) -> Callable:
    """psi(z) = Re<nu, z - zeta> with nu the unit outward normal at zeta.

    Raises NonConvexDomain on domains not flagged convex unless
    ``candidate`` is set, in which case the caller must validate it.
    """
    if not d.convex and not candidate:
        raise NonConvexDomain(f"{d.name} is not flagged convex")
    zeta = np.asarray(zeta, dtype=float)
    g = d.gradient(zeta[None])[0]
    nu = g / np.linalg.norm(g)
    return lambda pts: (np.asarray(pts, dtype=float) - zeta) @ nu


@dataclass(frozen=True, eq=False)
class PeakFamily:
    """Linear peak functions anchored at boundary mesh points."""

    anchors: np.ndarray
    normals: np.ndarray
    eta: float
    c1: Optional[float] = None
    c2: Optional[float] = None
    provenance: str = "linear peaks; constants not fitted"

    def __len__(self):
        return self.anchors.shape[0]

    def values(self, pts) -> np.ndarray:
        """psi_k(z) for every anchor k and point z, shape (anchors, points)."""
        pts = np.asarray(pts, dtype=float)
        return self.normals @ pts.T - np.sum(self.normals * self.anchors, axis=1)[:, None]

    def with_constants(self, c1, c2, provenance) -> "PeakFamily":
        return replace(self, c1=float(c1), c2=float(c2), provenance=provenance)


def linear_peak_family(d: DomainSpec, mesh: BoundaryMesh, eta: float = 1.0,
                       candidate: bool = False) -> PeakFamily:
    if not d.convex and not candidate:
        raise NonConvexDomain(f"{d.name} is not flagged convex")
    return PeakFamily(mesh.points.copy(), mesh.normals.copy(), float(eta))


@dataclass
class PeakReport:
    c1: float
    c2: float
    negativity_violations: int
    violating_anchors: list
    pairs: int
    samples: int

    @property
    def valid(self) -> bool:
        return self.negativity_violations == 0 and math.isfinite(self.c2)

    def to_dict(self):
        return {"c1": self.c1, "c2": self.c2, "negativity_violations": self.negativity_violations,
                "violating_anchors": self.violating_anchors[:20], "pairs": self.pairs,
                "samples": self.samples}


def validate_peak(fam: PeakFamily, d: DomainSpec, g, samples, pairs: int = 4000,
                  seed: int = 0) -> PeakReport:
    """Fit c1 (Hoelder quotient of order eta) and c2 = max g((-psi)^(-1/eta)) |z - zeta|."""
    pts = np.asarray(samples, dtype=float)
    psi = fam.values(pts)
    dist = np.linalg.norm(pts[None, :, :] - fam.anchors[:, None, :], axis=2)
    at_peak = dist < 1e-12
    bad = (psi >= 0) & ~at_peak
    neg = -psi
    t = np.ones_like(neg)
    ok = ~at_peak & ~bad
    # power-law g is closed form on all of (0, inf); other sources live on [1, inf)
    whole_line = getattr(getattr(g, "source", None), "kind", None) == "power" and g.closed_form is None
    with np.errstate(divide="ignore"):
        t[ok] = neg[ok] ** (-1.0 / fam.eta)
    if not whole_line:
        t = np.maximum(t, 1.0)
    c2_vals = np.zeros_like(neg)
    c2_vals[ok] = np.asarray(g(t[ok])) * dist[ok]
    c2 = float(np.max(c2_vals)) if np.any(ok) else 0.0
    if np.any(bad):
        c2 = math.inf

    rng = np.random.default_rng(seed)
    i = rng.integers(0, pts.shape[0], pairs)
    j = rng.integers(0, pts.shape[0], pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    sep = np.linalg.norm(pts[i] - pts[j], axis=1)
    keep = sep > 1e-14
    i, j, sep = i[keep], j[keep], sep[keep]
    quot = np.abs(psi[:, i] - psi[:, j]) / sep**fam.eta
    c1 = float(np.max(quot)) if quot.size else 0.0
    return PeakReport(c1, c2, int(bad.sum()), np.flatnonzero(bad.any(axis=1)).tolist(),
                      int(i.size), int(pts.shape[0]))
