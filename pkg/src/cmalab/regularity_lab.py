"""Sampled moduli of continuity, membership verdicts and the exp-ellipsoid sharpness probe."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientSamples, InsufficientScales, OutOfRange, OutsideDomain
from .geometry import BoundaryMesh, DomainSpec, exp_ellipsoid, interior_samples, sample_boundary
from .index_calculus import GIndex, IndexFunction, ellipsoid_g
from .reports import SCHEMA_VERSION

MEMBER, NON_MEMBER, INCONCLUSIVE = "member", "non_member", "inconclusive"


@dataclass
class ModulusConfig:
    pairs: int = 20000  # per scale
    focus_fraction: float = 0.7
    seed: int = 0
    directions: int = 2


@dataclass
class ModulusReport:
    scales: np.ndarray  # descending
    M_raw: np.ndarray
    M: np.ndarray  # cumulative max, nondecreasing in delta
    ratios: np.ndarray
    pair_counts: np.ndarray
    G: str
    alpha: float
    seed: int
    spread_cap: float = 10.0

    @property
    def spread(self) -> float:
        nz = self.ratios[self.ratios > 0]
        if nz.size == 0:
            return 1.0
        return float(nz.max() / nz.min())

    @property
    def verdict(self) -> str:
        return "bounded" if self.spread <= self.spread_cap else "unbounded"

    @property
    def seminorm(self) -> float:
        return float(np.max(self.ratios)) if self.ratios.size else 0.0

    def rows(self):
        for k in range(self.scales.size):
            yield (float(self.scales[k]), float(self.M_raw[k]), float(self.M[k]),
                   float(self.ratios[k]), int(self.pair_counts[k]))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "G": self.G,
            "alpha": self.alpha,
            "seed": self.seed,
            "scales": self.scales.tolist(),
            "M_raw": self.M_raw.tolist(),
            "M": self.M.tolist(),
            "ratios": self.ratios.tolist(),
            "pair_counts": self.pair_counts.tolist(),
            "spread": self.spread,
            "verdict": self.verdict,
        }


def dyadic_scales(hi: float, lo: float) -> np.ndarray:
    k = int(math.floor(math.log2(hi / lo) + 1e-12))
    return hi * 2.0 ** -np.arange(k + 1)


def _unit(rng, count, dim):
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _finish(scales, diffs, dists, G, alpha, seed) -> ModulusReport:
    m_raw = np.zeros(scales.size)
    ratios = np.zeros(scales.size)
    counts = np.zeros(scales.size, dtype=int)
    for k in range(scales.size):
        du, dd = diffs[k], dists[k]
        counts[k] = du.size
        if du.size:
            m_raw[k] = float(np.max(du))
            ratios[k] = float(np.max(du * np.asarray(G(1.0 / dd), dtype=float) ** alpha))
    # scales descend, so the cumulative max runs from the smallest scale up
    M = np.maximum.accumulate(m_raw[::-1])[::-1]
    return ModulusReport(scales, m_raw, M, ratios, counts, G.name, float(alpha), seed)


def estimate_modulus(points, values, G: GIndex, alpha: float, cfg: Optional[ModulusConfig] = None,
                     scales: Optional[Sequence[float]] = None, focus_distance=None) -> ModulusReport:
    """Dyadic-scale modulus of sampled values.

    For every scale delta, anchors are paired with the sample nearest to a
    random target at distance in [delta, 2 delta); the pair is kept when its
    true separation lies in that window. ``focus_distance`` (distance of each
    sample to the boundary) steers a fraction of anchors to within 4 delta
    of the boundary.
    """
    cfg = cfg or ModulusConfig()
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    if pts.shape[0] < 100:
        raise InsufficientSamples(f"need at least 100 samples, got {pts.shape[0]}")
    tree = cKDTree(pts)
    if scales is None:
        nn, _ = tree.query(pts[: min(2000, pts.shape[0])], k=2)
        step = float(np.median(nn[:, 1]))
        diam = float(np.max(np.ptp(pts, axis=0)))
        scales = dyadic_scales(min(diam / 4, 0.5), 2 * step)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    rng = np.random.default_rng(cfg.seed)
    N, dim = pts.shape
    # differences at round-off level carry no modulus information
    floor = 64 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(vals))))
    diffs, dists = [], []
    for delta in scales:
        if N <= cfg.pairs:
            anchors = np.arange(N)
        else:
            n_focus = 0
            pool = None
            if focus_distance is not None:
                pool = np.flatnonzero(np.asarray(focus_distance) <= 4 * delta)
                n_focus = min(int(cfg.focus_fraction * cfg.pairs), pool.size)
            rest = rng.choice(N, cfg.pairs - n_focus, replace=False)
            anchors = rest if n_focus == 0 else np.concatenate([rng.choice(pool, n_focus, replace=False), rest])
        a = np.repeat(anchors, cfg.directions)
        radius = delta * (1 + rng.random(a.size))
        target = pts[a] + radius[:, None] * _unit(rng, a.size, dim)
        _, b = tree.query(target)
        sep = np.linalg.norm(pts[b] - pts[a], axis=1)
        keep = (sep >= delta) & (sep < 2 * delta)
        du = np.abs(vals[b[keep]] - vals[a[keep]])
        du[du <= floor] = 0.0
        diffs.append(du)
        dists.append(sep[keep])
    return _finish(scales, diffs, dists, G, alpha, cfg.seed)


def estimate_modulus_function(func: Callable, domain: DomainSpec, G: GIndex, alpha: float,
                              scales: Sequence[float], cfg: Optional[ModulusConfig] = None) -> ModulusReport:
    """Modulus of a callable on a domain, pairs generated at each scale.

    Focused anchors are boundary mesh points pushed inward by up to 4 delta;
    in C^2 half of the mesh is graded toward z1 = 0.
    """
    cfg = cfg or ModulusConfig()
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    rng = np.random.default_rng(cfg.seed)
    n_focus = int(cfg.focus_fraction * cfg.pairs)
    m = max(64, n_focus // 4)
    mesh = sample_boundary(domain, m)
    if domain.n == 2:
        graded = sample_boundary(domain, m, graded=True)
        mesh = BoundaryMesh(np.concatenate([mesh.points, graded.points]),
                            np.concatenate([mesh.normals, graded.normals]),
                            np.concatenate([mesh.weights, graded.weights]) / 2)
    bulk = interior_samples(domain, cfg.pairs - n_focus, cfg.seed)
    dim = mesh.points.shape[1]
    diffs, dists = [], []
    for delta in scales:
        pick = rng.integers(0, len(mesh), n_focus)
        depth = 4 * delta * rng.random(n_focus)
        focus = mesh.points[pick] - depth[:, None] * mesh.normals[pick]
        anchors = np.concatenate([focus[domain(focus) <= 0], bulk])
        a = np.repeat(anchors, cfg.directions, axis=0)
        radius = delta * (1 + rng.random(a.shape[0]))
        b = a + radius[:, None] * _unit(rng, a.shape[0], dim)
        keep = domain(b) <= 0
        a, b = a[keep], b[keep]
        diffs.append(np.abs(func(b) - func(a)))
        dists.append(np.linalg.norm(b - a, axis=1))
    return _finish(scales, diffs, dists, G, alpha, cfg.seed)


def membership_verdict(r: ModulusReport, spread_cap: float) -> str:
    """non_member if the last four ratios (smallest scales) strictly increase with
    cumulative growth at least 2; member if the spread is within the cap."""
    if r.scales.size < 4:
        raise InsufficientScales(f"need at least 4 scales, got {r.scales.size}")
    tail = r.ratios[-4:]
    if np.all(np.diff(tail) > 0) and tail[0] > 0 and tail[-1] >= 2 * tail[0]:
        return NON_MEMBER
    if r.spread <= spread_cap:
        return MEMBER
    return INCONCLUSIVE


def fit_holder_exponent(r: ModulusReport) -> float:
    """Least-squares slope of log M against log delta."""
    ok = r.M > 0
    if ok.sum() < 2:
        return math.inf
    return float(np.polyfit(np.log(r.scales[ok]), np.log(r.M[ok]), 1)[0])


# ---------------------------------------------------------------------------
# exp-ellipsoid closed form


def closed_form_u_E(z, s: float, alpha: float, tol: float = 1e-12):
    """u = (1 - log(1 - |z2|^2))**(-alpha/s) on the closure of E, 0 where |z2| = 1.

    ``z`` holds real coordinates (x1, y1, x2, y2) in its last axis.
    """
    z = np.asarray(z, dtype=float)
    E = exp_ellipsoid(s)
    if np.any(E(z) > tol):
        raise OutsideDomain("point lies outside the closure of E")
    w = 1.0 - (z[..., 2] ** 2 + z[..., 3] ** 2)
    out = np.zeros(w.shape)
    pos = w > 0
    out[pos] = (1.0 - np.log(w[pos])) ** (-alpha / s)
    return out if out.ndim else float(out)


@dataclass
class SharpnessReport:
    s: float
    alpha: float
    rows: list
    exponent_delta_u: float
    exponent_g_bound: float
    vd3_spread: float

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "s": self.s, "alpha": self.alpha, "rows": self.rows,
                "exponent_delta_u": self.exponent_delta_u, "exponent_g_bound": self.exponent_g_bound,
                "vd3_spread": self.vd3_spread}


SHARPNESS_COLUMNS = ("eps", "u_z", "u_w", "delta_u", "g_bound", "f_u_z", "f_u_w",
                     "vd2", "vd3", "ratio_delta_u_g")


def sharpness_probe(s: float, alpha: float, eps: Sequence[float]) -> SharpnessReport:
    """Tabulate the exp-ellipsoid quantities at z = (0, 1 - eps) and w = (0, 1 - 2 eps)."""
    eps = np.asarray(eps, dtype=float)
    if np.any((eps <= 0) | (eps >= 0.25)):
        raise OutOfRange("eps must lie in (0, 1/4)")
    f = IndexFunction.logpower(s)
    g = ellipsoid_g(s)
    rows = []
    for e in eps:
        uz = closed_form_u_E(np.array([0.0, 0.0, 1 - e, 0.0]), s, alpha)
        uw = closed_form_u_E(np.array([0.0, 0.0, 1 - 2 * e, 0.0]), s, alpha)
        fz, fw = float(f(e**-2)), float(f((2 * e) ** -2))
        gb = float(g(1 / e)) ** -alpha
        rows.append({
            "eps": float(e), "u_z": uz, "u_w": uw, "delta_u": abs(uz - uw), "g_bound": gb,
            "f_u_z": fz**-alpha, "f_u_w": fw**-alpha,
            "vd2": abs(fz - fw) ** -alpha, "vd3": (fz - fw) / float(g(1 / e)),
            "ratio_delta_u_g": abs(uz - uw) / gb,
        })
    x = np.log(np.log(1 / eps))
    if np.unique(x).size >= 2:
        du = np.polyfit(x, np.log([r["delta_u"] for r in rows]), 1)[0]
        gbx = np.polyfit(x, np.log([r["g_bound"] for r in rows]), 1)[0]
    else:
        du = gbx = math.nan
    vd3 = np.array([r["vd3"] for r in rows])
    return SharpnessReport(float(s), float(alpha), rows, float(du), float(gbx),
                           float(vd3.max() / vd3.min()))
