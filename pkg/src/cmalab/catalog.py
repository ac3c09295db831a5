"""Named boundary data, densities and the registry of closed-form solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import DomainSpec, _abs2


@dataclass(frozen=True, eq=False)
class BoundaryDatum:
    name: str
    func: Callable
    const: Optional[float] = None
    alpha: Optional[float] = None
    minimum: Optional[float] = None  # exact boundary minimum when known

    def __call__(self, pts):
        return np.asarray(self.func(np.asarray(pts, dtype=float)), dtype=float)


@dataclass(frozen=True, eq=False)
class Density:
    name: str
    func: Callable
    const: Optional[float] = None

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.const is not None:
            return np.full(pts.shape[:-1], self.const)
        return np.asarray(self.func(pts), dtype=float)

    @property
    def is_zero(self) -> bool:
        return self.const == 0.0


def _num(text: str) -> float:
    num, _, den = text.partition("/")
    return float(num) / float(den) if den else float(num)


def constant_datum(c: float) -> BoundaryDatum:
    c = float(c)
    name = "zero" if c == 0 else ("one" if c == 1 else f"const:{c:g}")
    return BoundaryDatum(name, lambda p: np.full(p.shape[:-1], c), const=c)


def abs_z1_alpha(alpha: float) -> BoundaryDatum:
    alpha = float(alpha)
    return BoundaryDatum(f"abs_z1_alpha:{alpha:g}", lambda p: _abs2(p, 0) ** (alpha / 2), alpha=alpha, minimum=0.0)


def phi_from_catalog(name: str, alpha: Optional[float] = None) -> BoundaryDatum:
    name = name.strip()
    head, _, arg = name.partition(":")
    if name == "zero":
        return constant_datum(0.0)
    if name == "one":
        return constant_datum(1.0)
    if head == "const":
        return constant_datum(_num(arg))
    if name == "re_z1":
        return BoundaryDatum("re_z1", lambda p: p[..., 0].copy())
    if name == "abs_z1_sq":
        return BoundaryDatum("abs_z1_sq", lambda p: _abs2(p, 0), minimum=0.0)
    if head == "abs_z1_alpha":
        if arg:
            return abs_z1_alpha(_num(arg))
        if alpha is None:
            raise ValueError("abs_z1_alpha needs an exponent")
        return abs_z1_alpha(alpha)
    raise ValueError(f"unknown boundary datum {name!r}")


def custom_phi(func: Callable, name: str = "custom") -> BoundaryDatum:
    return BoundaryDatum(name, func)


def h_from_catalog(name: str) -> Density:
    name = name.strip()
    head, _, arg = name.partition(":")
    if name == "zero":
        return Density("zero", None, 0.0)
    if name == "one":
        return Density("one", None, 1.0)
    if head == "const":
        c = _num(arg)
        if c < 0:
            raise ValueError("density must be nonnegative")
        return Density(f"const:{c:g}", None, c)
    raise ValueError(f"unknown density {name!r}")


def custom_h(func: Callable, name: str = "custom") -> Density:
    return Density(name, func)


# ---------------------------------------------------------------------------
# oracles: closed-form solutions keyed by (domain, boundary datum, density)


def oracle_for(domain: DomainSpec, phi: BoundaryDatum, h: Density) -> Optional[Callable]:
    if h.is_zero and phi.const is not None:
        c = phi.const
        return lambda p: np.full(np.asarray(p).shape[:-1], c)
    if domain.catalog_id in ("disk", "ball2") and h.const == 1.0 and phi.const == 0.0:
        return lambda p: np.sum(np.asarray(p, dtype=float) ** 2, axis=-1) - 1.0
    if h.is_zero and phi.name == "re_z1":
        return lambda p: np.asarray(p, dtype=float)[..., 0].copy()
    if h.is_zero and phi.alpha is not None and phi.name.startswith("abs_z1_alpha"):
        # |z1|^alpha depends on z1 alone: plurisubharmonic with vanishing
        # Monge-Ampere mass, so it is the solution on any domain
        return phi.func
    return None


_LISTING = (
    ("domain", "disk", "unit disk in C"),
    ("domain", "ball2", "unit ball in C^2"),
    ("domain", "power-ellipsoid:<m>", "{|z1|^(2m) + |z2|^2 < 1}, finite type 2m"),
    ("domain", "exp-ellipsoid:<s>", "{exp(1 - |z1|^-s) + |z2|^2 < 1}, infinite type"),
    ("f", "power:<eps>", "f(t) = t^eps, finite type"),
    ("f", "logpower:<s>", "f(t) = (1 + log t)^(1/s), infinite type"),
    ("f", "strongly-pseudoconvex", "alias of power:1/2"),
    ("phi", "zero", "constant 0"),
    ("phi", "one", "constant 1"),
    ("phi", "const:<c>", "constant c"),
    ("phi", "re_z1", "Re z1 (pluriharmonic)"),
    ("phi", "abs_z1_sq", "|z1|^2"),
    ("phi", "abs_z1_alpha", "|z1|^alpha, the exp-ellipsoid boundary datum"),
    ("h", "zero", "homogeneous equation"),
    ("h", "one", "unit density"),
    ("h", "const:<c>", "constant density c >= 0"),
)


def catalog_list() -> list[str]:
    return [f"{kind:6s} {name:20s} {prov}" for kind, name, prov in _LISTING]
