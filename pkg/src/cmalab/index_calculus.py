"""Index functions f, the derived index g, the modulus omega, and witness checks.

For an index function f on [1, inf) the derived index is

    1/g(t) = int_t^inf da / (a f(a)),

and omega(delta) = g(delta**(-1/eta))**(-2) is the modulus used to build
Hoelder-regular defining functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import DivergentTail, OutOfRange, SampleOutsideStrip, ToleranceNotMet
from .reports import PropertyReport, PropertyResult, verdict

SLACK = 1e-9


def _slack(*scales):
    return SLACK * (1.0 + max(float(np.max(np.abs(s))) for s in scales))


@dataclass(frozen=True)
class IndexFunction:
    """A catalogued index function f(t), t >= 1.

    ``kind`` is one of ``"power"`` (f = t**eps), ``"logpower"``
    (f = (1 + log t)**(1/s)) or ``"custom"``.
    """

    kind: str
    param: Optional[float] = None
    func: Optional[Callable] = field(default=None, compare=False)
    deriv: Optional[Callable] = field(default=None, compare=False)
    convergent: bool = False
    label: Optional[str] = None

    # -- constructors -------------------------------------------------
    @classmethod
    def power(cls, eps: float) -> "IndexFunction":
        if not eps > 0:
            raise ValueError("power index needs eps > 0")
        return cls("power", float(eps))

    @classmethod
    def logpower(cls, s: float) -> "IndexFunction":
        if not 0 < s:
            raise ValueError("logpower index needs s > 0")
        return cls("logpower", float(s))

    @classmethod
    def strongly_pseudoconvex(cls) -> "IndexFunction":
        return cls("power", 0.5, label="strongly-pseudoconvex")

    @classmethod
    def custom(cls, func, deriv=None, convergent=False, label="custom") -> "IndexFunction":
        return cls("custom", None, func, deriv, bool(convergent), label)

    @classmethod
    def from_catalog(cls, name: str) -> "IndexFunction":
        name = name.strip()
        if name == "strongly-pseudoconvex":
            return cls.strongly_pseudoconvex()
        head, _, arg = name.partition(":")
        try:
            value = float(_fraction(arg))
        except ValueError:
            raise ValueError(f"unknown index function {name!r}") from None
        if head == "power":
            return cls.power(value)
        if head == "logpower":
            return cls.logpower(value)
        raise ValueError(f"unknown index function {name!r}")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        return f"{self.kind}:{self.param:g}"

    # -- evaluation ---------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return t**self.param
        if self.kind == "logpower":
            return (1.0 + np.log(t)) ** (1.0 / self.param)
        return np.asarray(self.func(t), dtype=float)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return self.param * t ** (self.param - 1.0)
        if self.kind == "logpower":
            s = self.param
            return (1.0 / s) * (1.0 + np.log(t)) ** (1.0 / s - 1.0) / t
        if self.deriv is not None:
            return np.asarray(self.deriv(t), dtype=float)
        step = np.maximum(1e-6 * t, 1e-6)
        return (self(t + step) - self(t - step)) / (2.0 * step)

    def log_at_log(self, L):
        """log f(e**L), finite even when e**L overflows."""
        L = np.asarray(L, dtype=float)
        if self.kind == "power":
            return self.param * L
        if self.kind == "logpower":
            return np.log1p(L) / self.param
        with np.errstate(over="ignore"):
            return np.log(self(np.exp(L)))

    def elasticity_at_log(self, L):
        """a f'(a) / f(a) at a = e**L."""
        L = np.asarray(L, dtype=float)
        if self.kind == "power":
            return np.full_like(L, self.param)
        if self.kind == "logpower":
            return 1.0 / (self.param * (1.0 + L))
        a = np.exp(L)
        return a * self.derivative(a) / self(a)

    def closed_form_g(self):
        if self.kind == "power":
            eps = self.param
            return lambda t: eps * np.asarray(t, dtype=float) ** eps
        if self.kind == "logpower":
            p = 1.0 / self.param - 1.0
            return lambda t: p * (1.0 + np.log(np.asarray(t, dtype=float))) ** p
        return None

    def check_invariants(self, t_samples=None) -> PropertyReport:
        """Sampled check of f >= 1, f nondecreasing, f(t)/sqrt(t) nonincreasing."""
        if t_samples is None:
            t_samples = np.logspace(0, 8, 400)
        t = np.asarray(t_samples, dtype=float)
        ft = self(t)
        res = []
        slack = _slack(ft)
        res.append(_result("f >= 1", ft - 1.0, t, slack))
        res.append(_result("f nondecreasing", np.diff(ft), t[1:], slack))
        q = ft / np.sqrt(t)
        res.append(_result("f/sqrt(t) nonincreasing", -np.diff(q), t[1:], _slack(q)))
        return PropertyReport(f"index function {self.name}", res,
                              {"validity_start": self.validity_start()})

    def validity_start(self) -> float:
        """Smallest t from which f(t)/sqrt(t) is nonincreasing."""
        if self.kind == "power":
            return 1.0 if self.param <= 0.5 else math.inf
        if self.kind == "logpower":
            # elasticity 1/(s(1+log t)) <= 1/2
            return max(1.0, math.exp(2.0 / self.param - 1.0))
        return 1.0


def _fraction(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def _result(name, slacks, points, tol, details=None):
    slacks = np.asarray(slacks, dtype=float)
    if slacks.size == 0:
        return PropertyResult(name, "pass", math.inf, [], details or {})
    worst = float(np.min(slacks))
    bad = np.flatnonzero(slacks < -tol)
    pts = np.asarray(points)
    witnesses = [pts[i].tolist() for i in bad[:5]]
    return PropertyResult(name, verdict(bad.size == 0), worst, witnesses, details or {})


# ---------------------------------------------------------------------------
# g from f


def _tail_integrand(f: IndexFunction, log_t: float):
    # a = t * exp(exp(y) - 1): da/a = exp(y) dy, so the tail integral becomes
    # int_0^inf exp(y) / f(a(y)) dy.
    def q(y):
        L = log_t + math.expm1(y)
        return math.exp(y - float(f.log_at_log(L)))

    def decay_rate(y):
        L = log_t + math.expm1(y)
        return math.exp(y) * float(f.elasticity_at_log(L)) - 1.0

    return q, decay_rate


def inverse_g_quadrature(f: IndexFunction, t: float, tol: float = 1e-10):
    """Return (int_t^inf da/(a f(a)), certified relative error bound)."""
    if f.kind == "logpower" and not 1.0 / f.param > 1.0:
        raise DivergentTail(f"logpower:{f.param:g} needs 1/s > 1")
    if f.kind == "custom" and not f.convergent:
        raise DivergentTail("custom index function without asserted convergence")
    q, rate = _tail_integrand(f, math.log(t))
    total = 0.0
    err = 0.0
    lo, hi = 0.0, 1.0
    while hi <= 704.0:
        piece, piece_err = integrate.quad(q, lo, hi, epsabs=0.0, epsrel=tol / 8, limit=400)
        total += piece
        err += piece_err
        # -(log q)' >= rate(hi) on [hi, inf) when the rate is nondecreasing there,
        # so the remainder is at most q(hi) / rate(hi).
        probes = [min(hi * c, 709.0) for c in (1.0, 1.25, 1.5, 2.0, 4.0)]
        rates = [rate(y) for y in probes]
        if rates[0] > 0 and all(b >= a * (1 - 1e-12) for a, b in zip(rates, rates[1:])):
            bound = q(hi) / rates[0]
            if bound <= tol / 4 * total and err <= tol / 4 * total:
                return total + bound / 2, (bound / 2 + err) / total
        lo, hi = hi, 2.0 * hi
    if rate(700.0) <= 0:
        raise DivergentTail(f"tail of 1/(a f(a)) does not decay for {f.name}")
    raise ToleranceNotMet(f"cannot certify relative tolerance {tol:g} for {f.name} at t={t:g}")


def compute_g(f: IndexFunction, t: float, tol: float = 1e-10, method: str = "auto") -> float:
    """g(t) = (int_t^inf da/(a f(a)))**-1.

    ``method`` is ``"auto"`` (closed form when the kind has one),
    ``"closed"`` or ``"quadrature"``.
    """
    if t < 1:
        raise OutOfRange(f"g is defined for t >= 1, got {t}")
    if f.kind == "logpower" and not 1.0 / f.param > 1.0:
        raise DivergentTail(f"logpower:{f.param:g} needs 1/s > 1")
    closed = f.closed_form_g()
    if method == "closed" or (method == "auto" and closed is not None):
        if closed is None:
            raise ValueError(f"{f.name} has no closed-form g")
        return float(closed(t))
    inv, _ = inverse_g_quadrature(f, float(t), tol)
    return 1.0 / inv


@dataclass(frozen=True)
class GIndex:
    """The derived index g, evaluated in closed form or by quadrature."""

    source: IndexFunction
    closed_form: Optional[Callable] = field(default=None, compare=False)
    quadrature_tolerance: float = 1e-10
    label: Optional[str] = None

    @classmethod
    def from_formula(cls, func, label, source=None) -> "GIndex":
        src = source or IndexFunction.custom(lambda t: np.ones_like(t), label="unspecified")
        return cls(src, func, label=label)

    @classmethod
    def from_catalog(cls, name: str) -> "GIndex":
        """Parse a modulus index name.

        ``t`` or ``power-g:<a>`` give t**a; ``ellipsoid-g:<s>`` gives
        (1 + log t)**(1/s - 1); ``g:<f name>`` derives g from a catalogued f.
        """
        name = name.strip()
        if name == "t":
            return cls.from_formula(lambda t: np.asarray(t, dtype=float), "t")
        head, _, arg = name.partition(":")
        if head == "power-g":
            a = _fraction(arg)
            return cls.from_formula(lambda t: np.asarray(t, dtype=float) ** a, name)
        if head == "ellipsoid-g":
            return ellipsoid_g(_fraction(arg))
        if head == "g":
            return cls(IndexFunction.from_catalog(arg))
        raise ValueError(f"unknown modulus index {name!r}")

    @property
    def name(self) -> str:
        return self.label or f"g[{self.source.name}]"

    def __call__(self, t):
        closed = self.closed_form or self.source.closed_form_g()
        if closed is not None:
            return closed(t)
        t_arr = np.asarray(t, dtype=float)
        flat = [compute_g(self.source, float(x), self.quadrature_tolerance) for x in t_arr.ravel()]
        return np.asarray(flat).reshape(t_arr.shape)


def ellipsoid_g(s: float) -> GIndex:
    """The exp-ellipsoid index g(t) = (1 + log t)**(1/s - 1), without the 1/s - 1 factor."""
    p = 1.0 / s - 1.0
    return GIndex.from_formula(
        lambda t: (1.0 + np.log(np.asarray(t, dtype=float))) ** p,
        f"ellipsoid-g:{s:g}",
        IndexFunction.logpower(s),
    )


# ---------------------------------------------------------------------------
# the modulus omega


def concavity_margin(f: IndexFunction, g: GIndex, eta: float, deltas) -> float:
    """min over samples of 1 - (g/f + t f'/f)/eta at t = delta**(-1/eta).

    A nonnegative value makes omega concave at every sampled delta.
    """
    t = np.asarray(deltas, dtype=float) ** (-1.0 / eta)
    bracket = g(t) / f(t) + t * f.derivative(t) / f(t)
    return float(np.min(1.0 - bracket / eta))


def select_eta(f: IndexFunction, deltas, g: Optional[GIndex] = None) -> tuple[float, float]:
    """Pick eta in (0, 1] maximizing the concavity margin at the sampled deltas.

    Coarse grid first, then a bounded scalar search around the best grid
    point. Ties go to the larger eta. Returns (eta, margin).
    """
    g = g or GIndex(f)
    deltas = np.asarray(deltas, dtype=float)

    def margin(eta):
        with np.errstate(over="ignore", invalid="ignore"):
            m = concavity_margin(f, g, eta, deltas)
        return m if math.isfinite(m) else -math.inf

    grid = np.linspace(0.05, 1.0, 20)
    margins = np.array([margin(e) for e in grid])
    best = int(np.flatnonzero(margins == margins.max())[-1])
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    eta, m = float(grid[best]), float(margins[best])
    if hi > lo:
        res = optimize.minimize_scalar(lambda e: -margin(e), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-6})
        if -res.fun > m:
            eta, m = float(res.x), float(-res.fun)
    return eta, m


def check_g_over_f(f: IndexFunction, t_samples=None) -> PropertyResult:
    """g(t)/f(t) <= 1/2 at sampled t >= max(e, validity_start)."""
    start = max(math.e, f.validity_start())
    t = np.logspace(math.log10(start), math.log10(start) + 12, 200) if t_samples is None else np.asarray(t_samples)
    t = t[t >= start]
    q = GIndex(f)(t) / f(t)
    return _result("g/f <= 1/2", 0.5 - q, t, SLACK, {"t_start": start, "max_ratio": float(np.max(q))})


def lemma_samples(f: IndexFunction, count: int = 200, lo: float = 1e-12) -> np.ndarray:
    """Log-spaced deltas in [lo, delta_top], with delta_top = min(1/2, 1/validity_start).

    Beyond delta_top the bound f(t)/sqrt(t) nonincreasing (hence g/f <= 1/2)
    is not available and omega need not be concave.
    """
    top = min(0.5, 1.0 / f.validity_start())
    if not top > lo:
        raise OutOfRange(f"{f.name} has no admissible delta window")
    return np.logspace(math.log10(lo), math.log10(top), count)


@dataclass(frozen=True)
class ModulusOmega:
    """omega(delta) = g(delta**(-1/eta))**(-2) on (0, 1)."""

    g: GIndex
    eta: float

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    def __call__(self, delta):
        d = np.asarray(delta, dtype=float)
        if np.any((d <= 0) | (d >= 1)):
            raise OutOfRange("omega is defined for delta in (0, 1)")
        return self._raw(d)

    def _raw(self, d):
        # overflow to inf is the correct limit: omega -> 0
        with np.errstate(over="ignore"):
            return self.g(d ** (-1.0 / self.eta)) ** -2.0

    def extended(self, delta):
        """omega on [0, inf): 0 at 0, linear continuation past 1.

        Power-law sources keep their closed form for delta >= 1.
        """
        d = np.asarray(delta, dtype=float)
        out = np.zeros_like(d)
        pos = d > 0
        closed_power = self.g.closed_form is None and self.g.source.kind == "power"
        if closed_power:
            out[pos] = self._raw(d[pos])
            return out
        inside = pos & (d < 1)
        out[inside] = self._raw(d[inside])
        beyond = d >= 1
        if np.any(beyond):
            h = 1e-6
            w1 = float(self._raw(np.array(1.0 - h)))
            w2 = float(self._raw(np.array(1.0 - 2 * h)))
            slope = (w1 - w2) / h
            out[beyond] = w1 + slope * (d[beyond] - (1.0 - h))
        return out


def omega(m: ModulusOmega, delta: float) -> float:
    return float(m(delta))


def check_omega_lemma(m: ModulusOmega, deltas: Sequence[float]) -> PropertyReport:
    """Sampled check of the four modulus properties.

    (i) monotone with vanishing limit, (ii) midpoint concavity, (iii)
    |omega(a) - omega(b)| <= omega(|a - b|), (iv) omega(c d) <= c' omega(d)
    for c in {2, 5, 10}.
    """
    d = np.sort(np.asarray(deltas, dtype=float))
    if np.any((d <= 0) | (d >= 1)):
        raise OutOfRange("samples must lie in (0, 1)")
    w = m(d)
    results = []

    # (i)
    mono = np.diff(w)
    probe = d[0] * 10.0 ** -np.arange(0, 9)
    wp = m(probe)
    vanish = -np.diff(wp)
    slacks = np.concatenate([mono, vanish, [wp[-1]]])
    pts = np.concatenate([d[1:], probe[1:], probe[-1:]])
    res = _result("(i) monotone, vanishing at 0", slacks, pts, _slack(w, wp))
    res.details = {"omega_at_smallest_probe": float(wp[-1])}
    results.append(res)

    # pairs a < b
    ia, ib = np.triu_indices(d.size, k=1)
    a, b = d[ia], d[ib]
    wa, wb = w[ia], w[ib]

    # (ii)
    if a.size:
        mid = m(0.5 * (a + b))
        s2 = mid - 0.5 * (wa + wb)
        results.append(_result("(ii) midpoint concavity", s2, np.stack([a, b], 1), _slack(w)))
    else:
        results.append(PropertyResult("(ii) midpoint concavity", "pass", math.inf))

    # (iii)
    if a.size:
        gap = b - a
        s3 = m(gap) - np.abs(wb - wa)
        results.append(_result("(iii) difference inequality", s3, np.stack([a, b], 1), _slack(w)))
    else:
        results.append(PropertyResult("(iii) difference inequality", "pass", math.inf))

    # (iv)
    fitted = {}
    ok = True
    worst = math.inf
    for c in (2.0, 5.0, 10.0):
        sel = d[c * d < 1]
        if sel.size == 0:
            fitted[str(int(c))] = None
            continue
        ratio = m(c * sel) / m(sel)
        cprime = float(np.max(ratio))
        fitted[str(int(c))] = cprime
        finite = bool(np.all(np.isfinite(ratio)))
        # the small-delta half must not exceed the large-delta half
        half = max(1, sel.size // 2)
        tail = float(np.max(ratio[:half]))
        head = float(np.max(ratio[half:])) if sel.size > half else tail
        slack = head * (1 + 1e-9) - tail
        worst = min(worst, slack)
        ok = ok and finite and slack >= 0
    results.append(PropertyResult("(iv) scaling", verdict(ok), worst, [], {"c_prime": fitted}))

    return PropertyReport(
        f"omega lemma [{m.g.name}, eta={m.eta:.6g}]",
        results,
        {"eta": m.eta, "g": m.g.name, "samples": int(d.size)},
    )


# ---------------------------------------------------------------------------
# f-Property witnesses


@dataclass(frozen=True)
class FPropertyWitness:
    """A candidate weight phi_delta on the strip {-delta < r < 0}.

    ``weight`` and ``defining`` take real coordinates of shape (..., 2n).
    """

    delta: float
    weight: Callable
    f: IndexFunction
    defining: Callable
    n: int = 1


@dataclass
class WitnessReport:
    lambda_ratio_min: float
    gradient_ratio_max: float
    range_violations: int
    worst_range_excess: float
    samples: int

    @property
    def fitted_c(self):
        return self.lambda_ratio_min

    @property
    def fitted_C(self):
        return self.gradient_ratio_max

    def to_dict(self):
        return {
            "lambda_ratio_min": self.lambda_ratio_min,
            "gradient_ratio_max": self.gradient_ratio_max,
            "range_violations": self.range_violations,
            "worst_range_excess": self.worst_range_excess,
            "samples": self.samples,
        }


def verify_f_property_witness(w: FPropertyWitness, strip_samples) -> WitnessReport:
    from .ma_operator import complex_hessian_fd, gradient_fd

    pts = np.atleast_2d(np.asarray(strip_samples, dtype=float))
    r = np.asarray(w.defining(pts))
    outside = ~((r > -w.delta) & (r < 0))
    if np.any(outside):
        raise SampleOutsideStrip(f"{int(outside.sum())} samples not in the strip")
    step = w.delta / 100.0
    hess = complex_hessian_fd(w.weight, pts, step, w.n)
    lam = np.linalg.eigvalsh(hess)[:, 0]
    scale = float(w.f(1.0 / w.delta)) ** 2
    grad = np.linalg.norm(gradient_fd(w.weight, pts, step), axis=1)
    vals = np.asarray(w.weight(pts), dtype=float)
    excess = np.maximum(vals - 0.0, -1.0 - vals)
    bad = excess > 1e-12
    return WitnessReport(
        lambda_ratio_min=float(np.min(lam) / scale),
        gradient_ratio_max=float(np.max(grad) * w.delta),
        range_violations=int(bad.sum()),
        worst_range_excess=float(max(np.max(excess), 0.0)),
        samples=int(pts.shape[0]),
    )
