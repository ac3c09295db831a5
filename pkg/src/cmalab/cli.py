"""Command-line runner: one named experiment per invocation.

Configuration comes from a flat JSON document (``--config``) and/or flags;
flags win. Outputs are written atomically into the output directory,
followed by ``manifest.json`` listing every file with its SHA-256 digest.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .catalog import catalog_list, h_from_catalog, phi_from_catalog
from .errors import (AxisSingularity, CMALabError, ConfigInvalid, DegenerateGrid, DivergentTail, GridMismatch,
                     InsufficientSamples, InsufficientScales, LedgerViolation, MissingNeighbor, NegativeDiscriminant,
                     NonConvexDomain, NotConverged, NotPSD, OutOfRange, OutsideDomain, PeakFamilyInvalid,
                     RadialModeInvalid, RootNotBracketed, SampleOutsideStrip, ShiftOutsideGrid, SolverDiverged,
                     ToleranceNotMet)
from .geometry import from_catalog
from .index_calculus import GIndex, IndexFunction
from .reports import SCHEMA_VERSION, to_json

EXPERIMENTS = ("gfun", "omega-check", "witness", "barriers", "solve", "modulus", "sharpness", "verify-all")
ENV_OUTPUT = "CMALAB_OUTPUT_DIR"

# which config key a downstream error is blamed on
ERROR_KEYS = {
    DivergentTail: "f", ToleranceNotMet: "tol", OutOfRange: "alpha", SampleOutsideStrip: "domain",
    DegenerateGrid: "spacing", RootNotBracketed: "domain", NonConvexDomain: "domain", OutsideDomain: "domain",
    MissingNeighbor: "spacing", NotPSD: "h", AxisSingularity: "radial", PeakFamilyInvalid: "domain",
    LedgerViolation: "alpha", GridMismatch: "spacing", ShiftOutsideGrid: "spacing", SolverDiverged: "tol",
    NegativeDiscriminant: "h", RadialModeInvalid: "radial", NotConverged: "max_sweeps",
    InsufficientSamples: "input", InsufficientScales: "spacing",
}


def _number(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    num, _, den = str(text).partition("/")
    return float(num) / float(den) if den else float(num)


@dataclass
class ExperimentConfig:
    experiment: Optional[str] = None
    domain: str = "disk"
    f: str = "strongly-pseudoconvex"
    phi: str = "zero"
    h: str = "one"
    alpha: float = 1.0
    spacing: float = 1.0 / 16
    tol: Optional[float] = None
    seed: int = 0
    output_dir: Optional[str] = None
    max_sweeps: Optional[int] = None
    radial: bool = False
    nodes_per_axis: int = 129
    mesh_count: int = 32
    input: Optional[str] = None
    from_solve: Optional[str] = None
    G: Optional[str] = None
    pairs: int = 20000
    spread_cap: float = 10.0
    s: float = 0.5
    eps_decades: int = 6

    @classmethod
    def keys(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid("experiment", f"expected one of {', '.join(EXPERIMENTS)}")
        checks = (("domain", from_catalog), ("f", IndexFunction.from_catalog),
                  ("phi", lambda v: phi_from_catalog(v, self.alpha)), ("h", h_from_catalog))
        for key, parse in checks:
            try:
                parse(getattr(self, key))
            except (ValueError, TypeError) as exc:
                raise ConfigInvalid(key, f"unknown catalog id {getattr(self, key)!r} ({exc})") from None
        if self.G is not None:
            try:
                GIndex.from_catalog(self.G)
            except ValueError as exc:
                raise ConfigInvalid("G", str(exc)) from None
        if not 0 < self.alpha <= 1:
            raise ConfigInvalid("alpha", "must lie in (0, 1]")
        if not self.spacing > 0:
            raise ConfigInvalid("spacing", "must be positive")
        if self.tol is not None and not self.tol > 0:
            raise ConfigInvalid("tol", "must be positive")
        for key in ("mesh_count", "pairs", "nodes_per_axis", "eps_decades"):
            if getattr(self, key) < 1:
                raise ConfigInvalid(key, "must be positive")
        if self.max_sweeps is not None and self.max_sweeps < 1:
            raise ConfigInvalid("max_sweeps", "must be positive")
        if not 0 < self.s < 1:
            raise ConfigInvalid("s", "must lie in (0, 1)")
        return self

    def echo(self) -> dict:
        return dataclasses.asdict(self)


_CASTS = {"alpha": _number, "spacing": _number, "tol": _number, "spread_cap": _number, "s": _number,
          "seed": int, "max_sweeps": int, "nodes_per_axis": int, "mesh_count": int, "pairs": int,
          "eps_decades": int, "radial": bool}


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid("config", str(exc)) from None
        if not isinstance(raw, dict):
            raise ConfigInvalid("config", "top level must be a flat JSON object")
    known = set(ExperimentConfig.keys())
    for key, value in raw.items():
        if key not in known:
            raise ConfigInvalid(key, "unknown config key")
        if isinstance(value, (dict, list)):
            raise ConfigInvalid(key, "nested values are not allowed")
    merged = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    for key, cast in _CASTS.items():
        if merged.get(key) is not None:
            try:
                merged[key] = cast(merged[key])
            except (TypeError, ValueError):
                raise ConfigInvalid(key, f"cannot parse {merged[key]!r}") from None
    return ExperimentConfig(**merged)


# ---------------------------------------------------------------------------
# output plumbing


def _schema() -> dict:
    return json.loads(resources.files("cmalab").joinpath("schema/csv_columns.json").read_text())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Run:
    """Collects outputs and stage timings for one experiment."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.files = []
        self.stages = {}
        self.out.mkdir(parents=True, exist_ok=True)

    @contextlib.contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    def write_bytes(self, name: str, data: bytes):
        target = self.out / name
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        if name != "manifest.json":
            self.files.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    def write_json(self, name: str, payload: dict):
        self.write_bytes(name, to_json(payload).encode())

    def write_csv(self, name: str, table: str, rows):
        cols = _schema()["tables"][table]["columns"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in cols]
            w.writerow([_fmt(v) for v in row])
        self.write_bytes(name, buf.getvalue().encode())

    def manifest(self) -> dict:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "artifact_version": __version__,
            "experiment": self.cfg.experiment,
            "config": self.cfg.echo(),
            "output_dir": str(self.out),
            "stages_seconds": self.stages,
            "created_unix": time.time(),
            "outputs": sorted(self.files, key=lambda f: f["path"]),
        }
        self.write_json("manifest.json", payload)
        return payload


# ---------------------------------------------------------------------------
# experiments


def _index_f(cfg):
    return IndexFunction.from_catalog(cfg.f)


def exp_gfun(run: Run):
    from .index_calculus import ModulusOmega, compute_g, lemma_samples, select_eta

    cfg = run.cfg
    f = _index_f(cfg)
    with run.stage("eta"):
        eta, margin = select_eta(f, lemma_samples(f))
    m = ModulusOmega(GIndex(f), eta)
    rows = []
    with run.stage("table"):
        for t in np.logspace(0.25, 10, 40):
            rows.append([t, float(f(t)), compute_g(f, t, cfg.tol or 1e-10), float(m(1.0 / t))])
    run.write_csv("gfun.csv", "gfun", rows)
    run.write_json("gfun.json", {"schema_version": SCHEMA_VERSION, "f": f.name, "eta": eta, "margin": margin,
                                 "omega_argument": "delta = 1/t"})


def exp_omega_check(run: Run):
    from .index_calculus import ModulusOmega, check_omega_lemma, lemma_samples, select_eta

    f = _index_f(run.cfg)
    with run.stage("check"):
        deltas = lemma_samples(f, 200)
        eta, margin = select_eta(f, deltas)
        rep = check_omega_lemma(ModulusOmega(GIndex(f), eta), deltas)
    out = rep.to_dict()
    out["meta"].update({"margin": margin, "delta_min": float(deltas[0]), "delta_max": float(deltas[-1])})
    run.write_json("omega_check.json", out)
    for r in rep.results:
        print(f"{r.verdict.upper():4s} {r.property} (worst slack {r.worst_slack:.3g})")


def exp_witness(run: Run):
    from .index_calculus import FPropertyWitness, verify_f_property_witness

    cfg = run.cfg
    d = from_catalog(cfg.domain)
    if d.catalog_id not in ("disk", "ball2"):
        raise ConfigInvalid("domain", "the catalogued witness (|z|^2 - 1)/delta exists for disk and ball2 only")
    f = _index_f(cfg)
    dim = 2 * d.n
    rng = np.random.default_rng(cfg.seed)
    rows = []
    with run.stage("verify"):
        for delta in (1e-1, 1e-2, 1e-3):
            v = rng.standard_normal((500, dim))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            r = np.sqrt(1.0 - delta * (0.02 + 0.96 * rng.random(500)))
            w = FPropertyWitness(delta, lambda p, dl=delta: (np.sum(p**2, -1) - 1.0) / dl, f,
                                 lambda p: np.sum(p**2, -1) - 1.0, d.n)
            rep = verify_f_property_witness(w, v * r[:, None])
            rows.append({"delta": delta, **rep.to_dict()})
    run.write_csv("witness.csv", "witness", rows)
    run.write_json("witness.json", {"schema_version": SCHEMA_VERSION, "domain": cfg.domain, "f": f.name,
                                    "weight": "(|z|^2 - 1)/delta", "rows": rows})


def exp_barriers(run: Run):
    from .barriers import (ConstantLedger, barrier_envelope, barrier_seminorm, barrier_v, boundary_domination,
                           bracket_max, build_rho, choose_K, cphi, det_margin, upper_barrier)
    from .geometry import classify_grid, linear_peak_family, sample_boundary
    from .index_calculus import ModulusOmega, lemma_samples, select_eta

    cfg = run.cfg
    d = from_catalog(cfg.domain)
    f = _index_f(cfg)
    g = GIndex(f)
    phi = phi_from_catalog(cfg.phi, cfg.alpha)
    h = h_from_catalog(cfg.h)
    with run.stage("defining_function"):
        grid = classify_grid(d, cfg.spacing)
        mesh = sample_boundary(d, cfg.mesh_count)
        eta, _ = select_eta(f, lemma_samples(f))
        fam = linear_peak_family(d, mesh, eta, candidate=True)
        rho = build_rho(d, fam, ModulusOmega(g, eta), mesh, grid, seed=cfg.seed)
    with run.stage("ledger"):
        dense = sample_boundary(d, max(4 * cfg.mesh_count, 256))
        cp = cphi(dense.points, phi(dense.points), cfg.alpha)
        pts = grid.points()[grid.active]
        h_root = float(np.max(h(pts) ** (1.0 / d.n)))
        bm = bracket_max(rho, d, grid, mesh)
        led = ConstantLedger(cfg.alpha, cp, choose_K(cfg.alpha, cp, h_root, bm), h_root, bm,
                             provenance={"c_phi": f"max quotient over {len(dense)} boundary points",
                                         "K": "max((2/alpha) bracket^(1 - alpha/2) ||h^(1/n)||, c_phi)",
                                         "c2": rho.provenance})
    rows, barriers = [], []
    with run.stage("barriers"):
        for k, z in enumerate(mesh.points):
            pz = float(phi(z[None])[0])
            b = barrier_v(z, pz, led, rho, grid)
            barriers.append(b)
            sem = barrier_seminorm(b, d, g, cfg.alpha, pairs=1000, seed=cfg.seed)
            zp = list(map(float, z)) + [0.0] * (4 - z.size)
            rows.append({"anchor": k, **{f"z{i}": zp[i] for i in range(4)},
                         "phi": pz, "identity_error": abs(float(b(z[None])[0]) - pz),
                         "domination": boundary_domination(b, phi, dense), "det_margin": det_margin(b, h),
                         "seminorm": sem.seminorm})
    with run.stage("envelope"):
        v = barrier_envelope(barriers)
        w = upper_barrier(phi, d, grid)
        act = grid.active
        order_ok = float(np.max(v.values[act] - w.values[act]))
    sems = [r["seminorm"] for r in rows]
    led.C0 = max(sems)
    run.write_csv("barriers.csv", "barriers", rows)
    run.write_json("barriers_ledger.json", {
        "schema_version": SCHEMA_VERSION, "domain": cfg.domain, "f": f.name, "phi": phi.name, "h": h.name,
        "eta": eta, "ledger": led.to_dict(), "ledger_violations": led.violations(), "rho": rho.to_dict(),
        "seminorm_spread": max(sems) / min(sems) if min(sems) > 0 else math.inf,
        "max_domination": max(r["domination"] for r in rows),
        "min_det_margin": min(r["det_margin"] for r in rows),
        "max_v_minus_w": order_ok,
    })


def _active_rows(report, exact=None):
    from .envelope_solver import embed
    from .ma_operator import assemble

    grid = report.grid
    st = assemble(grid)
    pts = st.node_points()
    u = report.field.values.ravel()[st.nodes]
    full = embed(grid, pts)
    ex = None if exact is None else exact(full)
    for k in range(pts.shape[0]):
        z = [float(x) for x in full[k]] + [0.0] * (4 - full.shape[1])
        row = {"x0": z[0], "x1": z[1], "x2": z[2], "x3": z[3], "u": float(u[k])}
        if ex is not None:
            row.update({"oracle": float(ex[k]), "error": abs(float(u[k]) - float(ex[k]))})
        yield row


def exp_solve(run: Run):
    from .envelope_solver import ProblemSpec, SolverConfig, solve

    cfg = run.cfg
    p = ProblemSpec.from_names(cfg.domain, cfg.phi, cfg.h, cfg.alpha)
    with run.stage("solve"):
        rep = solve(p, SolverConfig(spacing=cfg.spacing, tol=cfg.tol, max_sweeps=cfg.max_sweeps,
                                    radial_mode=cfg.radial, nodes_per_axis=cfg.nodes_per_axis))
    summary = rep.to_dict()
    summary.update({"phi": p.phi.name, "h": p.h.name, "alpha": p.alpha, "oracle_registered": p.oracle() is not None})
    run.write_json("solve.json", summary)
    with run.stage("export"):
        run.write_csv("solve_field.csv", "solve_field", _active_rows(rep))
        if p.oracle() is not None:
            run.write_csv("solve_error.csv", "solve_error", _active_rows(rep, p.oracle()))
    print(f"sweeps {rep.sweeps}  converged {rep.converged}  residual {rep.residual:.3g}"
          + ("" if rep.oracle_error is None else f"  oracle error {rep.oracle_error:.3g}"))
    if not rep.converged:
        raise NotConverged(f"no convergence after {rep.sweeps} sweeps (last update {rep.final_update:.3g})")


def _read_samples(path: str, key: str):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigInvalid(key, str(exc)) from None
    if not rows:
        raise InsufficientSamples(f"{path} holds no rows")
    value_col = "u" if "u" in rows[0] else "value"
    coords = sorted(c for c in rows[0] if c.startswith("x"))
    if value_col not in rows[0] or not coords:
        raise ConfigInvalid(key, "CSV needs x0.. coordinate columns and a 'value' or 'u' column")
    pts = np.array([[float(r[c]) for c in coords] for r in rows])
    vals = np.array([float(r[value_col]) for r in rows])
    keep = np.any(pts != 0, axis=0)
    return pts[:, keep] if keep.any() else pts, vals


def exp_modulus(run: Run):
    from .regularity_lab import ModulusConfig, estimate_modulus, membership_verdict

    cfg = run.cfg
    if cfg.input:
        pts, vals = _read_samples(cfg.input, "input")
    elif cfg.from_solve:
        src = Path(cfg.from_solve)
        pts, vals = _read_samples(str(src / "solve_field.csv" if src.is_dir() else src), "from_solve")
    else:
        raise ConfigInvalid("input", "modulus needs --input or --from-solve")
    G = GIndex.from_catalog(cfg.G) if cfg.G else GIndex(_index_f(cfg))
    with run.stage("estimate"):
        rep = estimate_modulus(pts, vals, G, cfg.alpha, ModulusConfig(pairs=cfg.pairs, seed=cfg.seed))
        rep.spread_cap = cfg.spread_cap
        verdict = membership_verdict(rep, cfg.spread_cap)
    run.write_csv("modulus.csv", "modulus",
                  [dict(zip(("delta", "M_raw", "M", "ratio", "pairs"), r)) for r in rep.rows()])
    out = rep.to_dict()
    out.update({"membership": verdict, "spread_cap": cfg.spread_cap, "samples": int(pts.shape[0])})
    run.write_json("modulus.json", out)
    print(f"membership {verdict}  spread {rep.spread:.4g}")


def exp_sharpness(run: Run):
    from .regularity_lab import SHARPNESS_COLUMNS, sharpness_probe

    cfg = run.cfg
    k = cfg.eps_decades
    eps = np.logspace(-k, -1, 2 * (k - 1) + 1) if k > 1 else np.array([0.1])
    with run.stage("probe"):
        rep = sharpness_probe(cfg.s, cfg.alpha, eps)
    run.write_csv("sharpness.csv", "sharpness", [[r[c] for c in SHARPNESS_COLUMNS] for r in rep.rows])
    run.write_json("sharpness.json", rep.to_dict())


def exp_verify_all(run: Run):
    from .suites import MODULE_SUITES, run_module

    failed = []
    for name in MODULE_SUITES:
        with run.stage(name):
            res = run_module(name, run.cfg.seed)
        run.write_json(f"verdict_{name}.json", res)
        for c in res["checks"]:
            print(f"{c['verdict'].upper():4s} {name}: {c['name']}")
        if res["verdict"] != "pass":
            failed.append(name)
    print(f"{len(MODULE_SUITES) - len(failed)}/{len(MODULE_SUITES)} modules pass"
          + (f"; failing: {', '.join(failed)}" if failed else ""))


DISPATCH = {"gfun": exp_gfun, "omega-check": exp_omega_check, "witness": exp_witness, "barriers": exp_barriers,
            "solve": exp_solve, "modulus": exp_modulus, "sharpness": exp_sharpness, "verify-all": exp_verify_all}


def run(cfg: ExperimentConfig) -> dict:
    """Validate, dispatch and write the manifest. Returns the manifest payload."""
    cfg.validate()
    out = Path(cfg.output_dir or os.environ.get(ENV_OUTPUT) or "cmalab_out")
    r = Run(cfg, out)
    try:
        DISPATCH[cfg.experiment](r)
    finally:
        manifest = r.manifest()
    return manifest


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's unset flag from clobbering one given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat JSON config; flags override its values")
    common.add_argument("--domain")
    common.add_argument("--f", dest="f")
    common.add_argument("--phi")
    common.add_argument("--h", dest="h")
    common.add_argument("--alpha")
    common.add_argument("--spacing", "--grid-spacing", dest="spacing")
    common.add_argument("--tol")
    common.add_argument("--seed")
    common.add_argument("--output-dir", dest="output_dir", help=f"default: ${ENV_OUTPUT} or ./cmalab_out")

    ap = argparse.ArgumentParser(prog="cmalab", description=__doc__.splitlines()[0], parents=[common])
    ap.add_argument("--version", action="version", version=f"cmalab {__version__}")
    sub = ap.add_subparsers(dest="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, parents=[common])
        if name == "solve":
            sp.add_argument("--max-sweeps", dest="max_sweeps")
            sp.add_argument("--radial", action="store_true", default=None)
            sp.add_argument("--nodes-per-axis", dest="nodes_per_axis")
        elif name == "barriers":
            sp.add_argument("--mesh-count", dest="mesh_count")
        elif name == "modulus":
            sp.add_argument("--input")
            sp.add_argument("--from-solve", dest="from_solve")
            sp.add_argument("--G", dest="G")
            sp.add_argument("--pairs")
            sp.add_argument("--spread-cap", dest="spread_cap")
        elif name == "sharpness":
            sp.add_argument("--s", dest="s")
            sp.add_argument("--eps-decades", dest="eps_decades")
    sub.add_parser("catalog", help="list catalog entries")
    return ap


def main(argv=None) -> int:
    args = vars(_parser().parse_args(argv))
    if args.get("experiment") == "catalog":
        for line in catalog_list():
            print(line)
        return 0
    config_path = args.pop("config", None)
    try:
        cfg = load_config(config_path, args)
        if cfg.experiment is None:
            raise ConfigInvalid("experiment", "no experiment given on the command line or in the config")
        manifest = run(cfg)
    except ConfigInvalid as exc:
        print(f"error: ConfigInvalid: {exc}", file=sys.stderr)
        return exc.exit_code
    except CMALabError as exc:
        key = next((k for cls, k in ERROR_KEYS.items() if isinstance(exc, cls)), "experiment")
        print(f"error: {type(exc).__name__}: {exc} (config key {key!r})", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {len(manifest['outputs'])} files to {manifest['output_dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
