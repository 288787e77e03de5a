"""Experiment configs, task dispatch and report bundles."""
from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal

import numpy as np
from mpmath import iv
from mpmath.libmp import to_str
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import conditions, constants, iso, measure, search
from .io import dumps_sponge
from .lattice import BallSpec, BoxRegion, as_fraction
from .render import render_png, render_svg
from .sponge import SpongeLevel, build_sponge, obstacle_counts
from .voxels import axis_cut, box_cells, from_cells, random_set

SCHEMA_VERSION = "1.0"
TASKS = ("build", "check-sparse", "check-projections", "summability", "measure", "slice", "theta",
         "ahlfors", "iso-ratio", "iso-search", "tau-scan", "constants", "poincare", "render")
EXIT_OK, EXIT_TASK, EXIT_CONFIG = 0, 1, 2


class SpongeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(2, ge=2)
    n: list[int] = Field(default_factory=lambda: [3])
    k: int | None = None
    geometry: Literal["cube", "full", "triangle"] = "cube"

    @field_validator("n")
    @classmethod
    def _positive(cls, v):
        if not v or any(x < 2 for x in v):
            raise ValueError("n must be a non-empty list of integers >= 2")
        return v


class TaskSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal[TASKS]  # type: ignore[valid-type]
    params: dict[str, Any] = Field(default_factory=dict)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sponge: SpongeSpec = Field(default_factory=SpongeSpec)
    tasks: list[TaskSpec] = Field(default_factory=lambda: [TaskSpec(name="build")])
    output_dir: str = "out"
    seed: int = 0
    precision: int = Field(30, ge=10, le=1000)

    @field_validator("tasks", mode="before")
    @classmethod
    def _names(cls, v):
        return [{"name": t} if isinstance(t, str) else t for t in v]


class ConfigError(ValueError):
    def __init__(self, message: str, field_path: str | None = None):
        super().__init__(message)
        self.field_path = field_path


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"])
        raise ConfigError(f"{loc}: {err['msg']}", loc) from None


# -- number tagging ---------------------------------------------------------------

def exact(x) -> dict:
    return {"kind": "exact-rational", "value": str(Fraction(x))}


def interval(lo, hi) -> dict:
    return {"kind": "certified-interval", "lower": str(Fraction(lo)), "upper": str(Fraction(hi))}


def estimate(x: float) -> dict:
    return {"kind": "float-estimate", "value": float(x)}


def tag_root(r: conditions.RootOfRational, dps: int) -> dict:
    e = r.exact
    if e is not None:
        return exact(e)
    old = iv.dps
    iv.dps = dps
    try:
        v = iv.sqrt(iv.mpf(r.square.numerator) / iv.mpf(r.square.denominator))
        lo, hi = v._mpi_
        return {"kind": "certified-interval", "lower": to_str(lo, dps), "upper": to_str(hi, dps),
                "square": str(r.square)}
    finally:
        iv.dps = old


def tag_bounds(b: measure.MeasureBounds) -> dict:
    return exact(b.lower) if b.exact else interval(b.lower, b.upper)


def parse_rational(x) -> Fraction:
    if isinstance(x, dict) and x.get("kind") == "exact-rational":
        x = x["value"]
    return as_fraction(x)


# -- parameter helpers --------------------------------------------------------------

def _ball(S: SpongeLevel, spec: dict | None) -> BallSpec:
    if spec is None:
        return iso.domain_ball(S)
    center = tuple(as_fraction(c) for c in spec["center"])
    return BallSpec(center, as_fraction(spec["radius"]), spec.get("norm", "linf"))


def _set(S: SpongeLevel, spec: dict | None, rng: np.random.Generator):
    spec = spec or {"type": "halfspace", "axis": 0, "offset": "1/2"}
    kind = spec.get("type")
    if kind == "halfspace":
        return measure.HalfSpace(S, int(spec.get("axis", 0)), as_fraction(spec.get("offset", "1/2")))
    if kind == "axis-cut":
        return axis_cut(S, int(spec.get("axis", 0)), int(spec["index"]))
    if kind == "box":
        return box_cells(S, spec["lo"], spec["hi"])
    if kind == "cells":
        return from_cells(S, spec["cells"])
    if kind == "random":
        return random_set(S, rng, float(spec.get("p", 0.5)))
    raise ValueError(f"unknown set type {kind!r}")


def _set_json(E) -> dict:
    if isinstance(E, measure.HalfSpace):
        return E.to_json()
    return {"type": "voxels", "count": E.count()}


@dataclass
class TaskOutput:
    result: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    files: dict[str, bytes] = field(default_factory=dict)


def _task_build(S, p, ctx) -> TaskOutput:
    out = {
        "sponge": S.to_json(),
        "cells": S.num_cells,
        "occupied": S.occupied_count,
        "measure": exact(S.measure),
        "product_formula": exact(S.product_measure()),
        "obstacles_per_level": obstacle_counts(S),
    }
    files = {"sponge.txt": dumps_sponge(S).encode()} if p.get("save", True) else {}
    return TaskOutput(out, files=files)


def _task_check_sparse(S, p, ctx) -> TaskOutput:
    r = conditions.check_sparse(S, as_fraction(p.get("delta", "1/3")),
                                None if p.get("L_sq") is None else as_fraction(p["L_sq"]))
    dps = ctx["precision"]
    return TaskOutput({
        "verdicts": r.verdicts,
        "delta_star": tag_root(r.delta_star, dps),
        "boundary_ratio": tag_root(r.boundary_ratio, dps),
        "pair_ratio": None if r.pair_ratio is None else tag_root(r.pair_ratio, dps),
        "L_star": tag_root(r.L_star, dps),
        "delta": exact(r.delta),
        "L_sq": exact(r.L_sq),
        "witnesses": r.witnesses,
        "asserted": r.asserted,
    })


def _task_check_projections(S, p, ctx) -> TaskOutput:
    balls = [_ball(S, b) for b in p.get("balls", [])]
    r = conditions.check_projections(S, balls, stride=int(p.get("stride", 1)), levels=p.get("levels"),
                                     include_family=bool(p.get("family", True)))
    rows = [[x.level, x.axis, ",".join(str(c) for c in x.ball.center), str(x.ball.radius),
             str(x.shadow), str(x.L_needed)] for x in r.records]
    return TaskOutput({
        "L_star": {str(k): exact(v) for k, v in r.L_star.items()},
        "L_max": exact(r.L_max),
        "records": len(r.records),
        "skipped": len(r.skipped),
        "family": r.family,
    }, tables={"projections": (["level", "axis", "center", "radius", "shadow", "L_needed"], rows)})


def _task_summability(S, p, ctx) -> TaskOutput:
    gen = p.get("generator") or {"type": "explicit", "values": list(S.n)}
    r = conditions.summability(gen, int(p.get("d", S.d)), p.get("K"))
    rows = [[i + 1, str(s)] for i, s in enumerate(r.partial_sums)]
    return TaskOutput({"verdict": r.verdict, "reason": r.reason, "terms": len(r.partial_sums),
                       "partial_sum": exact(r.partial_sums[-1]) if r.partial_sums else exact(0)},
                      tables={"partial_sums": (["K", "partial_sum"], rows)})


def _task_measure(S, p, ctx) -> TaskOutput:
    if "region" in p:
        reg = BoxRegion(tuple(as_fraction(v) for v in p["region"]["lo"]),
                        tuple(as_fraction(v) for v in p["region"]["hi"]))
        return TaskOutput({"region": reg.to_json(), "measure": tag_bounds(measure.region_measure(S, reg))})
    ball = _ball(S, p.get("ball"))
    tol = p.get("tol")
    b = measure.ball_measure(S, ball, None if tol is None else as_fraction(tol))
    return TaskOutput({"ball": ball.to_json(), "measure": tag_bounds(b), "depth": b.depth})


def _task_slice(S, p, ctx) -> TaskOutput:
    axis, c = int(p.get("axis", 0)), as_fraction(p.get("offset", "1/2"))
    return TaskOutput({"axis": axis, "offset": exact(c), "content": exact(measure.slice_measure(S, axis, c))})


def _task_theta(S, p, ctx) -> TaskOutput:
    E = _set(S, p.get("set"), ctx["rng"])
    ball = _ball(S, p.get("ball"))
    tol = p.get("tol")
    t = measure.theta(E, ball, None if tol is None else as_fraction(tol))
    return TaskOutput({"set": _set_json(E), "ball": ball.to_json(),
                       "theta": exact(t.lower) if t.exact else interval(t.lower, t.upper)})


def _task_ahlfors(S, p, ctx) -> TaskOutput:
    centers = measure.occupied_centers(S, int(p.get("stride", 1)))
    radii = [as_fraction(r) for r in p.get("radii", [S.ladder[j] for j in range(S.k + 1)])]
    kw = {"tol": as_fraction(p["tol"])} if "tol" in p else {}
    est = measure.ahlfors_estimate(S, centers, radii, p.get("norm", "linf"), **kw)
    return TaskOutput({"c_min": exact(est.c_min), "c_max": exact(est.c_max), "C_AR": exact(est.constant),
                       "samples": est.samples, "norm": est.norm,
                       "argmin": [str(v) for v in est.argmin[0]] + [str(est.argmin[1])],
                       "argmax": [str(v) for v in est.argmax[0]] + [str(est.argmax[1])]})


def _witness_json(w: iso.IsoWitness) -> dict:
    out = w.to_json()
    out["theta"] = exact(w.theta.lower) if w.theta.exact else interval(w.theta.lower, w.theta.upper)
    for key in ("mu_inflated", "content", "inflation"):
        out[key] = exact(getattr(w, key))
    out["ratio"] = None if w.ratio is None else exact(w.ratio)
    out["cheeger"] = None if w.cheeger is None else exact(w.cheeger)
    return out


def _task_iso_ratio(S, p, ctx) -> TaskOutput:
    E = _set(S, p.get("set"), ctx["rng"])
    w = iso.iso_ratio(E, _ball(S, p.get("ball")), as_fraction(p.get("inflation", 1)), p.get("mode", "interface"))
    return TaskOutput(_witness_json(w))


def _task_iso_search(S, p, ctx) -> TaskOutput:
    cfg = search.SearchConfig(
        families=tuple(p.get("families", search.SEED_FAMILIES)),
        random_seeds=int(p.get("random_seeds", 8)),
        budget=int(p.get("budget", 500)),
        neighborhood=int(p.get("neighborhood", 64)),
        seed=ctx["seed"],
        mode=p.get("mode", "interface"),
    )
    r = search.minimize_iso_ratio(S, _ball(S, p.get("ball")), as_fraction(p.get("inflation", 1)), cfg)
    rows = [[s, m, c] for s, m, c in r.trace]
    return TaskOutput({"cheeger": exact(r.cheeger), "exact_search": r.exact, "evaluations": r.evaluations,
                       "witness": _witness_json(r.witness), "cells": int(r.mask.sum())},
                      tables={"search_trace": (["step", "move", "cheeger"], rows)})


def _task_tau_scan(S, p, ctx) -> TaskOutput:
    balls = [_ball(S, b) for b in p["balls"]] if "balls" in p else None
    if p.get("family", "halfspace") == "random":
        fam = iso.random_family(S, ctx["rng"], int(p.get("count", 100)), balls, float(p.get("p", 0.5)))
    else:
        fam = iso.halfspace_family(S, balls)
    r = iso.tau_iso_scan(S, as_fraction(p.get("tau", "1/4")), as_fraction(p.get("inflation", 1)), fam,
                         p.get("mode", "interface"))
    return TaskOutput({"tau": exact(r.tau), "estimate": exact(r.estimate), "admissible": r.admissible,
                       "sampled": r.sampled, "violations": len(r.violations),
                       "witness": _witness_json(r.witness), "label": "empirical lower bound"})


def _task_constants(S, p, ctx) -> TaskOutput:
    inputs = dict(p.get("inputs", {}))
    inputs.setdefault("d", S.d)
    if set(inputs) <= {"d", "C_AR"}:
        D, N = constants.doubling_from_ahlfors(as_fraction(inputs.get("C_AR", 1)), int(inputs["d"]))
        out = {"D": exact(D), "N": exact(N)}
        if "iterate" in p:
            it = p["iterate"]
            res = constants.iterate_constants(D, as_fraction(it["tau"]), as_fraction(it["C"]),
                                              as_fraction(it.get("Lambda", 1)))
            out.update({"C_S": exact(res.C_S), "Lambda_S": exact(res.Lambda_S), "provenance": res.provenance})
        return TaskOutput(out)
    led = constants.step_ledger(inputs, dps=ctx["precision"])
    rows = [[e.name, e.formula, json.dumps(e.value.to_json(), sort_keys=True)] for e in led.entries.values()]
    return TaskOutput(led.to_json(), tables={"ledger": (["name", "formula", "value"], rows)})


def _task_poincare(S, p, ctx) -> TaskOutput:
    spec = p.get("function", {"type": "coordinate", "axis": 0})
    kind = spec.get("type")
    if kind == "coordinate":
        f = search.coordinate_function(S, int(spec.get("axis", 0)))
    elif kind == "constant":
        value = as_fraction(spec.get("value", 0))
        f = lambda c: value  # noqa: E731
    elif kind == "indicator":
        E = _set(S, spec.get("set"), ctx["rng"])
        f = search.indicator_function(E.to_mask())
    else:
        raise ValueError(f"unknown function type {kind!r}")
    r = search.poincare_ratio(S, f, _ball(S, p.get("ball")), as_fraction(p.get("inflation", 1)))
    ratio = r.ratio
    return TaskOutput({"lhs": exact(r.lhs), "rhs": exact(r.rhs), "mean": exact(r.mean),
                       "ratio": {"kind": "float-estimate", "value": "inf"} if ratio == float("inf") else exact(ratio),
                       "flagged": r.flagged})


def _task_render(S, p, ctx) -> TaskOutput:
    size = int(p.get("size", 512))
    axis = p.get("slice_axis")
    offset = as_fraction(p["slice_offset"]) if "slice_offset" in p else None
    fmt = p.get("format", "svg")
    files = {}
    if fmt in ("svg", "both"):
        files["render.svg"] = render_svg(S, size, axis, offset).encode()
    if fmt in ("png", "both"):
        buf = io.BytesIO()
        render_png(S, size, axis, offset).save(buf, format="PNG")
        files["render.png"] = buf.getvalue()
    return TaskOutput({"files": sorted(files), "size": size}, files=files)


HANDLERS = {
    "build": _task_build, "check-sparse": _task_check_sparse, "check-projections": _task_check_projections,
    "summability": _task_summability, "measure": _task_measure, "slice": _task_slice, "theta": _task_theta,
    "ahlfors": _task_ahlfors, "iso-ratio": _task_iso_ratio, "iso-search": _task_iso_search,
    "tau-scan": _task_tau_scan, "constants": _task_constants, "poincare": _task_poincare,
    "render": _task_render,
}


# -- bundles -----------------------------------------------------------------------

@dataclass
class ReportBundle:
    report: dict
    tables: dict[str, tuple[list[str], list[list]]]
    files: dict[str, bytes]
    metadata: dict
    exit_code: int = EXIT_OK
    error: dict | None = None

    def report_text(self) -> str:
        return json.dumps(self.report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.report_text())
        for name, (header, rows) in self.tables.items():
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            (out / f"{name}.csv").write_text(buf.getvalue())
        for name, data in self.files.items():
            (out / name).write_bytes(data)
        (out / "metadata.json").write_text(json.dumps(self.metadata, sort_keys=True, indent=2) + "\n")
        if self.error is not None:
            (out / "error.json").write_text(json.dumps(self.error, sort_keys=True, indent=2) + "\n")
        return out


def _metadata(started: float) -> dict:
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
            "wall_seconds": round(time.time() - started, 6), "python": platform.python_version(),
            "package_version": pkg}


def config_error_bundle(err: ConfigError) -> ReportBundle:
    error = {"kind": "config-error", "field": err.field_path, "message": str(err)}
    report = {"schema_version": SCHEMA_VERSION, "status": "config-error", "error": error, "tasks": []}
    return ReportBundle(report, {}, {}, _metadata(time.time()), EXIT_CONFIG, error)


def run(config: ExperimentConfig | dict) -> ReportBundle:
    """Execute the configured tasks in order against one sponge."""
    started = time.time()
    if isinstance(config, dict):
        try:
            config = parse_config(config)
        except ConfigError as err:
            return config_error_bundle(err)
    sp = config.sponge
    try:
        S = build_sponge(sp.n, sp.k, sp.geometry, sp.d)
    except ValueError as err:
        return config_error_bundle(ConfigError(f"sponge: {err}", "sponge"))
    ctx = {"rng": np.random.default_rng(config.seed), "seed": config.seed, "precision": config.precision}
    results, tables, files = [], {}, {}
    error, code = None, EXIT_OK
    for i, task in enumerate(config.tasks):
        try:
            out = HANDLERS[task.name](S, task.params, ctx)
        except Exception as exc:  # report and stop at the first failing task
            error = {"kind": "task-error", "task": task.name, "index": i,
                     "type": type(exc).__name__, "message": str(exc)}
            results.append({"task": task.name, "status": "error", "error": error})
            code = EXIT_TASK
            break
        results.append({"task": task.name, "status": "ok", "result": out.result})
        for name, table in out.tables.items():
            tables[name if name not in tables else f"{name}_{i}"] = table
        files.update(out.files)
    report = {
        "schema_version": SCHEMA_VERSION,
        "status": "ok" if code == EXIT_OK else "task-error",
        "config": json.loads(config.model_dump_json(exclude={"output_dir"})),
        "sponge": S.to_json(),
        "tasks": results,
    }
    return ReportBundle(report, tables, files, _metadata(started), code, error)
