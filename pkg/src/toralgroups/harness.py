"""Experiment manifests: validation, dispatch to the numerical modules, and
provenance-stamped outputs (CSV tables, JSON side files, summary.json, plot data).

A manifest is one JSON object:

    {"kind": "enumerate", "group": "preset:sanov", "params": {"radius": 8},
     "seeds": [], "output": "runs/enum8"}

`group` is a presentation file (relative to the manifest's directory) or one
of the bundled presets `preset:sanov` (hyperbolic metric) and `preset:f2`
(word metric).  Every CSV starts with a `# manifest_sha256:` comment line
and every JSON carries the same digest.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .errors import ManifestError

KINDS = ("enumerate", "exponent", "shrink", "spectral", "boundary", "discrepancy", "ergodic")
PRESETS = {"sanov": "sanov.json", "f2": "f2.json"}
REQUIRED = object()


def _int(v, path, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ManifestError(path, "must be an integer")
    if lo is not None and v < lo:
        raise ManifestError(path, f"must be >= {lo}")
    return v


def _nonneg(v, path):
    return _int(v, path, 0)


def _pos(v, path):
    return _int(v, path, 1)


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ManifestError(path, "must be a number")
    return v


def _str(v, path):
    if not isinstance(v, str):
        raise ManifestError(path, "must be a string")
    return v


def _list_of(check):
    def f(v, path):
        if not isinstance(v, list) or not v:
            raise ManifestError(path, "must be a nonempty list")
        return [check(x, f"{path}[{i}]") for i, x in enumerate(v)]
    return f


def _point(v, path):
    if v == "random":
        return v
    if not isinstance(v, list) or len(v) != 2:
        raise ManifestError(path, "must be 'random' or a list of two coordinate literals")
    out = []
    for i, c in enumerate(v):
        if isinstance(c, bool) or not isinstance(c, (int, str)):
            raise ManifestError(f"{path}[{i}]", "coordinates are integers or strings like '1/3', 'sqrt2-1'")
        out.append(str(c))
    return out


def _vector(v, path):
    if not isinstance(v, list) or len(v) != 2:
        raise ManifestError(path, "must be a list of two integers")
    out = [_int(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if out == [0, 0]:
        raise ManifestError(path, "must be nonzero")
    return out


def _pair(v, path):
    if not isinstance(v, list) or len(v) != 2:
        raise ManifestError(path, "must be a pair [r, n]")
    return [_pos(v[0], f"{path}[0]"), _pos(v[1], f"{path}[1]")]


def _psi(v, path):
    if v is None:
        return None
    if not isinstance(v, dict) or "a" not in v:
        raise ManifestError(path, "must be an object {a, b}")
    a = _num(v["a"], f"{path}.a")
    if a < 0:
        raise ManifestError(f"{path}.a", "must be >= 0")
    return {"a": a, "b": _num(v.get("b", 0), f"{path}.b")}


def _target(v, path):
    if not isinstance(v, dict):
        raise ManifestError(path, "must be an object")
    kind = v.get("kind", "euclidean-ball")
    if kind not in ("euclidean-ball", "sup-box", "annulus"):
        raise ManifestError(f"{path}.kind", "must be euclidean-ball, sup-box or annulus")
    conv = v.get("convention", "raw")
    if conv not in ("raw", "area"):
        raise ManifestError(f"{path}.convention", "must be raw or area")
    return {"kind": kind, "convention": conv, "inner": _num(v.get("inner", 0.0), f"{path}.inner")}


def _choice(*opts):
    def f(v, path):
        if v not in opts:
            raise ManifestError(path, f"must be one of {', '.join(opts)}")
        return v
    return f


def _opt_num(v, path):
    return None if v is None else _num(v, path)


SCHEMAS = {
    "enumerate": {"radius": (_nonneg, REQUIRED), "budget": (_pos, 10**7)},
    "exponent": {"radius": (_nonneg, REQUIRED), "alphas": (_list_of(_num), REQUIRED),
                 "x": (_point, "random"), "y": (_point, ["0", "0"]), "budget": (_pos, 10**7)},
    "shrink": {"radius": (_nonneg, REQUIRED), "alpha": (_opt_num, None), "psi": (_psi, None),
               "x": (_point, "random"), "y": (_point, ["0", "0"]), "target": (_target, {}),
               "witness_limit": (_nonneg, 1000), "shell_width": (_pos, 2), "budget": (_pos, 10**7)},
    "spectral": {"windows": (_list_of(_pos), REQUIRED), "K": (_nonneg, 8), "tol": (_num, 1e-8),
                 "method": (_choice("lanczos", "power"), "lanczos"),
                 "reduce": (_choice("even", "primitive", "full"), "even"), "max_iter": (_pos, 10000)},
    "boundary": {"m": (_pos, 2), "pairs": (_list_of(_pair), [[4, 2]]), "shells": (_list_of(_pos), [2]),
                 "K": (_pos, 8), "dense_limit": (_nonneg, 500)},
    "discrepancy": {"x": (_point, REQUIRED), "kmax": (_nonneg, REQUIRED), "B": (_pos, 50),
                    "etk_B": (_pos, 16), "Q": (_int, 10000), "budget": (_pos, 4 * 10**6)},
    "ergodic": {"nmax": (_pos, REQUIRED), "b": (_list_of(_vector), [[1, 0]]), "samples": (_nonneg, 0),
                "shell_width": (_pos, 2)},
}
NEEDS_SEED = {"exponent": lambda p: p["x"] == "random", "shrink": lambda p: p["x"] == "random",
              "spectral": lambda p: True, "ergodic": lambda p: p["samples"] > 0}


@dataclass
class ExperimentManifest:
    kind: str
    group: str
    params: dict
    seeds: list
    output: str | None
    base: Path = field(default_factory=Path.cwd)

    def group_path(self) -> Path:
        if self.group.startswith("preset:"):
            name = self.group.split(":", 1)[1]
            return Path(str(resources.files("toralgroups") / "data" / PRESETS[name]))
        p = Path(self.group)
        return p if p.is_absolute() else self.base / p

    def normalized(self) -> dict:
        return {"kind": self.kind, "group": self.group, "params": self.params, "seeds": self.seeds}

    def digest(self) -> str:
        blob = json.dumps({"manifest": self.normalized(),
                           "group_sha256": hashlib.sha256(self.group_path().read_bytes()).hexdigest()},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def validate_manifest(raw: dict, base=None) -> ExperimentManifest:
    """Check a manifest dict; raises ManifestError naming the offending field."""
    if not isinstance(raw, dict):
        raise ManifestError("<root>", "manifest must be a JSON object")
    unknown = set(raw) - {"kind", "group", "params", "seeds", "output"}
    if unknown:
        raise ManifestError(sorted(unknown)[0], "unknown field")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ManifestError("kind", f"must be one of {', '.join(KINDS)}")
    group = raw.get("group")
    if not isinstance(group, str):
        raise ManifestError("group", "must be a file path or preset:<name>")
    if group.startswith("preset:") and group.split(":", 1)[1] not in PRESETS:
        raise ManifestError("group", f"unknown preset (known: {', '.join(PRESETS)})")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ManifestError("params", "must be an object")
    schema = SCHEMAS[kind]
    for k in params:
        if k not in schema:
            raise ManifestError(f"params.{k}", f"unknown parameter for kind {kind}")
    clean = {}
    for k, (check, default) in schema.items():
        if k in params:
            clean[k] = check(params[k], f"params.{k}")
        elif default is REQUIRED:
            raise ManifestError(f"params.{k}", "is required")
        else:
            clean[k] = copy.deepcopy(default)
    if kind == "shrink" and (clean["alpha"] is None) == (clean["psi"] is None):
        raise ManifestError("params.alpha", "give exactly one of alpha, psi")
    seeds = raw.get("seeds", [])
    if not isinstance(seeds, list):
        raise ManifestError("seeds", "must be a list of integers")
    seeds = [_nonneg(s, f"seeds[{i}]") for i, s in enumerate(seeds)]
    if NEEDS_SEED.get(kind, lambda p: False)(clean) and not seeds:
        raise ManifestError("seeds", "explicit seeds are required for this experiment")
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise ManifestError("output", "must be a directory path")
    m = ExperimentManifest(kind, group, clean, seeds, out, Path(base) if base else Path.cwd())
    gp = m.group_path()
    if not gp.is_file():
        raise ManifestError("group", f"file not found: {gp}")
    try:
        from .matrix_core import load_presentation
        load_presentation(gp)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ManifestError("group", f"{gp}: {exc}") from exc
    return m


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(str(path), "manifest file not found")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(str(path), f"invalid JSON: {exc}") from exc
    m = validate_manifest(raw, base=path.parent)
    if m.output is not None and not Path(m.output).is_absolute():
        m.output = str(path.parent / m.output)
    return m


# ---------------------------------------------------------------- helpers

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Fraction):
        return _fmt(v)
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return _fmt(v)
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return v


def git_version() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


@dataclass
class Table:
    columns: list
    rows: list

    def to_csv(self, digest: str) -> str:
        lines = [f"# manifest_sha256: {digest}", ",".join(self.columns)]
        lines += [",".join(_fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    manifest: ExperimentManifest
    digest: str
    tables: dict
    extras: dict
    results: dict
    wall_time: float = 0.0
    files: dict = field(default_factory=dict)

    def summary(self, threads: int | None = None) -> dict:
        from . import __version__
        p = self.manifest.params
        return {
            "manifest_digest": self.digest,
            "kind": self.manifest.kind,
            "group": self.manifest.group,
            "version": git_version(),
            "package_version": __version__,
            "seeds": self.manifest.seeds,
            "budgets": {k: v for k, v in p.items() if "budget" in k or k in ("max_iter", "samples")},
            "threads": threads,
            "wall_time_s": round(self.wall_time, 3),
            "outputs": self.files,
            "results": _jsonable(self.results),
        }


# ---------------------------------------------------------------- runners

def _presentation(m):
    from .matrix_core import load_presentation
    return load_presentation(m.group_path())


def _x_points(m):
    from .torus import TorusPoint
    x = m.params["x"]
    if x == "random":
        return [(s, TorusPoint.random(s)) for s in m.seeds]
    return [(None, TorusPoint.parse(x))]


def _run_enumerate(m):
    from .group_enum import enumerate_ball, fit_critical_exponent
    p = _presentation(m)
    ball = enumerate_ball(p, m.params["radius"], budget=m.params["budget"])
    counts = ball.counts
    rows = [[n, c, c - (counts[n - 1] if n else 0)] for n, c in enumerate(counts)]
    res = {"counts": counts}
    if len(counts) >= 4:
        fit = fit_critical_exponent(counts)
        res["delta_fit"] = fit.delta
        res["delta_confidence"] = list(fit.confidence)
    return {"counts": Table(["n", "count", "shell_new"], rows)}, {}, res


def _run_exponent(m):
    from .group_enum import enumerate_ball
    from .torus import TorusPoint, exponent_scan
    p = _presentation(m)
    ball = enumerate_ball(p, m.params["radius"], budget=m.params["budget"])
    y = TorusPoint.parse(m.params["y"])
    rows, slopes = [], {}
    for seed, x in _x_points(m):
        tab = exponent_scan(ball, x, y, m.params["alphas"], m.params["radius"])
        for j, a in enumerate(tab.alphas):
            prev = 0
            for n in tab.radii:
                c = int(tab.counts[j, n])
                rows.append([seed if seed is not None else "", n, a, c, c - prev])
                prev = c
            lo = m.params["radius"] // 2
            slopes.setdefault(str(a), []).append(tab.slope(j, lo))
    res = {"mean_slope": {a: sum(v) / len(v) for a, v in slopes.items()}}
    return {"counts": Table(["seed", "n", "alpha", "count", "newSolutionsInShell"], rows)}, {}, res


def _run_shrink(m):
    from .group_enum import enumerate_ball
    from .torus import PsiSpec, TargetFamily, TorusPoint, solve_shrinking_target
    p = _presentation(m)
    prm = m.params
    ball = enumerate_ball(p, prm["radius"], budget=prm["budget"])
    y = TorusPoint.parse(prm["y"])
    tgt = TargetFamily(prm["target"].get("kind", "euclidean-ball"), y,
                       prm["target"].get("convention", "raw"), prm["target"].get("inner", 0.0))
    psi = PsiSpec(**prm["psi"]) if prm["psi"] else None
    rows, wit, border = [], {}, {}
    for seed, x in _x_points(m):
        r = solve_shrinking_target(ball, x, y, alpha=prm["alpha"], psi=psi,
                                   max_radius=prm["radius"], target=tgt)
        hits = dict(r.shell_hits(prm["shell_width"]))
        for n in r.radii:
            rows.append([seed if seed is not None else "", n, r.counts[n], r.new_in_shell[n], hits[n]])
        key = str(seed) if seed is not None else "x"
        wit[key] = [w.to_dict() for w in r.witnesses(prm["witness_limit"])]
        border[key] = [ball.element(int(i)).flat for i in r.borderline]
    res = {"threshold": r.threshold, "borderline_total": sum(len(v) for v in border.values())}
    tab = Table(["seed", "n", "count", "newSolutionsInShell", "shellHit"], rows)
    return {"counts": tab}, {"witnesses": {"witnesses": wit, "borderline": border}}, res


def _run_spectral(m):
    from .fourier_spectral import build_truncated_operator, kesten_reference, operator_norm_estimate
    from .group_enum import GroupMeasure, return_prob_norm_estimate
    p = _presentation(m)
    mu = GroupMeasure.symmetric_generators(p)
    prm = m.params
    seed = m.seeds[0]
    rows = []
    for B in prm["windows"]:
        op = build_truncated_operator(mu, B, reduce=prm["reduce"])
        est = operator_norm_estimate(op, tol=prm["tol"], max_iter=prm["max_iter"], seed=seed,
                                     method=prm["method"])
        rows.append([B, op.size, est.value, est.iterations, est.residual, est.converged,
                     op.dropped_mass(), op.is_self_adjoint()])
    tables = {"spectral": Table(["window", "size", "estimate", "iterations", "residual", "converged",
                                 "dropped_mass", "self_adjoint"], rows)}
    res = {"reference": kesten_reference(mu), "estimates": [r[2] for r in rows]}
    if prm["K"]:
        rp = return_prob_norm_estimate(mu, prm["K"])
        tables["return"] = Table(["k", "p_2k", "r_k"],
                                 [[k, rp.p[k - 1], rp.r[k - 1]] for k in range(1, len(rp.r) + 1)])
        res["r_K"] = rp.r[-1] if rp.r else None
        res["return_monotone"] = rp.exact_monotone()
    return tables, {}, res


def _run_boundary(m):
    from .boundary_tree import BoundaryModel, sphere_return_probabilities, verify_matrixnorm
    prm = m.params
    model = BoundaryModel(prm["m"])
    rep = verify_matrixnorm(model, [tuple(x) for x in prm["pairs"]], dense_limit=prm["dense_limit"])
    g_rows = [[x["r"], x["n"], x["size"], x["G"], x["ratio"], x.get("dense_norm", float("nan"))]
              for x in rep["rows"]]
    s_rows = []
    for n in prm["shells"]:
        r, _ = sphere_return_probabilities(prm["m"], n, prm["K"])
        est = r[-1]
        s_rows.append([n, est, -2 * math.log(est) if est > 0 else float("inf"), model.delta * n])
    tables = {"gershgorin": Table(["r", "n", "size", "G", "ratio", "dense_norm"], g_rows),
              "shells": Table(["n", "estimate", "minus2log", "delta_n"], s_rows)}
    res = {"C": rep["C"], "dense_dominated": rep["dense_dominated"], "delta": model.delta}
    return tables, {}, res


def _run_discrepancy(m):
    from .discrepancy import diophantine_type, discrepancy, etk_bound, etk_constant, max_fourier, walk_series
    from .group_enum import GroupMeasure
    from .torus import TorusPoint
    prm = m.params
    mu = GroupMeasure.symmetric_generators(_presentation(m))
    x = TorusPoint.parse(prm["x"])
    rows = []
    for nu in walk_series(mu, x, prm["kmax"], budget=prm["budget"]):
        d = discrepancy(nu)
        rows.append([nu.meta["k"], len(nu), max_fourier(nu, prm["B"]), d.value, d.error,
                     etk_bound(nu, prm["etk_B"])])
    verdict = diophantine_type(x, prm["Q"]) if prm["Q"] >= 2 else None
    tab = Table(["k", "support", "maxFourier", "discrepancy", "discrepancyError", "etkBound"], rows)
    res = {"etk_constant": etk_constant(2), "verdict": verdict.describe() if verdict else None,
           "decay_fit": "fitted, not certified"}
    ks = [r[0] for r in rows if r[0] >= 4 and r[2] > 0]
    if len(ks) >= 2:
        import numpy as np
        ys = [math.log(r[2]) for r in rows if r[0] >= 4 and r[2] > 0]
        res["log_maxFourier_slope"] = float(np.polyfit(ks, ys, 1)[0])
    extras = {"verdict": verdict.to_dict() if verdict else {}}
    return {"decay": tab}, extras, res


def _run_ergodic(m):
    from .group_enum import enumerate_ball
    from .torus import ergodic_character_error, ergodic_character_error_mc
    prm = m.params
    p = _presentation(m)
    ball = enumerate_ball(p, prm["nmax"])
    rows = []
    for n in range(1, prm["nmax"] + 1):
        idx = ball.shell_indices(n, prm["shell_width"])
        if len(idx) == 0:
            continue
        S = ball.shell(n, prm["shell_width"])
        for b in prm["b"]:
            e = ergodic_character_error(S, b)
            mc, se = (float("nan"), float("nan"))
            if prm["samples"]:
                mc, se = ergodic_character_error_mc(S, b, prm["samples"], m.seeds[0])
            rows.append([n, b[0], b[1], len(S), e, float(e), mc, se])
    tab = Table(["n", "b1", "b2", "shellSize", "errorSq", "errorSqFloat", "mcErrorSq", "mcSE"], rows)
    return {"ergodic": tab}, {}, {"rows": len(rows)}


RUNNERS = {"enumerate": _run_enumerate, "exponent": _run_exponent, "shrink": _run_shrink,
           "spectral": _run_spectral, "boundary": _run_boundary, "discrepancy": _run_discrepancy,
           "ergodic": _run_ergodic}
PLOT_KIND = {"enumerate": "growth", "spectral": "spectral", "boundary": "spectral",
             "discrepancy": "decay", "exponent": "exponent"}


def run_experiment(m: ExperimentManifest, threads: int | None = None, write: bool = True) -> RunResult:
    t0 = time.perf_counter()
    digest = m.digest()
    tables, extras, res = RUNNERS[m.kind](m)
    out = RunResult(m, digest, tables, extras, res)
    out.wall_time = time.perf_counter() - t0
    if write and m.output:
        d = Path(m.output)
        d.mkdir(parents=True, exist_ok=True)
        for name, tab in tables.items():
            txt = tab.to_csv(digest)
            (d / f"{name}.csv").write_text(txt)
            out.files[f"{name}.csv"] = hashlib.sha256(txt.encode()).hexdigest()
        for name, obj in extras.items():
            txt = json.dumps({"manifest_digest": digest, **_jsonable(obj)}, indent=1, sort_keys=True) + "\n"
            (d / f"{name}.json").write_text(txt)
            out.files[f"{name}.json"] = hashlib.sha256(txt.encode()).hexdigest()
        if m.kind in PLOT_KIND:
            txt = emit_plot_data(out, PLOT_KIND[m.kind])
            (d / "plot.dat").write_text(txt)
            out.files["plot.dat"] = hashlib.sha256(txt.encode()).hexdigest()
        summary = out.summary(threads)
        (d / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return out


# ---------------------------------------------------------------- plot data

def emit_plot_data(results: RunResult, kind: str) -> str:
    """Whitespace-separated columns with a commented header (gnuplot-ready)."""
    head = [f"# manifest_sha256: {results.digest}"]
    if kind == "growth":
        tab = results.tables["counts"]
        head.append("# n[displacement]  count[elements]  log_count[nats]")
        body = [(r[0], r[1], math.log(r[1])) for r in tab.rows]
    elif kind == "spectral":
        if "shells" in results.tables:
            tab = results.tables["shells"]
            head.append("# n[shell]  estimate[norm]  minus2log[nats]  envelope[delta*n]")
            body = [tuple(r) for r in tab.rows]
        else:
            tab = results.tables["spectral"]
            ref = results.results.get("reference")
            head.append("# n[window]  estimate[norm]  minus2log[nats]  envelope[reference norm]")
            body = [(r[0], r[2], -2 * math.log(r[2]), ref if ref is not None else float("nan"))
                    for r in tab.rows]
    elif kind == "decay":
        tab = results.tables["decay"]
        head.append("# k[steps]  maxFourier[modulus]  etkBound[mass]  discrepancy[mass]")
        body = [(r[0], r[2], r[5], r[3]) for r in tab.rows]
    elif kind == "exponent":
        tab = results.tables["counts"]
        head.append("# seed  n[displacement]  alpha[exponent]  count[solutions]")
        body = [(r[0] if r[0] != "" else "-", r[1], r[2], r[3]) for r in tab.rows]
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    lines = head + ["  ".join(_fmt(v) for v in row) for row in body]
    return "\n".join(lines) + "\n"
