"""Command-line laboratory: ``branchlab <subcommand> ...``.

Data goes to standard output or to files under ``--out``; diagnostics and
errors go to standard error, errors as a single JSON line. Exit codes are 0
on success, 2 on a configuration error and 3 when a resource cap is hit.

Family specs (``--family``, inline JSON or a path) select a splitting law:

    {"kind": "gw", "offspring": "binary" | "poisson" | "geometric" | [p0, p1, ...]}
    {"kind": "uniform", "m": 2 | "inf", "N": 400}
    {"kind": "alpha_theta", "alpha": 0.5, "theta": 0.5}
    {"kind": "consistent", "measure": {...}, "gamma": 1.0}
    {"kind": "propexemple", "measure": {...}, "gamma": 1.0}
    {"kind": "halving"}
    {"kind": "tabulated", "model": "leaf", "tables": [{"n": 2, "entries": [...]}]}

Measures use {"kind": "nu2"}, {"kind": "alpha_theta", ...}, {"kind": "point",
"s": [...]} or {"kind": "stable", "alpha": ...}.

CSV schemas:
    counts      n,T,T_tilde (then a blank line and the constants record when N >= 100)
    sample      rep,height,n_vertices,n_leaves,root_split
    probe-h     family,n,gamma,estimate,stderr,mode
    scaling     n,model,mean,sd,ks_cross,ks_pvalue
    coupling    jstar,count
    continuum   rep,height,marked_depth
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .fragmentation import continuum_heights, measure_from_json
from .polya import constants, natural_coupling, otter_counts, uniform_law, uniform_tree, uniform_vertex_depths
from .samplers import exact_P_law, exact_Q_law, gw_uniform_vertex_depths, sample_P, sample_Q
from .splitlaws import (
    HalvingLaw,
    NotEnumerable,
    OffspringLaw,
    ProbeResult,
    alpha_theta_law,
    consistent_law,
    gw_law,
    load_tabulated,
    probe_H,
    propexemple_law,
)
from .stats import ks_two_sample, tv_distance
from .trees import enumerate_trees, tree_stats

CHUNK = 500
ENUMERATE_MAX = 16
EXACT_LAW_MAX = 9
COUNTS_MAX = {"inf": 600, "finite": 1500}


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class ResourceCap(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("argv", message)


# -- family specs ---------------------------------------------------------------

def _load_json(text: str, key: str):
    if not text.lstrip().startswith(("{", "[")) and Path(text).is_file():
        text = Path(text).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(key, f"malformed JSON: {e}") from None


def _need(spec: dict, key: str, where: str):
    if key not in spec:
        raise ConfigError(key, f"{where} spec is missing '{key}'")
    return spec[key]


def _offspring(spec) -> OffspringLaw:
    if isinstance(spec, list):
        return OffspringLaw(tuple(float(x) for x in spec))
    named = {"binary": OffspringLaw.binary, "poisson": OffspringLaw.poisson,
             "geometric": OffspringLaw.geometric}
    if spec not in named:
        raise ConfigError("offspring", f"unknown offspring law {spec!r}")
    return named[spec]()


def _measure(spec):
    try:
        return measure_from_json(spec)
    except KeyError as e:
        raise ConfigError(e.args[0], f"measure spec is missing or has bad '{e.args[0]}'") from None


def _m_value(m):
    if m in ("inf", "∞", None) or m == math.inf:
        return math.inf
    try:
        m = int(m)
    except (TypeError, ValueError):
        raise ConfigError("m", f"m must be a positive integer or 'inf', got {m!r}") from None
    if m < 1:
        raise ConfigError("m", "m must be at least 1")
    return m


@lru_cache(maxsize=8)
def law_from_spec(text: str):
    """Build a splitting law from a canonical JSON family spec."""
    spec = json.loads(text)
    if not isinstance(spec, dict):
        raise ConfigError("family", "family spec must be a JSON object")
    kind = _need(spec, "kind", "family")
    try:
        if kind == "gw":
            return gw_law(_offspring(_need(spec, "offspring", "gw")), int(spec.get("N", 4000)))
        if kind == "uniform":
            return uniform_law(otter_counts(_m_value(_need(spec, "m", "uniform")), int(spec.get("N", 400))))
        if kind == "alpha_theta":
            return alpha_theta_law(float(_need(spec, "alpha", "alpha_theta")),
                                   float(_need(spec, "theta", "alpha_theta")))
        if kind == "consistent":
            return consistent_law(_measure(_need(spec, "measure", "consistent")),
                                  gamma=float(spec.get("gamma", 1.0)))
        if kind == "propexemple":
            return propexemple_law(_measure(_need(spec, "measure", "propexemple")),
                                   float(_need(spec, "gamma", "propexemple")))
        if kind == "halving":
            return HalvingLaw(float(spec.get("gamma", 1.0)))
        if kind == "tabulated":
            try:
                return load_tabulated(_need(spec, "tables", "tabulated"), spec.get("model", "leaf"),
                                      float(spec.get("gamma", 1.0)))
            except KeyError as e:
                raise ConfigError(e.args[0], f"tabulated entry is missing '{e.args[0]}'") from None
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(kind, str(e)) from None
    raise ConfigError("kind", f"unknown family kind {kind!r}")


def _family_text(arg: str | None) -> str:
    if arg is None:
        raise ConfigError("family", "--family is required")
    return json.dumps(_load_json(arg, "family"), sort_keys=True)


# -- argument helpers -----------------------------------------------------------

def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("BRANCHLAB_SEED")
    if env is None:
        raise ConfigError("seed", "a seed is required (--seed or BRANCHLAB_SEED)")
    try:
        return int(env)
    except ValueError:
        raise ConfigError("seed", f"BRANCHLAB_SEED is not an integer: {env!r}") from None


def _grid(text: str) -> list[int]:
    try:
        a, b, step = (int(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError("n-grid", f"expected a:b:step, got {text!r}") from None
    if step < 1 or a < 1 or b < a:
        raise ConfigError("n-grid", "n grid must be strictly increasing and positive")
    return list(range(a, b + 1, step))


def _positive(value, key):
    if value is None or value < 1:
        raise ConfigError(key, f"--{key} must be a positive integer")
    return value


def _chunks(reps: int, seed: int):
    """Fixed-size replicate blocks with their own seed streams, independent of the worker count."""
    bounds = [(a, min(a + CHUNK, reps)) for a in range(0, reps, CHUNK)]
    seqs = np.random.SeedSequence(seed).spawn(len(bounds))
    return [(a, b, s) for (a, b), s in zip(bounds, seqs)]


def _fan_out(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _emit(args, name: str, text: str):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- SVG -----------------------------------------------------------------------

def _svg(points_or_bars, title: str, kind: str = "line") -> str:
    """A bare SVG 1.1 line or bar chart with the data values embedded as text."""
    W, H, pad = 480, 320, 40
    xs = [float(x) for x, _ in points_or_bars]
    ys = [float(y) for _, y in points_or_bars]
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(0.0, min(ys)), max(ys) if max(ys) > 0 else 1.0
    sx = lambda x: pad + (x - x0) / (x1 - x0) * (W - 2 * pad)
    sy = lambda y: H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}">',
           f'<text x="{pad}" y="20" font-size="14">{title}</text>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>']
    if kind == "line":
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="steelblue" points="{path}"/>')
    else:
        w = (W - 2 * pad) / max(len(xs), 1)
        for i, y in enumerate(ys):
            out.append(f'<rect x="{pad + i * w:.2f}" y="{sy(y):.2f}" width="{w * 0.9:.2f}" '
                       f'height="{H - pad - sy(y):.2f}" fill="steelblue"/>')
    for x, y in zip(xs, ys):
        out.append(f'<!-- data {x!r} {y!r} -->')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- subcommands ------------------------------------------------------------------

def cmd_enumerate(args):
    n = _positive(args.n, "n")
    m = _m_value(args.m)
    if n > ENUMERATE_MAX:
        raise ResourceCap("n", f"enumeration is capped at n = {ENUMERATE_MAX}")
    trees = enumerate_trees(n, None if m == math.inf else m)
    _emit(args, "trees.jsonl", "".join(json.dumps(t.to_nested()) + "\n" for t in trees))


def cmd_counts(args):
    m = _m_value(args.m)
    N = _positive(args.N, "N")
    cap = COUNTS_MAX["inf" if m == math.inf else "finite"]
    if N > cap:
        raise ResourceCap("N", f"count tables are capped at N = {cap} for this m")
    t = otter_counts(m, N)
    const = constants(t) if N >= 100 else None
    if args.format == "json":
        data = t.to_json()
        if const is not None:
            data["constants"] = dict(zip(const.CSV_HEADER, const.csv_row()))
        _emit(args, "counts.json", json.dumps(data) + "\n")
        return
    text = _csv(["n", "T", "T_tilde"], [[n, t.T[n], t.T_tilde[n]] for n in range(1, N + 1)])
    if const is not None:
        text += "\n" + _csv(const.CSV_HEADER, [const.csv_row()])
    _emit(args, "counts.csv", text)


def _sample_block(job):
    text, n, a, b, seq = job
    q = law_from_spec(text)
    draw = sample_Q if q.model == "vertex" else sample_P
    out = []
    for i, s in zip(range(a, b), seq.spawn(b - a)):
        st = tree_stats(draw(q, n, np.random.default_rng(s)))
        out.append((i, st))
    return out


def cmd_sample(args):
    text = _family_text(args.family)
    n, reps, seed = _positive(args.n, "n"), _positive(args.reps, "reps"), _seed(args)
    law_from_spec(text)  # fail fast on a bad spec
    jobs = [(text, n, a, b, s) for a, b, s in _chunks(reps, seed)]
    rows = [r for block in _fan_out(_sample_block, jobs, args.workers) for r in block]
    if args.format == "json":
        body = "".join(json.dumps({"rep": i, **st.to_json()}) + "\n" for i, st in rows)
        _emit(args, "sample.jsonl", body)
    else:
        split = lambda st: " ".join(map(str, st.root_split.parts)) if st.root_split else ""
        _emit(args, "sample.csv", _csv(["rep", "height", "n_vertices", "n_leaves", "root_split"],
                                       [[i, st.height, st.n_vertices, st.n_leaves, split(st)]
                                        for i, st in rows]))


def cmd_exact_law(args):
    text = _family_text(args.family)
    n = _positive(args.n, "n")
    if n > EXACT_LAW_MAX:
        raise ResourceCap("n", f"exact laws are capped at n = {EXACT_LAW_MAX}")
    q = law_from_spec(text)
    law = exact_Q_law(q, n) if q.model == "vertex" else exact_P_law(q, n)
    items = sorted(law.items(), key=lambda kv: kv[0], reverse=True)
    show = lambda p: str(p) if isinstance(p, Fraction) else repr(float(p))
    body = "".join(json.dumps({"tree": t.to_nested(), "p": show(p)}) + "\n" for t, p in items)
    _emit(args, "exact_law.jsonl", body)


def cmd_probe_h(args):
    text = _family_text(args.family)
    grid = _grid(args.n_grid) if args.n_grid else [_positive(args.n, "n")]
    q = law_from_spec(text)
    needs_mc = args.mode == "mc" or (args.mode == "auto" and not all(q.has_exact(n) for n in grid))
    seed = _seed(args) if needs_mc else (args.seed or 0)
    results: list[ProbeResult] = []
    for n, s in zip(grid, np.random.SeedSequence(seed).spawn(len(grid))):
        results.append(probe_H(q, None, n, mode=args.mode, reps=args.reps or 100_000,
                               rng=np.random.default_rng(s)))
    body = _csv(ProbeResult.CSV_HEADER, [r.csv_row() for r in results])
    if args.format == "json":
        _emit(args, "probe.json", json.dumps([dict(zip(ProbeResult.CSV_HEADER, r.csv_row()))
                                              for r in results]) + "\n")
    else:
        _emit(args, "probe.csv", body)
    if args.format == "svg" or args.svg:
        _write_svg(args, "probe.svg", _svg([(r.n, r.estimate) for r in results], f"probe {q.name}"))


def _write_svg(args, name, text):
    if not args.out:
        raise ConfigError("out", "SVG output needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _scaling_block(job):
    n, a, b, seq, c2 = job
    xi = OffspringLaw.binary()
    g_seq, u_seq = seq.spawn(2)
    gw = gw_uniform_vertex_depths(xi, n, b - a, np.random.default_rng(g_seq))
    uni = uniform_vertex_depths(_tables2(), n, b - a, np.random.default_rng(u_seq))
    return gw * xi.sigma / (2 * math.sqrt(n)), uni / (c2 * math.sqrt(n))


@lru_cache(maxsize=1)
def _tables2():
    return otter_counts(2, 400)


def cmd_scaling(args):
    """Rescaled uniform-vertex depths: binary GW trees against m = 2 uniform trees."""
    grid = _grid(args.n_grid) if args.n_grid else [_positive(args.n, "n")]
    reps, seed = _positive(args.reps, "reps"), _seed(args)
    c2 = constants(_tables2()).c_m
    rows = []
    for n, s in zip(grid, np.random.SeedSequence(seed).spawn(len(grid))):
        n_odd = n if n % 2 else n + 1  # binary trees have an odd number of vertices
        jobs = [(n_odd, a, b, sq, c2) for a, b, sq in _chunks(reps, int(s.generate_state(1)[0]))]
        parts = _fan_out(_scaling_block, jobs, args.workers)
        gw = np.concatenate([p[0] for p in parts])
        uni = np.concatenate([p[1] for p in parts])
        ks, p = ks_two_sample(gw, uni)
        for name, x in (("gw_binary", gw), ("uniform_m2", uni)):
            rows.append([n_odd, name, repr(float(x.mean())), repr(float(x.std(ddof=1))), repr(ks), repr(p)])
    _emit(args, "scaling.csv", _csv(["n", "model", "mean", "sd", "ks_cross", "ks_pvalue"], rows))


def _coupling_block(job):
    m, N, n, a, b, seq = job
    t = _coupling_tables(m, N)
    out = []
    for s in seq.spawn(b - a):
        rng = np.random.default_rng(s)
        orig = uniform_tree(t, n, rng)
        res = natural_coupling(t, orig, rng)
        out.append((res.jstar, abs(res.coupled.height - orig.height) <= 2 * res.jstar, res.coupled))
    return out


@lru_cache(maxsize=2)
def _coupling_tables(m, N):
    return otter_counts(m, N)


def cmd_coupling(args):
    m = _m_value(args.m)
    n, reps, seed = _positive(args.n, "n"), _positive(args.reps, "reps"), _seed(args)
    N = max(400, n)
    if N > COUNTS_MAX["inf" if m == math.inf else "finite"]:
        raise ResourceCap("n", "coupling size exceeds the count-table cap")
    jobs = [(m, N, n, a, b, s) for a, b, s in _chunks(reps, seed)]
    res = [r for block in _fan_out(_coupling_block, jobs, args.workers) for r in block]
    hist: dict[int, int] = {}
    for j, _, _ in res:
        hist[j] = hist.get(j, 0) + 1
    violations = sum(not ok for _, ok, _ in res)
    tv = None
    if n <= EXACT_LAW_MAX:
        law = {k: float(v) for k, v in exact_Q_law(uniform_law(_coupling_tables(m, N)), n).items()}
        emp: dict = {}
        for _, _, tr in res:
            emp[tr] = emp.get(tr, 0) + 1 / reps
        tv = float(tv_distance(emp, law)) if abs(sum(emp.values()) - 1) < 1e-9 else None
    print(json.dumps({"height_bound_violations": violations, "marginal_tv": tv}), file=sys.stderr)
    if args.format == "json":
        _emit(args, "coupling.json", json.dumps({
            "m": "inf" if m == math.inf else m, "n": n, "reps": reps,
            "jstar_histogram": {str(k): v for k, v in sorted(hist.items())},
            "height_bound_violations": violations, "marginal_tv": tv}) + "\n")
    else:
        _emit(args, "coupling.csv", _csv(["jstar", "count"], sorted(hist.items())))
    if args.format == "svg" or args.svg:
        _write_svg(args, "coupling.svg", _svg(sorted(hist.items()), "j* histogram", kind="bar"))


def _continuum_block(job):
    text, gamma, n, a, b, seq = job
    nu = measure_from_json(text)
    h, marked = continuum_heights(nu, gamma, n, b - a, np.random.default_rng(seq),
                                  law=_propexemple(text, gamma))
    return list(zip(range(a, b), h, marked))


@lru_cache(maxsize=2)
def _propexemple(text, gamma):
    return propexemple_law(measure_from_json(text), gamma)


def cmd_continuum(args):
    spec = _load_json(args.nu, "nu")
    _measure(spec)
    text = json.dumps(spec, sort_keys=True)
    if not args.gamma > 0:
        raise ConfigError("gamma", "gamma must be positive")
    n, reps, seed = _positive(args.n, "n"), _positive(args.reps, "reps"), _seed(args)
    jobs = [(text, args.gamma, n, a, b, s) for a, b, s in _chunks(reps, seed)]
    rows = [r for block in _fan_out(_continuum_block, jobs, args.workers) for r in block]
    _emit(args, "continuum.csv", _csv(["rep", "height", "marked_depth"],
                                      [[i, repr(float(h)), repr(float(d))] for i, h, d in rows]))


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="branchlab", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt="csv", formats=("csv", "json", "svg")):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory (default: standard output)")
        sp.add_argument("--format", choices=formats, default=fmt)
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--svg", action="store_true", help="also write an SVG plot under --out")

    sp = sub.add_parser("enumerate", help="canonical trees as JSON lines")
    sp.add_argument("n", type=int)
    sp.add_argument("m", nargs="?", default="inf")
    common(sp, "json", ("json",))
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("counts", help="Otter count tables and constants (CSV: n,T,T_tilde)")
    sp.add_argument("m")
    sp.add_argument("N", type=int)
    common(sp, "csv", ("csv", "json"))
    sp.set_defaults(func=cmd_counts)

    sp = sub.add_parser("sample", help="tree statistics (CSV: rep,height,n_vertices,n_leaves,root_split)")
    sp.add_argument("--family")
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int, default=100)
    common(sp, "csv", ("csv", "json"))
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("exact-law", help="full pmf over trees as JSON lines (n <= 9)")
    sp.add_argument("--family")
    sp.add_argument("--n", type=int)
    common(sp, "json", ("json",))
    sp.set_defaults(func=cmd_exact_law)

    sp = sub.add_parser("probe-h", help="probe of hypothesis (H) (CSV: family,n,gamma,estimate,stderr,mode)")
    sp.add_argument("--family")
    sp.add_argument("--n", type=int)
    sp.add_argument("--n-grid", dest="n_grid")
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--mode", choices=("auto", "exact", "mc"), default="auto")
    common(sp)
    sp.set_defaults(func=cmd_probe_h)

    sp = sub.add_parser("scaling", help="rescaled depths, GW binary vs m=2 uniform (CSV: n,model,mean,sd,ks_cross,ks_pvalue)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--n-grid", dest="n_grid")
    sp.add_argument("--reps", type=int, default=1000)
    common(sp, "csv", ("csv",))
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("coupling", help="natural coupling audit (CSV: jstar,count)")
    sp.add_argument("m")
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int, default=1000)
    common(sp)
    sp.set_defaults(func=cmd_coupling)

    sp = sub.add_parser("continuum", help="approximate fragmentation tree heights (CSV: rep,height,marked_depth)")
    sp.add_argument("nu", help="measure JSON or path")
    sp.add_argument("gamma", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--reps", type=int, default=1000)
    common(sp, "csv", ("csv",))
    sp.set_defaults(func=cmd_continuum)
    return p


def _fail(code: int, kind: str, key: str, message: str) -> int:
    print(json.dumps({"error": kind, "key": key, "message": message}), file=sys.stderr)
    return code


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.workers < 1:
            raise ConfigError("workers", "--workers must be positive")
        args.func(args)
    except ConfigError as e:
        return _fail(2, "config", e.key, str(e))
    except (ResourceCap, NotEnumerable) as e:
        return _fail(3, "resource", getattr(e, "key", "n"), str(e))
    except MemoryError:
        return _fail(3, "resource", "memory", "out of memory")
    except (ValueError, KeyError) as e:
        # invalid values that only the library can detect, e.g. an impossible n
        return _fail(2, "config", "value", str(e))
    return 0


def main() -> None:
    sys.exit(run())
