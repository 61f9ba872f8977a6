"""Command-line experiment runner.

    sfplab run --spec exp.json --out results/
    sfplab validate exp.json
    sfplab hct --spec exp.json --out results/ --xi-prime 0.15 --d1 4
    sfplab bounds --lemma max_weight --grid grid.json --out results/

A spec is a JSON object::

    {"kind": "distances", "params": {...}, "sides": [64, 128],
     "boundary": "free", "seeds": {"base": 0, "count": 10},
     "options": {"pairs": 2000, "k_max": 4}}

Every output CSV is a pure function of the spec.  ``manifest.json`` echoes
the spec together with library versions, wall time and a sha256 digest of
each seed's files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bounds, graphs, hierarchy, walk
from .errors import PreconditionError, SFPError, SpecError
from .model import Boundary, BoxGeometry, ModelParams, ParetoC
from .sampler import sample_configuration

KINDS = ("sample", "degrees", "distances", "walk", "hct", "bounds", "renorm")
_TOP_KEYS = {"kind", "params", "sides", "boundary", "seeds", "options", "lemma", "grid"}
_OPTIONS = {
    "sample": {"restrict_to_green"},
    "degrees": {"min_vertices", "anchor_rank"},
    "distances": {"pairs", "k_max", "exploratory"},
    "walk": {"radii", "walks", "max_steps", "tolerance", "start"},
    "hct": {"xi", "xi_prime", "d1", "mode", "a_schedule"},
    "bounds": set(),
    "renorm": {"N", "beta", "mode"},
}


# ------------------------------------------------------------------ spec

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _seeds(obj) -> list:
    if isinstance(obj, list):
        seeds = obj
    elif isinstance(obj, dict) and set(obj) == {"base", "count"}:
        seeds = list(range(int(obj["base"]), int(obj["base"]) + int(obj["count"])))
    else:
        raise SpecError("seeds must be a list or {\"base\": b, \"count\": c}")
    if not seeds:
        raise SpecError("seed list is empty")
    if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in seeds):
        raise SpecError("seeds must be non-negative integers")
    return sorted(set(seeds))


def load_spec(obj) -> dict:
    """Schema checks; returns a normalised copy with ``params`` parsed."""
    if not isinstance(obj, dict):
        raise SpecError("spec must be a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise SpecError(f"unknown spec keys {sorted(unknown)}")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise SpecError(f"kind must be one of {list(KINDS)}, got {kind!r}")
    spec = {"kind": kind, "options": dict(obj.get("options", {}))}
    bad = set(spec["options"]) - _OPTIONS[kind]
    if bad:
        raise SpecError(f"unknown options for {kind}: {sorted(bad)}")
    if kind == "bounds":
        lemma = obj.get("lemma")
        if lemma not in BOUND_ORACLES:
            raise SpecError(f"lemma must be one of {sorted(BOUND_ORACLES)}, got {lemma!r}")
        grid = obj.get("grid")
        if not isinstance(grid, list) or not grid:
            raise SpecError("bounds spec needs a non-empty 'grid' list")
        spec.update(lemma=lemma, grid=[_parse_entry(lemma, e) for e in grid])
        return spec
    if "params" not in obj:
        raise SpecError("missing 'params'")
    spec["params"] = ModelParams.from_dict(obj["params"])
    sides = obj.get("sides")
    if not isinstance(sides, list) or not sides or any(
            not isinstance(s, int) or isinstance(s, bool) or s < 1 for s in sides):
        raise SpecError("sides must be a non-empty list of positive integers")
    spec["sides"] = sides
    try:
        spec["boundary"] = Boundary(obj.get("boundary", "free"))
    except ValueError:
        raise SpecError(f"boundary must be 'free' or 'torus', got {obj.get('boundary')!r}") from None
    spec["seeds"] = _seeds(obj.get("seeds", [0]))
    _cross_checks(spec)
    return spec


def _cross_checks(spec) -> None:
    p, kind, opt = spec["params"], spec["kind"], spec["options"]
    if kind == "hct":
        hierarchy.xi_upper_bound(p)
        if "xi_prime" not in opt or "d1" not in opt:
            raise SpecError("hct needs options xi_prime and d1")
        if opt.get("mode", "certificate") not in ("certificate", "exhaustive"):
            raise SpecError("hct mode must be 'certificate' or 'exhaustive'")
        xi = opt.get("xi", hierarchy.xi_upper_bound(p))
        if not 0 < opt["xi_prime"] < xi:
            raise PreconditionError(f"need 0 < xi' < xi = {xi}")
    if kind == "distances" and graphs.theorem_distance_bound(p) is None and not opt.get("exploratory"):
        raise PreconditionError("distance experiments need gamma <= 1 or alpha < d (or exploratory)")
    if kind == "walk" and not opt.get("radii"):
        raise SpecError("walk needs a non-empty radii list")
    if kind == "renorm":
        if "N" not in opt:
            raise SpecError("renorm needs option N")
        bad = [m for m in spec["sides"] if m % opt["N"]]
        if bad:
            raise SpecError(f"sides {bad} not divisible by N={opt['N']}")


def _params_or_none(entry):
    if "params" in entry:
        entry = dict(entry)
        entry["params"] = ModelParams.from_dict(entry["params"])
    return entry


def _require(cond, msg):
    if not cond:
        raise PreconditionError(msg)


def _check_max_weight(e):
    c = e.get("c", 1.0)
    _require(e["n"] >= 1, "n must be >= 1")
    _require(e["K2"] >= e["K1"] >= c ** (1 / (e["tau"] - 1)),
             "need K2 >= K1 >= c^(1/(tau-1))")


def _check_recurrence(e):
    p = e["params"]
    _require(p.d == 2 and p.alpha >= 4 and (p.tau > 2 or p.gamma > 2),
             "needs d = 2, alpha >= 4 and (tau > 2 or gamma > 2)")


def _check_gamma_below_2(e):
    _require(e["params"].gamma < 2, f"needs gamma < 2, got {e['params'].gamma}")


def _check_pareto(e):
    _require(isinstance(e["params"].weight_law, ParetoC), "needs a Pareto weight law")


def _check_u(e):
    _require(e["u"] >= 1, "u must be >= 1")


# oracle id -> (callable, required keys, static checker)
BOUND_ORACLES = {
    "max_weight": (bounds.max_weight_conditional, {"n", "K1", "K2", "tau"}, _check_max_weight),
    "big_degree_box": (bounds.big_degree_box_probability, {"N", "beta", "params"}, _check_gamma_below_2),
    "box_distance": (bounds.box_distance_bound, {"d", "k", "N", "v1", "v2", "u1", "u2"}, None),
    "coarse_connectivity": (bounds.coarse_connectivity_domination, {"N", "k", "beta", "params"}, _check_pareto),
    "cluster_connectivity": (bounds.cluster_connectivity_bound, {"N", "k", "beta", "params"}, None),
    "product_weights": (bounds.product_weight_expectation, {"u", "tau"}, _check_u),
    "recurrence_marginal": (bounds.recurrence_marginal_check, {"params"}, _check_recurrence),
}


def _parse_entry(lemma, entry):
    if not isinstance(entry, dict):
        raise SpecError("grid entries must be objects")
    fn, keys, check = BOUND_ORACLES[lemma]
    missing = keys - set(entry)
    if missing:
        raise SpecError(f"{lemma} grid entry missing {sorted(missing)}")
    entry = _params_or_none(entry)
    if check is not None:
        check(entry)
    return entry


# ---------------------------------------------------------------- output

class _Writer:
    """Collects files per seed so each seed gets one digest."""

    def __init__(self, out: Path):
        self.out = out
        self.digests: dict = {}

    def _record(self, path: Path, data: bytes, seed):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        key = "all" if seed is None else str(seed)
        h = self.digests.setdefault(key, hashlib.sha256())
        h.update(path.relative_to(self.out).as_posix().encode())
        h.update(data)

    def csv(self, name, header, rows, seed=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        self._record(self.out / name, buf.getvalue().encode(), seed)

    def json(self, name, obj, seed=None):
        data = json.dumps(obj, sort_keys=True, indent=1, default=_json_default).encode()
        self._record(self.out / name, data, seed)

    def hexdigests(self):
        return {k: h.hexdigest() for k, h in sorted(self.digests.items())}


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, ModelParams):
        return x.to_dict()
    return str(x)


def _map_seeds(fn, seeds, threads):
    """Run ``fn`` per seed; results come back sorted by seed whatever the pool size."""
    if threads <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, seeds))


# ------------------------------------------------------------ experiments

def _geom(spec, side):
    return BoxGeometry.cube(spec["params"].d, side, spec["boundary"])


def _run_sample(spec, w, threads):
    p = spec["params"]
    green = bool(spec["options"].get("restrict_to_green", False))
    for side in spec["sides"]:
        def one(s):
            return sample_configuration(_geom(spec, side), p, s, restrict_to_green=green)
        for s, cfg in zip(spec["seeds"], _map_seeds(one, spec["seeds"], threads)):
            coords = cfg.coords()
            rows = ([i, *coords[i].tolist(), float(cfg.weights[i]), int(cfg.green[i])]
                    for i in range(cfg.n_vertices))
            tag = f"m{side}/seed{s}"
            w.csv(f"{tag}/vertices.csv", ["index"] + [f"x{a}" for a in range(p.d)] + ["weight", "green"],
                  rows, s)
            u, v = cfg.edges()
            w.csv(f"{tag}/edges.csv", ["u", "v"], zip(u.tolist(), v.tolist()), s)


def _run_degrees(spec, w, threads):
    opt = spec["options"]
    summary = []
    for side in spec["sides"]:
        def one(s):
            cfg = sample_configuration(_geom(spec, side), spec["params"], s)
            return graphs.degree_tail(cfg, opt.get("min_vertices", 1000), opt.get("anchor_rank", 10))
        for s, tail in zip(spec["seeds"], _map_seeds(one, spec["seeds"], threads)):
            w.csv(f"degrees_m{side}_seed{s}.csv", ["s", "ccdf"], tail.rows(), s)
            summary.append([side, s, tail.gamma_hat, tail.window[0], tail.window[1], int(tail.undefined)])
    w.csv("degree_summary.csv", ["side", "seed", "gamma_hat", "window_lo", "window_hi", "undefined"],
          summary)


def _run_distances(spec, w, threads):
    opt = spec["options"]
    summary = []
    for side in spec["sides"]:
        rep = graphs.diameter_experiment(_geom(spec, side), spec["params"], opt.get("k_max", 4),
                                         opt.get("pairs", 1000), 0, exploratory=opt.get("exploratory", False))
        pooled = graphs.DistanceReport(rep.description)

        def one(s):
            return graphs.diameter_experiment(_geom(spec, side), spec["params"], opt.get("k_max", 4),
                                              opt.get("pairs", 1000), 1, seed_base=s,
                                              exploratory=opt.get("exploratory", False))
        for s, r in zip(spec["seeds"], _map_seeds(one, spec["seeds"], threads)):
            w.csv(f"distances_m{side}_seed{s}.csv", ["k", "count"], r.rows(), s)
            pooled.merge(r)
            e = r.description["per_seed"][0]
            summary.append([side, s, e.get("cluster_size", 0), e.get("within_2", math.nan),
                            e.get("within_bound", math.nan), e.get("diameter", ""), r.diameter_lower or ""])
        w.csv(f"distances_m{side}.csv", ["k", "count"], pooled.rows())
    w.csv("distance_summary.csv", ["side", "seed", "cluster_size", "within_2", "within_bound",
                                   "diameter", "diameter_lower"], summary)


def _run_walk(spec, w, threads):
    opt = spec["options"]
    radii = [int(r) for r in opt["radii"]]
    for side in spec["sides"]:
        def one(s):
            cfg = sample_configuration(_geom(spec, side), spec["params"], s)
            start = opt.get("start")
            start = walk.central_start(cfg) if start is None else int(start)
            return walk.walk_diagnostics(cfg, start, radii, opt.get("walks", 1000),
                                         opt.get("max_steps", 10**5), s, opt.get("tolerance", 1e-8))
        for s, diag in zip(spec["seeds"], _map_seeds(one, spec["seeds"], threads)):
            w.csv(f"walk_m{side}_seed{s}.csv", ["R", "escape", "ci", "r_eff", "truncated_fraction"],
                  diag.rows(), s)


def _run_hct(spec, w, threads):
    opt = spec["options"]
    p = spec["params"]
    mode = opt.get("mode", "certificate")
    summary = []
    for side in spec["sides"]:
        def one(s):
            cfg = sample_configuration(_geom(spec, side), p, s)
            n, k, ms = hierarchy.general_m_split(opt["d1"], p, opt["xi_prime"], side)
            res = hierarchy.extend_to_general_m(p, opt["xi_prime"], opt["d1"], side, cfg,
                                                opt.get("a_schedule"))
            if res is None:
                return n, k, None, None
            rep = hierarchy.validate_hct(res.tree, res.certificate.rho, res.certificate.K, mode,
                                         res.certificate if mode == "certificate" else None)
            return n, k, res, rep
        for s, (n, k, res, rep) in zip(spec["seeds"], _map_seeds(one, spec["seeds"], threads)):
            if res is None:
                summary.append([side, s, n, k, 0, "", "", "", ""])
                continue
            obj = json.loads(hierarchy.tree_to_json(res.tree, res.certificate))
            obj["validation"] = {"density": rep.density, "diameter": rep.diameter,
                                 "ordered": rep.ordered, "clustering": rep.clustering}
            w.json(f"hct_m{side}_seed{s}.json", obj, s)
            summary.append([side, s, n, k, 1, res.tree.n_vertices, res.merged_diameter,
                            max(res.stage_diameters), int(rep.valid)])
    w.csv("hct_summary.csv", ["side", "seed", "n", "k", "success", "tree_vertices", "merged_diameter",
                              "stage_diameter", "valid"], summary)


def _run_renorm(spec, w, threads):
    opt = spec["options"]
    p = spec["params"]
    N, beta, mode = int(opt["N"]), float(opt.get("beta", 1.0)), opt.get("mode", "max_weight")
    exact = bounds.good_box_probability(N, beta, p) if mode == "max_weight" else math.nan
    summary = []
    for side in spec["sides"]:
        def one(s):
            return bounds.coarse_grain(sample_configuration(_geom(spec, side), p, s), N, beta, mode)
        for s, cg in zip(spec["seeds"], _map_seeds(one, spec["seeds"], threads)):
            good = cg.good.ravel()
            w.csv(f"renorm_m{side}_seed{s}.csv", ["box", "good", "dominant"],
                  zip(range(good.shape[0]), good.tolist(), np.asarray(cg.dominant).tolist()), s)
            summary.append([side, s, cg.good_fraction, len(cg.edges), exact])
    w.csv("renorm_summary.csv", ["side", "seed", "good_fraction", "good_edges", "exact"], summary)


def run_bounds(lemma, grid, w):
    fn = BOUND_ORACLES[lemma][0]
    reports = [fn(**e) for e in grid]
    w.csv("bounds.csv", bounds.CSV_HEADER, [r.csv_row() for r in reports])
    w.json("bounds.json", [r.to_dict() for r in reports])
    return reports


_RUNNERS = {"sample": _run_sample, "degrees": _run_degrees, "distances": _run_distances,
            "walk": _run_walk, "hct": _run_hct, "renorm": _run_renorm}


def _versions():
    import numba
    import scipy
    return {"sfplab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def run(raw_spec: dict, out, threads: int = 1) -> dict:
    """Execute a spec, write outputs and the manifest; returns the manifest."""
    spec = load_spec(raw_spec)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(out)
    t0 = time.perf_counter()
    if spec["kind"] == "bounds":
        run_bounds(spec["lemma"], spec["grid"], w)
    else:
        _RUNNERS[spec["kind"]](spec, w, max(1, int(threads)))
    manifest = {"spec": raw_spec, "versions": _versions(), "wall_time_s": time.perf_counter() - t0,
                "threads": threads, "digests": w.hexdigests()}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def validate(raw_spec: dict) -> dict:
    """Schema and cross-field checks only; returns the echo printed by the CLI."""
    spec = load_spec(raw_spec)
    info = {"status": "ok", "kind": spec["kind"]}
    if "params" in spec:
        p = spec["params"]
        info["gamma"] = p.gamma
        if 1 < p.gamma < 2:
            info["xi_upper_bound"] = hierarchy.xi_upper_bound(p)
    return info


# ------------------------------------------------------------------ main

def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None


def _read_grid(path):
    if str(path).endswith(".csv"):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return [{k: json.loads(v) for k, v in r.items()} for r in rows]
    return _read_json(path)


def _override_seeds(raw, args):
    if args.seed_base is not None or args.seed_count is not None:
        if args.seed_count is None:
            raise SpecError("--seed-base needs --seed-count")
        raw["seeds"] = {"base": args.seed_base or 0, "count": args.seed_count}
    return raw


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sfplab", description="Scale-free percolation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--spec", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed-base", type=int)
        p.add_argument("--seed-count", type=int)

    r = sub.add_parser("run", help="run an experiment spec")
    common(r)
    r.add_argument("--pairs", type=int, help="pairs per seed (distances)")
    r.add_argument("--radii", type=int, nargs="+", help="walk radii")
    r.add_argument("--walks", type=int)
    r.add_argument("--max-steps", type=int)
    r.add_argument("--tolerance", type=float)

    v = sub.add_parser("validate", help="check a spec without running it")
    v.add_argument("spec")

    h = sub.add_parser("hct", help="construct and validate hierarchical trees")
    common(h)
    h.add_argument("--xi", type=float)
    h.add_argument("--xi-prime", type=float)
    h.add_argument("--d1", type=int)
    h.add_argument("--mode", choices=["certificate", "exhaustive"])

    b = sub.add_parser("bounds", help="evaluate an oracle over a grid")
    b.add_argument("--lemma", required=True, choices=sorted(BOUND_ORACLES))
    b.add_argument("--grid", required=True, help="JSON list or CSV of oracle inputs")
    b.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            print(json.dumps(validate(_read_json(args.spec)), sort_keys=True))
            return 0
        if args.command == "bounds":
            raw = {"kind": "bounds", "lemma": args.lemma, "grid": _read_grid(args.grid)}
            run(raw, args.out)
            return 0
        raw = _override_seeds(_read_json(args.spec), args)
        opts = raw.setdefault("options", {})
        if args.command == "hct":
            raw["kind"] = "hct"
            for key in ("xi", "xi_prime", "d1", "mode"):
                if getattr(args, key) is not None:
                    opts[key] = getattr(args, key)
        else:
            for key in ("pairs", "radii", "walks", "max_steps", "tolerance"):
                if getattr(args, key) is not None:
                    opts[key] = getattr(args, key)
        run(raw, args.out, args.threads)
        return 0
    except SFPError as exc:
        # one machine-parsable line: kind, exit code, message
        print(f"error kind={exc.kind} code={exc.exit_code} msg={json.dumps(str(exc))}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
