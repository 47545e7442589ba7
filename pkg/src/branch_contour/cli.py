"""Config-driven experiment runner.

Each subcommand reads defaults, then an optional JSON config document, then
flag overrides, in that order. The effective config (minus worker count and
output directory) is hashed, and every output file embeds that digest and
the seed, so a rerun with the same config and seed produces byte-identical
files regardless of --threads.

Exit codes: 0 when every in-run assertion passes, 1 when an assertion
fails, 2 on a config error. Failures also emit one machine-readable line on
stderr: {"error": {"type": "config"|"assertion", "message": ...}}.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import _kernels
from ._parallel import run_chunked
from .acceptance import _paths_equal, run_acceptance
from .branching import forest_from_jsonl, forest_to_jsonl, mean_rescaled, \
    second_moment_population, simulate_forest
from .core import ModelParams, OffspringLaw, ScalingParams
from .exploration import contour_of_forest, exploration_params, explore_direct, \
    heightpath_to_extrema_csv, heightpath_to_vertex_csv, tree_of_contour
from .limits import RescaledFamily, h_convergence_experiment, \
    poisson_property_report, rayknight_experiment, x_convergence_experiment
from .rng import RngStream


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2) with plain text
        raise ConfigError(message)


_MODE_MAP = {"tree-clock": "tree", "paper-sde": "paper_sde"}
_BATCH = {"1": 0.5, "3": 0.5}

_DEFAULTS: dict[str, dict] = {
    "tree": {"seed": 42, "reps": 100, "offspring": dict(_BATCH),
             "birth_rate": 0.7, "death_rate": 2.0, "gamma": 2.0},
    "contour": {"seed": 42, "reps": 100, "offspring": dict(_BATCH),
                "birth_rate": 0.7, "death_rate": 2.0, "gamma": 2.0,
                "input": None},
    "explore": {"seed": 42, "reps": 100, "n_scale": 25, "x": 1.0,
                "sigma": 1.0, "alpha": 0.5, "beta": 1.0,
                "offspring": dict(_BATCH), "gamma": 2.0, "mode": "tree-clock"},
    "population": {"seed": 42, "reps": 2000, "n_scale": 50, "x": 1.0,
                   "sigma": 1.0, "alpha": 0.5, "beta": 0.5,
                   "offspring": dict(_BATCH),
                   "t_grid": [0.25, 0.5, 0.75, 1.0]},
    "rayknight": {"seed": 42, "reps": 2000, "n_scale": 20, "x": 1.0,
                  "sigma": 1.0, "alpha": 0.5, "beta": 1.0,
                  "offspring": dict(_BATCH), "gamma": 2.0,
                  "t_grid": [0.5, 1.0, 1.5], "alpha_level": 0.001},
    "converge-x": {"seed": 42, "reps": 2000, "x": 1.0, "sigma": 1.0,
                   "alpha": 0.0, "beta": 0.0, "offspring": {"1": 1.0},
                   "n_list": [10, 50, 200], "t": 1.0,
                   "ks_threshold_final": 0.05, "slack": 0.01},
    "converge-h": {"seed": 42, "reps": 2000, "x": 1.0, "sigma": 1.0,
                   "alpha": 0.0, "beta": 0.0, "offspring": {"1": 1.0},
                   "n_list": [50, 200], "s": 1.0, "gamma": 2.0, "ds": 1e-4,
                   "modes": ["tree-clock"], "ks_threshold_final": 0.05},
    "poisson-props": {"seed": 42, "reps": 10000, "rate": 1.2, "m": 1.0,
                      "gamma": 1.5, "n_scale": 25, "x": 1.0, "sigma": 1.0,
                      "alpha": 0.3, "beta": 0.9, "offspring": dict(_BATCH),
                      "alpha_level": 0.001},
    "selftest": {"seed": 42, "criteria": "all"},
}

# distinct from the acceptance battery's criterion lanes 1..10
_LANES = {"tree": 11, "contour": 12, "explore": 13, "population": 14,
          "rayknight": 15, "converge-x": 16, "converge-h": 17,
          "poisson-props": 18}

_FLOAT_KEYS = ("x", "sigma", "alpha", "beta", "birth_rate", "death_rate",
               "t", "s", "ds", "rate", "m", "alpha_level",
               "ks_threshold_final", "slack")
_INT_KEYS = ("reps", "n_scale")


def _parse_gamma(value):
    """JSON-native horizon: the string "inf" or a positive float."""
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return "inf"
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"gamma must be a positive number or 'inf', got {value!r}")
    value = float(value)
    if not (value > 0) or math.isinf(value) or math.isnan(value):
        raise ConfigError(f"gamma must be a positive number or 'inf', got {value!r}")
    return value


def _gamma_value(stored) -> float:
    return math.inf if stored == "inf" else float(stored)


def _parse_criteria(value):
    if isinstance(value, str):
        if value.strip().lower() == "all":
            return "all"
        value = value.split(",")
    try:
        numbers = sorted({int(v) for v in value})
    except (TypeError, ValueError):
        raise ConfigError(f"criteria must be 'all' or a list of numbers, got {value!r}")
    bad = [n for n in numbers if not 1 <= n <= 10]
    if bad:
        raise ConfigError(f"criteria out of range 1..10: {bad}")
    if not numbers:
        raise ConfigError("criteria list is empty")
    return numbers


def _normalize(sub: str, cfg: dict) -> dict:
    try:
        for key in _FLOAT_KEYS:
            if key in cfg:
                cfg[key] = float(cfg[key])
        for key in _INT_KEYS:
            if key in cfg:
                cfg[key] = int(cfg[key])
        cfg["seed"] = int(cfg["seed"])
        if not 0 <= cfg["seed"] < 2**64:
            raise ConfigError(f"seed must fit in u64, got {cfg['seed']}")
        if "reps" in cfg and cfg["reps"] <= 0:
            raise ConfigError(f"reps must be positive, got {cfg['reps']}")
        if "offspring" in cfg:
            law = {str(int(k)): float(p) for k, p in dict(cfg["offspring"]).items()}
            OffspringLaw({int(k): p for k, p in law.items()})  # validate now
            cfg["offspring"] = law
        if "gamma" in cfg:
            cfg["gamma"] = _parse_gamma(cfg["gamma"])
        if "t_grid" in cfg:
            cfg["t_grid"] = [float(v) for v in cfg["t_grid"]]
        if "n_list" in cfg:
            cfg["n_list"] = [int(v) for v in cfg["n_list"]]
        if "mode" in cfg and cfg["mode"] not in _MODE_MAP:
            raise ConfigError(f"mode must be one of {sorted(_MODE_MAP)}, got {cfg['mode']!r}")
        if "modes" in cfg:
            cfg["modes"] = [str(m) for m in cfg["modes"]]
            bad = [m for m in cfg["modes"] if m not in _MODE_MAP]
            if bad:
                raise ConfigError(f"modes must be among {sorted(_MODE_MAP)}, got {bad}")
        if "criteria" in cfg:
            cfg["criteria"] = _parse_criteria(cfg["criteria"])
        if "input" in cfg and cfg["input"] is not None:
            cfg["input"] = str(cfg["input"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in {sub} config: {exc}")
    return cfg


def _load_config(sub: str, args) -> dict:
    cfg = json.loads(json.dumps(_DEFAULTS[sub]))
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for '{sub}': {unknown}")
        cfg.update(doc)
    for key in ("seed", "reps", "gamma", "mode", "criteria", "input"):
        value = getattr(args, key, None)
        if value is not None:
            if key == "mode" and sub == "converge-h":
                cfg["modes"] = [value]
            else:
                cfg[key] = value
    n_flag = getattr(args, "N", None)
    if n_flag is not None:
        cfg["n_scale"] = int(n_flag)
    return _normalize(sub, cfg)


def config_digest(sub: str, cfg: dict) -> str:
    doc = {"subcommand": sub}
    doc.update(cfg)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _model_params(cfg: dict) -> ModelParams:
    law = OffspringLaw({int(k): p for k, p in cfg["offspring"].items()})
    return ModelParams(law, cfg["birth_rate"], cfg["death_rate"],
                       _gamma_value(cfg["gamma"]))


def _scaling(cfg: dict) -> ScalingParams:
    law = OffspringLaw({int(k): p for k, p in cfg["offspring"].items()})
    return ScalingParams(n_scale=cfg["n_scale"], x=cfg["x"], sigma=cfg["sigma"],
                         alpha=cfg["alpha"], beta=cfg["beta"], offspring=law)


def _family(cfg: dict) -> RescaledFamily:
    law = OffspringLaw({int(k): p for k, p in cfg["offspring"].items()})
    return RescaledFamily(x=cfg["x"], sigma=cfg["sigma"], alpha=cfg["alpha"],
                          beta=cfg["beta"], offspring=law)


def _outpath(out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _write(out_dir: str, name: str, text: str) -> str:
    path = _outpath(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _meta_lines(meta: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in sorted(meta.items()))


def _report_files(report, out_dir: str, meta: dict) -> None:
    _write(out_dir, "report.json", report.to_json())
    _write(out_dir, "summary.csv", _meta_lines(meta) + report.to_csv_summary())


def _print_rows(report) -> None:
    for r in report.rows:
        mark = "" if r.passed is None else ("pass" if r.passed else "FAIL")
        bound = "" if r.threshold is None else f" threshold={r.threshold:.6g}"
        where = f" N={r.n_scale}" if r.n_scale is not None else ""
        when = f" t={r.t:g}" if r.t is not None else ""
        mode = f" mode={r.mode}" if r.mode else ""
        print(f"{r.experiment} {r.statistic_name}{where}{when}{mode} "
              f"statistic={r.statistic:.6g}{bound} {mark}".rstrip())


def _run_tree(cfg, threads, out_dir, meta) -> bool:
    params = _model_params(cfg)
    rng = RngStream(cfg["seed"], stream_id=_LANES["tree"])
    forest = simulate_forest(cfg["reps"], params, rng)
    path = _write(out_dir, "trees.jsonl", forest_to_jsonl(forest, meta=meta))
    print(f"wrote {path}: {len(forest.trees)} trees, {forest.size} individuals")
    return True


def _run_contour(cfg, threads, out_dir, meta) -> bool:
    if cfg["input"] is not None:
        try:
            with open(cfg["input"], encoding="utf-8") as fh:
                forest = forest_from_jsonl(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read input forest: {exc}")
    else:
        params = _model_params(cfg)
        rng = RngStream(cfg["seed"], stream_id=_LANES["contour"])
        forest = simulate_forest(cfg["reps"], params, rng)
    path = contour_of_forest(forest)
    heightpath_to_extrema_csv(path, _outpath(out_dir, "extrema.csv"), meta=meta)
    heightpath_to_vertex_csv(path, _outpath(out_dir, "vertices.csv"), meta=meta)
    back = tree_of_contour(path)
    ok = ([t.canonical() for t in back.trees]
          == [t.canonical() for t in forest.trees]
          and _paths_equal(path, contour_of_forest(back)))
    print(f"wrote {os.path.join(out_dir, 'extrema.csv')} and vertices.csv: "
          f"{len(path.excursions)} excursions, {path.n_peaks} maxima")
    print(f"roundtrip tree -> contour -> tree: {'exact' if ok else 'MISMATCH'}")
    return ok


def _run_explore(cfg, threads, out_dir, meta) -> bool:
    scaling = _scaling(cfg)
    params, clock = exploration_params(scaling, _MODE_MAP[cfg["mode"]],
                                       _gamma_value(cfg["gamma"]))
    rng = RngStream(cfg["seed"], stream_id=_LANES["explore"])
    path = explore_direct(params, cfg["reps"], rng, clock)
    heightpath_to_extrema_csv(path, _outpath(out_dir, "extrema.csv"), meta=meta)
    heightpath_to_vertex_csv(path, _outpath(out_dir, "vertices.csv"), meta=meta)
    print(f"wrote {os.path.join(out_dir, 'extrema.csv')} and vertices.csv: "
          f"{len(path.excursions)} excursions, {path.n_peaks} maxima, "
          f"max height {path.max_height():.6g}")
    return True


def _run_population(cfg, threads, out_dir, meta) -> bool:
    sp = _scaling(cfg)
    reps = cfg["reps"]
    grid = np.asarray(cfg["t_grid"], dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ConfigError("t_grid must be strictly increasing and positive")
    rng = RngStream(cfg["seed"], stream_id=_LANES["population"])
    seeds = rng.kernel_seed_block(reps)
    counts = np.zeros((reps, grid.size), dtype=np.float64)
    law = sp.offspring

    def worker(lo, hi):
        _kernels.gillespie_grid_block(seeds[lo:hi], sp.initial_count,
                                      sp.birth_rate, sp.death_rate, law.support,
                                      law._cum, float(grid[-1]), grid,
                                      counts[lo:hi])

    run_chunked(worker, reps, threads)
    x = counts / sp.n_scale
    header = ("t,empirical_mean,exact_mean,se_mean,mean_pass,"
              "empirical_second_moment,exact_second_moment,se_second_moment,"
              "second_moment_pass")
    lines = [header]
    ok = True
    for j, t in enumerate(grid):
        col = x[:, j]
        m_emp, m_exact = float(col.mean()), mean_rescaled(sp, float(t))
        m_se = float(col.std(ddof=1)) / math.sqrt(reps)
        m_ok = abs(m_emp - m_exact) <= 5.0 * m_se
        sq = col**2
        q_emp, q_exact = float(sq.mean()), second_moment_population(sp, float(t))
        q_se = float(sq.std(ddof=1)) / math.sqrt(reps)
        q_ok = abs(q_emp - q_exact) <= 5.0 * q_se
        ok = ok and m_ok and q_ok
        lines.append(",".join([
            repr(float(t)), repr(m_emp), repr(float(m_exact)), repr(m_se),
            str(m_ok).lower(), repr(q_emp), repr(float(q_exact)), repr(q_se),
            str(q_ok).lower()]))
        print(f"t={t:g} mean={m_emp:.6g} exact={m_exact:.6g} se={m_se:.3g} "
              f"{'pass' if m_ok else 'FAIL'} | second_moment={q_emp:.6g} "
              f"exact={q_exact:.6g} se={q_se:.3g} {'pass' if q_ok else 'FAIL'}")
    _write(out_dir, "moments.csv", _meta_lines(meta) + "\n".join(lines) + "\n")
    return ok


def _run_rayknight(cfg, threads, out_dir, meta) -> bool:
    sp = _scaling(cfg)
    rng = RngStream(cfg["seed"], stream_id=_LANES["rayknight"])
    report = rayknight_experiment(sp, gamma=_gamma_value(cfg["gamma"]),
                                  t_grid=cfg["t_grid"], reps=cfg["reps"],
                                  rng=rng, threads=threads,
                                  alpha_level=cfg["alpha_level"], meta=meta)
    _report_files(report, out_dir, meta)
    _print_rows(report)
    return report.all_passed()


def _run_converge_x(cfg, threads, out_dir, meta) -> bool:
    rng = RngStream(cfg["seed"], stream_id=_LANES["converge-x"])
    report = x_convergence_experiment(_family(cfg), cfg["n_list"], t=cfg["t"],
                                      reps=cfg["reps"], rng=rng, threads=threads,
                                      ks_threshold_final=cfg["ks_threshold_final"],
                                      slack=cfg["slack"], meta=meta)
    _report_files(report, out_dir, meta)
    _print_rows(report)
    return report.all_passed()


def _run_converge_h(cfg, threads, out_dir, meta) -> bool:
    gamma = _gamma_value(cfg["gamma"])
    if math.isinf(gamma):
        raise ConfigError("converge-h needs a finite gamma (two-sided reflection)")
    rng = RngStream(cfg["seed"], stream_id=_LANES["converge-h"])
    modes = tuple(_MODE_MAP[m] for m in cfg["modes"])
    report = h_convergence_experiment(_family(cfg), cfg["n_list"], s=cfg["s"],
                                      gamma=gamma, reps=cfg["reps"], rng=rng,
                                      modes=modes, threads=threads, ds=cfg["ds"],
                                      ks_threshold_final=cfg["ks_threshold_final"],
                                      meta=meta)
    _report_files(report, out_dir, meta)
    _print_rows(report)
    return report.all_passed()


def _run_poisson_props(cfg, threads, out_dir, meta) -> bool:
    rng = RngStream(cfg["seed"], stream_id=_LANES["poisson-props"])
    report = poisson_property_report(cfg["reps"], rng, rate=cfg["rate"],
                                     m=cfg["m"], scaling=_scaling(cfg),
                                     gamma=_gamma_value(cfg["gamma"]),
                                     alpha_level=cfg["alpha_level"], meta=meta)
    _report_files(report, out_dir, meta)
    _print_rows(report)
    return report.all_passed()


def _run_selftest(cfg, threads, out_dir, meta) -> bool:
    numbers = None if cfg["criteria"] == "all" else cfg["criteria"]
    report = run_acceptance(seed=cfg["seed"], threads=threads,
                            criteria=numbers, meta=meta)
    _write(out_dir, "report.json", report.to_json())
    _write(out_dir, "summary.csv", report.to_csv_summary())
    for line in report.lines():
        print(line)
    return report.all_passed()


_RUNNERS = {
    "tree": _run_tree,
    "contour": _run_contour,
    "explore": _run_explore,
    "population": _run_population,
    "rayknight": _run_rayknight,
    "converge-x": _run_converge_x,
    "converge-h": _run_converge_h,
    "poisson-props": _run_poisson_props,
    "selftest": _run_selftest,
}

_COLUMN_DOC = {
    "tree": "trees.jsonl: meta line, then one JSON individual per line "
            "(id, parent, birth, death, events).",
    "contour": "extrema.csv: index,kind,level,tag (kind M=maximum, m=minimum; "
               "new_birth_event tags carry :Theta). vertices.csv: s,h. "
               "Both start with '# key: value' meta lines.",
    "explore": "extrema.csv: index,kind,level,tag (kind M=maximum, m=minimum; "
               "new_birth_event tags carry :Theta). vertices.csv: s,h.",
    "population": "moments.csv: t,empirical_mean,exact_mean,se_mean,mean_pass,"
                  "empirical_second_moment,exact_second_moment,"
                  "se_second_moment,second_moment_pass.",
    "rayknight": "summary.csv: experiment,statistic_name,n_scale,t,mode,"
                 "statistic,threshold,passed. report.json: full rows.",
    "converge-x": "summary.csv: experiment,statistic_name,n_scale,t,mode,"
                  "statistic,threshold,passed.",
    "converge-h": "summary.csv: experiment,statistic_name,n_scale,t,mode,"
                  "statistic,threshold,passed.",
    "poisson-props": "summary.csv: experiment,statistic_name,n_scale,t,mode,"
                     "statistic,threshold,passed.",
    "selftest": "summary.csv: criterion,name,passed. report.json: per-criterion "
                "details (no timings, so reports compare across runs).",
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="branch-contour",
                     description="Branching forests, contour exploration, and "
                                 "scaling-limit experiments.")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in _RUNNERS:
        sub = subs.add_parser(name, help=f"run the {name} experiment",
                              description=f"{name} outputs: {_COLUMN_DOC[name]}",
                              epilog="Config precedence: defaults < --config "
                                     "JSON < flags. See --print-config.")
        sub.add_argument("--config", metavar="PATH",
                         help="JSON config document; flags override its keys")
        sub.add_argument("--seed", type=int, help="u64 master seed")
        sub.add_argument("--threads", type=int,
                         help="worker count (default: BRANCH_CONTOUR_THREADS "
                              "env, then 1); never affects results")
        sub.add_argument("--out", metavar="DIR", default="out",
                         help="output directory (default: out)")
        sub.add_argument("--print-config", action="store_true",
                         help="print the effective config and digest, then exit")
        if name != "selftest":
            sub.add_argument("--reps", type=int, help="replicate count")
        if "gamma" in _DEFAULTS[name]:
            sub.add_argument("--gamma", help="horizon: positive float or 'inf'")
        if name == "explore":
            sub.add_argument("--mode", choices=sorted(_MODE_MAP),
                             help="exploration clock convention")
        if name == "converge-h":
            sub.add_argument("--mode", choices=sorted(_MODE_MAP),
                             help="run a single clock mode (overrides 'modes')")
        if name == "rayknight":
            sub.add_argument("--N", type=int, help="population scale n_scale")
        if name == "contour":
            sub.add_argument("--input", metavar="PATH",
                             help="existing trees.jsonl instead of simulating")
        if name == "selftest":
            sub.add_argument("--criteria",
                             help="comma-separated criterion numbers "
                                  "(default: all)")
    return parser


def _fail(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}})
                     + "\n")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        _fail("config", str(exc))
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cfg = _load_config(args.subcommand, args)
        if getattr(args, "input", None) is not None:
            cfg["input"] = args.input
        digest = config_digest(args.subcommand, cfg)
        if args.print_config:
            doc = {"subcommand": args.subcommand, "config": cfg,
                   "config_digest": digest}
            print(json.dumps(doc, indent=2, sort_keys=True))
            return 0
        meta = {"config_digest": digest, "seed": cfg["seed"]}
        if args.subcommand == "selftest":
            meta = {"config_digest": digest}  # seed is a report field already
        ok = _RUNNERS[args.subcommand](cfg, args.threads, args.out, meta)
    except ConfigError as exc:
        _fail("config", str(exc))
        return 2
    except ValueError as exc:  # domain validation of config-derived params
        _fail("config", str(exc))
        return 2
    if not ok:
        _fail("assertion", f"{args.subcommand}: in-run checks failed")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
