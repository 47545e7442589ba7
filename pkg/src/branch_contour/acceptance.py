"""Pinned acceptance battery.

Ten numbered criteria, each a deterministic check at fixed sizes, seeds and
tolerances. Criterion streams are keyed by (seed, criterion number), so any
subset can be re-run in isolation and reproduces the same numbers. Serialized
reports carry no timing or worker-count information: a report produced with
--threads 1 must compare byte-identical to one produced with --threads 8.
Wall-clock budgets are tracked separately in CriterionResult.within_budget.
"""
from __future__ import annotations

import hashlib
import math
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from ._parallel import run_chunked
from .branching import mean_rescaled, mean_square_source, \
    second_moment_population, simulate_tree
from .core import ModelParams, OffspringLaw, ScalingParams
from .exploration import contour_of_tree, explore_direct, occupation_check, \
    tree_of_contour
from .limits import FellerSpec, RescaledFamily, feller_euler_endpoint, \
    feller_exact_sample, h_convergence_experiment, poisson_property_report, \
    rayknight_experiment, x_convergence_experiment
from .rng import RngStream
from .stats import ks_critical_value, ks_two_sample

_BATCH_LAW = OffspringLaw({1: 0.5, 3: 0.5})
_BINARY_LAW = OffspringLaw({1: 1.0})
_MOMENT_GRID = (0.5, 1.0)
_RATE_COMBOS = ((0.5, 1.0), (1.0, 1.0), (1.0, 0.5))


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    within_budget: bool
    elapsed_seconds: float
    budget_seconds: float | None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.budget_seconds is None:
            timing = f"{self.elapsed_seconds:.1f}s"
        else:
            rel = "<=" if self.within_budget else ">"
            timing = f"{self.elapsed_seconds:.1f}s {rel} {self.budget_seconds:.0f}s"
        return f"criterion {self.number} ({self.name}): {status} [{timing}]"


@dataclass
class AcceptanceReport:
    seed: int
    results: list[CriterionResult]
    meta: dict = field(default_factory=dict)

    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]

    def to_json(self) -> str:
        doc = {
            "battery": "selftest",
            "seed": self.seed,
            "criteria": [r.number for r in self.results],
            "meta": self.meta,
            "results": [{"number": r.number, "name": r.name,
                         "passed": r.passed, "details": r.details}
                        for r in self.results],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv_summary(self) -> str:
        lines = [f"# {k}: {v}" for k, v in sorted(self.meta.items())]
        lines.append(f"# seed: {int(self.seed)}")
        lines.append("criterion,name,passed")
        for r in self.results:
            lines.append(f"{r.number},{r.name},{str(r.passed).lower()}")
        return "\n".join(lines) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _moment_samples(alpha: float, beta: float, reps: int, rng: RngStream,
                    threads: int | None) -> tuple[ScalingParams, np.ndarray]:
    """Endpoint samples of X_t = Z_t/N on the moment grid, one row per replicate."""
    sp = ScalingParams(n_scale=50, x=1.0, sigma=1.0, alpha=alpha, beta=beta,
                       offspring=_BATCH_LAW)
    seeds = rng.kernel_seed_block(reps)
    grid = np.asarray(_MOMENT_GRID, dtype=np.float64)
    counts = np.zeros((reps, grid.size), dtype=np.float64)
    law = sp.offspring

    def worker(lo: int, hi: int) -> None:
        _kernels.gillespie_grid_block(seeds[lo:hi], sp.initial_count,
                                      sp.birth_rate, sp.death_rate,
                                      law.support, law._cum,
                                      float(grid[-1]), grid, counts[lo:hi])

    run_chunked(worker, reps, threads)
    return sp, counts / sp.n_scale


def _criterion_mean_law(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Empirical mean of X_t within 5 SE of (floor(Nx)/N) e^{(alpha-beta)t}."""
    rng = RngStream(seed, stream_id=1)
    reps = 10_000
    cases = []
    ok = True
    for idx, (alpha, beta) in enumerate(_RATE_COMBOS):
        sp, x = _moment_samples(alpha, beta, reps, rng.substream(idx), threads)
        for j, t in enumerate(_MOMENT_GRID):
            exact = mean_rescaled(sp, t)
            emp = float(x[:, j].mean())
            se = float(x[:, j].std(ddof=1)) / math.sqrt(reps)
            dev = abs(emp - exact) / se
            good = dev <= 5.0
            ok = ok and good
            cases.append({"alpha": alpha, "beta": beta, "t": t,
                          "empirical": emp, "exact": exact, "se": se,
                          "deviation_se": dev, "passed": good})
    return ok, {"reps": reps, "n_scale": 50, "cases": cases}


def _criterion_second_moment(seed: int, threads: int | None) -> tuple[bool, dict]:
    """E[X_t^2] within 5 SE of the closed form; closed form vs live RK oracle."""
    rng = RngStream(seed, stream_id=2)
    reps = 10_000
    cases = []
    ok = True
    for idx, (alpha, beta) in enumerate(_RATE_COMBOS):
        sp, x = _moment_samples(alpha, beta, reps, rng.substream(idx), threads)
        b = sp.drift
        c = mean_square_source(sp)
        sol = solve_ivp(
            lambda t, y, b=b, c=c, x0=float(sp.initial_count) / sp.n_scale:
                [2.0 * b * y[0] + c * x0 * math.exp(b * t)],
            (0.0, _MOMENT_GRID[-1]),
            [(float(sp.initial_count) / sp.n_scale) ** 2],
            t_eval=list(_MOMENT_GRID), rtol=1e-12, atol=1e-14)
        for j, t in enumerate(_MOMENT_GRID):
            sq = x[:, j] ** 2
            closed = second_moment_population(sp, t)
            rk = float(sol.y[0][j])
            emp = float(sq.mean())
            se = float(sq.std(ddof=1)) / math.sqrt(reps)
            dev = abs(emp - closed) / se
            oracle_gap = abs(closed - rk)
            good = dev <= 5.0 and oracle_gap <= 1e-8 * (1.0 + abs(closed))
            ok = ok and good
            cases.append({"alpha": alpha, "beta": beta, "t": t,
                          "empirical": emp, "closed_form": closed,
                          "rk_oracle": rk, "oracle_gap": oracle_gap,
                          "se": se, "deviation_se": dev, "passed": good})
    return ok, {"reps": reps, "n_scale": 50, "cases": cases}


def _criterion_rayknight(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Normalized local-time profile vs rescaled population, in law, exactly."""
    rng = RngStream(seed, stream_id=3)
    rows = []
    ok = True
    for idx, n in enumerate((5, 20)):
        sp = ScalingParams(n_scale=n, x=1.0, sigma=1.0, alpha=0.5, beta=1.0,
                           offspring=_BATCH_LAW)
        rep = rayknight_experiment(sp, gamma=2.0, t_grid=(0.5, 1.0, 1.5),
                                   reps=5_000, rng=rng.substream(idx),
                                   threads=threads)
        ok = ok and rep.all_passed()
        rows.extend(r.to_dict() for r in rep.rows)
    return ok, {"reps_per_side": 5_000, "rows": rows}


def _paths_equal(a, b) -> bool:
    if len(a.excursions) != len(b.excursions):
        return False
    for ea, eb in zip(a.excursions, b.excursions):
        if not (np.array_equal(ea.peaks, eb.peaks)
                and np.array_equal(ea.mins, eb.mins)
                and np.array_equal(ea.tags, eb.tags)
                and np.array_equal(ea.thetas, eb.thetas)):
            return False
    return True


def _criterion_roundtrip(seed: int, threads: int | None) -> tuple[bool, dict]:
    """tree -> contour -> tree is the identity up to canonical relabeling."""
    rng = RngStream(seed, stream_id=4)
    regimes = ((0.4, 1.2), (0.6, 1.2), (0.9, 1.2))
    per = []
    total = 0
    mismatches = 0
    for idx, (lam, mu) in enumerate(regimes):
        params = ModelParams(offspring=_BATCH_LAW, birth_rate=lam,
                             death_rate=mu, gamma=1.0)
        stream = rng.substream(idx)
        n = 3_334 if idx == 0 else 3_333
        bad = 0
        for _ in range(n):
            tree = simulate_tree(params, stream)
            path = contour_of_tree(tree)
            back = tree_of_contour(path)
            same = (len(back.trees) == 1
                    and back.trees[0].canonical() == tree.canonical())
            if same:
                same = _paths_equal(path, contour_of_tree(back.trees[0]))
            bad += 0 if same else 1
        per.append({"birth_rate": lam, "death_rate": mu, "trees": n,
                    "mismatches": bad})
        total += n
        mismatches += bad
    return mismatches == 0, {"total_trees": total, "mismatches": mismatches,
                             "gamma": 1.0, "regimes": per}


def _criterion_correspondence(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Direct explorer and tree contour agree in law on path functionals."""
    rng = RngStream(seed, stream_id=5)
    reps = 10_000
    params = ModelParams(offspring=_BATCH_LAW, birth_rate=0.7, death_rate=2.0,
                         gamma=2.0)
    via_tree = np.empty((reps, 3))
    direct = np.empty((reps, 3))
    s_tree, s_direct = rng.substream(1), rng.substream(2)
    for i in range(reps):
        p = contour_of_tree(simulate_tree(params, s_tree))
        via_tree[i] = (p.n_peaks, p.max_height(), p.total_variation())
        q = explore_direct(params, 1, s_direct)
        direct[i] = (q.n_peaks, q.max_height(), q.total_variation())
    crit = ks_critical_value(reps, reps, 0.001)
    stats = []
    ok = True
    for j, name in enumerate(("n_maxima", "path_maximum", "total_variation")):
        ks = ks_two_sample(via_tree[:, j], direct[:, j])
        good = ks.statistic < crit
        ok = ok and good
        stats.append({"statistic_name": name, "ks": ks.statistic,
                      "threshold": crit, "pvalue": ks.pvalue, "passed": good})
    return ok, {"reps": reps, "birth_rate": 0.7, "death_rate": 2.0,
                "gamma": 2.0, "stats": stats}


def _criterion_occupation(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Occupation identity on random paths and random signed band functions."""
    rng = RngStream(seed, stream_id=6)
    regimes = ((0.4, 1.2, 1.0), (0.6, 1.2, 1.5), (0.9, 1.2, 0.8))
    paths = 1_000
    bands_per_path = 5
    sim = rng.substream(1)
    bands = rng.substream(2)
    worst = 0.0
    checked = 0
    for i in range(paths):
        lam, mu, gamma = regimes[i % 3]
        params = ModelParams(offspring=_BATCH_LAW, birth_rate=lam,
                             death_rate=mu, gamma=gamma)
        path = contour_of_tree(simulate_tree(params, sim))
        top = 1.1 * max(path.max_height(), gamma)
        for _ in range(bands_per_path):
            edges = np.sort(bands.uniform(size=4)) * top
            values = 3.0 * bands.uniform(size=3) - 1.0
            lhs, rhs = occupation_check(path, edges, values)
            worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs)))
            checked += 1
    return worst <= 1e-9, {"paths": paths, "bands_per_path": bands_per_path,
                           "checks": checked, "worst_relative_error": worst,
                           "tolerance": 1e-9}


def _criterion_feller_convergence(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Rescaled endpoints approach the Feller transition as N grows."""
    rng = RngStream(seed, stream_id=7)
    family = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0,
                            offspring=_BINARY_LAW)
    rep = x_convergence_experiment(family, (10, 100, 1000), t=1.0, reps=10_000,
                                   rng=rng.substream(1), threads=threads,
                                   ks_threshold_final=0.05, slack=0.01)
    spec = FellerSpec(x0=1.0, drift=-0.5, kappa=1.0)
    exact = feller_exact_sample(spec, 1.0, rng.substream(2), size=10_000)
    euler = feller_euler_endpoint(spec, 1.0, 1e-4, rng.substream(3), size=10_000)
    ks = ks_two_sample(exact, euler)
    euler_ok = ks.statistic <= 0.02
    ok = rep.all_passed() and euler_ok
    return ok, {"reps": 10_000, "rows": [r.to_dict() for r in rep.rows],
                "euler_validation": {"x0": 1.0, "drift": -0.5, "kappa": 1.0,
                                     "t": 1.0, "dt": 1e-4, "ks": ks.statistic,
                                     "threshold": 0.02, "passed": euler_ok}}


def _criterion_height_limit(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Explorer height marginal vs two-sided reflected BM; binary case gates."""
    rng = RngStream(seed, stream_id=8)
    binary = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0,
                            offspring=_BINARY_LAW)
    batch = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0,
                           offspring=_BATCH_LAW)
    common = dict(s=1.0, gamma=2.0, reps=10_000, threads=threads, ds=1e-4)
    gate = h_convergence_experiment(binary, (100, 500), rng=rng.substream(1),
                                    modes=("tree",), ks_threshold_final=0.05,
                                    **common)
    coincide = h_convergence_experiment(binary, (100,), rng=rng.substream(2),
                                        modes=("tree", "paper_sde"),
                                        ks_threshold_final=None, **common)
    informational = h_convergence_experiment(batch, (100,), rng=rng.substream(3),
                                             modes=("tree", "paper_sde"),
                                             ks_threshold_final=None, **common)
    ok = gate.all_passed()
    return ok, {"reps": 10_000, "s": 1.0, "gamma": 2.0,
                "gate_rows": [r.to_dict() for r in gate.rows],
                "binary_both_modes_rows": [r.to_dict() for r in coincide.rows],
                "nonbinary_informational_rows":
                    [r.to_dict() for r in informational.rows]}


def _criterion_poisson_properties(seed: int, threads: int | None) -> tuple[bool, dict]:
    """Overshoot, splice regeneration and explorer time-change laws."""
    rng = RngStream(seed, stream_id=9)
    rep = poisson_property_report(10_000, rng)
    return rep.all_passed(), {"reps": 10_000,
                              "rows": [r.to_dict() for r in rep.rows]}


def _criterion_reproducibility(seed: int, threads: int | None) -> tuple[bool, dict]:
    """selftest --seed 42 with --threads 1 and --threads 8 writes identical bytes.

    Runs the real CLI twice over the criteria subset {3, 5, 9}, which covers
    every thread-parallel code path (explorer fan-out, endpoint kernel fan-out,
    stats aggregation). The pinned seed 42 comes from the criterion statement
    and is used regardless of the battery seed.
    """
    from . import cli

    outcome = {}
    for tcount in (1, 8):
        out_dir = tempfile.mkdtemp(prefix=f"selftest-t{tcount}-")
        try:
            code = cli.main(["selftest", "--seed", "42", "--criteria", "3,5,9",
                             "--threads", str(tcount), "--out", out_dir])
            blobs = {}
            for fname in ("report.json", "summary.csv"):
                with open(os.path.join(out_dir, fname), "rb") as fh:
                    blobs[fname] = fh.read()
            outcome[tcount] = (code, blobs)
        finally:
            shutil.rmtree(out_dir, ignore_errors=True)
    identical = outcome[1][1] == outcome[8][1]
    codes_ok = outcome[1][0] == 0 and outcome[8][0] == 0
    digests = {str(t): {name: hashlib.sha256(blob).hexdigest()
                        for name, blob in sorted(blobs.items())}
               for t, (_, blobs) in sorted(outcome.items())}
    return identical and codes_ok, {
        "criteria_subset": [3, 5, 9], "pinned_seed": 42,
        "exit_codes": {"threads_1": outcome[1][0], "threads_8": outcome[8][0]},
        "byte_identical": identical, "sha256": digests}


_CRITERIA: dict[int, tuple[str, float | None, object]] = {
    1: ("mean-law", 60.0, _criterion_mean_law),
    2: ("second-moment", 60.0, _criterion_second_moment),
    3: ("rayknight", 120.0, _criterion_rayknight),
    4: ("contour-roundtrip", 30.0, _criterion_roundtrip),
    5: ("explorer-correspondence", 60.0, _criterion_correspondence),
    6: ("occupation-identity", 10.0, _criterion_occupation),
    7: ("feller-convergence", 300.0, _criterion_feller_convergence),
    8: ("height-limit", None, _criterion_height_limit),
    9: ("poisson-properties", 30.0, _criterion_poisson_properties),
    10: ("reproducibility", None, _criterion_reproducibility),
}

CRITERION_NUMBERS = tuple(sorted(_CRITERIA))


def criterion_name(number: int) -> str:
    return _CRITERIA[number][0]


def run_criterion(number: int, seed: int = 42,
                  threads: int | None = None) -> CriterionResult:
    if number not in _CRITERIA:
        raise ValueError(f"unknown criterion {number}; valid: {CRITERION_NUMBERS}")
    name, budget, fn = _CRITERIA[number]
    start = time.perf_counter()
    passed, details = fn(seed, threads)
    elapsed = time.perf_counter() - start
    within = budget is None or elapsed <= budget
    return CriterionResult(number=number, name=name, passed=bool(passed),
                           within_budget=within, elapsed_seconds=elapsed,
                           budget_seconds=budget, details=_clean(details))


def run_acceptance(seed: int = 42, threads: int | None = None,
                   criteria=None, meta: dict | None = None) -> AcceptanceReport:
    numbers = CRITERION_NUMBERS if criteria is None else tuple(criteria)
    bad = [n for n in numbers if n not in _CRITERIA]
    if bad:
        raise ValueError(f"unknown criteria {bad}; valid: {CRITERION_NUMBERS}")
    results = [run_criterion(n, seed=seed, threads=threads) for n in numbers]
    return AcceptanceReport(seed=seed, results=results, meta=dict(meta or {}))
