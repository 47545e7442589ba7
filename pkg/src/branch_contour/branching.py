"""Continuous-time Galton-Watson forests with batch births.

Two routes to the same population law are kept deliberately separate: the
genealogical simulator (whole trees, depth-first) and the Gillespie chain
on the population count alone. Tests compare them; nothing here shares
code between the two.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, ScalingParams
from .poisson import poisson_points
from .rng import RngStream


class CapExceeded(RuntimeError):
    """A size cap was hit; carries how much work was done before stopping."""

    def __init__(self, message: str, count: int):
        super().__init__(f"{message} (partial count: {count})")
        self.count = count


@dataclass
class Individual:
    id: int
    parent: int | None
    birth: float
    death: float
    killed: bool                      # death by the horizon, not by rate mu
    events: list[tuple[float, list[int]]] = field(default_factory=list)

    @property
    def lifespan(self) -> float:
        return self.death - self.birth


@dataclass
class Tree:
    root_id: int
    individuals: dict[int, Individual]
    gamma: float

    @property
    def size(self) -> int:
        return len(self.individuals)

    def canonical(self):
        """Nested structural tuple, invariant under id relabeling."""

        def node(ind_id: int):
            ind = self.individuals[ind_id]
            return (
                ind.birth,
                ind.death,
                ind.killed,
                tuple((t, tuple(node(c) for c in children)) for t, children in ind.events),
            )

        return node(self.root_id)


@dataclass
class Forest:
    trees: list[Tree]
    gamma: float

    @property
    def size(self) -> int:
        return sum(t.size for t in self.trees)


def simulate_tree(params: ModelParams, rng: RngStream,
                  max_individuals: int = 1_000_000, _id_offset: int = 0) -> Tree:
    """One tree rooted at time 0, depth-first with an explicit stack.

    Draw order per individual: lifetime, then its event points, then one
    batch size per event. Children are then expanded in chronological
    order, so the stream is consumed identically on every run.
    """
    gamma = params.gamma
    individuals: dict[int, Individual] = {}
    next_id = _id_offset
    stack: list[tuple[int, int | None, float]] = [(next_id, None, 0.0)]
    next_id += 1
    while stack:
        ind_id, parent, birth = stack.pop()
        if len(individuals) >= max_individuals:
            raise CapExceeded("individual cap exceeded while growing tree",
                              len(individuals))
        raw_death = birth + rng.exponential(params.death_rate)
        killed = raw_death >= gamma
        death = gamma if killed else raw_death
        ind = Individual(ind_id, parent, birth, death, killed)
        individuals[ind_id] = ind
        offsets = poisson_points(params.birth_rate, death - birth, rng)
        children_frames: list[tuple[int, int, float]] = []
        for off in offsets:
            theta = params.offspring.sample(rng)
            t_event = birth + off
            child_ids = list(range(next_id, next_id + theta))
            next_id += theta
            ind.events.append((t_event, child_ids))
            children_frames.extend((cid, ind_id, t_event) for cid in child_ids)
        # reversed push: chronological pop order
        stack.extend(reversed(children_frames))
    return Tree(root_id=_id_offset, individuals=individuals, gamma=gamma)


def simulate_forest(n_trees: int, params: ModelParams, rng: RngStream,
                    max_individuals: int = 1_000_000) -> Forest:
    """n_trees independent trees with disjoint id ranges; shared total cap."""
    trees: list[Tree] = []
    used = 0
    offset = 0
    for _ in range(n_trees):
        tree = simulate_tree(params, rng, max_individuals - used, _id_offset=offset)
        trees.append(tree)
        used += tree.size
        offset = max(tree.individuals) + 1
    return Forest(trees=trees, gamma=params.gamma)


@dataclass
class PopulationPath:
    """Right-continuous step path: z[i] holds on [t[i], t[i+1])."""

    t: np.ndarray
    z: np.ndarray
    gamma: float
    horizon: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.t.shape != self.z.shape or self.t.ndim != 1 or self.t.size == 0:
            raise ValueError("t and z must be equal-length non-empty 1-d arrays")
        if self.t[0] != 0.0 or np.any(np.diff(self.t) < 0):
            raise ValueError("jump times must start at 0 and be sorted")

    def value_at(self, time: float) -> float:
        if time < 0:
            raise ValueError("time must be >= 0")
        if time >= self.gamma:
            return 0.0  # everything is killed at the horizon
        if time > self.horizon:
            raise ValueError(f"path only defined up to {self.horizon}, asked for {time}")
        idx = int(np.searchsorted(self.t, time, side="right")) - 1
        return float(self.z[idx])

    def values_at(self, times: np.ndarray) -> np.ndarray:
        return np.array([self.value_at(float(s)) for s in np.asarray(times).ravel()])

    def to_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# gamma: {self.gamma!r}\n# horizon: {self.horizon!r}\n")
            for key, val in (meta or {}).items():
                fh.write(f"# {key}: {val}\n")
            fh.write("t,z\n")
            for ti, zi in zip(self.t, self.z):
                fh.write(f"{float(ti)!r},{float(zi)!r}\n")

    @staticmethod
    def from_csv(path) -> "PopulationPath":
        meta = {}
        ts: list[float] = []
        zs: list[float] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line == "t,z":
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    meta[key.strip()] = val.strip()
                    continue
                a, _, b = line.partition(",")
                ts.append(float(a))
                zs.append(float(b))
        return PopulationPath(np.array(ts), np.array(zs),
                              gamma=float(meta.get("gamma", "inf")),
                              horizon=float(meta.get("horizon", "inf")))


def population_path(forest: Forest | Tree) -> PopulationPath:
    """Z_t = #{alive at t} from a simulated forest.

    Alive means birth <= t < death. Horizon deaths are not -1 jumps: the
    path is truncated at gamma (value_at returns 0 from gamma on), so the
    number of -1 jumps equals the number of deaths strictly before gamma.
    """
    trees = forest.trees if isinstance(forest, Forest) else [forest]
    gamma = forest.gamma
    jumps: list[tuple[float, float]] = []
    z0 = 0
    for tree in trees:
        for ind in tree.individuals.values():
            if ind.birth == 0.0:
                z0 += 1
            else:
                jumps.append((ind.birth, 1.0))
            if not ind.killed:
                jumps.append((ind.death, -1.0))
    jumps.sort()
    times = [0.0]
    values = [float(z0)]
    for t_j, dz in jumps:
        if t_j == times[-1]:
            values[-1] += dz
        else:
            times.append(t_j)
            values.append(values[-1] + dz)
    return PopulationPath(np.array(times), np.array(values), gamma=gamma, horizon=gamma)


def gillespie_population(params: ModelParams, z0: int, rng: RngStream,
                         t_end: float | None = None,
                         max_events: int = 50_000_000) -> PopulationPath:
    """Population-count chain: wait Exp(k(lambda+mu)), then +Theta or -1.

    Runs until absorption at 0 or min(gamma, t_end). Only the count is
    simulated; no genealogy exists on this route.
    """
    if z0 < 0:
        raise ValueError(f"z0 must be >= 0, got {z0}")
    horizon = params.gamma if t_end is None else min(params.gamma, t_end)
    if horizon == math.inf:
        raise ValueError("need a finite horizon: pass t_end or use finite gamma")
    lam, mu = params.birth_rate, params.death_rate
    p_birth = lam / (lam + mu)
    times = [0.0]
    values = [float(z0)]
    t, k = 0.0, z0
    n_events = 0
    while k > 0:
        t += rng.exponential(k * (lam + mu))
        if t >= horizon:
            break
        if rng.uniform() < p_birth:
            k += params.offspring.sample(rng)
        else:
            k -= 1
        times.append(t)
        values.append(float(k))
        n_events += 1
        if n_events >= max_events:
            raise CapExceeded("event cap exceeded in population chain", n_events)
    return PopulationPath(np.array(times), np.array(values),
                          gamma=params.gamma, horizon=horizon)


def rescale_path(path: PopulationPath, n_scale: int) -> PopulationPath:
    """Counts divided by N; time is left alone (rates already carry N)."""
    return PopulationPath(path.t.copy(), path.z / n_scale,
                          gamma=path.gamma, horizon=path.horizon)


# -- moments ----------------------------------------------------------------

def mean_population(params: ModelParams, z0: float, t: float) -> float:
    """E Z_t = z0 exp((a lambda - mu) t); kill-free, so t below gamma."""
    return z0 * math.exp(params.growth_rate * t)


def mean_rescaled(scaling: ScalingParams, t: float) -> float:
    """E X_t for the rescaled process started from floor(Nx)/N."""
    return scaling.initial_level * math.exp(scaling.drift * t)


def mean_square_source(scaling: ScalingParams) -> float:
    """Coefficient of the first-moment term in the d/dt E X_t^2 equation.

    (sigma^2 N + 2 alpha) / (2 a N) * E Theta^2 + (sigma^2 N + 2 beta) / (2 N);
    equals quad_var_coefficient exactly (Ito on X^2), asserted in tests.
    """
    c = scaling.constants
    n, s2 = scaling.n_scale, scaling.sigma**2
    return ((s2 * n + 2.0 * scaling.alpha) / (2.0 * c.mean * n) * c.second_moment
            + (s2 * n + 2.0 * scaling.beta) / (2.0 * n))


def quad_var_coefficient(scaling: ScalingParams) -> float:
    """kappa^2 + (alpha/a (zeta^2 + a^2) + beta) / N."""
    c = scaling.constants
    return scaling.kappa**2 + (
        scaling.alpha / c.mean * c.second_moment + scaling.beta
    ) / scaling.n_scale


def second_moment_population(scaling: ScalingParams, t: float,
                           x0: float | None = None) -> float:
    """E X_t^2 from m2' = 2(alpha-beta) m2 + c_N m1, m2(0) = x0^2.

    Closed form for alpha != beta; the alpha == beta limit replaces
    (e^{2bt} - e^{bt})/b by t.
    """
    if x0 is None:
        x0 = scaling.initial_level
    b = scaling.drift
    c_n = mean_square_source(scaling)
    if b == 0.0:
        return x0 * x0 + c_n * x0 * t
    e_bt = math.exp(b * t)
    return x0 * x0 * e_bt * e_bt + c_n * x0 * e_bt * (e_bt - 1.0) / b


# -- serialization ------------------------------------------------------------

def forest_to_jsonl(forest: Forest, meta: dict | None = None) -> str:
    """One individual per line (id, parent, birth, death, events), after a meta line."""
    head = {"kind": "forest", "gamma": None if forest.gamma == math.inf
            else forest.gamma, "trees": len(forest.trees)}
    head.update(meta or {})
    lines = [json.dumps(head, sort_keys=True)]
    for tree in forest.trees:
        for ind_id in sorted(tree.individuals):
            ind = tree.individuals[ind_id]
            lines.append(json.dumps({
                "id": ind.id,
                "parent": ind.parent,
                "birth": ind.birth,
                "death": ind.death,
                "events": [[t, children] for t, children in ind.events],
            }, sort_keys=True))
    return "\n".join(lines) + "\n"


def forest_from_jsonl(text: str) -> Forest:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty forest serialization")
    meta = json.loads(lines[0])
    if meta.get("kind") != "forest":
        raise ValueError("first line must be the forest meta record")
    gamma = math.inf if meta.get("gamma") is None else float(meta["gamma"])
    individuals: dict[int, Individual] = {}
    for ln in lines[1:]:
        rec = json.loads(ln)
        individuals[rec["id"]] = Individual(
            id=rec["id"], parent=rec["parent"], birth=rec["birth"], death=rec["death"],
            killed=(gamma != math.inf and rec["death"] == gamma),
            events=[(t, list(children)) for t, children in rec["events"]],
        )
    roots = sorted(i for i, ind in individuals.items() if ind.parent is None)
    if len(roots) != meta.get("trees", len(roots)):
        raise ValueError("root count does not match the meta record")
    trees = []
    for root in roots:
        members: dict[int, Individual] = {}
        frontier = [root]
        while frontier:
            i = frontier.pop()
            members[i] = individuals[i]
            for _, children in individuals[i].events:
                frontier.extend(children)
        trees.append(Tree(root_id=root, individuals=members, gamma=gamma))
    return Forest(trees=trees, gamma=gamma)
