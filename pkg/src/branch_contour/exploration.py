"""Height (contour) processes of branching forests.

A forest is traced by a piecewise-linear path with slopes +-p: climb each
lifeline to its death level, descend to the most recent unexplored birth
event, trace the event's children in order revisiting the event level
between siblings, and keep descending when an event is exhausted. Every
local minimum carries a tag: it either opens a new birth event (with batch
size Theta), revisits one for the next sibling, or closes the excursion at
zero. The map from forests to tagged paths is a bijection; both directions
live here, together with a direct sampler for the path law that never
builds the tree, crossing counts and discrete local times, and the
occupation-measure identity.

Levels are copied bit-for-bit, never recomputed, so revisited minima
compare equal exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .branching import CapExceeded, Forest, Individual, Tree
from .core import ModelParams, ScalingParams
from .rng import RngStream

NEW_EVENT = "new_birth_event"
SIBLING_REVISIT = "sibling_revisit"
EXCURSION_END = "excursion_end"

_TAG_CODES = {NEW_EVENT: 0, SIBLING_REVISIT: 1, EXCURSION_END: 2}
_TAG_NAMES = {v: k for k, v in _TAG_CODES.items()}


@dataclass(frozen=True)
class ClockConvention:
    """How height variation converts to path time s (duration = |dh| / slope)."""

    mode: str
    slope: float

    def __post_init__(self):
        if self.mode not in ("height", "tree", "paper_sde"):
            raise ValueError(f"unknown clock mode {self.mode!r}")
        if not (math.isfinite(self.slope) and self.slope > 0):
            raise ValueError(f"slope must be positive, got {self.slope}")


def height_clock() -> ClockConvention:
    """s equals cumulative height variation (slope 1)."""
    return ClockConvention("height", 1.0)


def tree_clock(slope: float = 2.0) -> ClockConvention:
    """Genealogical convention: slopes +-slope, rates per unit height are (lambda, mu)."""
    return ClockConvention("tree", slope)


def paper_sde_clock(scaling: ScalingParams) -> ClockConvention:
    """SDE convention for the rescaled family: slope 2N, switch rates below."""
    return ClockConvention("paper_sde", scaling.slope)


def effective_height_rates(scaling: ScalingParams, mode: str) -> tuple[float, float]:
    """(birth, death) hazards per unit height for a clock mode.

    tree: the genealogical rates (lambda_N, mu_N). paper_sde: the SDE's
    switching intensities per unit s divided by the slope 2N, i.e.
    delta (N kappa^2 + 2 alpha) / (2a) down and delta (N kappa^2 + 2 beta) / 2
    up. The two coincide exactly when delta == 1 (single births).
    """
    if mode == "tree":
        return scaling.birth_rate, scaling.death_rate
    if mode == "paper_sde":
        c = scaling.constants
        n, k2 = scaling.n_scale, scaling.kappa**2
        lam = c.delta * (n * k2 + 2.0 * scaling.alpha) / (2.0 * c.mean)
        mu = c.delta * (n * k2 + 2.0 * scaling.beta) / 2.0
        return lam, mu
    raise ValueError(f"no height rates for clock mode {mode!r}")


def exploration_params(scaling: ScalingParams, mode: str,
                       gamma: float) -> tuple[ModelParams, ClockConvention]:
    """ModelParams + clock driving the rescaled exploration in a given mode."""
    lam, mu = effective_height_rates(scaling, mode)
    params = ModelParams(scaling.offspring, lam, mu, gamma)
    clock = ClockConvention("tree" if mode == "tree" else "paper_sde", scaling.slope)
    return params, clock


@dataclass
class Excursion:
    """Alternating extrema above zero: peaks[i] then mins[i]; mins[-1] == 0."""

    peaks: np.ndarray
    mins: np.ndarray
    tags: np.ndarray     # codes into _TAG_NAMES, one per minimum
    thetas: np.ndarray   # batch size at new-event minima, 0 elsewhere

    def __post_init__(self):
        self.peaks = np.asarray(self.peaks, dtype=np.float64)
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.tags = np.asarray(self.tags, dtype=np.int64)
        self.thetas = np.asarray(self.thetas, dtype=np.int64)

    @property
    def n_pairs(self) -> int:
        return self.peaks.size


@dataclass
class HeightPath:
    """A forest's contour: a list of excursions plus horizon and clock."""

    excursions: list[Excursion]
    gamma: float
    clock: ClockConvention = field(default_factory=lambda: tree_clock(2.0))

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for e_idx, exc in enumerate(self.excursions):
            k = exc.n_pairs
            if k == 0 or exc.mins.size != k or exc.tags.size != k or exc.thetas.size != k:
                raise ValueError(f"excursion {e_idx}: arrays must align and be non-empty")
            prev_min = 0.0
            for i in range(k):
                if not exc.peaks[i] > prev_min:
                    raise ValueError(
                        f"excursion {e_idx}: peak {i} must exceed the preceding minimum")
                if not exc.mins[i] < exc.peaks[i]:
                    raise ValueError(
                        f"excursion {e_idx}: minimum {i} must lie below its peak")
                prev_min = exc.mins[i]
            if np.any(exc.peaks > self.gamma):
                raise ValueError(f"excursion {e_idx}: peaks must not exceed gamma")
            if np.any(exc.mins < 0.0):
                raise ValueError(f"excursion {e_idx}: minima must be >= 0")
            if exc.mins[-1] != 0.0 or exc.tags[-1] != _TAG_CODES[EXCURSION_END]:
                raise ValueError(f"excursion {e_idx}: must end at level 0 with an end tag")
            if np.any(exc.tags[:-1] == _TAG_CODES[EXCURSION_END]):
                raise ValueError(f"excursion {e_idx}: end tag before the last minimum")
            new = exc.tags == _TAG_CODES[NEW_EVENT]
            if np.any(exc.thetas[new] < 1) or np.any(exc.thetas[~new] != 0):
                raise ValueError(f"excursion {e_idx}: batch sizes must be >= 1 at "
                                 "new events and 0 elsewhere")

    @property
    def n_excursions(self) -> int:
        return len(self.excursions)

    @property
    def n_peaks(self) -> int:
        return sum(exc.n_pairs for exc in self.excursions)

    def climb_intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """All ascents as (start level, end level) arrays, across excursions."""
        lows, highs = [], []
        for exc in self.excursions:
            lows.append(np.concatenate([[0.0], exc.mins[:-1]]))
            highs.append(exc.peaks)
        return np.concatenate(lows), np.concatenate(highs)

    def tag_names(self, exc_index: int) -> list[str]:
        return [_TAG_NAMES[int(c)] for c in self.excursions[exc_index].tags]

    def total_variation(self) -> float:
        lo, hi = self.climb_intervals()
        return float(2.0 * np.sum(hi - lo))

    def max_height(self) -> float:
        return float(max(float(exc.peaks.max()) for exc in self.excursions))


# -- forest -> path -----------------------------------------------------------

def contour_of_tree(tree: Tree, clock: ClockConvention | None = None) -> HeightPath:
    path = contour_of_forest(Forest(trees=[tree], gamma=tree.gamma), clock)
    return path


def contour_of_forest(forest: Forest, clock: ClockConvention | None = None) -> HeightPath:
    """Deterministic trace of each tree; one excursion per tree, in order."""
    excursions = [_trace_tree(tree) for tree in forest.trees]
    return HeightPath(excursions, gamma=forest.gamma, clock=clock or tree_clock(2.0))


def _trace_tree(tree: Tree) -> Excursion:
    peaks: list[float] = []
    mins: list[float] = []
    tags: list[int] = []
    thetas: list[int] = []

    # frame: [individual, next event index (descending), children, child idx, level]
    def push(ind: Individual):
        peaks.append(ind.death)
        stack.append([ind, len(ind.events), None, 0, 0.0])

    stack: list[list] = []
    push(tree.individuals[tree.root_id])
    while stack:
        frame = stack[-1]
        ind, ev_idx, children, child_idx, level = frame
        if children is not None and child_idx < len(children):
            frame[3] += 1
            mins.append(level)
            if child_idx == 0:
                tags.append(_TAG_CODES[NEW_EVENT])
                thetas.append(len(children))
            else:
                tags.append(_TAG_CODES[SIBLING_REVISIT])
                thetas.append(0)
            push(tree.individuals[children[child_idx]])
        elif ev_idx > 0:
            frame[1] = ev_idx - 1
            t_event, child_ids = ind.events[ev_idx - 1]
            frame[2], frame[3], frame[4] = child_ids, 0, t_event
        else:
            stack.pop()
    mins.append(0.0)
    tags.append(_TAG_CODES[EXCURSION_END])
    thetas.append(0)
    return Excursion(np.array(peaks), np.array(mins),
                     np.array(tags), np.array(thetas))


# -- path -> forest -----------------------------------------------------------

def tree_of_contour(path: HeightPath, level_tol: float = 0.0) -> Forest:
    """Rebuild the forest; ids are assigned in discovery (contour) order.

    Tags drive the reconstruction when present and are cross-checked against
    the level structure; level_tol widens the sibling-level match for
    externally produced paths (internal paths carry bit-equal levels).
    """
    trees: list[Tree] = []
    next_id = 0
    for e_idx, exc in enumerate(path.excursions):
        individuals: dict[int, Individual] = {}
        root_id = next_id

        def new_individual(parent: int | None, birth: float, death: float) -> int:
            nonlocal next_id
            ind = Individual(next_id, parent, birth, death,
                             killed=(path.gamma != math.inf and death == path.gamma))
            individuals[next_id] = ind
            next_id += 1
            return ind.id

        # spine of open lifelines; pending sibling frames (level, owner event)
        spine: list[tuple[int, float]] = []
        pending: list[list] = []  # [level, owner_id, children_list, remaining]
        current = new_individual(None, 0.0, float(exc.peaks[0]))
        spine.append((current, 0.0))
        for i in range(exc.n_pairs):
            m = float(exc.mins[i])
            tag = int(exc.tags[i])
            while spine and spine[-1][1] >= m:
                spine.pop()
            if pending and pending[-1][0] > m + level_tol:
                lvl = pending[-1][0]
                raise ValueError(
                    f"excursion {e_idx}, minimum {i}: descends below the pending "
                    f"sibling level {lvl!r} with siblings unconsumed")
            if tag == _TAG_CODES[EXCURSION_END]:
                if i != exc.n_pairs - 1:
                    raise ValueError(f"excursion {e_idx}: end tag at interior index {i}")
                if pending:
                    raise ValueError(
                        f"excursion {e_idx}: ends with {len(pending)} pending sibling "
                        "frames unconsumed")
                break
            death = float(exc.peaks[i + 1])
            if tag == _TAG_CODES[NEW_EVENT]:
                if not spine:
                    raise ValueError(
                        f"excursion {e_idx}, minimum {i}: no open lifeline to own "
                        "the new event")
                owner = spine[-1][0]
                theta = int(exc.thetas[i])
                children: list[int] = []
                individuals[owner].events.append((m, children))
                child = new_individual(owner, m, death)
                children.append(child)
                if theta > 1:
                    pending.append([m, owner, children, theta - 1])
                spine.append((child, m))
            elif tag == _TAG_CODES[SIBLING_REVISIT]:
                if not pending or abs(pending[-1][0] - m) > level_tol:
                    raise ValueError(
                        f"excursion {e_idx}, minimum {i}: sibling revisit at level "
                        f"{m!r} does not match the deepest pending event")
                frame = pending[-1]
                child = new_individual(frame[1], frame[0], death)
                frame[2].append(child)
                frame[3] -= 1
                if frame[3] == 0:
                    pending.pop()
                spine.append((child, frame[0]))
            else:
                raise ValueError(f"excursion {e_idx}, minimum {i}: unknown tag {tag}")
        for ind in individuals.values():
            ind.events.sort(key=lambda ev: ev[0])
        trees.append(Tree(root_id=root_id, individuals=individuals, gamma=path.gamma))
    return Forest(trees=trees, gamma=path.gamma)


# -- direct path sampler -------------------------------------------------------

def explore_direct(params: ModelParams, n_trees: int, rng: RngStream,
                   clock: ClockConvention | None = None,
                   max_extrema: int = 10_000_000) -> HeightPath:
    """Sample the contour law directly, never building the forest.

    Climb from the current level by Exp(mu) capped at gamma; descend by a
    fresh Exp(lambda). Landing above the deepest pending-sibling level opens
    a new event (draw Theta, remember Theta - 1 siblings at that level);
    otherwise land exactly on that level and consume one sibling, or close
    the excursion at 0 when no siblings are pending. Draw order per step:
    climb, descent, then the batch size only when a new event opens.
    """
    lam, mu = params.birth_rate, params.death_rate
    if lam <= 0:
        raise ValueError("direct exploration needs a positive birth rate")
    gamma = params.gamma
    excursions: list[Excursion] = []
    n_extrema = 0
    for _ in range(n_trees):
        peaks: list[float] = []
        mins: list[float] = []
        tags: list[int] = []
        thetas: list[int] = []
        stack: list[list] = []  # [level, remaining siblings]
        current = 0.0
        while True:
            if n_extrema >= max_extrema:
                raise CapExceeded("extrema cap exceeded in direct exploration",
                                  n_extrema)
            peak = min(current + rng.exponential(mu), gamma)
            peaks.append(peak)
            drop = rng.exponential(lam)
            floor = stack[-1][0] if stack else 0.0
            candidate = peak - drop
            n_extrema += 2
            if candidate > floor:
                theta = params.offspring.sample(rng)
                mins.append(candidate)
                tags.append(_TAG_CODES[NEW_EVENT])
                thetas.append(theta)
                if theta > 1:
                    stack.append([candidate, theta - 1])
                current = candidate
            elif stack:
                level = stack[-1][0]
                mins.append(level)  # bit-copy of the stored event level
                tags.append(_TAG_CODES[SIBLING_REVISIT])
                thetas.append(0)
                if stack[-1][1] == 1:
                    stack.pop()
                else:
                    stack[-1][1] -= 1
                current = level
            else:
                mins.append(0.0)
                tags.append(_TAG_CODES[EXCURSION_END])
                thetas.append(0)
                break
        excursions.append(Excursion(np.array(peaks), np.array(mins),
                                    np.array(tags), np.array(thetas)))
    return HeightPath(excursions, gamma=gamma, clock=clock or tree_clock(2.0))


# -- crossings and local time ---------------------------------------------------

def crossing_pairs(path: HeightPath, t: float) -> int:
    """Number of ascents through level t, with the half-open rule lo <= t < hi.

    Path closure matches every ascent through t with one descent, so this
    is also the number of descending crossings, and for a traced forest it
    equals the number of individuals alive at t exactly.
    """
    if t < 0:
        raise ValueError("level must be >= 0")
    lo, hi = path.climb_intervals()
    return int(np.sum((lo <= t) & (t < hi)))


def local_time(path: HeightPath, t: float,
               scaling: ScalingParams | None = None) -> float:
    """Crossing count at level t, normalized by 4/(N kappa^2 delta) when scaling is given.

    Zero at and beyond gamma: peaks never exceed gamma and the half-open
    rule excludes t == gamma.
    """
    raw = crossing_pairs(path, t)
    if scaling is None:
        return float(raw)
    return raw * scaling.local_time_unit


def local_time_profile(path: HeightPath, t_grid: np.ndarray,
                       scaling: ScalingParams | None = None) -> np.ndarray:
    """local_time on a sorted grid in one pass over the climbs."""
    grid = np.asarray(t_grid, dtype=np.float64)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be 1-d and strictly increasing")
    if np.any(grid < 0):
        raise ValueError("levels must be >= 0")
    lo, hi = path.climb_intervals()
    delta = np.zeros(grid.size + 1, dtype=np.float64)
    np.add.at(delta, np.searchsorted(grid, lo, side="left"), 1.0)
    np.subtract.at(delta, np.searchsorted(grid, hi, side="left"), 1.0)
    counts = np.cumsum(delta[:-1])
    unit = 1.0 if scaling is None else scaling.local_time_unit
    return counts * unit


def descent_clock_at_events(path: HeightPath) -> np.ndarray:
    """Cumulative descended height at each new-event minimum.

    The explorer's birth-event stream is Poisson in this clock: its rate per
    unit descended height is the exploration's birth hazard, with sibling
    landings and excursion ends merely pausing the exponential clock.
    """
    out: list[float] = []
    descended = 0.0
    for exc in path.excursions:
        for i in range(exc.n_pairs):
            descended += float(exc.peaks[i] - exc.mins[i])
            if exc.tags[i] == _TAG_CODES[NEW_EVENT]:
                out.append(descended)
    return np.array(out, dtype=np.float64)


# -- time parametrization and occupation identity --------------------------------

def parametrize(path: HeightPath, clock: ClockConvention | None = None) -> np.ndarray:
    """Vertices (s, h) of the path under a clock; excursions concatenate."""
    clock = clock or path.clock
    s_vals = [0.0]
    h_vals = [0.0]
    s = 0.0
    for exc in path.excursions:
        level = 0.0
        for i in range(exc.n_pairs):
            for target in (float(exc.peaks[i]), float(exc.mins[i])):
                s += abs(target - level) / clock.slope
                s_vals.append(s)
                h_vals.append(target)
                level = target
    return np.column_stack([s_vals, h_vals])


def _band_cumulative(edges: np.ndarray, values: np.ndarray):
    """G with G'(x) = g(x) for piecewise-constant g on edges; g = 0 outside."""
    edges = np.asarray(edges, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("band edges must be strictly increasing with >= 2 entries")
    if values.shape != (edges.size - 1,) or not np.all(np.isfinite(values)):
        raise ValueError("band values must be finite, one per cell")
    cum = np.concatenate([[0.0], np.cumsum(values * np.diff(edges))])

    def G(x):
        return np.interp(x, edges, cum)

    return G


def occupation_check(path: HeightPath, band_edges: np.ndarray,
                     band_values: np.ndarray,
                     s_horizon: float | None = None) -> tuple[float, float]:
    """Both sides of the occupation identity; they must agree to rounding.

    lhs walks the path in s and time-integrates g(H_r) segment by segment.
    rhs never looks at s: it integrates g(t) against the level-crossing
    counts, 2/slope per crossing pair for a complete path. A truncated path
    (s_horizon inside the trace) counts ascents and descents separately at
    1/slope each, since the final pair may be half-open.
    """
    p = path.clock.slope
    G = _band_cumulative(band_edges, band_values)
    vertices = parametrize(path)
    total_s = float(vertices[-1, 0])
    if s_horizon is None or s_horizon >= total_s:
        s_cut = total_s
    else:
        if s_horizon < 0:
            raise ValueError("s_horizon must be >= 0")
        s_cut = float(s_horizon)

    # lhs: time integral of g(H_r), split at the band edges
    lhs = 0.0
    seg_los: list[float] = []
    seg_his: list[float] = []
    climbs_lo: list[float] = []
    climbs_hi: list[float] = []
    for (s0, h0), (s1, h1) in zip(vertices[:-1], vertices[1:]):
        if s0 >= s_cut:
            break
        if s1 > s_cut:  # truncate the active segment in s
            h1 = h0 + (1.0 if h1 > h0 else -1.0) * p * (s_cut - s0)
            s1 = s_cut
        lo, hi = (h0, h1) if h0 <= h1 else (h1, h0)
        lhs += (G(hi) - G(lo)) / p
        seg_los.append(lo)
        seg_his.append(hi)
        if h1 > h0:
            climbs_lo.append(lo)
            climbs_hi.append(hi)

    # rhs: level integral of g against crossing counts
    if s_cut == total_s:
        rhs = 2.0 / p * float(np.sum(G(np.array(climbs_hi)) - G(np.array(climbs_lo))))
    else:
        rhs = 1.0 / p * float(np.sum(G(np.array(seg_his)) - G(np.array(seg_los))))
    return lhs, rhs


# -- serialization ----------------------------------------------------------------

def _clock_header(clock: ClockConvention) -> str:
    return f"# clock: {clock.mode} {float(clock.slope)!r}\n"


def _parse_clock(text: str) -> ClockConvention:
    mode, slope = text.split()
    return ClockConvention(mode, float(slope))


def heightpath_to_extrema_csv(path: HeightPath, file_path, meta: dict | None = None) -> None:
    """Rows (index, kind M|m, level, tag); new-event tags carry Theta after a colon."""
    with open(file_path, "w", encoding="utf-8") as fh:
        fh.write(f"# gamma: {path.gamma!r}\n")
        fh.write(_clock_header(path.clock))
        for key, val in (meta or {}).items():
            fh.write(f"# {key}: {val}\n")
        fh.write("index,kind,level,tag\n")
        idx = 0
        for exc in path.excursions:
            for i in range(exc.n_pairs):
                fh.write(f"{idx},M,{float(exc.peaks[i])!r},\n")
                idx += 1
                tag = _TAG_NAMES[int(exc.tags[i])]
                if exc.tags[i] == _TAG_CODES[NEW_EVENT]:
                    tag = f"{tag}:{int(exc.thetas[i])}"
                fh.write(f"{idx},m,{float(exc.mins[i])!r},{tag}\n")
                idx += 1


def heightpath_from_extrema_csv(file_path) -> HeightPath:
    gamma = math.inf
    clock = tree_clock(2.0)
    peaks: list[float] = []
    mins: list[float] = []
    tags: list[int] = []
    thetas: list[int] = []
    excursions: list[Excursion] = []
    with open(file_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line == "index,kind,level,tag":
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                key = key.strip()
                if key == "gamma":
                    gamma = float(val.strip())
                elif key == "clock":
                    clock = _parse_clock(val.strip())
                continue
            _, kind, level, tag = line.split(",", 3)
            if kind == "M":
                peaks.append(float(level))
                continue
            name, _, theta_text = tag.partition(":")
            code = _TAG_CODES.get(name)
            if code is None:
                raise ValueError(f"unknown minimum tag {tag!r}")
            mins.append(float(level))
            tags.append(code)
            thetas.append(int(theta_text) if theta_text else 0)
            if code == _TAG_CODES[EXCURSION_END]:
                excursions.append(Excursion(np.array(peaks), np.array(mins),
                                            np.array(tags), np.array(thetas)))
                peaks, mins, tags, thetas = [], [], [], []
    if peaks or mins:
        raise ValueError("trailing extrema after the last excursion end")
    return HeightPath(excursions, gamma=gamma, clock=clock)


def heightpath_to_vertex_csv(path: HeightPath, file_path, meta: dict | None = None) -> None:
    vertices = parametrize(path)
    with open(file_path, "w", encoding="utf-8") as fh:
        fh.write(f"# gamma: {path.gamma!r}\n")
        fh.write(_clock_header(path.clock))
        for key, val in (meta or {}).items():
            fh.write(f"# {key}: {val}\n")
        fh.write("s,h\n")
        for s, h in vertices:
            fh.write(f"{float(s)!r},{float(h)!r}\n")


def heightpath_from_vertex_csv(file_path) -> HeightPath:
    """Rebuild a path from vertices; tags are re-derived from the level structure.

    A minimum equal (bit-for-bit) to the deepest still-open event level is a
    sibling revisit; zero closes the excursion; anything else opens an event
    whose Theta is one plus its later revisit count. Internally generated
    files copy levels exactly, so this inverts heightpath_to_vertex_csv.
    """
    gamma = math.inf
    clock = tree_clock(2.0)
    ss: list[float] = []
    hs: list[float] = []
    with open(file_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line == "s,h":
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                key = key.strip()
                if key == "gamma":
                    gamma = float(val.strip())
                elif key == "clock":
                    clock = _parse_clock(val.strip())
                continue
            a, _, b = line.partition(",")
            ss.append(float(a))
            hs.append(float(b))
    if not hs or hs[0] != 0.0:
        raise ValueError("vertex list must start at (0, 0)")
    extrema = hs[1:]
    if len(extrema) % 2:
        raise ValueError("vertex list must alternate peak/minimum and end at 0")
    excursions: list[Excursion] = []
    peaks: list[float] = []
    mins: list[float] = []
    tags: list[int] = []
    thetas: list[int] = []
    open_events: list[list] = []  # [level, index into thetas]
    for j in range(0, len(extrema), 2):
        peak, m = extrema[j], extrema[j + 1]
        peaks.append(peak)
        mins.append(m)
        while open_events and open_events[-1][0] > m:
            open_events.pop()
        if m == 0.0:
            tags.append(_TAG_CODES[EXCURSION_END])
            thetas.append(0)
            excursions.append(Excursion(np.array(peaks), np.array(mins),
                                        np.array(tags), np.array(thetas)))
            peaks, mins, tags, thetas = [], [], [], []
            open_events = []
        elif open_events and open_events[-1][0] == m:
            tags.append(_TAG_CODES[SIBLING_REVISIT])
            thetas.append(0)
            thetas[open_events[-1][1]] += 1
        else:
            tags.append(_TAG_CODES[NEW_EVENT])
            thetas.append(1)
            open_events.append([m, len(thetas) - 1])
    if peaks:
        raise ValueError("vertex path does not end at level 0")
    return HeightPath(excursions, gamma=gamma, clock=clock)
