"""Multi-objective evolutionary search with MaxiMin front sorting.

The selection loop per generation: merge parents and offspring, move each
objective's minimizer straight into the next population, non-dominated
sort the rest, accept fronts whole while they fit (each re-ordered by the
MaxiMin rule against what is already selected), then fill the last
partial front one individual at a time by largest minimum distance.
Reproduction pairs adjacent individuals of the selected order, so
well-placed, diverse individuals recombine preferentially.

The ``improved`` flag controls whether fully accepted fronts are MaxiMin
re-sorted; with it off only the partial front is distance-filled, which
is the baseline behaviour used for comparisons.

All randomness flows through one seeded generator; objective evaluation
never consumes random numbers, so runs are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mobman.objectives import combined_fitness, normalize_columns, validate_weights


class EvolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaConfig:
    n_pop: int
    n_gen: int
    p_c: float
    p_m: float
    weights: np.ndarray
    bounds: np.ndarray                # (n_genes, 2)
    seed: int = 0
    improved: bool = True
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0

    def __post_init__(self):
        if self.n_pop < 4 or self.n_pop % 2 != 0:
            raise EvolveError("population size must be even and >= 4")
        if not (0.0 <= self.p_c <= 1.0 and 0.0 <= self.p_m <= 1.0):
            raise EvolveError("operator probabilities must lie in [0, 1]")
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] < b[:, 0]):
            raise EvolveError("bounds must be (n_genes, 2) with max >= min")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "weights",
                           validate_weights(np.asarray(self.weights, dtype=float)))


@dataclass
class Individual:
    chromosome: np.ndarray
    objectives: np.ndarray
    rank: int = 0
    fitness: float = float("nan")


@dataclass
class History:
    """Per-generation record of the search."""

    minima: list = field(default_factory=list)        # per-objective minima
    best_fitness: list = field(default_factory=list)  # decision pick fitness
    best_objectives: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.hstack([np.asarray(self.minima),
                          np.asarray(self.best_fitness)[:, None]])


@dataclass
class EvolveResult:
    pareto: list                 # front-1 Individuals of the final population
    best: Individual             # weighted-fitness pick from the final front
    history: History
    population: np.ndarray
    objectives: np.ndarray


def dominates(a, b) -> bool:
    """Strict Pareto dominance under minimization."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b) and np.any(a < b))


def fast_non_dominated_sort(objs) -> list:
    """Partition indices into non-dominated fronts F1, F2, ...

    Within a front, indices keep ascending order for determinism.
    """
    f = np.atleast_2d(np.asarray(objs, dtype=float))
    n = f.shape[0]
    if n == 0:
        raise EvolveError("cannot sort an empty population")
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt                      # dom[i, j]: i dominates j
    n_dominators = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(n_dominators == 0)
    remaining = n - len(current)
    counts = n_dominators.copy()
    while len(current):
        fronts.append(list(int(i) for i in current))
        counts[current] = -1
        released = []
        for p in current:
            dominated = np.flatnonzero(dom[p])
            counts[dominated] -= 1
            released.append(dominated)
        if remaining == 0:
            break
        nxt = np.flatnonzero(counts == 0)
        remaining -= len(nxt)
        current = nxt
    return fronts


def seed_per_objective_minima(objs) -> list:
    """Index of the minimizer of each objective, duplicates collapsed.

    Ties resolve to the lowest index; order follows the objectives.
    """
    f = np.atleast_2d(np.asarray(objs, dtype=float))
    out = []
    for j in range(f.shape[1]):
        i = int(np.argmin(f[:, j]))
        if i not in out:
            out.append(i)
    return out


def maximin_sort(front, selected, objs) -> list:
    """Greedy MaxiMin ordering of ``front`` against ``selected``.

    Repeatedly emits the member whose minimum distance to the selected
    set plus everything already emitted is largest, refreshing distances
    after each emission.  Distances are Euclidean in the space of
    ``objs`` rows; pass normalized objectives for mixed units.
    """
    front = list(front)
    selected = list(selected)
    if not selected:
        raise EvolveError("MaxiMin sorting needs a non-empty selected set")
    if not front:
        return []
    f = np.asarray(objs, dtype=float)
    pts = f[front]
    c = np.min(np.linalg.norm(pts[:, None, :] - f[selected][None, :, :], axis=2),
               axis=1)
    order = []
    alive = list(range(len(front)))
    while alive:
        best = max(alive, key=lambda i: (c[i], -front[i]))
        order.append(front[best])
        alive.remove(best)
        if alive:
            d = np.linalg.norm(pts[alive] - pts[best], axis=1)
            c[alive] = np.minimum(c[alive], d)
    return order


def _sbx_pair(x1, x2, cfg: GaConfig, rng) -> tuple:
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    c1, c2 = x1.copy(), x2.copy()
    for g in range(len(x1)):
        if abs(x1[g] - x2[g]) < 1e-14:
            continue
        u = rng.random()
        if u <= 0.5:
            beta = (2.0 * u) ** (1.0 / (cfg.eta_crossover + 1.0))
        else:
            beta = (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (cfg.eta_crossover + 1.0))
        c1[g] = 0.5 * ((1 + beta) * x1[g] + (1 - beta) * x2[g])
        c2[g] = 0.5 * ((1 - beta) * x1[g] + (1 + beta) * x2[g])
    return np.clip(c1, lo, hi), np.clip(c2, lo, hi)


def _polynomial_mutation(x, cfg: GaConfig, rng) -> np.ndarray:
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    span = hi - lo
    out = x.copy()
    em = cfg.eta_mutation
    for g in range(len(x)):
        if rng.random() >= cfg.p_m or span[g] <= 0.0:
            continue
        u = rng.random()
        d1 = (out[g] - lo[g]) / span[g]
        d2 = (hi[g] - out[g]) / span[g]
        if u < 0.5:
            dq = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (em + 1.0)) \
                ** (1.0 / (em + 1.0)) - 1.0
        else:
            dq = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (em + 1.0)) \
                ** (1.0 / (em + 1.0))
        out[g] += dq * span[g]
    return np.clip(out, lo, hi)


def make_new_pop(parents: np.ndarray, cfg: GaConfig, rng) -> np.ndarray:
    """Offspring via adjacent-pair crossover and per-gene mutation.

    Parent order is meaningful: rows (0,1), (2,3), ... are paired, so a
    MaxiMin-sorted population recombines its best-spread members first.
    """
    parents = np.asarray(parents, dtype=float)
    if parents.shape[0] != cfg.n_pop:
        raise EvolveError("parent count must equal the population size")
    children = np.empty_like(parents)
    for i in range(0, cfg.n_pop, 2):
        x1, x2 = parents[i], parents[i + 1]
        if rng.random() < cfg.p_c:
            c1, c2 = _sbx_pair(x1, x2, cfg, rng)
        else:
            c1, c2 = x1.copy(), x2.copy()
        children[i] = _polynomial_mutation(c1, cfg, rng)
        children[i + 1] = _polynomial_mutation(c2, cfg, rng)
    return children


def _tournament_offspring(pop, fitness, cfg: GaConfig, rng) -> np.ndarray:
    """Plain GA step: binary tournaments on fitness, then the operators."""
    n = len(pop)
    winners = np.empty_like(pop)
    for i in range(n):
        a, b = rng.integers(0, n, size=2)
        winners[i] = pop[a] if fitness[a] <= fitness[b] else pop[b]
    return make_new_pop(winners, cfg, rng)


def _evaluate(evaluator, pop, generation) -> np.ndarray:
    try:
        return np.array([np.asarray(evaluator(x), dtype=float) for x in pop])
    except Exception as e:  # surface the failing generation
        raise EvolveError(f"objective evaluation failed at generation "
                          f"{generation}: {e}") from e


def evolve(evaluator, cfg: GaConfig, rng=None,
           initial_population=None) -> EvolveResult:
    """Run the full generational loop and return the final front plus pick.

    ``evaluator`` maps a chromosome vector to a k-vector of objectives
    (minimization).  Evaluation may be parallelized by the caller inside
    ``evaluator``; the loop itself is sequential and owns the RNG.
    ``initial_population`` rows, clipped to bounds, replace the first
    random individuals (warm starts).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.bounds[:, 0], cfg.bounds[:, 1]
    n = cfg.n_pop

    pop = lo + (hi - lo) * rng.random((n, len(lo)))
    if initial_population is not None:
        warm = np.atleast_2d(np.asarray(initial_population, dtype=float))[:n]
        pop[: len(warm)] = np.clip(warm, lo, hi)
    objs = _evaluate(evaluator, pop, generation=-1)
    k = objs.shape[1]
    if len(cfg.weights) != k:
        raise EvolveError(f"{k} objectives but {len(cfg.weights)} weights")

    order = np.argsort(combined_fitness(objs, cfg.weights), kind="stable")
    pop, objs = pop[order], objs[order]
    off = _tournament_offspring(pop, combined_fitness(objs, cfg.weights), cfg, rng)
    off_objs = _evaluate(evaluator, off, generation=0)

    history = History()
    pareto_idx: list = []
    pick = 0
    for gen in range(cfg.n_gen):
        merged = np.vstack([pop, off])
        merged_objs = np.vstack([objs, off_objs])
        z = normalize_columns(merged_objs)

        seeds = seed_per_objective_minima(merged_objs)[:n]
        rest = [i for i in range(2 * n) if i not in seeds]
        fronts = [[rest[j] for j in fr]
                  for fr in fast_non_dominated_sort(merged_objs[rest])]

        selected = list(seeds)
        fi = 0
        while fi < len(fronts) and len(selected) + len(fronts[fi]) <= n:
            front = fronts[fi]
            if cfg.improved:
                front = maximin_sort(front, selected, z)
            selected.extend(front)
            fi += 1
        if len(selected) < n and fi < len(fronts):
            fill = maximin_sort(fronts[fi], selected, z)
            selected.extend(fill[: n - len(selected)])
        assert len(selected) == n, "selection must fill the population exactly"

        pop, objs = merged[selected], merged_objs[selected]

        pareto_idx = fast_non_dominated_sort(objs)[0]
        fit = combined_fitness(objs[pareto_idx], cfg.weights)
        pick = pareto_idx[int(np.argmin(fit))]
        history.minima.append(objs.min(axis=0))
        history.best_fitness.append(float(np.min(fit)))
        history.best_objectives.append(objs[pick].copy())

        if gen < cfg.n_gen - 1:
            off = make_new_pop(pop, cfg, rng)
            off_objs = _evaluate(evaluator, off, generation=gen + 1)

    pareto = [Individual(pop[i].copy(), objs[i].copy(), rank=0) for i in pareto_idx]
    for ind, f in zip(pareto, combined_fitness(objs[pareto_idx], cfg.weights)):
        ind.fitness = float(f)
    best = Individual(pop[pick].copy(), objs[pick].copy(), rank=0,
                      fitness=history.best_fitness[-1])
    return EvolveResult(pareto=pareto, best=best, history=history,
                        population=pop, objectives=objs)
