"""Random planted ontologies for driving the stub backend."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .backends import PlantedOntology

MATH_TOPICS = [
    "Counting", "Place Value", "Addition", "Subtraction", "Multiplication", "Division",
    "Fractions", "Decimals", "Percentages", "Ratios", "Proportions", "Negative Numbers",
    "Exponents", "Square Roots", "Order of Operations", "Variables", "Linear Equations",
    "Inequalities", "Coordinate Plane", "Slope", "Linear Functions", "Systems of Equations",
    "Polynomials", "Factoring", "Quadratic Equations", "Quadratic Functions", "Rational Expressions",
    "Radical Expressions", "Exponential Functions", "Logarithms", "Sequences", "Series",
    "Angles", "Triangles", "Pythagorean Theorem", "Circles", "Area", "Volume",
    "Similarity of Triangles", "Congruence", "Probability", "Statistics", "Mean and Median",
    "Permutations", "Combinations", "Trigonometric Ratios", "Unit Circle", "Vectors",
    "Matrices", "Limits",
]


def make_planted_ontology(
    n_concepts: int = 30,
    n_prereqs: int = 40,
    n_sims: int = 15,
    components: int = 1,
    seed: int = 0,
    approve_after: int | dict[str, int] = 1,
) -> PlantedOntology:
    """Acyclic prerequisites and similarities confined to ``components`` connected groups.

    Each group is first connected by a random prerequisite tree, so the number of
    connected components of the relation graph is exactly ``components``.
    """
    if components < 1 or components > n_concepts:
        raise ConfigError("components must lie in [1, n_concepts]")
    if n_prereqs < n_concepts - components:
        raise ConfigError("too few prerequisite relations to connect every group")
    rng = np.random.default_rng(seed)
    names = list(MATH_TOPICS[:n_concepts]) + [f"Topic {i}" for i in range(len(MATH_TOPICS), n_concepts)]
    order = rng.permutation(n_concepts)
    groups = [sorted(int(v) for v in g) for g in np.array_split(order, components)]

    def directed(a: int, b: int) -> tuple[str, str]:
        # topics are listed in curriculum order, so edges point from lower to higher index
        return names[min(a, b)], names[max(a, b)]

    prereqs: set[tuple[str, str]] = set()
    for g in groups:
        for i in range(1, len(g)):
            prereqs.add(directed(g[i], g[int(rng.integers(i))]))
    pairs = [(a, b) for g in groups for i, a in enumerate(g) for b in g[i + 1 :]]
    free = [directed(a, b) for a, b in pairs if directed(a, b) not in prereqs]
    need = n_prereqs - len(prereqs)
    if need > len(free):
        raise ConfigError("not enough concept pairs for the requested prerequisite count")
    for k in rng.choice(len(free), size=need, replace=False):
        prereqs.add(free[int(k)])

    sim_pool = [frozenset((names[a], names[b])) for a, b in pairs]
    if n_sims > len(sim_pool):
        raise ConfigError("not enough concept pairs for the requested similarity count")
    sims = {sim_pool[int(k)]: round(float(rng.uniform(0.3, 1.0)), 2) for k in rng.choice(len(sim_pool), n_sims, replace=False)}

    if isinstance(approve_after, int):
        approve = {n: approve_after for n in names}
    else:
        approve = dict(approve_after)
    return PlantedOntology(tuple(names), frozenset(prereqs), sims, approve)
