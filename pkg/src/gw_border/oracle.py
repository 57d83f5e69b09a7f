"""Exhaustive enumeration of small plane trees, used to cross-check the series.

Trees of size n are produced in a fixed order: the root's subtree sizes run
over the compositions of n-1 in lexicographic order and each child's subtree
runs over its own enumeration. Nodes are numbered breadth first, root 0.
"""

import itertools
import json
import logging
from collections import Counter, deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, TextIO, Tuple

from gmpy2 import mpq
from pydantic import BaseModel, ConfigDict

from gw_border.border import iterate_scheme
from gw_border.errors import DomainError, InvalidInputError
from gw_border.family import OffspringFamily, extinction_prob, height_iterate, psi_value, solve_g
from gw_border.settings import get_settings
from gw_border.utils import format_exact

logger = logging.getLogger(__name__)

# nested tuples: a node is the tuple of its children
Shape = Tuple["Shape", ...]


@dataclass(frozen=True)
class PlaneTree:
    """A rooted plane tree; ``children[v]`` lists v's children left to right."""

    children: Tuple[Tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.children)

    @property
    def parents(self) -> Tuple[int, ...]:
        parents = [-1] * self.size
        for v, kids in enumerate(self.children):
            for c in kids:
                parents[c] = v
        return tuple(parents)

    @property
    def outdegrees(self) -> Tuple[int, ...]:
        return tuple(len(kids) for kids in self.children)

    def profile(self) -> Dict[int, int]:
        """Number of nodes with each outdegree."""
        return dict(Counter(self.outdegrees))

    @classmethod
    def from_shape(cls, shape: Shape) -> "PlaneTree":
        children: List[Tuple[int, ...]] = []
        queue = deque([shape])
        next_id = 1
        while queue:
            node = queue.popleft()
            children.append(tuple(range(next_id, next_id + len(node))))
            next_id += len(node)
            queue.extend(node)
        return cls(tuple(children))

    @classmethod
    def from_outdegrees(cls, outdegrees: Sequence[int]) -> "PlaneTree":
        """Build from outdegrees listed in breadth-first order."""
        children: List[Tuple[int, ...]] = []
        next_id = 1
        for v, d in enumerate(outdegrees):
            d = int(d)
            if d < 0 or next_id <= v:
                raise InvalidInputError(f"Outdegree sequence is not a single tree (node {v})")
            children.append(tuple(range(next_id, next_id + d)))
            next_id += d
        if next_id != len(outdegrees) or not outdegrees:
            raise InvalidInputError("Outdegree sequence does not close into a single tree")
        return cls(tuple(children))

    @classmethod
    def from_parents(cls, parents: Sequence[int]) -> "PlaneTree":
        """Build from a parent array (root first with parent -1); children keep index order."""
        n = len(parents)
        if n == 0 or parents[0] != -1:
            raise InvalidInputError("Parent array must start with the root (parent -1)")
        kids: List[List[int]] = [[] for _ in range(n)]
        for v in range(1, n):
            p = parents[v]
            if not 0 <= p < n or p == v:
                raise InvalidInputError(f"Node {v} has invalid parent {p}")
            kids[p].append(v)
        # relabel breadth first so that every tree has one canonical encoding
        order, queue = [], deque([0])
        while queue:
            v = queue.popleft()
            order.append(v)
            queue.extend(kids[v])
        if len(order) != n:
            raise InvalidInputError("Parent array contains a cycle or a detached node")
        label = {v: i for i, v in enumerate(order)}
        return cls(tuple(tuple(label[c] for c in kids[v]) for v in order))


class TreeStats(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    size: int
    border: int
    height: int
    per_node_border: Tuple[int, ...]
    weight: mpq


class OracleCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    k: int
    oracle_total: str
    oracle_border: str
    series_total: str
    series_border: str
    match: bool


class OracleReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: str
    n_max: int
    k_max: int
    checks: List[OracleCheck]

    @property
    def mismatches(self) -> List[OracleCheck]:
        return [c for c in self.checks if not c.match]


# ----- enumeration -----

def _check_size(n: int) -> None:
    cap = get_settings().oracle.max_n
    if n < 1 or n > cap:
        raise DomainError(f"Enumeration supports 1 ≤ n ≤ {cap}, got {n}")


def _compositions(m: int) -> Iterator[Tuple[int, ...]]:
    if m == 0:
        yield ()
        return
    for first in range(1, m + 1):
        for rest in _compositions(m - first):
            yield (first,) + rest


def _generate(n: int) -> Iterator[Shape]:
    if n == 1:
        yield ()
        return
    for sizes in _compositions(n - 1):
        yield from itertools.product(*(_shapes(s) for s in sizes))


@lru_cache(maxsize=None)
def _cached_shapes(n: int) -> Tuple[Shape, ...]:
    return tuple(_generate(n))


def _shapes(n: int):
    return _cached_shapes(n) if n <= 12 else _generate(n)


def enumerate_trees(n: int) -> Iterator[PlaneTree]:
    """All plane trees with n nodes (Catalan(n-1) of them) in canonical order."""
    _check_size(n)
    for shape in _shapes(n):
        yield PlaneTree.from_shape(shape)


# ----- per-tree statistics -----

def border_distance(a: PlaneTree) -> int:
    """Depth of the shallowest leaf (breadth-first search from the root)."""
    depth = {0: 0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        if not a.children[v]:
            return depth[v]
        for c in a.children[v]:
            depth[c] = depth[v] + 1
            queue.append(c)
    raise InvalidInputError("Tree without leaves")


def per_node_border(a: PlaneTree) -> Tuple[int, ...]:
    """∂_v for every node: distance to the nearest leaf, by a multi-source search from all leaves."""
    parents = a.parents
    dist = [-1] * a.size
    queue = deque()
    for v, kids in enumerate(a.children):
        if not kids:
            dist[v] = 0
            queue.append(v)
    while queue:
        v = queue.popleft()
        neighbours = list(a.children[v])
        if parents[v] >= 0:
            neighbours.append(parents[v])
        for u in neighbours:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                queue.append(u)
    return tuple(dist)


def rerooted_distances(parents: Sequence[int]) -> List[int]:
    """
    Border distance of the tree re-rooted at each node.

    Re-rooted at v, the leaves are the nodes other than v with graph degree one,
    so each node needs its nearest degree-one node other than itself. A
    breadth-first search from all degree-one nodes keeps the two nearest
    distinct sources per node.

    Args:
        parents: Parent array, root first with parent -1

    Returns:
        Distances indexed like ``parents``
    """
    n = len(parents)
    if n == 1:
        return [0]
    adjacency: List[List[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        adjacency[v].append(parents[v])
        adjacency[parents[v]].append(v)
    nearest: List[List[Tuple[int, int]]] = [[] for _ in range(n)]
    queue = deque()
    for v in range(n):
        if len(adjacency[v]) == 1:
            nearest[v].append((0, v))
            queue.append((v, v, 0))
    while queue:
        v, source, d = queue.popleft()
        for u in adjacency[v]:
            found = nearest[u]
            if len(found) < 2 and all(s != source for _, s in found):
                found.append((d + 1, source))
                queue.append((u, source, d + 1))
    return [next(d for d, s in nearest[v] if s != v) for v in range(n)]


def rerooted_border(a: PlaneTree) -> Tuple[int, ...]:
    """∂ of the tree re-rooted at every node; the root entry equals border_distance(a)."""
    return tuple(rerooted_distances(a.parents))


def height(a: PlaneTree) -> int:
    depth = [0] * a.size
    for v, kids in enumerate(a.children):
        for c in kids:
            depth[c] = depth[v] + 1
    return max(depth)


def weight(fam: OffspringFamily, a: PlaneTree) -> mpq:
    """w(a) = ∏_v b_{outdeg(v)}."""
    result = mpq(1)
    for degree, count in a.profile().items():
        result *= fam.coeff(degree) ** count
    return result


def tree_stats(fam: OffspringFamily, a: PlaneTree) -> TreeStats:
    return TreeStats(size=a.size, border=border_distance(a), height=height(a),
                     per_node_border=per_node_border(a), weight=weight(fam, a))


def tree_probability(fam: OffspringFamily, t: float, a: PlaneTree, given_extinction: bool = False) -> float:
    """P(T_t = a) = w(a) t^{n-1} / ψ(t)^n, optionally conditioned on a finite tree."""
    n = a.size
    value = float(weight(fam, a)) * float(t) ** (n - 1) / psi_value(fam, t) ** n
    if given_extinction:
        value /= extinction_prob(fam, t)
    return value


# ----- aggregation -----

@lru_cache(maxsize=1 << 16)
def _shape_stats(shape: Shape) -> Tuple[int, int, Tuple[Tuple[int, int], ...]]:
    # (root border, height, sorted outdegree profile)
    if not shape:
        return 0, 0, ((0, 1),)
    child_stats = [_shape_stats(c) for c in shape]
    profile: Counter = Counter({len(shape): 1})
    for _, _, child_profile in child_stats:
        profile.update(dict(child_profile))
    return (1 + min(s[0] for s in child_stats), 1 + max(s[1] for s in child_stats),
            tuple(sorted(profile.items())))


@lru_cache(maxsize=None)
def _census(n: int) -> Dict[Tuple[Tuple[Tuple[int, int], ...], int, int], int]:
    """How many size-n trees share each (profile, border, height)."""
    counts: Counter = Counter()
    for shape in _shapes(n):
        border, tree_height, profile = _shape_stats(shape)
        counts[(profile, border, tree_height)] += 1
    logger.debug("[Oracle] Census of size %d: %d classes", n, len(counts))
    return dict(counts)


def _profile_weight(fam: OffspringFamily, profile: Tuple[Tuple[int, int], ...]) -> mpq:
    result = mpq(1)
    for degree, count in profile:
        result *= fam.coeff(degree) ** count
    return result


def aggregate(fam: OffspringFamily, n: int, k: int) -> Tuple[mpq, mpq]:
    """
    Weighted totals over all size-n plane trees.

    Args:
        fam: The family supplying the weights
        n: Tree size, 1 ≤ n ≤ oracle.max_n
        k: Border threshold

    Returns:
        (U_n, V_n): the total weight and the weight of trees with ∂ ≥ k
    """
    _check_size(n)
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    total, border_total = mpq(0), mpq(0)
    for (profile, border, _), count in _census(n).items():
        w = count * _profile_weight(fam, profile)
        total += w
        if border >= k:
            border_total += w
    return total, border_total


def height_aggregate(fam: OffspringFamily, n: int, h: int) -> mpq:
    """Weight of size-n trees with height ≤ h."""
    _check_size(n)
    return sum((count * _profile_weight(fam, profile)
                for (profile, _, tree_height), count in _census(n).items() if tree_height <= h), mpq(0))


def cross_check(fam: OffspringFamily, n_max: int, k_max: int) -> OracleReport:
    """Compare oracle totals with the exact series for every 1 ≤ n ≤ n_max and 0 ≤ k ≤ k_max."""
    _check_size(n_max)
    if k_max < 0:
        raise DomainError(f"k_max must be nonnegative, got {k_max}")
    g = solve_g(fam, n_max)
    checks = []
    for k in range(k_max + 1):
        g_k = iterate_scheme(fam, k, n_max)
        for n in range(1, n_max + 1):
            u_n, v_n = aggregate(fam, n, k)
            a_n, a_n_k = g.coeff(n), g_k.coeff(n)
            checks.append(OracleCheck(n=n, k=k, oracle_total=format_exact(u_n), oracle_border=format_exact(v_n),
                                      series_total=format_exact(a_n), series_border=format_exact(a_n_k),
                                      match=(u_n == a_n and v_n == a_n_k)))
    report = OracleReport(family=fam.name, n_max=n_max, k_max=k_max, checks=checks)
    if report.mismatches:
        logger.warning("[Oracle] %d mismatches for %s", len(report.mismatches), fam.name)
    return report


def height_check(fam: OffspringFamily, n_max: int, h: int) -> bool:
    """Height-scheme coefficients agree with the enumeration up to size n_max."""
    g_h = height_iterate(fam, h, n_max)
    return all(g_h.coeff(n) == height_aggregate(fam, n, h) for n in range(1, n_max + 1))


def dump_trees(fam: OffspringFamily, n: int, stream: TextIO) -> int:
    """Write one JSON line per size-n tree: parents, border distance and weight."""
    count = 0
    for tree in enumerate_trees(n):
        record = {"n": n, "parents": list(tree.parents), "border": border_distance(tree),
                  "weight": format_exact(weight(fam, tree))}
        stream.write(json.dumps(record, separators=(",", ":")) + "\n")
        count += 1
    logger.info("[Oracle] Dumped %d trees of size %d for %s", count, n, fam.name)
    return count
