"""
Folded subgroup graphs (Stallings graphs) for subgroups of the free group F(x1..xn).

Vertex 0 is always the basepoint. ``out[v]`` maps a signed letter to the target
vertex, so a positive edge u -x_a-> v is stored as ``out[u][a] = v`` and
``out[v][-a] = u``. Graphs are numbered canonically by a breadth-first walk from
the basepoint in letter order, which makes folded graphs of the same subgroup
identical.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from word_core import Word, alphabet, concat, invert, reduce

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SubgroupGraph:
    rank: int
    out: tuple

    @property
    def num_vertices(self):
        return len(self.out)

    def degree(self, vertex):
        return len(self.out[vertex])

    def edges(self):
        """Positive edges (u, a, v), sorted by (u, a)."""
        found = []
        for u, targets in enumerate(self.out):
            for a, v in targets.items():
                if a > 0:
                    found.append((u, a, v))
        return sorted(found)

    def to_edge_list(self):
        lines = [f"basepoint 0 vertices {self.num_vertices} rank {self.rank}"]
        lines.extend(f"{u} x{a} {v}" for u, a, v in self.edges())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text):
        """
        Reads the edge-list text format.

        Raises:
            ValueError: If the header or an edge line is malformed, a vertex id lies
                outside the header count, a label exceeds the rank, or a vertex
                other than a lone basepoint has no edges.
        """

        lines = [line.split() for line in text.strip().splitlines() if line.strip()]
        header = lines[0] if lines else []
        if len(header) != 6 or header[0] != "basepoint" or header[1] != "0" or header[2] != "vertices":
            raise ValueError(f"Malformed graph header: {' '.join(header)}")
        num_vertices, rank = int(header[3]), int(header[5])
        if num_vertices < 1 or rank < 1:
            raise ValueError(f"Graph header needs at least one vertex and rank >= 1: {' '.join(header)}")
        edges = []
        used = {0}
        for parts in lines[1:]:
            if len(parts) != 3 or not parts[1].startswith("x"):
                raise ValueError(f"Malformed edge line: {' '.join(parts)}")
            u, a, v = int(parts[0]), int(parts[1][1:]), int(parts[2])
            if not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise ValueError(f"Edge {' '.join(parts)} uses a vertex outside 0..{num_vertices - 1}.")
            edges.append((u, a, v))
            used.update((u, v))
        if len(used) != num_vertices:
            raise ValueError(f"Header declares {num_vertices} vertices but the edges use {len(used)}.")
        return _fold(num_vertices, edges, rank)


@dataclass(frozen=True)
class Transversal:
    representatives: tuple
    tree_edges: frozenset

    def max_length(self):
        return max(len(r) for r in self.representatives)


@dataclass(frozen=True)
class Endomorphism:
    images: tuple

    def __post_init__(self):
        rank = len(self.images)
        if rank < 1:
            raise ValueError("An endomorphism needs at least one generator image.")
        for image in self.images:
            if image.rank != rank:
                raise ValueError(f"Image {image} has rank {image.rank}, expected {rank}.")

    @property
    def rank(self):
        return len(self.images)

    @classmethod
    def identity(cls, rank):
        return cls(tuple(Word.generator(i, rank) for i in range(1, rank + 1)))

    def __str__(self):
        return ", ".join(f"x{i}->{image}" for i, image in enumerate(self.images, start=1))


# --- Folding ---

def _fold(num_vertices, edges, rank):
    parent = list(range(num_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = [dict() for _ in range(num_vertices)]
    pending = deque()

    def attach(u, a, v):
        current = out[u].get(a)
        if current is None:
            out[u][a] = v
        else:
            pending.append((current, v))

    for u, a, v in edges:
        if not 1 <= a <= rank:
            raise ValueError(f"Edge label x{a} out of range for rank {rank}.")
        attach(u, a, v)
        attach(v, -a, u)

    while pending:
        x, y = pending.popleft()
        x, y = find(x), find(y)
        if x == y:
            continue
        if y < x:
            x, y = y, x
        parent[y] = x
        moved, out[y] = out[y], {}
        for a, t in moved.items():
            attach(x, a, t)

    resolved = {}
    for u in range(num_vertices):
        if find(u) != u:
            continue
        resolved[u] = {a: find(t) for a, t in out[u].items()}

    _trim(resolved)
    return _canonical(resolved, rank)


def _trim(adjacency):
    # the basepoint survives even with degree one
    queue = deque(v for v, targets in adjacency.items() if v != 0 and len(targets) <= 1)
    while queue:
        v = queue.popleft()
        if v not in adjacency or len(adjacency[v]) > 1:
            continue
        for a, t in adjacency.pop(v).items():
            if t not in adjacency:
                continue
            adjacency[t].pop(-a, None)
            if t != 0 and len(adjacency[t]) <= 1:
                queue.append(t)


def _canonical(adjacency, rank):
    order = {0: 0}
    queue = deque([0])
    letters = alphabet(rank)
    while queue:
        v = queue.popleft()
        for a in letters:
            t = adjacency[v].get(a)
            if t is not None and t not in order:
                order[t] = len(order)
                queue.append(t)
    out = [None] * len(order)
    for v, new in order.items():
        out[new] = {a: order[t] for a, t in sorted(adjacency[v].items())}
    return SubgroupGraph(rank, tuple(out))


def build_graph(generators, rank):
    """
    Folded core graph of the subgroup generated by ``generators``.

    Each generator is laid out as a petal at the basepoint, then equally labelled
    edges leaving a common vertex are merged with a union-find until the graph is
    deterministic; hanging trees are trimmed.
    """

    edges = []
    next_vertex = 1
    for word in generators:
        if word.rank != rank:
            raise ValueError(f"Rank mismatch: {word.rank} vs {rank}.")
        if word.is_identity:
            continue
        current = 0
        for position, a in enumerate(word.letters):
            if position == len(word) - 1:
                target = 0
            else:
                target = next_vertex
                next_vertex += 1
            if a > 0:
                edges.append((current, a, target))
            else:
                edges.append((target, -a, current))
            current = target
    return _fold(next_vertex, edges, rank)


def action_graph(rank, start, act, limit=None):
    """
    Coset graph of the stabilizer of ``start`` under a finite action.

    ``act(state, letter)`` returns the image of a state under a signed letter. The
    states reachable from ``start`` become vertices in breadth-first order.

    Raises:
        ValueError: If more than ``limit`` states are reached.
    """

    index = {start: 0}
    states = [start]
    out = []
    letters = alphabet(rank)
    position = 0
    while position < len(states):
        state = states[position]
        targets = {}
        for a in letters:
            image = act(state, a)
            if image not in index:
                if limit is not None and len(states) >= limit:
                    raise ValueError(f"Action orbit exceeds {limit} states.")
                index[image] = len(states)
                states.append(image)
            targets[a] = index[image]
        out.append(targets)
        position += 1
    return SubgroupGraph(rank, tuple(out))


def contains(g, w):
    vertex = 0
    for a in w.letters:
        vertex = g.out[vertex].get(a)
        if vertex is None:
            return False
    return vertex == 0


def index(g):
    """Number of cosets when the graph is a covering, else ``math.inf``."""
    full = 2 * g.rank
    if all(len(targets) == full for targets in g.out):
        return g.num_vertices
    return math.inf


def schreier_transversal(g):
    if index(g) == math.inf:
        raise ValueError("Schreier transversal needs a finite-index subgroup.")
    representatives = [None] * g.num_vertices
    representatives[0] = ()
    tree = set()
    queue = deque([0])
    letters = alphabet(g.rank)
    while queue:
        u = queue.popleft()
        for a in letters:
            v = g.out[u][a]
            if representatives[v] is None:
                representatives[v] = representatives[u] + (a,)
                tree.add((u, a) if a > 0 else (v, -a))
                queue.append(v)
    return Transversal(
        tuple(Word(r, g.rank) for r in representatives),
        frozenset(tree),
    )


# --- Schreier generators and Reidemeister-Schreier rewriting ---

@dataclass(frozen=True, eq=False)
class SchreierSystem:
    """
    Schreier generators of a finite-index subgroup together with the rewriting map.

    ``letters`` lists every non-tree edge (coset, letter) in canonical order; these are
    the free Schreier generators. With relators supplied, generators lying on a dual
    spanning tree of the lifted relator cells are eliminated and ``kept`` indexes the
    survivors.
    """

    graph: SubgroupGraph
    transversal: Transversal
    letters: tuple
    words: tuple
    kept: tuple
    eliminations: tuple = ()
    letter_index: dict = field(default_factory=dict)

    def generators(self):
        return [self.words[i] for i in self.kept]

    def rewrite(self, w):
        if w.rank != self.graph.rank:
            raise ValueError(f"Rank mismatch: {w.rank} vs {self.graph.rank}.")
        out = self.graph.out
        tree = self.transversal.tree_edges
        vertex = 0
        raw = []
        for a in w.letters:
            target = out[vertex].get(a)
            if target is None:
                raise ValueError(f"Word {w} is not in the subgroup.")
            edge = (vertex, a) if a > 0 else (target, -a)
            if edge not in tree:
                letter = self.letter_index[edge] + 1
                raw.append(letter if a > 0 else -letter)
            vertex = target
        if vertex != 0:
            raise ValueError(f"Word {w} is not in the subgroup.")
        return reduce(raw, max(len(self.letters), 1))

    def evaluate(self, schreier_word):
        pieces = []
        for s in schreier_word.letters:
            word = self.words[abs(s) - 1]
            pieces.append(word if s > 0 else invert(word))
        return concat(pieces, self.graph.rank)

    def letter_counts(self, w):
        counts = np.zeros(len(self.letters), dtype=np.int64)
        for s in self.rewrite(w).letters:
            counts[abs(s) - 1] += 1 if s > 0 else -1
        return counts

    def functionals(self, w):
        """Exponent sums of ``w`` on the kept generators (relator-reduced)."""
        counts = self.letter_counts(w)
        for edge, sign, terms in self.eliminations:
            coefficient = counts[edge]
            if coefficient:
                for other, other_sign in terms:
                    counts[other] -= sign * other_sign * coefficient
                counts[edge] = 0
        return counts[list(self.kept)]


def _relator_cells(g, tree, letter_index, relators):
    cells = []
    for start in range(g.num_vertices):
        for relator in relators:
            vertex = start
            terms = []
            for a in relator.letters:
                target = g.out[vertex][a]
                edge = (vertex, a) if a > 0 else (target, -a)
                if edge not in tree:
                    terms.append((letter_index[edge], 1 if a > 0 else -1))
                vertex = target
            if vertex != start:
                raise ValueError(f"Relator {relator} does not lift to a closed loop at coset {start}.")
            cells.append(tuple(terms))
    return cells


def _eliminate(cells):
    occurrences = {}
    for cell, terms in enumerate(cells):
        for edge, _ in terms:
            occurrences.setdefault(edge, []).append(cell)

    dual = nx.Graph()
    dual.add_nodes_from(range(len(cells)))
    for cell, terms in enumerate(cells):
        for edge, _ in terms:
            where = occurrences[edge]
            if len(where) != 2 or where[0] == where[1]:
                continue
            other = where[1] if where[0] == cell else where[0]
            if not dual.has_edge(cell, other):
                dual.add_edge(cell, other, edge=edge)

    eliminations = []
    seen = set()
    components = 0
    for root in range(len(cells)):
        if root in seen:
            continue
        components += 1
        seen.add(root)
        for parent_cell, child in nx.bfs_edges(dual, root):
            seen.add(child)
            edge = dual[parent_cell][child]["edge"]
            terms = cells[child]
            sign = next(s for e, s in terms if e == edge)
            rest = tuple((e, s) for e, s in terms if e != edge)
            eliminations.append((edge, sign, rest))
    if components > 1:
        logger.warning("Relator cells split into %d components; extra relations kept.", components)
    return tuple(eliminations)


def schreier_system(g, t, relators=()):
    if index(g) == math.inf:
        raise ValueError("Schreier generators need a finite-index subgroup.")
    letters = []
    words = []
    for u, a, v in g.edges():
        if (u, a) in t.tree_edges:
            continue
        letters.append((u, a))
        word = t.representatives[u] * Word((a,), g.rank) * invert(t.representatives[v])
        words.append(word)
    letter_index = {edge: i for i, edge in enumerate(letters)}

    eliminations = ()
    if relators:
        cells = _relator_cells(g, t.tree_edges, letter_index, relators)
        eliminations = _eliminate(cells)
    removed = {edge for edge, _, _ in eliminations}
    kept = tuple(i for i in range(len(letters)) if i not in removed)
    logger.debug("Schreier system: %d cosets, %d letters, %d kept", g.num_vertices, len(letters), len(kept))
    return SchreierSystem(g, t, tuple(letters), tuple(words), kept, eliminations, letter_index)


def schreier_generators(g, t, relators=()):
    """
    Nontrivial Schreier generators t_u x (t_{u.x})^-1 in (coset, letter) order.

    For a free ambient group of rank n and index l there are 1 + l(n - 1) of them.
    Passing surface relators reduces the set to 2 + l(d - 2) generators of the
    surface subgroup.
    """

    return schreier_system(g, t, relators).generators()


def rewrite_in_schreier(g, t, w):
    """Rewrites a subgroup element as a word over the Schreier generator alphabet."""
    return schreier_system(g, t).rewrite(w)


# --- Endomorphisms ---

def apply(e, w):
    if w.rank != e.rank:
        raise ValueError(f"Rank mismatch: word rank {w.rank}, endomorphism rank {e.rank}.")
    raw = []
    inverses = {}
    for a in w.letters:
        image = e.images[abs(a) - 1]
        if a > 0:
            raw.extend(image.letters)
        else:
            if a not in inverses:
                inverses[a] = invert(image).letters
            raw.extend(inverses[a])
    return reduce(raw, e.rank)


def is_surjective(e):
    """Surjective iff the folded graph of the images is the rose on n petals."""
    g = build_graph(e.images, e.rank)
    return g.num_vertices == 1 and g.degree(0) == 2 * e.rank


def is_automorphism(e):
    # finitely generated free groups are Hopfian
    return is_surjective(e)
