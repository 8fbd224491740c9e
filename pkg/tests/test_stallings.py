import math

import numpy as np
import pytest

from stallings import (
    Endomorphism,
    SubgroupGraph,
    action_graph,
    apply,
    build_graph,
    contains,
    index,
    is_automorphism,
    is_surjective,
    rewrite_in_schreier,
    schreier_generators,
    schreier_system,
    schreier_transversal,
)
from surface_core import SurfacePresentation, frattini_action
from word_core import Word, concat, invert, parse_word, reduce


def w(text, rank=2):
    return parse_word(text, rank)


def mod_kernel(rank, p):
    start, act = frattini_action(rank, p)
    return action_graph(rank, start, act)


@pytest.fixture
def kernel2():
    return mod_kernel(2, 2)


def test_build_graph_examples():
    rose = build_graph([w("x1"), w("x2")], 2)
    assert rose.num_vertices == 1
    assert rose.degree(0) == 4

    square = build_graph([w("x1^2")], 2)
    assert square.num_vertices == 2
    assert [(u, a) for u, a, _ in square.edges()] == [(0, 1), (1, 1)]

    empty = build_graph([], 2)
    assert empty.num_vertices == 1
    assert empty.edges() == []


def test_folding_keeps_the_basepoint_stem():
    conjugate = w("x1 x2 x1 x2^-1 x1^-1")
    g = build_graph([conjugate], 2)
    assert g.num_vertices == 3
    assert g.degree(0) == 1
    assert contains(g, conjugate)
    assert not contains(g, w("x1"))


def test_folding_trims_hanging_trees():
    g = SubgroupGraph.from_edge_list("basepoint 0 vertices 3 rank 2\n0 x1 0\n0 x2 1\n1 x1 2\n")
    assert g.num_vertices == 1
    assert contains(g, w("x1"))
    assert not contains(g, w("x2"))


@pytest.mark.parametrize("generators, query, expected", [
    (["x1^2"], "x1^2", True),
    (["x1^2"], "x1", False),
    (["x1^2"], "x1^-4", True),
    (["x1 x2", "x2^2"], "x1 x2^-1", True),
    (["x1 x2", "x2^2"], "x1", False),
])
def test_contains(generators, query, expected):
    g = build_graph([w(s) for s in generators], 2)
    assert contains(g, w(query)) is expected


def test_mod2_kernel_contains_commutator(kernel2):
    assert contains(kernel2, w("x1 x2 x1^-1 x2^-1"))
    assert contains(kernel2, w("x1^2"))
    assert not contains(kernel2, w("x1 x2"))


def test_index_examples(kernel2):
    assert index(build_graph([w("x1"), w("x2")], 2)) == 1
    assert index(kernel2) == 4
    assert index(build_graph([w("x1^2")], 2)) == math.inf


def test_folding_is_confluent():
    generators = [w("x1 x2 x1^-1"), w("x2^2 x1"), w("x1^3")]
    reference = build_graph(generators, 2)
    rng = np.random.default_rng(3)
    for _ in range(10):
        order = rng.permutation(len(generators))
        g = build_graph([generators[i] for i in order], 2)
        assert g.edges() == reference.edges()


def test_generators_and_products_are_members():
    rng = np.random.default_rng(8)
    generators = [w("x1 x2 x1^-1"), w("x2^3"), w("x1^2 x2^-1")]
    g = build_graph(generators, 2)
    for s in generators:
        assert contains(g, s)
    for _ in range(50):
        picks = rng.integers(0, len(generators), size=6)
        signs = rng.choice([1, -1], size=6)
        product = concat([generators[i] if s > 0 else invert(generators[i]) for i, s in zip(picks, signs)], 2)
        assert contains(g, product)


def test_schreier_transversal_examples(kernel2):
    rose = build_graph([w("x1"), w("x2")], 2)
    assert schreier_transversal(rose).representatives == (Word.identity(2),)

    t = schreier_transversal(kernel2)
    assert len(t.representatives) == 4
    assert t.representatives[0].is_identity
    assert t.max_length() == 2

    t25 = schreier_transversal(mod_kernel(2, 5))
    assert len(t25.representatives) == 25
    assert t25.max_length() <= 8


def test_transversal_paths_end_at_their_vertex(kernel2):
    t = schreier_transversal(kernel2)
    for vertex, rep in enumerate(t.representatives):
        current = 0
        for a in rep.letters:
            current = kernel2.out[current][a]
        assert current == vertex


def test_schreier_transversal_needs_finite_index():
    with pytest.raises(ValueError):
        schreier_transversal(build_graph([w("x1^2")], 2))


def test_schreier_generators_examples(kernel2):
    t = schreier_transversal(kernel2)
    generators = schreier_generators(kernel2, t)
    assert len(generators) == 5
    assert all(len(y) <= 2 * t.max_length() + 1 for y in generators)
    assert all(contains(kernel2, y) for y in generators)

    rose = build_graph([w("x1"), w("x2")], 2)
    assert schreier_generators(rose, schreier_transversal(rose)) == [w("x1"), w("x2")]


@pytest.mark.parametrize("rank, p", [(2, 3), (3, 2), (2, 5), (3, 3)])
def test_nielsen_schreier_count(rank, p):
    g = mod_kernel(rank, p)
    l = index(g)
    assert l == p ** rank
    assert len(schreier_generators(g, schreier_transversal(g))) == 1 + l * (rank - 1)


def test_rewrite_examples(kernel2):
    t = schreier_transversal(kernel2)
    system = schreier_system(kernel2, t)
    assert system.rewrite(w("x1^2")).letters == (system.letter_index[(1, 1)] + 1,)
    assert rewrite_in_schreier(kernel2, t, w("x1^2")).letters == (1,)

    y1, y2 = system.words[0], system.words[3]
    assert system.rewrite(y1).letters == (1,)
    assert system.rewrite(y1 * y2).letters == (1, 4)


def test_rewrite_rejects_non_members(kernel2):
    t = schreier_transversal(kernel2)
    with pytest.raises(ValueError):
        rewrite_in_schreier(kernel2, t, w("x1"))


def test_rewrite_then_evaluate_is_identity():
    g = mod_kernel(2, 3)
    system = schreier_system(g, schreier_transversal(g))
    rng = np.random.default_rng(21)
    for _ in range(100):
        picks = rng.integers(0, len(system.words), size=int(rng.integers(0, 6)))
        signs = rng.choice([1, -1], size=len(picks))
        element = concat([system.words[i] if s > 0 else invert(system.words[i]) for i, s in zip(picks, signs)], 2)
        assert system.evaluate(system.rewrite(element)) == element


def test_edge_list_round_trip():
    g = build_graph([w("x1 x2 x1^-1"), w("x2^2 x1")], 2)
    text = g.to_edge_list()
    assert text.startswith(f"basepoint 0 vertices {g.num_vertices} rank 2")
    again = SubgroupGraph.from_edge_list(text)
    assert again.edges() == g.edges()


def test_edge_list_rejects_bad_header():
    with pytest.raises(ValueError):
        SubgroupGraph.from_edge_list("vertices 2\n0 x1 1\n")


@pytest.mark.parametrize("text", [
    "basepoint 0 vertices 2 rank 2\n0 x1 2\n",
    "basepoint 0 vertices 2 rank 2\n-1 x1 0\n",
    "basepoint 0 vertices 2 rank 2\n0 x3 1\n",
    "basepoint 0 vertices 3 rank 2\n0 x1 1\n1 x2 0\n",
    "basepoint 0 vertices 0 rank 2\n",
    "",
])
def test_edge_list_rejects_inconsistent_vertices(text):
    with pytest.raises(ValueError):
        SubgroupGraph.from_edge_list(text)


def test_edge_list_single_vertex():
    g = SubgroupGraph.from_edge_list("basepoint 0 vertices 1 rank 2\n")
    assert g.num_vertices == 1
    assert g.edges() == []


@pytest.mark.parametrize("images, expected", [
    (["x1", "x2"], True),
    (["x1 x2", "x2"], True),
    (["x1^2", "x2"], False),
    (["x2", "x1"], True),
    (["x1", "1"], False),
])
def test_is_surjective_examples(images, expected):
    e = Endomorphism(tuple(w(s) for s in images))
    assert is_surjective(e) is expected
    assert is_automorphism(e) is expected


def test_surjectivity_survives_nielsen_move():
    rng = np.random.default_rng(4)
    for _ in range(30):
        images = tuple(reduce(rng.choice([1, -1, 2, -2], size=int(rng.integers(1, 4))).tolist(), 2) for _ in range(2))
        e = Endomorphism(images)
        moved = Endomorphism((images[0] * images[1], images[1]))
        assert is_surjective(e) == is_surjective(moved)


def test_apply_examples():
    swap = Endomorphism((w("x2"), w("x1")))
    assert apply(swap, w("x1 x2")) == w("x2 x1")
    assert apply(swap, Word.identity(2)).is_identity
    collapse = Endomorphism((w("x1 x2"), Word.identity(2)))
    assert apply(collapse, w("x1 x2")) == w("x1 x2")


def test_apply_rank_mismatch():
    with pytest.raises(ValueError):
        apply(Endomorphism.identity(2), parse_word("x3", 3))


@pytest.mark.slow
def test_surface_schreier_reduction_genus_two():
    pres = SurfacePresentation("orientable", 2)
    start, act = frattini_action(4, 5, pres)
    g = action_graph(4, start, act, limit=1000)
    t = schreier_transversal(g)
    system = schreier_system(g, t, (pres.relator,))
    generators = system.generators()
    assert g.num_vertices == 625
    assert len(system.letters) == 1 + 625 * 3
    assert len(generators) == 2 + 625 * 2 == 1252
    assert max(len(y) for y in generators) <= 33

    relator = pres.relator
    conjugate = parse_word("x1", 4) * relator * parse_word("x1^-1", 4)
    assert not system.functionals(relator).any()
    assert not system.functionals(conjugate).any()
