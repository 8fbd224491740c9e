"""
Surface-group presentations, a Dehn-algorithm word problem, mod-p exponent
functionals and finite permutation quotients.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from sympy import isprime
from sympy.combinatorics import Permutation, PermutationGroup

from experiment_parameters import (
    MAX_COSETS,
    QUOTIENT_MAX_CANDIDATES,
    QUOTIENT_MAX_DEGREE,
    QUOTIENT_SURJECTION_SAMPLES,
    SURFACE_KINDS,
    normalize_strings,
)
from stallings import action_graph
from word_core import Word, exponent_vector, invert

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SurfacePresentation:
    kind: str
    genus: int

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"Invalid surface kind: {self.kind}. Must be one of: {', '.join(SURFACE_KINDS)}.")
        if self.kind == "orientable" and self.genus < 2:
            raise ValueError(f"Orientable genus must be at least 2, got {self.genus}.")
        if self.kind == "nonorientable" and self.genus < 3:
            raise ValueError(f"Non-orientable genus must be at least 3, got {self.genus}.")

    @classmethod
    def parse(cls, text):
        """Reads ``orientable:<genus>`` or ``nonorientable:<genus>``."""
        kind, _, genus = normalize_strings(text).partition(":")
        if not genus.isdigit():
            raise ValueError(f"Malformed surface {text!r}; expected kind:genus.")
        return cls(kind.replace("-", ""), int(genus))

    @property
    def orientable(self):
        return self.kind == "orientable"

    @property
    def rank(self):
        return 2 * self.genus if self.orientable else self.genus

    @property
    def relator(self):
        letters = []
        if self.orientable:
            for i in range(1, 2 * self.genus, 2):
                letters.extend((i, i + 1, -i, -(i + 1)))
        else:
            for i in range(1, self.genus + 1):
                letters.extend((i, i))
        return Word(tuple(letters), self.rank)

    @property
    def dehn_complete(self):
        """Whether Dehn's algorithm decides the word problem for this relator."""
        return self.orientable or self.genus >= 4

    def __str__(self):
        return f"{self.kind}:{self.genus}"


@dataclass(frozen=True)
class ExponentVector:
    entries: tuple
    modulus: int

    def is_zero(self):
        return not any(self.entries)

    def __len__(self):
        return len(self.entries)


def _check_alphabet(w, pres):
    if pres is not None and w.rank != pres.rank:
        raise ValueError(f"Word rank {w.rank} does not match presentation rank {pres.rank}.")


def exponent_sums(w, pres=None, p=0):
    """
    Exponent functionals of ``w``.

    Free and orientable words give raw signed letter counts (reduced mod p when p is
    given). A non-orientable word needs a prime: at p = 2 all n parities, at odd p
    the n - 1 working-basis functionals e_i - e_n.

    Raises:
        ValueError: If ``p`` is not prime where a prime is required.
    """

    _check_alphabet(w, pres)
    if p and not isprime(p):
        raise ValueError(f"Modulus {p} is not prime.")
    counts = exponent_vector(w)

    if pres is None or pres.orientable:
        entries = tuple(c % p for c in counts) if p else counts
        return ExponentVector(entries, p)

    if not p:
        raise ValueError("Non-orientable functionals need a prime modulus.")
    if p == 2:
        return ExponentVector(tuple(c % 2 for c in counts), p)
    last = counts[-1]
    return ExponentVector(tuple((c - last) % p for c in counts[:-1]), p)


def functional_count(rank, p, pres=None):
    if pres is not None and not pres.orientable and p != 2:
        return rank - 1
    return rank


def working_basis(rank, p, pres=None):
    """Indices of the generators the functionals are dual to."""
    return tuple(range(1, functional_count(rank, p, pres) + 1))


def functional_images(rank, p, pres=None):
    """Functional vector of each basis letter x_1 .. x_rank."""
    return tuple(
        exponent_sums(Word.generator(i, rank), pres, p).entries for i in range(1, rank + 1)
    )


def frattini_action(rank, p, pres=None):
    """Translation action of the basis on (Z/p)^m through the exponent functionals."""
    images = functional_images(rank, p, pres)

    def act(state, letter):
        delta = images[abs(letter) - 1]
        sign = 1 if letter > 0 else -1
        return tuple((s + sign * d) % p for s, d in zip(state, delta))

    start = (0,) * functional_count(rank, p, pres)
    return start, act


# --- Dehn's algorithm ---

@lru_cache(maxsize=None)
def _dehn_table(pres):
    relator = pres.relator.letters
    size = len(relator)
    threshold = size // 2
    table = {}
    for base in (relator, invert(pres.relator).letters):
        for shift in range(size):
            cyclic = base[shift:] + base[:shift]
            for k in range(size, threshold, -1):
                table.setdefault(cyclic[:k], tuple(-a for a in reversed(cyclic[k:])))
    return table, threshold, size


def dehn_reduce(w, pres):
    """
    Replaces relator pieces longer than half the relator by their shorter
    complement until none is left, freely reducing as it goes.

    Letters are pushed onto a stack; after every push the longest suffix that is more
    than half of a cyclic conjugate of the relator or its inverse is replaced, so the
    earliest-completing, longest match wins.
    """

    _check_alphabet(w, pres)
    table, threshold, size = _dehn_table(pres)
    stack = []
    pending = deque(w.letters)
    while pending:
        a = pending.popleft()
        if stack and stack[-1] == -a:
            stack.pop()
            continue
        stack.append(a)
        for k in range(min(size, len(stack)), threshold, -1):
            replacement = table.get(tuple(stack[-k:]))
            if replacement is not None:
                del stack[-k:]
                pending.extendleft(reversed(replacement))
                break
    return Word(tuple(stack), w.rank)


def is_trivial(w, pres):
    """
    Three-valued triviality test: True, False, or None for unknown.

    True always comes from reduction to the empty word. False comes from Dehn
    completeness, or, for the genus-3 non-orientable group, from a separating
    finite quotient.
    """

    reduced = dehn_reduce(w, pres)
    if reduced.is_identity:
        return True
    if pres.dehn_complete:
        return False
    if quotient_separate(reduced, pres) is not None:
        return False
    logger.debug("Triviality of %s undecided in %s", w, pres)
    return None


def are_equal(u, v, pres):
    return is_trivial(u * invert(v), pres)


# --- Finite permutation quotients ---

def identity_permutation(degree):
    return Permutation(list(range(degree)))


def evaluate_word(images, w, degree=None):
    """Image of ``w`` under the homomorphism x_i -> images[i-1]."""
    if degree is None:
        degree = images[0].size
    result = identity_permutation(degree)
    for letter, run in itertools.groupby(w.letters):
        base = images[abs(letter) - 1]
        if letter < 0:
            base = ~base
        result = result * base ** len(list(run))
    return result


def relator_holds(images, pres):
    if pres is None:
        return True
    return evaluate_word(images, pres.relator).is_Identity


@dataclass(frozen=True)
class QuotientWitness:
    degree: int
    images: tuple

    def evaluate(self, w):
        return evaluate_word(self.images, w, self.degree)

    def image_order(self):
        return PermutationGroup(list(self.images)).order()

    def describe(self):
        return [p.cyclic_form for p in self.images]


def _cyclic_images(rank, index_powers, degree):
    cycle = Permutation(list(range(1, degree)) + [0])
    images = [identity_permutation(degree)] * rank
    for i, power in index_powers:
        images[i] = cycle ** power
    return QuotientWitness(degree, tuple(images))


def _abelian_witness(w, pres):
    counts = exponent_vector(w)
    if pres is None or pres.orientable:
        for i, c in enumerate(counts):
            if c:
                return _cyclic_images(len(counts), [(i, 1)], abs(c) + 1)
        return None
    if sum(counts) % 2:
        return _cyclic_images(len(counts), [(i, 1) for i in range(len(counts))], 2)
    last = counts[-1]
    for i, c in enumerate(counts[:-1]):
        if c != last:
            return _cyclic_images(len(counts), [(i, 1), (len(counts) - 1, -1)], abs(c - last) + 1)
    return None


def quotient_separate(w, pres, max_degree=QUOTIENT_MAX_DEGREE, max_candidates=QUOTIENT_MAX_CANDIDATES):
    """
    Searches for a finite permutation quotient in which ``w`` is not the identity.

    Abelian quotients are tried first; then all generator images in S_2, S_3, ...
    S_max_degree that satisfy the relator, in lexicographic order.

    Returns:
        QuotientWitness or None if nothing separates ``w`` within the budget.
    """

    if pres is not None:
        w = dehn_reduce(w, pres)
    if w.is_identity:
        return None
    witness = _abelian_witness(w, pres)
    if witness is not None:
        return witness

    tried = 0
    for degree in range(2, max_degree + 1):
        elements = [Permutation(list(p)) for p in itertools.permutations(range(degree))]
        for images in itertools.product(elements, repeat=w.rank):
            tried += 1
            if tried > max_candidates:
                logger.info("Quotient search budget of %d candidates exhausted.", max_candidates)
                return None
            if relator_holds(images, pres) and not evaluate_word(images, w, degree).is_Identity:
                return QuotientWitness(degree, tuple(images))
    return None


@lru_cache(maxsize=None)
def surjections(pres, degree=3, limit=QUOTIENT_SURJECTION_SAMPLES):
    """First ``limit`` homomorphisms of the surface group onto the full S_degree."""
    elements = [Permutation(list(p)) for p in itertools.permutations(range(degree))]
    order = len(elements)
    found = []
    for images in itertools.product(elements, repeat=pres.rank):
        if relator_holds(images, pres) and PermutationGroup(list(images)).order() == order:
            found.append(QuotientWitness(degree, tuple(images)))
            if len(found) >= limit:
                break
    return tuple(found)


def parse_images(text, rank):
    """
    Reads generator images in cycle notation, one per generator, separated by ``;``.

    Example: ``"(0 1);(0 1 2);();(1 2)"``. The degree is the largest point plus one.
    """

    parts = [part.strip() for part in text.split(";")]
    if len(parts) != rank:
        raise ValueError(f"Expected {rank} generator images, got {len(parts)}.")
    cycles_per_image = []
    degree = 1
    for part in parts:
        cycles = []
        for chunk in part.replace(")", "").split("("):
            points = [int(x) for x in chunk.replace(",", " ").split()]
            if points:
                cycles.append(points)
                degree = max(degree, max(points) + 1)
        cycles_per_image.append(cycles)
    images = []
    for cycles in cycles_per_image:
        perm = identity_permutation(degree)
        for cycle in cycles:
            perm = perm * Permutation([cycle], size=degree)
        images.append(perm)
    return tuple(images)


def validate_quotient(images, pres=None, rank=None):
    rank = pres.rank if pres is not None else rank
    if len(images) != rank:
        raise ValueError(f"Expected {rank} generator images, got {len(images)}.")
    degree = max(p.size for p in images)
    images = tuple(Permutation(p.array_form, size=degree) for p in images)
    if not relator_holds(images, pres):
        raise ValueError("Generator images do not satisfy the relator.")
    return images


def kernel_graph(images, pres=None, rank=None):
    """
    Coset graph of the kernel of x_i -> images[i-1]: the Cayley graph of the image group.

    Its vertex count is the index l of the kernel.
    """

    images = validate_quotient(images, pres, rank)
    rank = len(images)
    inverses = tuple(~p for p in images)
    start = identity_permutation(images[0].size)

    def act(state, letter):
        return state * (images[letter - 1] if letter > 0 else inverses[-letter - 1])

    return action_graph(rank, start, act, limit=MAX_COSETS)
