"""
Test-element constructions: Frattini-layer calculus, the free and surface net
projections, the coset construction and one-sided certificates.

Certificates are one-sided. A negative certificate carries an endomorphism that
fixes the word and is provably not an automorphism; a positive one names the
construction that produced the word; anything else is unknown.
"""

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from sympy import Matrix, mod_inverse, nextprime
from sympy.combinatorics import PermutationGroup

from experiment_parameters import (
    MAX_COSETS,
    NET_PRIME_FREE,
    NET_PRIME_NONORIENTABLE,
    NET_PRIME_ORIENTABLE,
    PRIME_SEARCH_CAP,
    VETTING_BOUND_FREE,
    VETTING_BOUND_NONORIENTABLE,
    VETTING_BOUND_ORIENTABLE,
    check_run_limits,
)
from stallings import (
    Endomorphism,
    apply,
    is_surjective,
    schreier_system,
    schreier_transversal,
    action_graph,
)
from surface_core import (
    SurfacePresentation,
    dehn_reduce,
    evaluate_word,
    exponent_sums,
    frattini_action,
    functional_count,
    kernel_graph,
    surjections,
    validate_quotient,
    working_basis,
)
from word_core import (
    InvariantViolation,
    Word,
    concat,
    distance,
    enumerate_ball,
    exponent_vector,
    invert,
    word_length,
)

logger = logging.getLogger(__name__)


class Status(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Certificate:
    status: Status
    reason: str
    search_bound: int
    witness: Endomorphism = None

    def to_record(self):
        record = {"status": self.status.value, "reason": self.reason, "search_bound": self.search_bound}
        if self.witness is not None:
            record["witness"] = [str(image) for image in self.witness.images]
        return record


@dataclass(frozen=True)
class TraceStep:
    name: str
    exponents: tuple = ()
    subset: tuple = ()
    cost: int = 0
    note: str = ""

    def to_record(self):
        return {
            "step": self.name,
            "exponents": list(self.exponents),
            "subset": [f"x{i}" for i in self.subset],
            "cost": self.cost,
            "note": self.note,
        }


@dataclass(frozen=True)
class NetResult:
    input: Word
    output: Word
    distance: int
    bound: int
    trace: tuple
    certificate: Certificate
    intermediate: Word = None
    prime: int = 0

    def trace_cost(self):
        return sum(step.cost for step in self.trace)

    def to_record(self):
        record = {
            "input": str(self.input),
            "output": str(self.output),
            "output_length": word_length(self.output),
            "distance": self.distance,
            "bound": self.bound,
            "prime": self.prime,
            "trace": [step.to_record() for step in self.trace],
            "certificate": self.certificate.to_record(),
        }
        if self.intermediate is not None:
            record["intermediate_length"] = word_length(self.intermediate)
        return record


@dataclass(frozen=True)
class CosetResult:
    input: Word
    output: Word
    prime: int
    index: int
    trace: tuple
    certificate: Certificate

    def trace_cost(self):
        return sum(step.cost for step in self.trace)

    def to_record(self):
        return {
            "input": str(self.input),
            "output": str(self.output),
            "output_length": word_length(self.output),
            "prime": self.prime,
            "index": self.index,
            "trace_cost": self.trace_cost(),
            "trace": [step.to_record() for step in self.trace],
            "certificate": self.certificate.to_record(),
        }


def _provably_trivial(w, pres):
    # the sound "true" branch of is_trivial
    if pres is None:
        return w.is_identity
    return dehn_reduce(w, pres).is_identity


def power_word(exponents, rank):
    """x_1^{a_1} x_2^{a_2} ... for exponents given as {index: a} or a sequence."""
    if not isinstance(exponents, dict):
        exponents = dict(enumerate(exponents, start=1))
    return concat([Word.generator(i, rank, a) for i, a in sorted(exponents.items())], rank)


# --- Frattini layers ---

def in_frattini(w, p, pres=None):
    return exponent_sums(w, pres, p).is_zero()


def frattini_correction(w, p, pres=None):
    """Exponents alpha in [0, p-1] on the working basis that move ``w`` into the Frattini subgroup."""
    return tuple((-s) % p for s in exponent_sums(w, pres, p).entries)


def frattini_adjust(w, p, pres=None, with_branch=False):
    """
    Right-multiplies ``w`` by x_1^{alpha_1} ... x_m^{alpha_m} so the result has all
    exponent functionals divisible by ``p``.

    When that product is (provably) trivial but ``w`` is not, the smallest nonzero
    alpha_j is replaced by alpha_j - p, which keeps the functionals and makes the
    result a nontrivial conjugate of x_j^-p.
    """

    alphas = list(frattini_correction(w, p, pres))
    basis = working_basis(w.rank, p, pres)
    u = w * power_word(dict(zip(basis, alphas)), w.rank)
    branch = "p1"
    if _provably_trivial(u, pres) and any(alphas):
        j = next(i for i, a in enumerate(alphas) if a)
        alphas[j] -= p
        u = w * power_word(dict(zip(basis, alphas)), w.rank)
        branch = "p2"
    if with_branch:
        return u, tuple(alphas), branch
    return u


@lru_cache(maxsize=None)
def frattini_system(p, rank, pres=None):
    """
    Schreier system of the Frattini preimage: the kernel of the mod-p exponent map.

    Its index is p to the number of functionals. Surface relators are lifted and
    eliminated so the functionals are well defined on the surface subgroup.
    """

    check_run_limits(cosets=p ** functional_count(rank, p, pres))
    start, act = frattini_action(rank, p, pres)
    graph = action_graph(rank, start, act, limit=MAX_COSETS)
    transversal = schreier_transversal(graph)
    relators = (pres.relator,) if pres is not None else ()
    system = schreier_system(graph, transversal, relators)
    logger.info(
        "Frattini preimage at p=%d: %d cosets, %d Schreier generators (max length %d)",
        p, graph.num_vertices, len(system.kept), max(len(y) for y in system.generators()),
    )
    return system


def in_frattini2(w, p, pres=None):
    """
    Whether ``w`` passes the second Frattini layer test at ``p``.

    Raises:
        ValueError: If ``w`` is not in the first Frattini layer.
    """

    if not in_frattini(w, p, pres):
        raise ValueError(f"Word {w} is not in the mod-{p} Frattini subgroup.")
    system = frattini_system(p, w.rank, pres)
    return not (system.functionals(w) % p).any()


# --- Positive certificates ---

def canonical_test_word(n, p):
    if n < 2:
        raise ValueError(f"Invalid rank: {n}. Must be at least 2.")
    return power_word([p] * n, n)


def turner_power_criterion(exponents):
    exponents = [int(k) for k in exponents]
    return bool(exponents) and all(exponents) and math.gcd(*exponents) != 1


def power_exponents(w):
    """(k_1, ..., k_n) if ``w`` is literally x_1^{k_1} ... x_n^{k_n}, else None."""
    if w.is_identity:
        return None
    runs = [(abs(a), sum(1 if x > 0 else -1 for x in run)) for a, run in itertools.groupby(w.letters, key=abs)]
    if [index for index, _ in runs] != list(range(1, w.rank + 1)):
        return None
    return tuple(k for _, k in runs)


def commutator_product(rank):
    """[x1,x2][x3,x4]...[x_{rank-1},x_rank] for even rank."""
    if rank < 2 or rank % 2:
        raise ValueError(f"Commutator product needs an even rank, got {rank}.")
    letters = []
    for i in range(1, rank, 2):
        letters.extend((i, i + 1, -i, -(i + 1)))
    return Word(tuple(letters), rank)


def _cyclic_core(w):
    letters = w.letters
    start, end = 0, len(letters)
    while end - start > 1 and letters[start] == -letters[end - 1]:
        start += 1
        end -= 1
    return letters[start:end]


def is_conjugate_of_commutator_product(w):
    if w.rank % 2 or w.is_identity:
        return False
    core = _cyclic_core(w)
    target = commutator_product(w.rank)
    for base in (target.letters, invert(target).letters):
        if len(base) != len(core):
            continue
        if any(core == base[i:] + base[:i] for i in range(len(base))):
            return True
    return False


def power_substitution(u, exponents):
    """u(x_1^{a_1}, ..., x_n^{a_n}); test elements stay test elements for nonzero a_i."""
    if len(exponents) != u.rank or not all(exponents):
        raise ValueError("Power substitution needs one nonzero exponent per generator.")
    images = tuple(Word.generator(i, u.rank, a) for i, a in enumerate(exponents, start=1))
    return apply(Endomorphism(images), u)


def positive_certificate(w):
    """Certificate by construction, or None."""
    exponents = power_exponents(w)
    if exponents is not None and turner_power_criterion(exponents):
        return Certificate(Status.POSITIVE, "turner-power", 0)
    if is_conjugate_of_commutator_product(w):
        return Certificate(Status.POSITIVE, "commutator-product", 0)
    return None


# --- Endomorphism search ---

def _non_automorphism_reason(e, pres):
    """Reason ``e`` is provably not an automorphism, or None."""
    if pres is None:
        return None if is_surjective(e) else "not-surjective"

    if pres.orientable:
        det = Matrix([list(exponent_vector(image)) for image in e.images]).det()
        if det not in (1, -1):
            return f"abelianization-det={det}"
    else:
        for p in (2, NET_PRIME_NONORIENTABLE):
            rows = [list(exponent_sums(e.images[i - 1], pres, p).entries) for i in working_basis(e.rank, p, pres)]
            if Matrix(rows).det() % p == 0:
                return f"frattini-rank-mod-{p}"

    for quotient in surjections(pres):
        images = [evaluate_word(quotient.images, image, quotient.degree) for image in e.images]
        if PermutationGroup(images).order() < quotient.image_order():
            return f"quotient-S{quotient.degree}"
    return None


@lru_cache(maxsize=None)
def _surface_endomorphisms(pres, L):
    ball = tuple(enumerate_ball(pres.rank, L))
    admissible = []
    for combo in itertools.product(ball, repeat=pres.rank):
        e = Endomorphism(combo[::-1])
        if _provably_trivial(apply(e, pres.relator), pres):
            admissible.append(e)
    logger.debug("%d of %d maps at L=%d respect the relator of %s", len(admissible), len(ball) ** pres.rank, L, pres)
    return tuple(admissible)


def _candidates(rank, L, pres, outer):
    if pres is not None:
        for e in _surface_endomorphisms(pres, L):
            if outer is None or e.images[-1] in outer:
                yield e
        return
    ball = tuple(enumerate_ball(rank, L))
    heads = ball if outer is None else tuple(b for b in ball if b in outer)
    for head in heads:
        for combo in itertools.product(ball, repeat=rank - 1):
            yield Endomorphism(combo[::-1] + (head,))


def _first_fixer(w, L, pres, outer=None):
    target = exponent_vector(w)
    ev_cache = {}
    fixed_word = w if pres is None else None
    for e in _candidates(w.rank, L, pres, outer):
        if pres is None or pres.orientable:
            vectors = [ev_cache.setdefault(img, exponent_vector(img)) for img in e.images]
            image_vector = tuple(
                sum(target[i] * vectors[i][j] for i in range(w.rank)) for j in range(w.rank)
            )
            if image_vector != target:
                continue
        image = apply(e, w)
        if fixed_word is not None:
            if image != fixed_word:
                continue
        elif not _provably_trivial(image * invert(w), pres):
            continue
        reason = _non_automorphism_reason(e, pres)
        if reason is not None:
            return e, reason
    return None


def _search_shard(args):
    w, L, pres, outer = args
    return _first_fixer(w, L, pres, frozenset(outer))


def endo_fixer_search(w, L, pres=None, workers=1):
    """
    Looks for an endomorphism with images of length at most ``L`` that fixes ``w``
    and is provably not an automorphism.

    Images run over the ball in shortlex order with the image of x_1 varying fastest.
    For surface groups only maps sending the relator to a provably trivial word are
    tried, and a witness must fix ``w`` provably. With several workers the image of
    the last generator is split into shards and the earliest shard's witness wins.

    Returns:
        Certificate: negative with the first witness, else unknown at bound ``L``.
    """

    if L < 0:
        raise ValueError(f"Invalid search bound: {L}. Must be non-negative.")
    check_run_limits(endo_bound=L, workers=workers)
    if pres is not None and w.rank != pres.rank:
        raise ValueError(f"Word rank {w.rank} does not match presentation rank {pres.rank}.")

    if workers > 1:
        heads = tuple(enumerate_ball(w.rank, L))
        shards = [heads[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            found = [hit for hit in pool.map(_search_shard, [(w, L, pres, s) for s in shards]) if hit]
        order = {head: i for i, head in enumerate(heads)}
        found.sort(key=lambda hit: order[hit[0].images[-1]])
        hit = found[0] if found else None
    else:
        hit = _first_fixer(w, L, pres)

    if hit is None:
        return Certificate(Status.UNKNOWN, "no fixer within bound", L)
    witness, reason = hit
    logger.debug("Fixer of %s: %s (%s)", w, witness, reason)
    return Certificate(Status.NEGATIVE, reason, L, witness)


def verify_witness(certificate, w, pres=None):
    """Independent re-check of a negative certificate."""
    e = certificate.witness
    if e is None:
        return False
    if pres is None:
        return apply(e, w) == w and not is_surjective(e)
    return _provably_trivial(apply(e, w) * invert(w), pres) and _non_automorphism_reason(e, pres) is not None


# --- Net projections ---

def _proper_subsets(indices, include_full=False):
    top = len(indices) + 1 if include_full else len(indices)
    for size in range(top):
        yield from itertools.combinations(indices, size)


def _vet_subsets(u, indices, exponent, L0, pres, include_full=False):
    """
    Appends x_i^exponent over subsets of ``indices`` in increasing size and returns
    the first candidate that is not provably trivial and has no fixer within ``L0``.
    At ``L0 = 0`` only the trivial map is tried, so the candidate stays unknown.
    """

    first = None
    for subset in _proper_subsets(indices, include_full):
        t = u * power_word({i: exponent for i in subset}, u.rank)
        if _provably_trivial(t, pres):
            continue
        if first is None:
            first = (t, subset)
        if L0 == 0:
            return t, subset, Certificate(Status.UNKNOWN, "net candidate not vetted (L=0)", 0)
        certificate = endo_fixer_search(t, L0, pres)
        if certificate.status is not Status.NEGATIVE:
            return t, subset, Certificate(Status.POSITIVE, f"net candidate vetted to L={L0}", L0)
    if first is None:
        raise InvariantViolation(f"Every subset candidate for {u} is trivial.")
    logger.warning("No subset candidate for %s survived vetting at L=%d.", u, L0)
    t, subset = first
    return t, subset, Certificate(Status.UNKNOWN, f"net candidate rejected at L={L0}", L0)


def _check_net(result, p, pres):
    if result.distance > result.bound:
        raise InvariantViolation(f"Net output for {result.input} at distance {result.distance} > {result.bound}.")
    if result.output.is_identity or not in_frattini(result.output, p, pres):
        raise InvariantViolation(f"Net output {result.output} is trivial or outside the Frattini subgroup.")
    return result


def free_net_bound(n):
    return 3 * n - 2


def net_project_free(w, n=None, L0=VETTING_BOUND_FREE):
    """
    Nearby test-element candidate in the free group of rank n, within 3n - 2.

    The word is moved into the mod-2 Frattini subgroup with exponents in {0, 1}
    (flipping one sign if the product collapses to the identity); then squares of a
    proper subset of the basis are appended, trying subsets in increasing size and
    keeping the first candidate with no fixing non-automorphism within ``L0``.
    """

    n = w.rank if n is None else n
    if n != w.rank:
        raise ValueError(f"Word rank {w.rank} does not match requested rank {n}.")
    if n < 2:
        raise ValueError(f"Invalid rank: {n}. Must be at least 2.")
    p = NET_PRIME_FREE
    bound = free_net_bound(n)

    if w.is_identity:
        t = canonical_test_word(n, p)
        trace = (TraceStep("canonical", (p,) * n, tuple(range(1, n + 1)), word_length(t)),)
        result = NetResult(w, t, word_length(t), bound, trace, Certificate(Status.POSITIVE, "turner-power", 0), prime=p)
        return _check_net(result, p, None)

    u, alphas, branch = frattini_adjust(w, p, with_branch=True)
    t, subset, certificate = _vet_subsets(u, tuple(range(1, n + 1)), p, L0, None)
    trace = (
        TraceStep("frattini_adjust", alphas, (), sum(abs(a) for a in alphas), branch),
        TraceStep("append_squares", (), subset, p * len(subset)),
    )
    result = NetResult(w, t, distance(w, t), bound, trace, certificate, prime=p)
    return _check_net(result, p, None)


def orientable_net_bound(n):
    return 161 * n + 8 * 25 ** n * (n - 1) * (16 * n + 1) + 33


def nonorientable_net_bound(n):
    return 5 * n - 5


def net_project_orientable(w, genus, p=NET_PRIME_ORIENTABLE, L0=VETTING_BOUND_ORIENTABLE):
    """
    Net projection in the orientable surface group of the given genus.

    Distance is reported as the trace cost: alpha corrections, beta corrections on
    the Schreier generators of the Frattini preimage, and the appended 25-th powers.
    """

    pres = SurfacePresentation("orientable", genus)
    if w.rank != pres.rank:
        raise ValueError(f"Word rank {w.rank} does not match presentation rank {pres.rank}.")

    u, alphas, branch = frattini_adjust(w, p, pres, with_branch=True)
    system = frattini_system(p, pres.rank, pres)
    kept = system.generators()
    betas = tuple(int(b) for b in (-system.functionals(u)) % p)
    v = concat([u] + [y ** b for y, b in zip(kept, betas) if b], pres.rank)
    beta_cost = sum(b * word_length(y) for y, b in zip(kept, betas))

    subset_pool = tuple(range(1, min(genus + 1, pres.rank) + 1))
    t, subset, certificate = _vet_subsets(v, subset_pool, p * p, L0, pres, include_full=True)
    nonzero = {i: b for i, b in enumerate(betas) if b}
    trace = (
        TraceStep("frattini_adjust", alphas, (), sum(abs(a) for a in alphas), branch),
        TraceStep("schreier_correction", tuple(sorted(nonzero.items())), (), beta_cost, f"{len(kept)} generators"),
        TraceStep("append_powers", (), subset, p * p * len(subset)),
    )
    cost = sum(step.cost for step in trace)
    result = NetResult(w, t, cost, orientable_net_bound(genus), trace, certificate, intermediate=v, prime=p)
    return _check_net(result, p, pres)


def net_project_nonorientable(w, genus, p=NET_PRIME_NONORIENTABLE, L0=VETTING_BOUND_NONORIENTABLE):
    """Free-group recipe over the working basis x_1..x_{n-1} with cubes."""
    pres = SurfacePresentation("nonorientable", genus)
    if w.rank != pres.rank:
        raise ValueError(f"Word rank {w.rank} does not match presentation rank {pres.rank}.")
    basis = working_basis(pres.rank, p, pres)
    bound = nonorientable_net_bound(genus)

    if _provably_trivial(w, pres):
        t = power_word({i: p for i in basis}, pres.rank)
        trace = (TraceStep("canonical", (p,) * len(basis), basis, word_length(t)),)
        result = NetResult(w, t, word_length(t), bound, trace, Certificate(Status.POSITIVE, "canonical cubes", 0), prime=p)
        return _check_net(result, p, pres)

    u, alphas, branch = frattini_adjust(w, p, pres, with_branch=True)
    t, subset, certificate = _vet_subsets(u, basis, p, L0, pres)
    trace = (
        TraceStep("frattini_adjust", alphas, (), sum(abs(a) for a in alphas), branch),
        TraceStep("append_cubes", (), subset, p * len(subset)),
    )
    result = NetResult(w, t, sum(step.cost for step in trace), bound, trace, certificate, prime=p)
    return _check_net(result, p, pres)


# --- Coset construction ---

def admissible_prime(index, pres=None, cap=PRIME_SEARCH_CAP):
    """
    Least prime not dividing the index: p >= 5 for orientable surfaces, odd for
    non-orientable ones, any prime for free groups.

    Raises:
        ValueError: If no such prime exists up to ``cap``.
    """

    floor = 2
    if pres is not None:
        floor = 5 if pres.orientable else 3
    p = floor
    while p <= cap:
        if index % p:
            return p
        p = int(nextprime(p))
    raise ValueError(f"No admissible prime up to {cap} for index {index}.")


def coset_test_element(w, images, pres=None, L0=None):
    """
    Test-element candidate in the coset wN, N the kernel of x_i -> images[i-1].

    With l = |G:N| and an admissible prime p, the functionals are cleared by
    multiples of x_i^l (which lie in N); orientable surfaces then clear the second
    layer with l-th powers of Schreier generators and append (p^2 l)-th powers,
    the others append (p l)-th powers over a proper subset.

    Raises:
        ValueError: If the images do not satisfy the relator or no prime is found.
        InvariantViolation: If the output leaves the coset wN.
    """

    images = validate_quotient(images, pres, w.rank)
    graph = kernel_graph(images, pres, w.rank)
    l = graph.num_vertices
    p = admissible_prime(l, pres)
    inverse = int(mod_inverse(l, p))
    basis = working_basis(w.rank, p, pres)
    if L0 is None:
        L0 = VETTING_BOUND_FREE if pres is None else (
            VETTING_BOUND_ORIENTABLE if pres.orientable else VETTING_BOUND_NONORIENTABLE
        )

    sums = exponent_sums(w, pres, p).entries
    rs = tuple((-s * inverse) % p for s in sums)
    u = w * power_word({i: r * l for i, r in zip(basis, rs)}, w.rank)
    trace = [TraceStep("index_correction", rs, (), l * sum(rs), f"l={l}")]

    orientable = pres is not None and pres.orientable
    if orientable:
        system = frattini_system(p, w.rank, pres)
        kept = system.generators()
        ss = tuple(int((-f * inverse) % p) for f in system.functionals(u))
        u = concat([u] + [y ** (s * l) for y, s in zip(kept, ss) if s], w.rank)
        trace.append(TraceStep(
            "schreier_correction",
            tuple((i, s) for i, s in enumerate(ss) if s),
            (),
            l * sum(s * word_length(y) for y, s in zip(kept, ss)),
        ))

    exponent = p * p * l if orientable else p * l
    if _provably_trivial(u, pres):
        t = power_word({i: exponent for i in basis}, w.rank)
        subset = basis
        certificate = Certificate(Status.POSITIVE, "canonical powers", 0)
    else:
        pool = tuple(range(1, min(pres.genus + 1, w.rank) + 1)) if orientable else basis
        t, subset, certificate = _vet_subsets(u, pool, exponent, L0, pres, include_full=orientable)
    trace.append(TraceStep("append_powers", (exponent,), subset, exponent * len(subset)))

    if not evaluate_word(images, t * invert(w)).is_Identity:
        raise InvariantViolation(f"Coset output for {w} leaves the coset of the kernel.")
    return CosetResult(w, t, p, l, tuple(trace), certificate)
