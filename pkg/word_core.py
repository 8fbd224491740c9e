"""
Free-group word calculus over the standard basis x1, ..., xn.

Letters are stored as signed integers (x3 -> 3, x3^-1 -> -3) packed in a tuple per
word. Every Word is freely reduced; the empty tuple is the identity.

Text format: whitespace-separated tokens ``x<i>`` and ``x<i>^-1``. On input the
token ``x<i>^<k>`` and the identity ``1`` are also accepted.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pyparsing as pp

from experiment_parameters import MAX_WORD_EXPONENT

logger = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    """Raised when a computed object breaks a property it is guaranteed to have."""


@dataclass(frozen=True)
class Letter:
    index: int
    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"Invalid letter sign: {self.sign}. Must be +1 or -1.")
        if self.index < 1:
            raise ValueError(f"Invalid letter index: {self.index}. Must be at least 1.")

    def to_int(self):
        return self.sign * self.index

    @classmethod
    def from_int(cls, value):
        if value == 0:
            raise ValueError("0 is not a letter")
        return cls(abs(value), 1 if value > 0 else -1)


def letter_key(letter):
    """Sort key putting x1 < x1^-1 < x2 < x2^-1 < ..."""
    return (abs(letter), letter < 0)


def alphabet(rank):
    """Signed letters of the given rank in lexicographic order."""
    letters = []
    for i in range(1, rank + 1):
        letters.extend((i, -i))
    return tuple(letters)


@dataclass(frozen=True)
class Word:
    letters: tuple
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"Invalid rank: {self.rank}. Must be at least 1.")
        previous = 0
        for letter in self.letters:
            if letter == 0 or abs(letter) > self.rank:
                raise ValueError(f"Letter index out of range: {letter} for rank {self.rank}.")
            if letter == -previous:
                raise ValueError("Word is not freely reduced; build it with reduce().")
            previous = letter

    @classmethod
    def identity(cls, rank):
        return cls((), rank)

    @classmethod
    def generator(cls, index, rank, exponent=1):
        letter = index if exponent > 0 else -index
        return cls((letter,) * abs(exponent), rank)

    @classmethod
    def parse(cls, text, rank):
        return parse_word(text, rank)

    @property
    def is_identity(self):
        return not self.letters

    def key(self):
        """Shortlex key: length first, then letter order."""
        return (len(self.letters), tuple(letter_key(a) for a in self.letters))

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __mul__(self, other):
        return multiply(self, other)

    def __invert__(self):
        return invert(self)

    def __pow__(self, exponent):
        base = self if exponent >= 0 else invert(self)
        result = Word.identity(self.rank)
        for _ in range(abs(exponent)):
            result = multiply(result, base)
        return result

    def __str__(self):
        if not self.letters:
            return "1"
        return " ".join(f"x{a}" if a > 0 else f"x{-a}^-1" for a in self.letters)


@dataclass(frozen=True)
class BallSpec:
    rank: int
    radius: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"Invalid rank: {self.rank}. Must be at least 1.")
        if self.radius < 0:
            raise ValueError(f"Invalid radius: {self.radius}. Must be non-negative.")


def _as_int(letter):
    return letter.to_int() if isinstance(letter, Letter) else int(letter)


def reduce(raw, rank):
    """
    Freely reduces a sequence of letters.

    Args:
        raw (iterable): Letters as ``Letter`` objects or signed integers.
        rank (int): Alphabet rank shared by all letters.

    Returns:
        Word: The freely reduced word representing the same element.

    Raises:
        ValueError: If a letter index lies outside ``1..rank``.
    """

    stack = []
    for item in raw:
        letter = _as_int(item)
        if letter == 0 or abs(letter) > rank:
            raise ValueError(f"Letter index out of range: {letter} for rank {rank}.")
        if stack and stack[-1] == -letter:
            stack.pop()
        else:
            stack.append(letter)
    return Word(tuple(stack), rank)


def _check_rank(u, v):
    if u.rank != v.rank:
        raise ValueError(f"Rank mismatch: {u.rank} vs {v.rank}.")


def multiply(u, v):
    _check_rank(u, v)
    a, b = u.letters, v.letters
    k = 0
    limit = min(len(a), len(b))
    while k < limit and a[len(a) - 1 - k] == -b[k]:
        k += 1
    return Word(a[:len(a) - k] + b[k:], u.rank)


def invert(u):
    return Word(tuple(-a for a in reversed(u.letters)), u.rank)


def word_length(u):
    return len(u.letters)


def distance(u, v):
    """Word metric d(u, v) = |u^-1 v|."""
    return word_length(multiply(invert(u), v))


def concat(words, rank):
    """Product of many words, reduced once at the end."""
    letters = []
    for word in words:
        if word.rank != rank:
            raise ValueError(f"Rank mismatch: {word.rank} vs {rank}.")
        letters.extend(word.letters)
    return reduce(letters, rank)


def exponent_vector(u):
    """Signed letter counts, one entry per basis letter."""
    counts = [0] * u.rank
    for a in u.letters:
        counts[abs(a) - 1] += 1 if a > 0 else -1
    return tuple(counts)


def sphere_size(rank, k):
    if k == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (k - 1)


def ball_size(spec):
    """
    Exact cardinality of the ball of radius ``spec.radius`` in the free group.

    Uses 1 + 2n((2n-1)^k - 1)/(2n-2) for rank n >= 2 and 2k + 1 for rank 1, in
    arbitrary-precision integers.
    """

    n, k = spec.rank, spec.radius
    if n == 1:
        return 2 * k + 1
    return 1 + 2 * n * ((2 * n - 1) ** k - 1) // (2 * n - 2)


def enumerate_sphere(rank, k, prefix=()):
    """
    Yields every reduced word of length exactly ``k`` once, in lexicographic order.

    ``prefix`` restricts the stream to words starting with that reduced word, which
    is how enumeration is partitioned across workers.
    """

    start = list(reduce(prefix, rank).letters)
    if len(start) != len(tuple(prefix)):
        raise ValueError("Sphere prefix must be freely reduced.")
    if len(start) > k:
        return
    letters = alphabet(rank)

    def extend(word, remaining):
        if remaining == 0:
            yield Word(tuple(word), rank)
            return
        for a in letters:
            if word and a == -word[-1]:
                continue
            word.append(a)
            yield from extend(word, remaining - 1)
            word.pop()

    yield from extend(start, k - len(start))


def enumerate_ball(rank, radius):
    """Ball elements in shortlex order."""
    for k in range(radius + 1):
        yield from enumerate_sphere(rank, k)


def write_sphere(rank, k, stream):
    """Streams a sphere to line-delimited text; returns the number of lines."""
    count = 0
    for word in enumerate_sphere(rank, k):
        stream.write(f"{word}\n")
        count += 1
    return count


def _code_to_letter(code):
    # codes 0, 1, 2, 3, ... are x1, x1^-1, x2, x2^-1, ...
    index = code // 2 + 1
    return index if code % 2 == 0 else -index


def sample_sphere_batch(rank, k, count, seed):
    """
    Draws ``count`` words uniformly from the sphere of radius ``k``.

    The first letter is uniform over the 2n letters, every later letter uniform over
    the 2n - 1 letters that do not cancel its predecessor.
    """

    rng = np.random.default_rng(seed)
    if k == 0:
        return [Word.identity(rank) for _ in range(count)]
    codes = np.empty((count, k), dtype=np.int64)
    codes[:, 0] = rng.integers(0, 2 * rank, size=count)
    for j in range(1, k):
        draw = rng.integers(0, 2 * rank - 1, size=count)
        forbidden = codes[:, j - 1] ^ 1
        codes[:, j] = draw + (draw >= forbidden)
    return [Word(tuple(_code_to_letter(int(c)) for c in row), rank) for row in codes]


def sample_sphere(rank, k, seed):
    return sample_sphere_batch(rank, k, 1, seed)[0]


# --- Text grammar ---

_INDEX = pp.Word(pp.nums).set_parse_action(lambda t: int(t[0]))
_EXPONENT = pp.Suppress("^") + pp.Combine(pp.Optional("-") + pp.Word(pp.nums)).set_parse_action(
    lambda t: int(t[0])
)
_TOKEN = pp.Group(pp.Suppress("x") + _INDEX + pp.Optional(_EXPONENT, default=1))
_WORD = (pp.Suppress(pp.Literal("1")) | pp.ZeroOrMore(_TOKEN)) + pp.StringEnd()


def parse_word(text, rank, max_exponent=MAX_WORD_EXPONENT):
    """
    Parses the word text format.

    Raises:
        ValueError: If the text is malformed, an index exceeds the rank or an
            exponent exceeds ``max_exponent`` in absolute value.
    """

    try:
        tokens = _WORD.parse_string(text.strip(), parse_all=True)
    except pp.ParseException as e:
        raise ValueError(f"Malformed word {text!r}: {e}") from e

    raw = []
    for index, exponent in tokens:
        if abs(exponent) > max_exponent:
            raise ValueError(f"Exponent {exponent} on x{index} exceeds the cap ({max_exponent}).")
        letter = index if exponent > 0 else -index
        raw.extend([letter] * abs(exponent))
    return reduce(raw, rank)
