"""
Density bounds, the covering-chain inequality check, ball census and net
coverage audits for free groups.
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

import pandas as pd
from sympy import Integer, Rational, zeta

from experiment_parameters import (
    CENSUS_FILE_NAME,
    DATA_FOLDER_NAME,
    DECIMAL_DIGITS,
    DEFAULT_SEED,
    MAX_CENSUS_ELEMENTS,
    VETTING_BOUND_FREE,
    ZETA_DIGITS,
    check_run_limits,
    normalize_strings,
)
from testel import (
    Status,
    endo_fixer_search,
    free_net_bound,
    net_project_free,
    nonorientable_net_bound,
    orientable_net_bound,
    positive_certificate,
    verify_witness,
)
from word_core import (
    BallSpec,
    InvariantViolation,
    Word,
    alphabet,
    ball_size,
    enumerate_ball,
    enumerate_sphere,
    exponent_vector,
    invert,
    sample_sphere_batch,
    word_length,
)

logger = logging.getLogger(__name__)

BOUND_NAMES = (
    "freeC", "nonorC", "orC", "freeD", "nonorD", "orD",
    "freeNet", "orNet", "nonorNet", "krss", "krssRetract",
)

# larger denominators are reported by digit count only
_EXACT_DIGITS_SHOWN = 200


# --- Bound calculator ---

@dataclass(frozen=True)
class BoundReport:
    name: str
    parameters: dict
    exact: object
    decimal: str

    def denominator_digits(self):
        if not isinstance(self.exact, Rational):
            return 0
        return int(math.log10(int(self.exact.q))) + 1

    def to_record(self):
        record = {"name": self.name, "parameters": dict(self.parameters), "decimal": self.decimal}
        digits = self.denominator_digits()
        if digits <= _EXACT_DIGITS_SHOWN:
            record["exact"] = str(self.exact)
        else:
            record["denominator_digits"] = digits
        return record


def _lookup_bound(name):
    for candidate in BOUND_NAMES:
        if normalize_strings(candidate) == normalize_strings(name):
            return candidate
    raise ValueError(f"Unknown bound: {name}. Must be one of: {', '.join(BOUND_NAMES)}.")


def _require(n, least, what):
    if n is None or int(n) < least:
        raise ValueError(f"Invalid {what}: {n}. Must be at least {least}.")
    return int(n)


def _ball(rank, radius):
    return Integer(ball_size(BallSpec(rank, radius)))


def bound_calculator(name, params):
    """
    Evaluates a named bound exactly.

    ``params`` carries ``n``: the free rank for free-group bounds, the genus for
    surface bounds. Surface balls are bounded by the free ball of the same rank,
    which keeps every density bound valid for the standard basis.

    Raises:
        ValueError: If the name is unknown or ``n`` is out of range.
    """

    name = _lookup_bound(name)
    n = params.get("n", params.get("genus"))
    digits = DECIMAL_DIGITS

    if name in ("freeC", "freeD", "freeNet", "krss", "krssRetract"):
        n = _require(n, 2, "rank")
    elif name in ("nonorC", "nonorD", "nonorNet"):
        n = _require(n, 3, "genus")
    else:
        n = _require(n, 2, "genus")

    if name == "freeNet":
        exact = Integer(free_net_bound(n))
    elif name == "orNet":
        exact = Integer(orientable_net_bound(n))
    elif name == "nonorNet":
        exact = Integer(nonorientable_net_bound(n))
    elif name in ("freeC", "freeD"):
        exact = Rational(1, (2 ** (n + 1) * (2 ** n - 1) + 1) * _ball(n, free_net_bound(n)))
    elif name in ("nonorC", "nonorD"):
        exact = Rational(1, 6 ** (n - 1) * _ball(n, nonorientable_net_bound(n)))
    elif name in ("orC", "orD"):
        exact = Rational(1, _ball(2 * n, orientable_net_bound(n)) ** 2)
    else:
        retract_share = Rational(4 * n - 4, (2 * n - 1) ** 2) / zeta(n)
        exact = retract_share if name == "krssRetract" else 1 - retract_share
        digits = ZETA_DIGITS

    if name.endswith("D"):
        exact = 1 - exact
    decimal = str(exact.evalf(digits))
    return BoundReport(name, {"n": n}, exact, decimal)


# --- Covering chain ---

@dataclass(frozen=True)
class CoveringReport:
    rank: int
    radius: int
    margin: int
    covering: bool
    injection: bool
    chain: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.covering and self.injection and self.chain

    def to_record(self):
        return {
            "rank": self.rank,
            "k": self.radius,
            "C": self.margin,
            "covering": self.covering,
            "injection": self.injection,
            "chain": self.chain,
            "passed": self.passed,
            **self.details,
        }


def verify_covering_chain(S, translates, rank, k):
    """
    Checks the counting chain behind the net-to-density argument by enumeration.

    With C the longest translate: (a) every element of B(k) lies in some S g_i;
    (b) |S g_i ∩ B(k-C)| <= |S ∩ B(k)| for every i; (c) 1 <= m |B(C)| |S ∩ B(k)| / |B(k)|.
    Failures are reported, not raised.
    """

    if not translates:
        raise ValueError("At least one translate is required.")
    margin = max(word_length(g) for g in translates)
    if k < margin:
        raise ValueError(f"Radius {k} is smaller than the longest translate ({margin}).")
    check_run_limits(radius=k)

    inverses = [invert(g) for g in translates]
    members = {}
    uncovered = None
    for w in enumerate_ball(rank, k):
        members[w] = bool(S(w))
    for w in members:
        if not any(members.get(w * h, False) or S(w * h) for h in inverses):
            uncovered = w
            break

    in_S = sum(members.values())
    inner = [w for w in members if word_length(w) <= k - margin]
    translate_counts = []
    for h in inverses:
        translate_counts.append(sum(1 for w in inner if members.get(w * h, False)))
    injection = all(count <= in_S for count in translate_counts)

    total = ball_size(BallSpec(rank, k))
    ratio = Rational(len(translates) * ball_size(BallSpec(rank, margin)) * in_S, total)
    details = {
        "ball_size": total,
        "in_S": in_S,
        "translate_counts": translate_counts,
        "chain_value": str(ratio),
    }
    if uncovered is not None:
        details["uncovered"] = str(uncovered)
    return CoveringReport(rank, k, margin, uncovered is None, injection, bool(ratio >= 1), details)


def even_exponent_words(w):
    return all(c % 2 == 0 for c in exponent_vector(w))


# --- Census ---

@dataclass(frozen=True)
class CensusRecord:
    rank: int
    radius: int
    L: int
    positive: int
    negative: int
    unknown: int
    ball_size: int
    seed: int
    vetting_bound: int
    partial: bool = False
    growth: dict = field(default_factory=dict)
    timestamp: str = ""

    def body(self):
        return {
            "rank": self.rank,
            "k": self.radius,
            "L": self.L,
            "positive": self.positive,
            "negative": self.negative,
            "unknown": self.unknown,
            "ball_size": self.ball_size,
            "seed": self.seed,
            "vetting_bound": self.vetting_bound,
            "partial": self.partial,
            "growth": dict(self.growth),
        }

    def checksum(self):
        payload = json.dumps(self.body(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def to_record(self, include_timestamp=True):
        record = self.body()
        record["checksum"] = self.checksum()
        if include_timestamp:
            record["timestamp"] = self.timestamp
        return record

    @classmethod
    def from_record(cls, record):
        created = cls(
            record["rank"], record["k"], record["L"],
            record["positive"], record["negative"], record["unknown"],
            record["ball_size"], record["seed"], record["vetting_bound"],
            record.get("partial", False), record.get("growth", {}), record.get("timestamp", ""),
        )
        if record.get("checksum") != created.checksum():
            raise InvariantViolation(f"Census record checksum mismatch for rank {created.rank}, k={created.radius}.")
        return created


def classify(w, L, net_outputs=frozenset()):
    """
    Certificate bucket of ``w``: a positive construction first, then a fixer witness
    at bound ``L``, then membership among vetted net outputs, else unknown.
    """

    if positive_certificate(w) is not None:
        return Status.POSITIVE
    certificate = endo_fixer_search(w, L)
    if certificate.status is Status.NEGATIVE:
        if not verify_witness(certificate, w):
            raise InvariantViolation(f"Fixer witness for {w} does not re-verify.")
        return Status.NEGATIVE
    if w in net_outputs:
        return Status.POSITIVE
    return Status.UNKNOWN


def _classify_words(words, L, net_outputs, budget):
    counts = {status: 0 for status in Status}
    per_length = {}
    seen = 0
    for w in words:
        if seen >= budget:
            return counts, per_length, seen, True
        status = classify(w, L, net_outputs)
        counts[status] += 1
        per_length.setdefault(word_length(w), {s: 0 for s in Status})[status] += 1
        seen += 1
    return counts, per_length, seen, False


def _shard_words(rank, k, prefix):
    if not prefix:
        yield Word.identity(rank)
        return
    for length in range(1, k + 1):
        yield from enumerate_sphere(rank, length, prefix)


def _classify_shard(args):
    rank, k, L, prefix, net_outputs, budget = args
    return _classify_words(_shard_words(rank, k, prefix), L, net_outputs, budget)


def vetted_net_outputs(rank, k, L0=VETTING_BOUND_FREE):
    """Outputs of the free net projection over B(k) whose vetting succeeded."""
    outputs = set()
    for w in enumerate_ball(rank, k):
        result = net_project_free(w, rank, L0)
        if result.certificate.status is Status.POSITIVE:
            outputs.add(result.output)
    return frozenset(outputs)


def _growth(per_length, rank, k):
    if k == 0:
        return {}
    growth = {"ball": round(ball_size(BallSpec(rank, k)) ** (1 / k), 6), "limit": 2 * rank - 1}
    for status in Status:
        cumulative = sum(bucket[status] for bucket in per_length.values())
        growth[status.value] = round(cumulative ** (1 / k), 6) if cumulative else 0.0
    return growth


def census_path(folder=None):
    folder = folder or os.path.join(os.getcwd(), DATA_FOLDER_NAME)
    return os.path.join(folder, CENSUS_FILE_NAME)


def load_census_records(path):
    """Reads the census log; records with a bad checksum are logged and skipped."""
    if not os.path.exists(path):
        return []
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(CensusRecord.from_record(json.loads(line)))
            except (InvariantViolation, KeyError, json.JSONDecodeError) as e:
                logger.error("Skipping census line %d in %s: %s", number, path, e)
    return records


def append_census_record(record, path):
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record.to_record(), sort_keys=True) + "\n")
    except OSError as e:
        logger.error("Could not write census record to %s: %s", path, e)
        raise
    logger.info("Saved census record: %s", path)


def census(rank, k, L, pres=None, seed=DEFAULT_SEED, workers=1, path=None, L0=VETTING_BOUND_FREE,
           budget=MAX_CENSUS_ELEMENTS):
    """
    Classifies every element of the ball B(k) into positive, negative and unknown.

    Elements are sharded by first letter when ``workers`` > 1 and merged by bucket
    addition. With ``path`` the record is appended to a JSONL log, and a matching
    complete record already in the log is returned instead of recomputing.

    Raises:
        ValueError: For surface presentations or requests beyond the resource caps.
        InvariantViolation: If the buckets of a complete census miss the ball size.
    """

    if pres is not None:
        raise ValueError("Census enumerates free-group balls only.")
    check_run_limits(radius=k, endo_bound=L, workers=workers)

    if path is not None:
        for existing in load_census_records(path):
            if (existing.rank, existing.radius, existing.L, existing.seed, existing.vetting_bound) == (
                rank, k, L, seed, L0
            ) and not existing.partial:
                logger.info("Resuming census rank %d, k=%d, L=%d from %s", rank, k, L, path)
                return existing

    total = ball_size(BallSpec(rank, k))
    net_outputs = vetted_net_outputs(rank, k, L0) if total <= budget else frozenset()

    if workers > 1:
        prefixes = [()] + [(a,) for a in alphabet(rank)]
        jobs = [(rank, k, L, prefix, net_outputs, budget) for prefix in prefixes]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(_classify_shard, jobs))
    else:
        shards = [_classify_words(enumerate_ball(rank, k), L, net_outputs, budget)]

    counts = {status: 0 for status in Status}
    per_length = {}
    seen = 0
    partial = False
    for shard_counts, shard_lengths, shard_seen, shard_partial in shards:
        for status in Status:
            counts[status] += shard_counts[status]
        for length, bucket in shard_lengths.items():
            merged = per_length.setdefault(length, {s: 0 for s in Status})
            for status in Status:
                merged[status] += bucket[status]
        seen += shard_seen
        partial = partial or shard_partial
    partial = partial or seen > budget

    if not partial and sum(counts.values()) != total:
        raise InvariantViolation(f"Census buckets sum to {sum(counts.values())}, expected {total}.")
    if partial:
        logger.warning("Census stopped at the element cap (%d); record flagged partial.", budget)

    record = CensusRecord(
        rank, k, L,
        counts[Status.POSITIVE], counts[Status.NEGATIVE], counts[Status.UNKNOWN],
        total, seed, L0, partial, _growth(per_length, rank, k),
        datetime.now().isoformat(timespec="seconds"),
    )
    logger.info(
        "Census rank %d, k=%d, L=%d: %d positive, %d negative, %d unknown of %d",
        rank, k, L, record.positive, record.negative, record.unknown, total,
    )
    if path is not None:
        append_census_record(record, path)
    return record


# --- Audits and estimates ---

def net_coverage_audit(rank, k, L0=VETTING_BOUND_FREE):
    """
    Runs the free net projection on every element of B(k).

    Raises:
        InvariantViolation: On the first element whose output is farther than 3n - 2.
    """

    check_run_limits(radius=k)
    bound = free_net_bound(rank)
    rows = []
    for w in enumerate_ball(rank, k):
        result = net_project_free(w, rank, L0)
        if result.distance > bound:
            raise InvariantViolation(f"Net output for {w} at distance {result.distance} > {bound}.")
        rows.append({
            "length": word_length(w),
            "distance": result.distance,
            "vetted": result.certificate.status is Status.POSITIVE,
        })

    df = pd.DataFrame(rows)
    histogram = df["distance"].value_counts().sort_index()
    return {
        "rank": rank,
        "k": k,
        "bound": bound,
        "elements": len(df),
        "max_distance": int(df["distance"].max()),
        "histogram": {int(d): int(c) for d, c in histogram.items()},
        "vetted": int(df["vetted"].sum()),
    }


def estimate_sphere_density(rank, k, samples, L, seed=DEFAULT_SEED):
    """Bucket shares over uniform samples from the sphere of radius ``k``."""
    check_run_limits(endo_bound=L)
    words = sample_sphere_batch(rank, k, samples, seed)
    statuses = pd.Series([classify(w, L).value for w in words])
    shares = statuses.value_counts(normalize=True)
    return {
        "rank": rank,
        "k": k,
        "samples": samples,
        "L": L,
        "seed": seed,
        "shares": {status.value: float(shares.get(status.value, 0.0)) for status in Status},
    }

