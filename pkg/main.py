import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass

from data_analysis import summarize_census
from density import (
    census,
    census_path,
    bound_calculator,
    estimate_sphere_density,
    even_exponent_words,
    net_coverage_audit,
    verify_covering_chain,
)
from experiment_parameters import (
    DATA_FOLDER_NAME,
    DEFAULT_SEED,
    DEFAULT_WORKERS,
    MAX_COSETS,
    MAX_ENDO_BOUND,
    MAX_RADIUS,
    NET_PRIME_FREE,
    NET_PRIME_NONORIENTABLE,
    NET_PRIME_ORIENTABLE,
    VETTING_BOUND_FREE,
    check_run_limits,
)
from surface_core import SurfacePresentation, dehn_reduce, functional_count, is_trivial, parse_images
from testel import (
    coset_test_element,
    endo_fixer_search,
    frattini_system,
    net_project_free,
    net_project_nonorientable,
    net_project_orientable,
)
from word_core import BallSpec, InvariantViolation, ball_size, enumerate_ball, parse_word, sphere_size

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INVARIANT = 3


@dataclass(frozen=True)
class RunConfig:
    """
    Validated flags of one invocation; everything except the worker count is
    echoed in the output header.
    """

    subcommand: str
    rank: int = None
    surface: str = None
    word: str = None
    radius: int = None
    prime: int = None
    bound: int = None
    seed: int = DEFAULT_SEED
    output: str = None
    workers: int = DEFAULT_WORKERS
    name: str = None
    images: str = None
    translates: str = None
    set: str = None
    samples: int = None
    max_radius: int = MAX_RADIUS
    max_bound: int = MAX_ENDO_BOUND
    max_cosets: int = MAX_COSETS

    @classmethod
    def from_args(cls, args):
        fields = {key: getattr(args, key, None) for key in cls.__dataclass_fields__}
        fields["subcommand"] = args.command
        if getattr(args, "free", None) is not None:
            fields["rank"] = args.free
        if fields["seed"] is None:
            fields["seed"] = DEFAULT_SEED
        if fields["workers"] is None:
            fields["workers"] = DEFAULT_WORKERS
        return cls(**fields)

    def validate(self):
        check_run_limits(radius=self.radius, endo_bound=self.bound, workers=self.workers, **self.caps())
        if self.rank is not None and self.rank < 1:
            raise ValueError(f"Invalid rank: {self.rank}. Must be at least 1.")
        return self

    def caps(self):
        return {"max_radius": self.max_radius, "max_endo_bound": self.max_bound, "max_cosets": self.max_cosets}

    def check_cosets(self, p, rank, pres):
        check_run_limits(cosets=p ** functional_count(rank, p, pres), **self.caps())

    def presentation(self):
        return SurfacePresentation.parse(self.surface) if self.surface else None

    def context(self):
        """(rank, presentation) from either --free/--rank or --surface."""
        pres = self.presentation()
        if pres is not None:
            if self.rank is not None and self.rank != pres.rank:
                raise ValueError(f"Rank {self.rank} conflicts with {pres} (rank {pres.rank}).")
            return pres.rank, pres
        if self.rank is None:
            raise ValueError("Either a free rank or a surface presentation is required.")
        return self.rank, None

    def header(self):
        return {key: value for key, value in sorted(asdict(self).items()) if value is not None and key != "workers"}


# --- Subcommands ---

def cmd_reduce(config):
    rank, pres = config.context()
    w = parse_word(config.word, rank)
    if pres is None:
        return {"word": str(w), "length": len(w)}
    reduced = dehn_reduce(w, pres)
    return {"word": str(reduced), "length": len(reduced), "trivial": is_trivial(w, pres)}


def cmd_ball(config):
    rank = config.rank
    spec = BallSpec(rank, config.radius)
    result = {"ball_size": ball_size(spec), "sphere_size": sphere_size(rank, config.radius)}
    if config.output:
        count = 0
        os.makedirs(os.path.dirname(config.output) or ".", exist_ok=True)
        with open(config.output, "w", encoding="utf-8") as f:
            for w in enumerate_ball(rank, config.radius):
                f.write(f"{w}\n")
                count += 1
        logger.info("Saved ball: %s", config.output)
        result["written"] = count
    return result


def cmd_net(config):
    rank, pres = config.context()
    w = parse_word(config.word, rank)
    if pres is None:
        return net_project_free(w, rank).to_record()
    if pres.orientable:
        config.check_cosets(NET_PRIME_ORIENTABLE, rank, pres)
        return net_project_orientable(w, pres.genus).to_record()
    return net_project_nonorientable(w, pres.genus).to_record()


def cmd_coset(config):
    rank, pres = config.context()
    w = parse_word(config.word, rank)
    images = parse_images(config.images, rank)
    return coset_test_element(w, images, pres).to_record()


def cmd_endo(config):
    rank, pres = config.context()
    w = parse_word(config.word, rank)
    bound = VETTING_BOUND_FREE if config.bound is None else config.bound
    return endo_fixer_search(w, bound, pres, workers=config.workers).to_record()


def cmd_census(config):
    folder = config.output or os.path.join(os.getcwd(), DATA_FOLDER_NAME)
    bound = VETTING_BOUND_FREE if config.bound is None else config.bound
    record = census(config.rank, config.radius, bound, seed=config.seed, workers=config.workers,
                    path=census_path(folder))
    return record.to_record(include_timestamp=False)


def cmd_bounds(config):
    n = config.rank
    return bound_calculator(config.name, {"n": n}).to_record()


_SETS = {
    "even": even_exponent_words,
    "all": lambda w: True,
    "identity": lambda w: w.is_identity,
}


def cmd_verify(config):
    predicate = _SETS[config.set]
    translates = [parse_word(part, config.rank) for part in config.translates.split(";")]
    return verify_covering_chain(predicate, translates, config.rank, config.radius).to_record()


def cmd_audit(config):
    return net_coverage_audit(config.rank, config.radius)


def cmd_schreier(config):
    rank, pres = config.context()
    if config.prime is not None:
        p = config.prime
    elif pres is None:
        p = NET_PRIME_FREE
    else:
        p = NET_PRIME_ORIENTABLE if pres.orientable else NET_PRIME_NONORIENTABLE
    config.check_cosets(p, rank, pres)
    system = frattini_system(p, rank, pres)
    lengths = [len(y) for y in system.generators()]
    return {
        "prime": p,
        "cosets": system.graph.num_vertices,
        "generators": len(lengths),
        "free_generators": len(system.letters),
        "max_generator_length": max(lengths),
        "max_transversal_length": system.transversal.max_length(),
    }


def cmd_density(config):
    bound = VETTING_BOUND_FREE if config.bound is None else config.bound
    return estimate_sphere_density(config.rank, config.radius, config.samples, bound, config.seed)


def cmd_analyze(config):
    folder = config.output or os.path.join(os.getcwd(), DATA_FOLDER_NAME)
    df = summarize_census(census_path(folder), folder)
    return {"records": 0 if df is None else len(df)}


COMMANDS = {
    "reduce": cmd_reduce,
    "ball": cmd_ball,
    "net": cmd_net,
    "coset": cmd_coset,
    "endo": cmd_endo,
    "census": cmd_census,
    "bounds": cmd_bounds,
    "verify": cmd_verify,
    "audit": cmd_audit,
    "schreier": cmd_schreier,
    "density": cmd_density,
    "analyze": cmd_analyze,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="testel", description="Test-element nets in free and surface groups.")
    parser.add_argument("--verbose", action="store_true", help="Log debug messages to standard error.")
    parser.add_argument("--max-radius", type=int, default=MAX_RADIUS, help="Largest ball radius accepted.")
    parser.add_argument("--max-bound", type=int, default=MAX_ENDO_BOUND, help="Largest endomorphism bound accepted.")
    parser.add_argument("--max-cosets", type=int, default=MAX_COSETS, help="Largest Frattini preimage built.")
    sub = parser.add_subparsers(dest="command", required=True)

    def group_flags(p, word=True):
        where = p.add_mutually_exclusive_group(required=True)
        where.add_argument("--free", type=int, help="Rank of the free group.")
        where.add_argument("--surface", help="orientable:<genus> or nonorientable:<genus>.")
        if word:
            p.add_argument("--word", required=True, help='Word such as "x1 x2^-1".')

    p = sub.add_parser("reduce", help="Freely reduce a word (Dehn-reduce with --surface).")
    group_flags(p)

    p = sub.add_parser("ball", help="Size of a ball in the free group.")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--output", help="Stream the ball to this text file.")

    p = sub.add_parser("net", help="Nearby test-element candidate.")
    group_flags(p)

    p = sub.add_parser("coset", help="Test-element candidate in the coset of a finite-quotient kernel.")
    group_flags(p)
    p.add_argument("--images", required=True, help='Generator images, e.g. "(0 1);(0 1);(0 1);(0 1)".')

    p = sub.add_parser("endo", help="Search for a fixing non-automorphism.")
    group_flags(p)
    p.add_argument("--bound", type=int, help="Image length bound L.")
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)

    p = sub.add_parser("census", help="Classify a free-group ball into certificate buckets.")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--bound", type=int, help="Endomorphism search bound L.")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    p.add_argument("--output", help=f"Data folder (default ./{DATA_FOLDER_NAME}).")

    p = sub.add_parser("bounds", help="Evaluate a named bound.")
    p.add_argument("--name", required=True)
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--n", dest="rank", type=int)
    where.add_argument("--genus", dest="rank", type=int)

    p = sub.add_parser("verify", help="Check the covering chain inequalities.")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--set", choices=sorted(_SETS), default="even")
    p.add_argument("--translates", default="1;x1;x2;x1 x2")

    p = sub.add_parser("audit", help="Run the free net projection over a whole ball.")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--radius", type=int, required=True)

    p = sub.add_parser("schreier", help="Schreier system of a Frattini preimage.")
    group_flags(p, word=False)
    p.add_argument("--prime", type=int)

    p = sub.add_parser("density", help="Sampled bucket shares on a sphere.")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--bound", type=int)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("analyze", help="Export and plot the census log.")
    p.add_argument("--output", help=f"Data folder (default ./{DATA_FOLDER_NAME}).")

    return parser


def setup_logging(verbose=False):
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def main(argv=None, stdout=None):
    """
    Main entry point of the program.

    Parses and validates the flags, runs one subcommand and writes a single JSON
    document (config header plus result) to standard output.

    Returns:
        int: 0 on success, 2 on validation errors, 3 on invariant violations.
    """

    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION
    setup_logging(args.verbose)

    try:
        config = RunConfig.from_args(args).validate()
        logger.info("Running %s with %d worker(s)", config.subcommand, config.workers)
        result = COMMANDS[config.subcommand](config)
    except InvariantViolation as e:
        logger.error("Invariant violated: %s", e)
        return EXIT_INVARIANT
    except ValueError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION

    document = {"config": config.header(), "result": result}
    stdout.write(json.dumps(document, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
