import os


def normalize_strings(string):
    """
    Normalizes a given string by stripping whitespace and converting it to lowercase.

    This keeps user-supplied names consistent (e.g., "Orientable", " orientable ",
    "ORIENTABLE" → "orientable").

    Args:
        string (str): Input string to normalize.

    Returns:
        str: The normalized (lowercased, trimmed) string.
    """

    return string.strip().lower()

# --- Net Construction ---
NET_PRIME_FREE = 2                   # Prime of the Frattini layer used by the free-group net
NET_PRIME_ORIENTABLE = 5             # Prime used by the orientable surface net
NET_PRIME_NONORIENTABLE = 3          # Prime used by the non-orientable surface net
VETTING_BOUND_FREE = 2               # Endomorphism image length used to vet subset candidates (free)
VETTING_BOUND_NONORIENTABLE = 1      # Vetting bound for non-orientable candidates
VETTING_BOUND_ORIENTABLE = 1         # Orientable outputs are long; vet against single-letter images only

# --- Finite Quotients ---
QUOTIENT_MAX_DEGREE = 4              # Largest symmetric group searched for separating quotients
QUOTIENT_MAX_CANDIDATES = 500_000    # Generator-image tuples tried before giving up
QUOTIENT_SURJECTION_SAMPLES = 16     # Surjections onto S_3 kept for non-surjectivity checks
PRIME_SEARCH_CAP = 10_000            # Largest prime tried by the coset construction

# --- Resource Caps ---
MAX_RADIUS = 12                      # Largest ball radius accepted by enumerating commands
MAX_ENDO_BOUND = 3                   # Largest endomorphism image length accepted
MAX_COSETS = 20_000                  # Largest Frattini preimage (number of cosets) built
MAX_CENSUS_ELEMENTS = 200_000        # Elements classified before a census is flagged partial
MAX_WORD_EXPONENT = 10_000           # Largest |k| accepted in x<i>^<k> by the word parser

# --- Run Metadata ---
DATA_FOLDER_NAME = os.environ.get("TESTEL_DATA_DIR", "Data")   # Root directory for run output
CENSUS_FILE_NAME = "census.jsonl"    # Append-only census log inside the data folder
DEFAULT_SEED = 0                     # Seed recorded with every run
DEFAULT_WORKERS = 1                  # Worker processes for sharded enumeration
ZETA_DIGITS = 12                     # Decimal digits of zeta(n) in the retract density bound
DECIMAL_DIGITS = 15                  # Digits shown in decimal approximations of bounds

SURFACE_KINDS = ("orientable", "nonorientable")


def check_run_limits(radius=None, endo_bound=None, cosets=None, workers=None,
                     max_radius=MAX_RADIUS, max_endo_bound=MAX_ENDO_BOUND, max_cosets=MAX_COSETS):
    """
    Validates that requested sizes stay inside the configured resource caps.

    Every enumerating command calls this before doing any work. The ``max_*``
    arguments can only tighten the module caps, never raise them.

    Args:
        radius (int, optional): Ball radius requested.
        endo_bound (int, optional): Endomorphism image length bound requested.
        cosets (int, optional): Number of cosets a Frattini preimage would have.
        workers (int, optional): Worker count requested.
        max_radius (int): Radius cap for this run.
        max_endo_bound (int): Endomorphism bound cap for this run.
        max_cosets (int): Coset count cap for this run.

    Raises:
        ValueError: If any of the following conditions occur:
            - A value is negative.
            - A value exceeds its cap.
            - The worker count is below one.
            - A cap is negative or above its module default.
    """

    caps = {
        "radius": (max_radius, MAX_RADIUS),
        "endomorphism bound": (max_endo_bound, MAX_ENDO_BOUND),
        "coset count": (max_cosets, MAX_COSETS),
    }
    for name, (cap, hard_cap) in caps.items():
        if not 0 <= cap <= hard_cap:
            raise ValueError(f"Invalid {name} cap: {cap}. Must lie in 0..{hard_cap}.")

    limits = {
        "radius": (radius, max_radius),
        "endomorphism bound": (endo_bound, max_endo_bound),
        "coset count": (cosets, max_cosets),
    }

    for name, (value, cap) in limits.items():
        if value is None:
            continue
        if value < 0:
            raise ValueError(f"Invalid {name}: {value}. Must be non-negative.")
        if value > cap:
            raise ValueError(f"Requested {name} {value} exceeds the configured cap ({cap}).")

    if workers is not None and workers < 1:
        raise ValueError(f"Invalid worker count: {workers}. Must be at least 1.")
