import logging
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from density import bound_calculator, load_census_records

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["rank", "k", "L", "positive", "negative", "unknown", "ball_size", "seed"]


def census_dataframe(records):
    """
    One row per census record, with the empirical bucket ratios added.

    Partial records are dropped since their buckets do not cover the ball.
    """

    rows = [record.body() for record in records if not record.partial]
    if not rows:
        return pd.DataFrame(columns=CSV_COLUMNS)

    df = pd.DataFrame(rows)
    df = df.sort_values(["rank", "L", "k", "seed"], kind="stable").drop_duplicates(["rank", "k", "L", "seed"], keep="last")
    for bucket in ("positive", "negative", "unknown"):
        df[f"{bucket}_ratio"] = df[bucket] / df["ball_size"]
    return df.reset_index(drop=True)


def export_census_csv(df, out_path):
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    df[CSV_COLUMNS].to_csv(out_path, index=False)
    logger.info("Saved census CSV: %s", out_path)
    return out_path


# ============================================================
#                       PLOTTING
# ============================================================

def plot_census_ratios(df, output_folder, prefix="census"):
    """Bucket ratios against the radius, one figure per (rank, L), with the density lower bound."""
    os.makedirs(output_folder, exist_ok=True)
    saved = []

    for (rank, L), group in df.groupby(["rank", "L"]):
        group = group.sort_values("k")
        plt.figure(figsize=(10, 5))
        plt.plot(group["k"], group["positive_ratio"], marker="o", label="positive", linewidth=2)
        plt.plot(group["k"], group["negative_ratio"], marker="s", label="negative", linewidth=2)
        plt.plot(group["k"], group["unknown_ratio"], marker="^", label="unknown", linewidth=2)
        if rank >= 2:
            floor = float(bound_calculator("freeC", {"n": int(rank)}).exact)
            plt.axhline(floor, color="gray", linestyle="--", label="test-element lower bound")
        plt.yscale("log")
        plt.xlabel("Radius k")
        plt.ylabel("Share of ball")
        plt.title(f"Census buckets, rank {rank}, L = {L}")
        plt.legend()
        plt.grid(True)
        plt.tight_layout()
        path = os.path.join(output_folder, f"{prefix}_rank{rank}_L{L}.png")
        plt.savefig(path)
        plt.close()
        saved.append(path)

    return saved


def summarize_census(census_path, output_folder):
    """
    Loads a census log, exports its CSV and plots the bucket ratios.

    Returns the DataFrame, or None when the log holds no complete records.
    """

    records = load_census_records(census_path)
    df = census_dataframe(records)
    if df.empty:
        logger.warning("No complete census records in %s", census_path)
        return None

    export_census_csv(df, os.path.join(output_folder, "census.csv"))
    for path in plot_census_ratios(df, output_folder):
        logger.info("Saved census plot: %s", path)
    return df
