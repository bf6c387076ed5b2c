"""Sweep tables and plots."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLUMNS = ("param", "value", "seed", "cases", "unique_silent", "unique_crash",
           "reports", "discard_rate", "lowering_success_rate", "mean_plan_length")


def sweep_row(param, value, summary):
    """Flatten one campaign summary into a CSV row."""
    return {
        "param": param,
        "value": value,
        "seed": summary.config["seed"],
        "cases": summary.cases_run,
        "unique_silent": summary.unique_bugs.get("Silent", 0),
        "unique_crash": summary.unique_bugs.get("Crash", 0),
        "reports": sum(summary.reports.values()),
        "discard_rate": round(summary.discard_rate, 6),
        "lowering_success_rate": round(summary.lowering_success_rate, 6),
        "mean_plan_length": summary.mean_plan_length,
    }


def write_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def plot_sweep(rows, path):
    """One panel per swept parameter: unique bugs against the setting."""
    params = sorted({r["param"] for r in rows})
    fig, axes = plt.subplots(1, max(len(params), 1), figsize=(4.5 * max(len(params), 1), 3.4), squeeze=False)
    for ax, param in zip(axes[0], params):
        sel = sorted((r for r in rows if r["param"] == param), key=lambda r: r["value"])
        xs = [r["value"] for r in sel]
        ax.plot(xs, [r["unique_silent"] for r in sel], marker="o", label="silent")
        ax.plot(xs, [r["unique_crash"] for r in sel], marker="s", label="crash")
        ax.set_xlabel(param)
        ax.set_ylabel("unique bugs")
        ax.set_xticks(xs)
        ax.grid(alpha=0.3)
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
