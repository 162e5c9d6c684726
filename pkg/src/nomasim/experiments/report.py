"""CSV emission and optional plotting."""
from __future__ import annotations

import csv
import math
from pathlib import Path

LINK_COLUMNS = ("scheme", "snr_db", "user_id", "bler", "sum_goodput_bits_per_re")
GRANTFREE_COLUMNS = ("scheme", "lambda", "pdr", "satisfied_ratio", "collision_rate")
SUPPORTED_PAR_COLUMNS = ("scheme", "target_pdr", "supported_par", "bracket_low", "bracket_high",
                         "supported", "monotone")
CALIBRATE_COLUMNS = ("name", "max_deviation", "tolerance", "passed")


def fmt(v) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r} in report")
        return repr(v)
    return str(v)


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def companion_path(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}")


def plot_rows(rows, x: str, y: str, path, logy: bool = True) -> None:
    """Render one line per scheme (requires the optional matplotlib extra)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    series: dict[str, dict[float, list[float]]] = {}
    for r in rows:
        series.setdefault(r["scheme"], {}).setdefault(float(r[x]), []).append(float(r[y]))
    for name, pts in sorted(series.items()):
        xs = sorted(pts)
        ax.plot(xs, [sum(pts[v]) / len(pts[v]) for v in xs], marker="o", label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
