"""CSV/JSON writers and the SVG convergence plot."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def csv_text(rows, fields, config: dict | None = None) -> str:
    buf = io.StringIO()
    for key, val in sorted((config or {}).items()):
        # shortest round-trip repr keeps the echoed config readable
        buf.write(f"# {key}={float(val) if isinstance(val, np.floating) else val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r.get(f, "")) for f in fields])
    return buf.getvalue()


def write_csv(path, rows, fields, config: dict | None = None) -> None:
    Path(path).write_text(csv_text(rows, fields, config))


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by :func:`write_csv` (numbers parsed back)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        row = {}
        for k, v in r.items():
            try:
                row[k] = int(v)
            except ValueError:
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
        out.append(row)
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def plot_convergence(rows, root: int, path, title: str = "", fits: dict | None = None) -> None:
    """Semilog-y plot of dg_error against N^(1/root), one curve per (case, nu)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    groups: dict = {}
    for r in rows:
        if np.isfinite(r["dg_error"]):
            groups.setdefault((r["case"], r["nu"]), []).append(r)
    for (case, nu), rs in sorted(groups.items()):
        rs.sort(key=lambda r: r["N"])
        x = [r["N"] ** (1.0 / root) for r in rs]
        label = f"{case}, nu={nu:g}"
        if fits and (case, nu) in fits:
            label += f", b={fits[(case, nu)]:.3g}"
        ax.semilogy(x, [r["dg_error"] for r in rs], "o-", label=label)
    ax.set_xlabel(f"N^(1/{root})")
    ax.set_ylabel("DG-norm error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
