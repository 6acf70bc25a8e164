"""Fixed 64-element mesh, k = 1..4, smooth divergence-free field for several
Poisson ratios up to the incompressible limit (about one minute)."""
from __future__ import annotations

import argparse
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from hexdg.assembly import DGConfig
from hexdg.problems import STUDY_FIELDS, degree_study, get_case
from hexdg.report import plot_convergence, write_csv

log = logging.getLogger("nu_robustness")


@dataclass
class StudyConfig:
    nus: tuple = (0.125, 0.375, 0.49, 0.5)
    ks: tuple = (1, 2, 3, 4)
    levels: int = 2
    dg: DGConfig = field(default_factory=DGConfig)
    out: str = "results"


def run(cfg: StudyConfig) -> list[dict]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = degree_study(get_case("SmoothDivFree"), cfg.nus, cfg.ks, "uniform", cfg.levels, cfg.dg,
                        progress=lambda r: log.info("nu=%g k=%d err=%.4e", r["nu"], r["k"],
                                                    r["dg_error"]))
    header = {"nus": cfg.nus, "ks": cfg.ks, "levels": cfg.levels,
              **{f"dg.{k}": v for k, v in asdict(cfg.dg).items()}}
    write_csv(out / "nu_robustness.csv", rows, STUDY_FIELDS, header)
    plot_convergence(rows, 3, out / "nu_robustness.svg", "SmoothDivFree, 64 elements")
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    rows = run(StudyConfig(out=ap.parse_args().out))
    for k in sorted({r["k"] for r in rows}):
        errs = [r["dg_error"] for r in rows if r["k"] == k]
        print(f"k={k}: errors {min(errs):.4e} .. {max(errs):.4e} (ratio {max(errs) / min(errs):.4f})")
