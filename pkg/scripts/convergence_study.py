"""k ~ level convergence for the edge, corner and corner-edge singular cases.

Writes one CSV and one SVG per case plus rates.json.  A few minutes with the
defaults (corner-edge to level 3, the others to level 4).
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from hexdg.assembly import DGConfig
from hexdg.problems import STUDY_FIELDS, convergence_study, fit_rate, get_case
from hexdg.report import plot_convergence, write_csv, write_json
from hexdg.solver import SolveConfig

log = logging.getLogger("convergence_study")


@dataclass
class StudyConfig:
    cases: dict = field(default_factory=lambda: {"EdgeSing": 4, "CornerSing": 4,
                                                 "CornerEdgeSing": 3})
    nus: tuple = (0.125, 0.375)
    fit_from: int = 2
    dg: DGConfig = field(default_factory=DGConfig)
    solver: SolveConfig = field(default_factory=SolveConfig)
    out: str = "results"


def run(cfg: StudyConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rates = {}
    for name, max_level in cfg.cases.items():
        case = get_case(name)
        rows = convergence_study(case, cfg.nus, max_level, cfg.dg, cfg.solver,
                                 progress=lambda r: log.info("%s nu=%g l=%d N=%d err=%.4e",
                                                             r["case"], r["nu"], r["levels"],
                                                             r["N"], r["dg_error"]))
        header = {"case": name, "max_level": max_level, "root": case.root,
                  **{f"dg.{k}": v for k, v in asdict(cfg.dg).items()},
                  **{f"solver.{k}": v for k, v in asdict(cfg.solver).items()}}
        write_csv(out / f"convergence_{name}.csv", rows, STUDY_FIELDS, header)
        fits = {}
        for nu in cfg.nus:
            fit = fit_rate([r for r in rows if r["nu"] == nu], case.root, cfg.fit_from)
            fits[(name, nu)] = fit.b
            rates[f"{name}/nu={nu:g}"] = asdict(fit)
        plot_convergence(rows, case.root, out / f"convergence_{name}.svg", name, fits)
    write_json(out / "rates.json", {"config": asdict(cfg), "rates": rates})
    return rates


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    for key, fit in run(StudyConfig(out=ap.parse_args().out)).items():
        print(f"{key}: b = {-fit['slope']:.3f}, R2 = {fit['r2']:.4f} ({fit['points']} points)")
