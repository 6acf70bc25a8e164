"""Acceptance criteria 1-10 at their stated tolerances and time budgets.

Each test records one ``criterion N: PASS|FAIL`` line; the lines are printed
in the pytest terminal summary (see conftest.py) and when this file is run
as a script.
"""
import time

import numpy as np
import pytest
import scipy.linalg as sla

from hexdg.assembly import DGConfig, assemble_augmented, assemble_blocks, assemble_rhs
from hexdg.infsup import InfSupConfig, _setup, gamma_a, gamma_a_oracle, gamma_B, gamma_B_oracle
from hexdg.mesh import PatchKind, build_patch_mesh, extract_faces
from hexdg.problems import catalog, degree_study, dg_error, fd_forcing, fit_rate, get_case, solve_case
from hexdg.solver import SolveConfig, gmres_solve
from hexdg.spaces import build_dofmap

ACCEPTANCE_LINES: list[str] = []


def record(n, ok, detail, seconds, budget):
    within = seconds < budget
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {n:2d}: {status}  {detail}  [{seconds:.1f}s, budget {budget:.0f}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


# 1 -----------------------------------------------------------------------------------

def test_criterion_01_kernel_identity():
    t0 = time.perf_counter()
    worst, cells = 0.0, 0
    for kind in PatchKind:
        for lev in range(4):
            mesh = build_patch_mesh(kind, 0.5, lev)
            faces = extract_faces(mesh)
            for k in (1, 2, 3):
                dm = build_dofmap(mesh, k)
                bl = assemble_blocks(mesh, faces, dm, DGConfig(k=k, nu=0.5))
                lhs = np.abs(bl.B @ np.ones(dm.N)).max()
                bmax = np.abs(bl.B).max()
                assert lhs <= 1e-12 * bmax, (kind, lev, k, lhs, bmax)
                worst = max(worst, lhs / bmax if bmax > 0 else 0.0)
                cells += 1
    record(1, True, f"|B e(1)|/|B|max <= {worst:.2e} over {cells} cells",
           time.perf_counter() - t0, 60)


# 2 -----------------------------------------------------------------------------------

def test_criterion_02_rank_deficiency():
    t0 = time.perf_counter()
    cfg = InfSupConfig(check_kernel=False)
    ker, sep, cells, skipped, vacuous = 0.0, np.inf, 0, 0, 0
    ok = True
    for kind in PatchKind:
        for lev in range(4):
            mesh = build_patch_mesh(kind, 0.5, lev)
            for k in (1, 2, 3):
                dm = build_dofmap(mesh, k)
                if dm.M + dm.N > 6000:
                    skipped += 1
                    continue
                r = gamma_B(mesh, k, cfg)
                if dm.N == 1:
                    # sigma_{N-1} does not exist; B is exactly zero here
                    vacuous += 1
                    ok &= r.sigma_max == 0.0
                    continue
                cells += 1
                ker = max(ker, r.sigma_kernel / r.sigma_max)
                sep = min(sep, r.value / r.sigma_max)
    ok &= ker <= 1e-10 and sep >= 1e-8
    record(2, ok, f"max sigma_N/sigma_1 = {ker:.2e}, min sigma_(N-1)/sigma_1 = {sep:.3f} over "
           f"{cells} cells ({vacuous} with N=1, {skipped} above the M+N cap)",
           time.perf_counter() - t0, 300)


# 3 -----------------------------------------------------------------------------------

def null_space_solution(blocks, F):
    """Dense solve of the saddle-point system with the pressure restricted to
    zero mean through an orthonormal basis Z of ker(m^T)."""
    M, N = blocks.M, blocks.N
    Z = sla.null_space(blocks.m.reshape(1, -1))
    A, B, C = blocks.A.toarray(), blocks.B.toarray(), blocks.C.toarray()
    K = np.block([[A, B @ Z], [-Z.T @ B.T, Z.T @ C @ Z]])
    y = np.linalg.solve(K, np.concatenate([F[:M], Z.T @ F[M:M + N]]))
    return y[:M], Z @ y[M:]


def test_criterion_03_augmented_equivalence():
    t0 = time.perf_counter()
    worst_r = worst_mean = worst_diff = 0.0
    for name, nu in (("PolyExact", 0.25), ("SmoothDivFree", 0.5)):
        case = get_case(name)
        for lev in (0, 1, 2):
            mesh = build_patch_mesh("uniform", 0.5, lev)
            faces = extract_faces(mesh)
            for k in (1, 2):
                cfg = DGConfig(k=k, nu=nu)
                dm = build_dofmap(mesh, k)
                bl = assemble_blocks(mesh, faces, dm, cfg)
                K = assemble_augmented(bl)
                F = assemble_rhs(mesh, faces, dm, cfg, case)
                x, rep = gmres_solve(K, F, SolveConfig(), blocks=bl, nv=dm.nv)
                assert np.linalg.norm(F - K @ x) <= 1e-12
                u, p, r = x[:dm.M], x[dm.M:dm.M + dm.N], x[-1]
                worst_r = max(worst_r, abs(r))
                worst_mean = max(worst_mean, abs(bl.m @ p))
                if dm.total <= 90:
                    uo, po = null_space_solution(bl, F)
                    worst_diff = max(worst_diff, np.abs(u - uo).max(), np.abs(p - po).max())
    ok = worst_r <= 1e-10 and worst_mean <= 1e-10 and worst_diff <= 1e-9
    record(3, ok, f"|r| <= {worst_r:.1e}, |int p| <= {worst_mean:.1e}, "
           f"oracle difference {worst_diff:.1e}", time.perf_counter() - t0, 60)


# 4 -----------------------------------------------------------------------------------

def test_criterion_04_galerkin_exactness():
    t0 = time.perf_counter()
    case = get_case("PolyExact")
    worst = 0.0
    for lev in (0, 1):
        mesh = build_patch_mesh("uniform", 0.5, lev)
        for nu in (0.125, 0.25, 0.375):
            cfg = DGConfig(k=2, nu=nu)
            res = solve_case(mesh, case, cfg)
            err = dg_error(res.field, case, mesh, res.faces, res.field.dofmap, cfg)
            worst = max(worst, err.dg_error)
    record(4, worst <= 1e-8, f"max dg_error {worst:.2e}", time.perf_counter() - t0, 60)


# 5 -----------------------------------------------------------------------------------

def test_criterion_05_infsup_oracles():
    t0 = time.perf_counter()
    worst_B = 0.0
    for kind, lev in (("uniform", 0), ("edge", 1)):
        mesh = build_patch_mesh(kind, 0.5, lev)
        for k in (2, 3):
            r = gamma_B(mesh, k)
            o = gamma_B_oracle(_setup(mesh, k, None, 0.5)[2])
            worst_B = max(worst_B, abs(r.value - o) / o)
    mesh = build_patch_mesh("uniform", 0.5, 0)
    ra = gamma_a(mesh, 2)
    oa = gamma_a_oracle(_setup(mesh, 2, None, 0.5)[2])
    rel_a = abs(ra.value - oa) / oa
    record(5, worst_B <= 1e-8 and rel_a <= 1e-6,
           f"gamma_B rel diff {worst_B:.1e}, gamma_a rel diff {rel_a:.1e} "
           f"(gamma_a = {ra.value:.10g})", time.perf_counter() - t0, 120)


# 6 -----------------------------------------------------------------------------------

def test_criterion_06_gamma_B_stabilization():
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind in ("edge", "corner"):
        vals = {lev: gamma_B(build_patch_mesh(kind, 0.5, lev), 2).value for lev in range(1, 6)}
        change = {lev: abs(vals[lev] - vals[lev - 1]) / vals[lev] for lev in (4, 5)}
        ok &= all(c <= 0.05 for c in change.values())
        parts.append(f"{kind}: {change[4]:.1e}, {change[5]:.1e}")
    record(6, ok, "relative change at l=4,5 " + "; ".join(parts), time.perf_counter() - t0, 600)


# 7 -----------------------------------------------------------------------------------

def test_criterion_07_exponent_trends():
    t0 = time.perf_counter()
    kb = [2, 3, 4]
    vb = [gamma_B(build_patch_mesh("edge", 0.5, 5), k).value for k in kb]
    slope_B = np.polyfit(np.log(kb), np.log(vb), 1)[0]
    ka = [2, 3]
    va = [gamma_a(build_patch_mesh("corner", 0.5, 3), k).value for k in ka]
    slope_a = np.polyfit(np.log(ka), np.log(va), 1)[0]
    record(7, slope_B > -1.5 and slope_a > -3,
           f"gamma_B slope {slope_B:.3f} (edge, l=5), gamma_a slope {slope_a:.3f} (corner, l=3)",
           time.perf_counter() - t0, 1200)


# 8 -----------------------------------------------------------------------------------

def convergence_rows(name, levels):
    case = get_case(name)
    rows = []
    for lev in levels:
        mesh = build_patch_mesh(case.patch, 0.5, lev)
        cfg = DGConfig(k=lev + 1, nu=0.375)
        res = solve_case(mesh, case, cfg)
        err = dg_error(res.field, case, mesh, res.faces, res.field.dofmap, cfg)
        rows.append({"levels": lev, "N": err.N, "dg_error": err.dg_error})
    return rows


def test_criterion_08_exponential_convergence():
    t0 = time.perf_counter()
    ok, parts = True, []
    for name, levels, root in (("EdgeSing", range(5), 4), ("CornerSing", range(5), 4),
                               ("CornerEdgeSing", range(4), 5)):
        rows = convergence_rows(name, levels)
        errs = [r["dg_error"] for r in rows]
        dec = all(b < a for a, b in zip(errs[1:], errs[2:]))
        fit = fit_rate(rows, root, min_level=2)
        ok &= dec and fit.r2 >= 0.95 and fit.slope < 0
        parts.append(f"{name}: decreasing={dec}, slope={fit.slope:.3f}, R2={fit.r2:.4f} "
                     f"({fit.points} pts)")
    record(8, ok, "; ".join(parts), time.perf_counter() - t0, 1800)


# 9 -----------------------------------------------------------------------------------

def test_criterion_09_nu_robustness():
    t0 = time.perf_counter()
    nus, ks = (0.125, 0.375, 0.49, 0.5), (1, 2, 3, 4)
    rows = degree_study(get_case("SmoothDivFree"), nus, ks, patch="uniform", levels=2)
    assert all(r["N"] == 64 * (3 * (r["k"] + 1) ** 3 + r["k"] ** 3) - 1 for r in rows)
    err = {(r["nu"], r["k"]): r["dg_error"] for r in rows}
    spread = max(max(err[(nu, k)] for nu in nus) / min(err[(nu, k)] for nu in nus) for k in ks)
    decay = min(err[(nu, k)] / err[(nu, k + 1)] for nu in nus for k in ks if k >= 2 and k + 1 in ks)
    record(9, spread <= 2 and decay >= 5,
           f"max spread across nu {spread:.4f}, min decay per unit k (k>=2) {decay:.2f}",
           time.perf_counter() - t0, 1200)


# 10 ----------------------------------------------------------------------------------

def test_criterion_10_forcing():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for case in catalog():
        if not case.has_exact:
            continue
        for nu in (0.125, 0.375, 0.5):
            if nu == 0.5 and not case.incompressible_ok:
                continue
            pts = []
            while len(pts) < 50:
                x = rng.uniform(0, 1, 3)
                d = [np.linalg.norm([x[a] for a in range(3) if a not in free])
                     for _, free in case.singular_set]
                if not d or min(d) >= 0.1:
                    pts.append(x)
            pts = np.array(pts)
            f, g = case.forcing(pts, nu), fd_forcing(case, pts, nu)
            worst = max(worst, np.abs(f - g).max() / np.abs(f).max())
    record(10, worst <= 1e-5, f"max relative deviation {worst:.2e}", time.perf_counter() - t0, 60)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
