"""Small oracle checks run by ``hexdg verify`` (a few seconds in total)."""
from __future__ import annotations

import numpy as np

from .assembly import DGConfig, assemble_blocks
from .fem import TensorBasis, gauss_rule
from .infsup import _setup, gamma_B, gamma_B_oracle
from .mesh import PatchKind, boundary_area, build_patch_mesh, extract_faces
from .problems import catalog, dg_error, fd_forcing, get_case, solve_case
from .solver import cholesky_congruence
from .spaces import build_dofmap


def _check(name, ok, detail):
    return {"name": name, "ok": bool(ok), "detail": detail}


def check_gauss():
    worst = 0.0
    for n in range(1, 12):
        r = gauss_rule(n)
        for p in range(2 * n):
            exact = 0.0 if p % 2 else 2.0 / (p + 1)
            worst = max(worst, abs(r.weights @ r.nodes ** p - exact))
    return _check("gauss exactness (n <= 11)", worst <= 1e-13, f"max error {worst:.2e}")


def check_partition_of_unity(rng):
    worst = 0.0
    x = rng.uniform(-1, 1, 50)
    for k in range(0, 8):
        v, d = TensorBasis(k).eval_1d(x)
        worst = max(worst, np.abs(v.sum(1) - 1).max(), np.abs(d.sum(1)).max())
    return _check("lagrange partition of unity", worst <= 1e-12, f"max error {worst:.2e}")


def check_meshes():
    bad = []
    for kind in PatchKind:
        for lev in range(4):
            m = build_patch_mesh(kind, 0.5, lev)
            faces = extract_faces(m)
            area = 24.0 if kind == PatchKind.FICHERA else 6.0
            vol = 7.0 if kind == PatchKind.FICHERA else 1.0
            if abs(m.volume - vol) > 1e-12 or abs(boundary_area(faces) - area) > 1e-12:
                bad.append((kind.value, lev))
    return _check("mesh volume and boundary closure", not bad, f"failures {bad}")


def check_kernel():
    worst = 0.0
    for kind in PatchKind:
        for k in (1, 2):
            m = build_patch_mesh(kind, 0.5, 2)
            f = extract_faces(m)
            dm = build_dofmap(m, k)
            bl = assemble_blocks(m, f, dm, DGConfig(k=k))
            worst = max(worst, np.abs(bl.B @ np.ones(dm.N)).max() / np.abs(bl.B).max())
    return _check("B annihilates constant pressure", worst <= 1e-12, f"max ratio {worst:.2e}")


def check_forcing(rng):
    worst = 0.0
    for case in catalog():
        if not case.has_exact:
            continue
        for nu in (0.125, 0.375, 0.5):
            if nu == 0.5 and not case.incompressible_ok:
                continue
            x = rng.uniform(0.15, 0.95, (50, 3))
            f = case.forcing(x, nu)
            g = fd_forcing(case, x, nu)
            worst = max(worst, np.abs(f - g).max() / max(np.abs(f).max(), 1e-300))
    return _check("forcing vs finite differences", worst <= 1e-5, f"max rel error {worst:.2e}")


def check_galerkin():
    worst = 0.0
    case = get_case("PolyExact")
    for lev in (0, 1):
        m = build_patch_mesh("uniform", 0.5, lev)
        cfg = DGConfig(k=2, nu=0.25)
        res = solve_case(m, case, cfg)
        worst = max(worst, dg_error(res.field, case, m, res.faces, res.field.dofmap, cfg).dg_error)
    return _check("galerkin exactness (PolyExact, k=2)", worst <= 1e-8, f"dg error {worst:.2e}")


def check_infsup():
    m = build_patch_mesh("uniform", 0.5, 0)
    r = gamma_B(m, 2)
    _, _, bl = _setup(m, 2, None, 0.5)
    o = gamma_B_oracle(bl)
    rel = abs(r.value - o) / o
    return _check("gamma_B vs eigen oracle (1 element, k=2)", rel <= 1e-8,
                  f"gamma_B={r.value:.10g} rel diff {rel:.1e}")


def check_congruence(rng):
    A = rng.standard_normal((30, 30))
    G = A @ A.T + 30 * np.eye(30)
    X = rng.standard_normal((30, 12))
    w, Q = np.linalg.eigh(G)
    ref = np.linalg.svd((Q / np.sqrt(w)) @ Q.T @ X, compute_uv=False)
    got = np.linalg.svd(cholesky_congruence(G, X, "left"), compute_uv=False)
    err = np.abs(ref - got).max() / ref[0]
    return _check("cholesky congruence preserves singular values", err <= 1e-10, f"{err:.1e}")


def run_checks(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [check_gauss(), check_partition_of_unity(rng), check_meshes(), check_kernel(),
            check_forcing(rng), check_galerkin(), check_infsup(), check_congruence(rng)]
