"""Discrete inf-sup constants from singular values of norm-normalized matrices.

gamma_B is the smallest positive singular value of L_D^-1 B L_E^-T and
gamma_a that of L^-1 M L^-T, with M the matrix of a_h on V_h x Q~_h at
nu = 1/2 and L the Cholesky factor of the DG-norm Gram matrix.  Both
matrices have exactly one kernel direction (the constant pressure).
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.linalg as sla

from .assembly import DGConfig, assemble_blocks
from .mesh import GeometricMesh, build_patch_mesh, extract_faces
from .solver import DenseCapError, cholesky_congruence, dense_svd, singular_values
from .spaces import build_dofmap

KERNEL_TOL = 1e-10        # sigma_kernel / sigma_1 must be below this
SEPARATION_TOL = 1e-10    # value / sigma_1 must be above this
CSV_FIELDS = ("kind", "patch", "sigma", "k", "levels", "M", "N", "value", "sigma_kernel", "seconds")


class KernelError(RuntimeError):
    """The computed kernel is not one-dimensional."""


@dataclass
class InfSupResult:
    kind: str                 # "gammaB" or "gammaA"
    patch: str
    sigma: float
    levels: int
    k: int
    value: float
    sigma_kernel: float
    sigma_max: float
    M: int
    N: int
    seconds: float = 0.0
    kernel_vector: np.ndarray | None = None

    def row(self) -> dict:
        d = asdict(self)
        d.pop("kernel_vector")
        d.pop("sigma_max")
        return {f: d[f] for f in CSV_FIELDS}


@dataclass
class InfSupConfig:
    gamma: float = 10.0
    theta: float = 1.0
    dense_cap: int = 6000
    max_k_B: int = 4
    max_levels_B: int = 5
    max_k_a: int = 3
    max_levels_a: int = 3
    check_kernel: bool = True


def _check(kind, s, strict):
    smax, val, ker = s[0], s[-2], s[-1]
    if strict and (ker > KERNEL_TOL * smax or val <= SEPARATION_TOL * smax):
        raise KernelError(f"{kind}: kernel is not one-dimensional "
                          f"(sigma_min/sigma_1 = {ker / smax:.3e}, next = {val / smax:.3e})")


def _setup(mesh, k, config, nu):
    cfg = config or InfSupConfig()
    faces = extract_faces(mesh)
    dm = build_dofmap(mesh, k)
    dg = DGConfig(k=k, theta=cfg.theta, gamma=cfg.gamma, nu=nu)
    return cfg, dm, assemble_blocks(mesh, faces, dm, dg)


def btilde(blocks) -> np.ndarray:
    """Dense L_D^-1 B L_E^-T."""
    X = cholesky_congruence(blocks.D, blocks.B, "left")
    return cholesky_congruence(blocks.E, X, "right")


def mtilde(blocks) -> np.ndarray:
    """Dense L^-1 M L^-T for the a_h matrix and the DG-norm Gram."""
    return cholesky_congruence(blocks.dg_gram(), blocks.a_matrix(), "both")


def gamma_B(mesh: GeometricMesh, k: int, config: InfSupConfig | None = None) -> InfSupResult:
    t0 = time.perf_counter()
    cfg, dm, blocks = _setup(mesh, k, config, 0.5)
    if dm.M > cfg.dense_cap:
        raise DenseCapError(f"M = {dm.M} exceeds the dense cap {cfg.dense_cap}")
    _, s, Vt = dense_svd(btilde(blocks), cap=cfg.dense_cap)
    if dm.N == 1:
        # only the constant pressure: B = 0 and the infimum runs over an empty set
        return InfSupResult("gammaB", mesh.kind.value, mesh.sigma, mesh.levels, k, float("inf"),
                            float(s[-1]), float(s[0]), dm.M, dm.N, time.perf_counter() - t0,
                            Vt[-1].copy())
    _check("gammaB", s, cfg.check_kernel)
    return InfSupResult("gammaB", mesh.kind.value, mesh.sigma, mesh.levels, k, float(s[-2]),
                        float(s[-1]), float(s[0]), dm.M, dm.N, time.perf_counter() - t0,
                        Vt[-1].copy())


def gamma_a(mesh: GeometricMesh, k: int, config: InfSupConfig | None = None,
            vectors: bool = False) -> InfSupResult:
    """gamma_a at nu = 1/2; ``vectors`` keeps the right kernel singular vector
    (in the Cholesky-transformed coordinates)."""
    t0 = time.perf_counter()
    cfg, dm, blocks = _setup(mesh, k, config, 0.5)
    X = mtilde(blocks)
    if vectors:
        _, s, Vt = dense_svd(X, cap=cfg.dense_cap)
        kv = Vt[-1].copy()
    else:
        s, kv = singular_values(X, cap=cfg.dense_cap), None
    _check("gammaA", s, cfg.check_kernel)
    return InfSupResult("gammaA", mesh.kind.value, mesh.sigma, mesh.levels, k, float(s[-2]),
                        float(s[-1]), float(s[0]), dm.M, dm.N, time.perf_counter() - t0, kv)


# -- oracles ---------------------------------------------------------------

def _sym_inv_sqrt(G):
    w, Q = np.linalg.eigh(G.toarray() if hasattr(G, "toarray") else G)
    return (Q / np.sqrt(w)) @ Q.T, (Q * np.sqrt(w)) @ Q.T


def gamma_B_oracle(blocks) -> float:
    """sqrt of the second-smallest eigenvalue of E^-1/2 B^T D^-1 B E^-1/2."""
    Ei, _ = _sym_inv_sqrt(blocks.E)
    B = blocks.B.toarray()
    S = Ei @ B.T @ np.linalg.solve(blocks.D.toarray(), B) @ Ei
    lam = np.linalg.eigvalsh(0.5 * (S + S.T))
    return float(np.sqrt(max(lam[1], 0.0)))


def gamma_a_oracle(blocks, iterations: int = 200, tol: float = 1e-14) -> float:
    """Smallest singular value of M^ = G^-1/2 M G^-1/2 on the complement of
    its known kernel, by inverse iteration on M^T M^ with the kernel shifted
    away and a Rayleigh-quotient estimate.

    Symmetric square roots come from an eigensolver, so nothing is shared
    with the Cholesky/SVD path.
    """
    G = blocks.dg_gram().toarray()
    Gi, Gh = _sym_inv_sqrt(G)
    Mh = Gi @ blocks.a_matrix().toarray() @ Gi
    S = Mh.T @ Mh
    z = np.zeros(len(G))
    z[blocks.M:] = 1.0                      # constant pressure in coefficients
    z = Gh @ z
    z /= np.linalg.norm(z)
    shift = np.linalg.norm(S, 2)
    Sk = S + shift * np.outer(z, z)
    lu = sla.lu_factor(Sk)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(len(G))
    x -= z * (z @ x)
    x /= np.linalg.norm(x)
    lam = x @ Sk @ x
    for _ in range(iterations):
        y = sla.lu_solve(lu, x)
        y -= z * (z @ y)
        y /= np.linalg.norm(y)
        new = y @ Sk @ y
        x = y
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return float(np.sqrt(max(lam, 0.0)))


# -- studies ---------------------------------------------------------------

def infsup_study(kinds, ks, levels, constant: str = "gammaB", sigma: float = 0.5,
                 config: InfSupConfig | None = None, progress=None) -> list[dict]:
    """Rows for every (patch kind, k, level) cell, sorted canonically."""
    cfg = config or InfSupConfig()
    fn = {"gammaB": gamma_B, "gammaA": gamma_a}[constant]
    kmax = cfg.max_k_B if constant == "gammaB" else cfg.max_k_a
    lmax = cfg.max_levels_B if constant == "gammaB" else cfg.max_levels_a
    rows = []
    for kind in kinds:
        for k in ks:
            for lev in levels:
                if k > kmax or lev > lmax:
                    raise ValueError(f"{constant} study capped at k <= {kmax}, levels <= {lmax}")
                mesh = build_patch_mesh(kind, sigma, lev)
                res = fn(mesh, k, cfg)
                rows.append(res.row())
                if progress:
                    progress(res)
    rows.sort(key=lambda r: (r["kind"], r["patch"], r["k"], r["levels"]))
    return rows


def fit_exponent(rows) -> dict:
    """Least-squares slope of log(value) vs log(k) over the value at the
    largest level for each (patch, k)."""
    out = {}
    by_patch: dict = {}
    for r in rows:
        by_patch.setdefault((r["kind"], r["patch"]), {}).setdefault(r["k"], []).append(r)
    for (kind, patch), per_k in by_patch.items():
        ks = sorted(per_k)
        vals = [max(per_k[k], key=lambda r: r["levels"])["value"] for k in ks]
        slope = float("nan")
        if len(ks) >= 2:
            slope = float(np.polyfit(np.log(ks), np.log(vals), 1)[0])
        out[f"{kind}/{patch}"] = {"k": ks, "value": vals, "exponent": slope}
    return out


def stabilization(rows) -> dict:
    """Relative change |v(l) - v(l-1)| / v(l) per (kind, patch, k, l)."""
    out = {}
    series: dict = {}
    for r in rows:
        series.setdefault((r["kind"], r["patch"], r["k"]), []).append((r["levels"], r["value"]))
    for key, pts in series.items():
        pts.sort()
        out[key] = {l1: abs(v1 - v0) / v1 for (l0, v0), (l1, v1) in zip(pts, pts[1:]) if l1 == l0 + 1}
    return out
