"""Manufactured solutions, DG-norm errors, reference solutions and
convergence studies for the mixed Lame/Stokes problem on the unit cube."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import boxes_rule, eval_points
from .mesh import PatchKind

ORIGIN = (0.0, 0.0, 0.0)
CORNER = ((ORIGIN, ()),)
EDGE_Z = ((ORIGIN, (2,)),)


class RestrictedCaseError(ValueError):
    """The case has no pressure at the requested Poisson ratio."""


def _radial_power(x, alpha, axes):
    """Value, gradient and Hessian of ``s**alpha`` with ``s = |x restricted to axes|``."""
    P = np.zeros(3)
    P[list(axes)] = 1.0
    y = x * P
    s2 = np.sum(y * y, axis=1)
    val = s2 ** (alpha / 2)
    grad = alpha * (s2 ** (alpha / 2 - 1))[:, None] * y
    hess = (alpha * s2 ** (alpha / 2 - 1))[:, None, None] * np.diag(P)[None] \
        + (alpha * (alpha - 2) * s2 ** (alpha / 2 - 2))[:, None, None] * y[:, :, None] * y[:, None, :]
    return val, grad, hess


def _product(a, b):
    va, ga, ha = a
    vb, gb, hb = b
    val = va * vb
    grad = va[:, None] * gb + vb[:, None] * ga
    hess = va[:, None, None] * hb + vb[:, None, None] * ha \
        + ga[:, :, None] * gb[:, None, :] + gb[:, :, None] * ga[:, None, :]
    return val, grad, hess


def _bubble_z(x):
    """z(1-z) with gradient and Hessian."""
    z = x[:, 2]
    val = z * (1 - z)
    grad = np.zeros_like(x)
    grad[:, 2] = 1 - 2 * z
    hess = np.zeros((len(x), 3, 3))
    hess[:, 2, 2] = -2.0
    return val, grad, hess


@dataclass
class ExactCase:
    """A manufactured solution of -Lap u + grad p = f, div u + (1-2nu) p = 0.

    ``u``, ``grad_u`` take points ``(P, 3)`` and return ``(P, 3)`` and
    ``(P, 3, 3)`` (``grad_u[:, i, j] = d_j u_i``); ``p`` and ``f`` additionally
    take the Poisson ratio.
    """
    name: str
    u: Callable
    grad_u: Callable
    p: Callable
    f: Callable
    singular_set: tuple = ()
    singular_label: str = "none"
    has_exact: bool = True
    patch: PatchKind = PatchKind.UNIFORM
    root: int = 3
    incompressible_ok: bool = True
    g: Callable | None = None
    notes: str = ""

    def dirichlet(self, x):
        x = np.atleast_2d(x)
        return self.g(x) if self.g is not None else self.u(x)

    def check_nu(self, nu):
        if not (0.0 < nu <= 0.5):
            raise ValueError(f"Poisson ratio must lie in (0, 1/2], got {nu}")
        if nu == 0.5 and not self.incompressible_ok:
            raise RestrictedCaseError(
                f"case {self.name!r} defines its pressure as -div(u)/(1-2nu) and has no "
                "incompressible limit; use nu < 1/2")

    def pressure(self, x, nu):
        self.check_nu(nu)
        return self.p(np.atleast_2d(x), nu)

    def forcing(self, x, nu):
        self.check_nu(nu)
        return self.f(np.atleast_2d(x), nu)


def _singular_case(name, factors, singular_set, label, patch, root):
    def parts(x):
        x = np.atleast_2d(np.asarray(x, float))
        out = _bubble_z(x)
        for alpha, axes in factors:
            out = _product(out, _radial_power(x, alpha, axes))
        return out

    def u(x):
        v, _, _ = parts(x)
        out = np.zeros((len(v), 3))
        out[:, 2] = v
        return out

    def grad_u(x):
        _, g, _ = parts(x)
        out = np.zeros((len(g), 3, 3))
        out[:, 2, :] = g
        return out

    def p(x, nu):
        _, g, _ = parts(x)
        return -g[:, 2] / (1 - 2 * nu)

    def f(x, nu):
        _, _, h = parts(x)
        out = -h[:, :, 2] / (1 - 2 * nu)           # grad p = -grad(div u)/(1-2nu)
        out[:, 2] -= np.trace(h, axis1=1, axis2=2)   # -Lap u_3
        return out

    return ExactCase(name, u, grad_u, p, f, singular_set, label, True, patch, root,
                     incompressible_ok=False)


def _smooth_parts(x):
    pi = np.pi
    s = [np.sin(pi * x[:, a]) ** 2 for a in range(3)]            # sin^2(pi t)
    b = [0.5 * np.sin(2 * pi * x[:, a]) for a in range(3)]        # sin(pi t) cos(pi t)
    ds = [2 * pi * bb for bb in b]
    db = [pi * np.cos(2 * pi * x[:, a]) for a in range(3)]
    dds = [2 * pi ** 2 * np.cos(2 * pi * x[:, a]) for a in range(3)]
    ddb = [-4 * pi ** 2 * bb for bb in b]
    # factor pattern per component: (which factor is s; sign/scale)
    pattern = [(0, 1.0), (1, 1.0), (2, -2.0)]
    return s, b, ds, db, dds, ddb, pattern


def _smooth_u(x):
    x = np.atleast_2d(x)
    s, b, *_, pattern = _smooth_parts(x)
    out = np.empty((len(x), 3))
    for c, (sa, scale) in enumerate(pattern):
        out[:, c] = scale * np.prod([s[a] if a == sa else b[a] for a in range(3)], axis=0)
    return out


def _smooth_grad(x):
    x = np.atleast_2d(x)
    s, b, ds, db, *_, pattern = _smooth_parts(x)
    out = np.empty((len(x), 3, 3))
    for c, (sa, scale) in enumerate(pattern):
        for d in range(3):
            fac = [(ds if a == sa else db)[a] if a == d else (s if a == sa else b)[a] for a in range(3)]
            out[:, c, d] = scale * np.prod(fac, axis=0)
    return out


def _smooth_f(x, nu):
    x = np.atleast_2d(x)
    s, b, ds, db, dds, ddb, pattern = _smooth_parts(x)
    out = np.zeros((len(x), 3))
    for c, (sa, scale) in enumerate(pattern):
        for d in range(3):
            fac = [(dds if a == sa else ddb)[a] if a == d else (s if a == sa else b)[a] for a in range(3)]
            out[:, c] -= scale * np.prod(fac, axis=0)
    return out


def _poly_u(x):
    x = np.atleast_2d(x)
    out = np.zeros((len(x), 3))
    out[:, 0] = x[:, 0] ** 2 - x[:, 0]
    return out


def _poly_grad(x):
    x = np.atleast_2d(x)
    out = np.zeros((len(x), 3, 3))
    out[:, 0, 0] = 2 * x[:, 0] - 1
    return out


def _poly_p(x, nu):
    return -(2 * np.atleast_2d(x)[:, 0] - 1) / (1 - 2 * nu)


def _poly_f(x, nu):
    x = np.atleast_2d(x)
    out = np.zeros((len(x), 3))
    out[:, 0] = -2.0 - 2.0 / (1 - 2 * nu)
    return out


def _circular_f(x, nu):
    x = np.atleast_2d(x)
    return np.stack([-x[:, 1] - 0.5, x[:, 0] - 0.5, x[:, 0] - 0.5], axis=1)


def _zero_vec(x):
    return np.zeros((len(np.atleast_2d(x)), 3))


def _zero_grad(x):
    return np.zeros((len(np.atleast_2d(x)), 3, 3))


def _zero_p(x, nu):
    return np.zeros(len(np.atleast_2d(x)))


def catalog() -> list[ExactCase]:
    """Edge, corner and corner-edge singular displacements, the smooth
    divergence-free field, a polynomial Galerkin-exactness case and the
    circular force without closed-form solution."""
    return [
        _singular_case("EdgeSing", [(0.5, (0, 1))], EDGE_Z, "edge", PatchKind.EDGE, 4),
        _singular_case("CornerSing", [(1.0 / 3.0, (0, 1, 2))], CORNER, "corner", PatchKind.CORNER, 4),
        _singular_case("CornerEdgeSing", [(1.0 / 3.0, (0, 1, 2)), (0.5, (0, 1))], CORNER + EDGE_Z,
                       "corner-edge", PatchKind.CORNER_EDGE, 5),
        ExactCase("SmoothDivFree", _smooth_u, _smooth_grad, _zero_p, _smooth_f, (), "none",
                  True, PatchKind.UNIFORM, 3),
        ExactCase("PolyExact", _poly_u, _poly_grad, _poly_p, _poly_f, (), "none", True,
                  PatchKind.UNIFORM, 3, incompressible_ok=False),
        ExactCase("CircularForce", _zero_vec, _zero_grad, _zero_p, _circular_f, (), "none", False,
                  PatchKind.ALL_EDGES, 3, g=_zero_vec,
                  notes="no closed form; compared against a refined reference solution"),
    ]


def get_case(name: str) -> ExactCase:
    for case in catalog():
        if case.name.lower() == name.lower():
            return case
    raise KeyError(f"unknown case {name!r}; known: {[c.name for c in catalog()]}")


def fd_forcing(case: ExactCase, x, nu, h: float = 1e-4):
    """-Lap u + grad p by second-order central differences of ``case.u`` and
    ``case.p`` (independent of the analytic forcing)."""
    x = np.atleast_2d(np.asarray(x, float))
    lap = np.zeros((len(x), 3))
    gp = np.zeros((len(x), 3))
    u0 = case.u(x)
    for d in range(3):
        e = np.zeros(3)
        e[d] = h
        lap += (case.u(x + e) - 2 * u0 + case.u(x - e)) / h ** 2
        gp[:, d] = (case.pressure(x + e, nu) - case.pressure(x - e, nu)) / (2 * h)
    return -lap + gp


# -- discrete solutions ------------------------------------------------------

@dataclass
class DiscreteField:
    """A DG solution ``x`` (augmented layout) on ``mesh`` with degree ``dofmap.k``."""
    mesh: object
    dofmap: object
    x: np.ndarray

    def __post_init__(self):
        self.u, self.p, self.r = self.dofmap.split(self.x)
        self._lo, self._hi = self.mesh.lo, self.mesh.hi

    def eval_element(self, e, points, gradients=True):
        """u ``(P, 3)``, grad u ``(P, 3, 3)`` and p ``(P,)`` of element ``e``."""
        box = self.mesh.elements[e]
        V, G = eval_points(self.dofmap.velocity_basis, box, points, gradients)
        Pv, _ = eval_points(self.dofmap.pressure_basis, box, points, gradients=False)
        u = V @ self.u[e].T
        gu = np.einsum("pid,ci->pcd", G, self.u[e]) if gradients else None
        return u, gu, Pv @ self.p[e]

    def locate(self, points, tol: float = 1e-13) -> np.ndarray:
        """Owning element of each point: the lowest index whose closed box
        contains it (so shared boundaries go to the lower index)."""
        points = np.atleast_2d(np.asarray(points, float))
        scale = tol * max(1.0, self.mesh.diameter)
        owner = np.full(len(points), -1)
        for start in range(0, len(points), 4096):
            X = points[start:start + 4096]
            inside = np.all((X[None] >= self._lo[:, None] - scale)
                            & (X[None] <= self._hi[:, None] + scale), axis=2)   # (nel, P)
            hit = inside.any(axis=0)
            owner[start:start + 4096] = np.where(hit, inside.argmax(axis=0), -1)
        if np.any(owner < 0):
            bad = points[np.argmax(owner < 0)]
            raise ValueError(f"point {bad} lies outside the mesh")
        return owner

    def evaluate(self, points):
        """(u, grad u, p) at arbitrary points of the domain."""
        points = np.atleast_2d(np.asarray(points, float))
        owner = self.locate(points)
        u = np.empty((len(points), 3))
        gu = np.empty((len(points), 3, 3))
        p = np.empty(len(points))
        for e in np.unique(owner):
            sel = owner == e
            u[sel], gu[sel], p[sel] = self.eval_element(e, points[sel])
        return u, gu, p


def evaluate_reference(reference: DiscreteField, x):
    """Reference values ``(u, grad u, p)`` at points ``x``."""
    return reference.evaluate(x)


def reference_case(base: ExactCase, reference: DiscreteField) -> ExactCase:
    """Wrap a reference solution as an :class:`ExactCase` usable by :func:`dg_error`."""
    return ExactCase(
        f"{base.name}[ref]",
        lambda x: reference.evaluate(x)[0],
        lambda x: reference.evaluate(x)[1],
        lambda x, nu: reference.evaluate(x)[2],
        base.f, base.singular_set, base.singular_label, True, base.patch, base.root,
        base.incompressible_ok, base.g if base.g is not None else _zero_vec,
        notes="reference solution; interior jumps of the reference are not included")


@dataclass
class ErrorResult:
    dg_error: float
    velocity_h_error: float
    pressure_l2_error: float
    N: int
    level: int
    k: int
    nu: float
    grad_error: float = 0.0
    jump_error: float = 0.0

    def check_identity(self, rtol: float = 1e-12) -> bool:
        lhs = self.dg_error ** 2
        rhs = self.velocity_h_error ** 2 + (2 - 2 * self.nu) * self.pressure_l2_error ** 2
        return abs(lhs - rhs) <= rtol * max(lhs, 1e-300)


def _sub_boxes(lo, hi, flats, depth, reference):
    """Integration boxes covering [lo, hi]: graded toward ``flats``, or cut
    along the reference mesh so that piecewise polynomials are integrated exactly."""
    if reference is None:
        from .fem import graded_boxes
        return graded_boxes(lo, hi, flats, depth)
    rlo, rhi = reference.mesh.lo, reference.mesh.hi
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    blo = np.maximum(rlo, lo)
    bhi = np.minimum(rhi, hi)
    ext = bhi - blo
    flat_axes = hi == lo
    ok = np.all((ext > 0) | (flat_axes & (ext >= 0)), axis=1)
    return [(tuple(a), tuple(b)) for a, b in zip(blo[ok], bhi[ok])]


def _rule(lo, hi, n, flats, depth, reference, max_points=20000):
    return boxes_rule(_sub_boxes(lo, hi, flats, depth, reference), n, max_points)


def dg_error(solution, case: ExactCase, mesh, faces, dofmap, config,
             reference: DiscreteField | None = None, extra_points: int = 0,
             extra_depth: int = 0) -> ErrorResult:
    """DG-norm error of a discrete solution against ``case`` (or a reference).

    Interior faces contribute the penalized jump of u_h alone (the exact field
    is continuous; a reference field's own jumps are ignored), boundary faces
    that of ``g - u_h``.
    """
    if reference is None and not case.has_exact:
        raise ValueError(f"case {case.name!r} has no exact solution; supply a reference")
    if reference is not None:
        case = reference_case(case, reference)
    nu = config.nu
    if reference is None:
        case.check_nu(nu)
    field_h = solution if isinstance(solution, DiscreteField) else DiscreteField(mesh, dofmap, solution)
    flats = tuple(case.singular_set) if reference is None else ()
    depth = (config.singular_depth + extra_depth) if flats else 0
    n = config.rhs_points + extra_points
    grad2 = p2 = 0.0
    for e, box in enumerate(mesh.elements):
        for pts, w in _rule(box.lo, box.hi, n, flats, depth, reference):
            _, gh, ph = field_h.eval_element(e, pts)
            gx = case.grad_u(pts)
            px = case.p(pts, nu) if reference is not None else case.pressure(pts, nu)
            grad2 += float(np.sum(w * np.sum((gx - gh) ** 2, axis=(1, 2))))
            p2 += float(np.sum(w * (px - ph) ** 2))
    jump2 = 0.0
    for face in faces:
        c = config.penalty(face.hperp)
        for pts, w in _rule(face.lo, face.hi, n, flats, depth, None):
            if face.is_boundary:
                uh, _, _ = field_h.eval_element(face.owner, pts, gradients=False)
                jmp = case.dirichlet(pts) - uh
            else:
                ua, _, _ = field_h.eval_element(face.minus, pts, gradients=False)
                ub, _, _ = field_h.eval_element(face.plus, pts, gradients=False)
                jmp = ua - ub
            jump2 += c * float(np.sum(w * np.sum(jmp ** 2, axis=1)))
    vel = np.sqrt(grad2 + jump2)
    pre = np.sqrt(p2)
    dg = np.sqrt(grad2 + jump2 + (2 - 2 * nu) * p2)
    return ErrorResult(float(dg), float(vel), float(pre), dofmap.M + dofmap.N - 1,
                       getattr(mesh, "levels", 0), dofmap.k, nu, float(np.sqrt(grad2)),
                       float(np.sqrt(jump2)))


# -- solves and studies -------------------------------------------------------

@dataclass
class SolveResult:
    field: DiscreteField
    faces: object
    config: object
    report: object
    residual: float
    multiplier: float
    pressure_mean: float
    method: str
    seconds: float


def solve_case(mesh, case: ExactCase, config, solve_config=None) -> SolveResult:
    """Assemble and solve the augmented system for ``case`` on ``mesh``."""
    from .assembly import assemble_augmented, assemble_blocks, assemble_rhs
    from .mesh import extract_faces
    from .solver import SolveConfig, gmres_solve
    from .spaces import build_dofmap

    t0 = time.perf_counter()
    case.check_nu(config.nu)
    faces = extract_faces(mesh)
    dm = build_dofmap(mesh, config.k)
    blocks = assemble_blocks(mesh, faces, dm, config)
    K = assemble_augmented(blocks)
    F = assemble_rhs(mesh, faces, dm, config, case)
    x, report = gmres_solve(K, F, solve_config or SolveConfig(), blocks=blocks, nv=dm.nv)
    res = float(np.linalg.norm(F - K @ x))
    _, p, r = dm.split(x)
    mean = float(blocks.m @ x[dm.M: dm.M + dm.N])
    return SolveResult(DiscreteField(mesh, dm, x), faces, config, report, res, r, mean,
                       "gmres", time.perf_counter() - t0)


STUDY_FIELDS = ("case", "nu", "patch", "k", "levels", "N", "dg_error", "vel_error", "pre_error",
                "gmres_iters", "seconds", "dg_error_quad_check")


def _study_row(case, nu, mesh, res: SolveResult, err: ErrorResult, check: float | None):
    return {"case": case.name, "nu": nu, "patch": mesh.kind.value, "k": res.config.k,
            "levels": mesh.levels, "N": err.N, "dg_error": err.dg_error,
            "vel_error": err.velocity_h_error, "pre_error": err.pressure_l2_error,
            "gmres_iters": res.report.iterations, "seconds": res.seconds,
            "dg_error_quad_check": check if check is not None else float("nan")}


def _run_cell(case, nu, mesh, k, base, solve_config, quad_check, reference=None):
    from dataclasses import replace
    from .solver import SolverError
    cfg = replace(base, k=k, nu=nu)
    try:
        res = solve_case(mesh, case, cfg, solve_config)
    except SolverError as exc:
        return {"case": case.name, "nu": nu, "patch": mesh.kind.value, "k": k,
                "levels": mesh.levels, "N": float("nan"), "dg_error": float("nan"),
                "vel_error": float("nan"), "pre_error": float("nan"),
                "gmres_iters": exc.report.iterations if exc.report else -1,
                "seconds": float("nan"), "dg_error_quad_check": float("nan"),
                "error": str(exc)}
    err = dg_error(res.field, case, mesh, res.faces, res.field.dofmap, cfg, reference)
    check = None
    if quad_check:
        check = dg_error(res.field, case, mesh, res.faces, res.field.dofmap, cfg, reference,
                         extra_points=2, extra_depth=8).dg_error
    return _study_row(case, nu, mesh, res, err, check)


def convergence_study(case: ExactCase, nus, max_level: int, config=None, solve_config=None,
                      min_level: int = 0, sigma: float = 0.5, quad_check: bool = True,
                      reference: DiscreteField | None = None, progress=None) -> list[dict]:
    """Rows for levels ``min_level..max_level`` with k = level + 1 on the
    patch matching the case's singular set."""
    from .assembly import DGConfig
    from .mesh import build_patch_mesh
    if max_level < min_level:
        raise ValueError("empty level range")
    base = config or DGConfig()
    rows = []
    for nu in nus:
        for lev in range(min_level, max_level + 1):
            mesh = build_patch_mesh(case.patch, sigma, lev)
            row = _run_cell(case, nu, mesh, lev + 1, base, solve_config, quad_check, reference)
            rows.append(row)
            if progress:
                progress(row)
    rows.sort(key=lambda r: (r["case"], r["nu"], r["levels"], r["k"]))
    return rows


def degree_study(case: ExactCase, nus, ks, patch="uniform", levels: int = 2, config=None,
                 solve_config=None, sigma: float = 0.5, quad_check: bool = False,
                 progress=None) -> list[dict]:
    """Fixed mesh, increasing k (the p-version sweep)."""
    from .assembly import DGConfig
    from .mesh import build_patch_mesh
    ks = list(ks)
    if not ks:
        raise ValueError("empty degree range")
    base = config or DGConfig()
    mesh = build_patch_mesh(patch, sigma, levels)
    rows = []
    for nu in nus:
        for k in ks:
            row = _run_cell(case, nu, mesh, k, base, solve_config, quad_check)
            rows.append(row)
            if progress:
                progress(row)
    rows.sort(key=lambda r: (r["case"], r["nu"], r["k"]))
    return rows


@dataclass
class RateFit:
    slope: float          # d log(error) / d N^(1/root); the rate b is -slope
    intercept: float
    r2: float
    root: int
    points: int

    @property
    def b(self) -> float:
        return -self.slope


def fit_rate(rows, root: int, min_level: int = 2, x_key: str = "N") -> RateFit:
    """Least-squares fit of log(dg_error) against N^(1/root) over rows with
    level >= min_level."""
    sel = [r for r in rows if r["levels"] >= min_level and np.isfinite(r["dg_error"])]
    if len(sel) < 2:
        return RateFit(float("nan"), float("nan"), float("nan"), root, len(sel))
    x = np.array([float(r[x_key]) ** (1.0 / root) for r in sel])
    y = np.log([r["dg_error"] for r in sel])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, root, len(sel))
