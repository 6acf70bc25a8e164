import numpy as np
import pytest
from hypothesis import given, strategies as st

from hexdg.assembly import DGConfig
from hexdg.fem import composite_rule, gauss_rule
from hexdg.mesh import Box3, build_patch_mesh, extract_faces, mesh_from_boxes
from hexdg.problems import (STUDY_FIELDS, DiscreteField, ErrorResult, ExactCase,
                            RestrictedCaseError, catalog, convergence_study, degree_study, dg_error,
                            evaluate_reference, fd_forcing, fit_rate, get_case, solve_case)
from hexdg.spaces import build_dofmap

SINGULAR = ("EdgeSing", "CornerSing", "CornerEdgeSing")


def away_points(case, rng, n=50):
    """Random interior points at distance >= 0.1 from the singular set."""
    out = []
    while len(out) < n:
        x = rng.uniform(0.02, 0.98, 3)
        d = [np.linalg.norm([x[a] for a in range(3) if a not in free]) for _, free in case.singular_set]
        if not d or min(d) >= 0.1:
            out.append(x)
    return np.array(out)


def cube_rule(n=24):
    r = gauss_rule(n)
    t = 0.5 * (r.nodes + 1)
    w = 0.5 * r.weights
    X = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    return X, np.einsum("a,b,c->abc", w, w, w).ravel()


# -- catalog ----------------------------------------------------------------------

def test_catalog_names():
    names = [c.name for c in catalog()]
    assert names == ["EdgeSing", "CornerSing", "CornerEdgeSing", "SmoothDivFree", "PolyExact",
                     "CircularForce"]
    assert [c.has_exact for c in catalog()] == [True] * 5 + [False]
    assert get_case("edgesing").name == "EdgeSing"
    with pytest.raises(KeyError, match="unknown case"):
        get_case("nope")


def test_singular_formulas(rng):
    x = rng.uniform(0.05, 1, (20, 3))
    r2, R2 = x[:, 0] ** 2 + x[:, 1] ** 2, np.sum(x ** 2, 1)
    bub = x[:, 2] * (1 - x[:, 2])
    expect = {"EdgeSing": r2 ** 0.25 * bub, "CornerSing": R2 ** (1 / 6) * bub,
              "CornerEdgeSing": R2 ** (1 / 6) * r2 ** 0.25 * bub}
    for name, u3 in expect.items():
        u = get_case(name).u(x)
        assert np.allclose(u[:, 2], u3, rtol=1e-14)
        assert np.all(u[:, :2] == 0)


def test_smooth_divergence_free(rng):
    g = get_case("SmoothDivFree").grad_u(rng.uniform(0, 1, (100, 3)))
    assert np.abs(np.trace(g, axis1=1, axis2=2)).max() <= 1e-13


@pytest.mark.parametrize("name", SINGULAR + ("SmoothDivFree", "PolyExact"))
def test_normal_component_vanishes(name, rng):
    case = get_case(name)
    for axis in range(3):
        for side in (0.0, 1.0):
            x = rng.uniform(0, 1, (40, 3))
            x[:, axis] = side
            assert np.abs(case.u(x)[:, axis]).max() <= 1e-15


@pytest.mark.parametrize("nu", [0.125, 0.25, 0.375])
def test_poly_exact_constitutive_identity(nu, rng):
    c = get_case("PolyExact")
    x = rng.uniform(0, 1, (30, 3))
    div = np.trace(c.grad_u(x), axis1=1, axis2=2)
    assert np.abs(div + (1 - 2 * nu) * c.pressure(x, nu)).max() <= 1e-14
    assert np.allclose(c.forcing(x, nu)[:, 0], -2 - 2 / (1 - 2 * nu))


@pytest.mark.parametrize("name", SINGULAR)
def test_singular_pressure_is_scaled_divergence(name, rng):
    c = get_case(name)
    x = rng.uniform(0.1, 1, (30, 3))
    div = np.trace(c.grad_u(x), axis1=1, axis2=2)
    assert np.allclose(c.pressure(x, 0.375), -div / 0.25, rtol=1e-13)


@pytest.mark.parametrize("case", [c for c in catalog() if c.has_exact], ids=lambda c: c.name)
@pytest.mark.parametrize("nu", [0.125, 0.375, 0.5])
def test_forcing_matches_finite_differences(case, nu, rng):
    if nu == 0.5 and not case.incompressible_ok:
        pytest.skip("case restricted to nu < 1/2")
    x = away_points(case, rng)
    f, g = case.forcing(x, nu), fd_forcing(case, x, nu)
    assert np.abs(f - g).max() <= 1e-5 * np.abs(f).max()


def test_grad_matches_finite_differences(rng):
    h = 1e-6
    for case in catalog():
        x = away_points(case, rng, 10)
        g = case.grad_u(x)
        for d in range(3):
            e = np.zeros(3)
            e[d] = h
            fd = (case.u(x + e) - case.u(x - e)) / (2 * h)
            assert np.abs(fd - g[:, :, d]).max() <= 1e-6 * max(1.0, np.abs(g).max())


@pytest.mark.parametrize("case", catalog(), ids=lambda c: c.name)
def test_pressure_mean_zero(case):
    nu = 0.375
    X, w = composite_rule((0, 0, 0), (1, 1, 1), 10, case.singular_set, 30)
    assert abs(w @ case.pressure(X, nu)) <= 1e-10


@pytest.mark.parametrize("name", SINGULAR + ("PolyExact",))
def test_restricted_at_incompressible_limit(name):
    with pytest.raises(RestrictedCaseError, match="incompressible"):
        get_case(name).pressure(np.zeros((1, 3)) + 0.5, 0.5)


@pytest.mark.parametrize("nu", [0.0, -0.1, 0.51])
def test_nu_range(nu):
    with pytest.raises(ValueError):
        get_case("SmoothDivFree").forcing(np.zeros((1, 3)), nu)


def test_circular_force():
    c = get_case("CircularForce")
    f = c.forcing(np.array([[0.2, 0.3, 0.4]]), 0.5)
    assert np.allclose(f, [[-0.8, -0.3, -0.3]])
    assert np.all(c.dirichlet(np.ones((2, 3))) == 0)


# -- errors -------------------------------------------------------------------------

def solved(case="PolyExact", kind="uniform", levels=0, k=2, nu=0.25):
    m = build_patch_mesh(kind, 0.5, levels)
    cfg = DGConfig(k=k, nu=nu)
    res = solve_case(m, get_case(case), cfg)
    return m, cfg, res


@pytest.mark.parametrize("levels", [0, 1])
@pytest.mark.parametrize("nu", [0.125, 0.25, 0.375])
def test_galerkin_exactness(levels, nu):
    m, cfg, res = solved(levels=levels, nu=nu)
    err = dg_error(res.field, get_case("PolyExact"), m, res.faces, res.field.dofmap, cfg)
    assert err.dg_error <= 1e-8
    assert abs(res.multiplier) <= 1e-10 and abs(res.pressure_mean) <= 1e-10


def test_zero_solution_against_smooth_field():
    case = get_case("SmoothDivFree")
    m = build_patch_mesh("uniform", 0.5, 1)
    f = extract_faces(m)
    dm = build_dofmap(m, 2)
    cfg = DGConfig(k=2, nu=0.375)
    X, w = cube_rule()
    ref = w @ np.sum(case.grad_u(X) ** 2, axis=(1, 2))   # g = 0, p = 0
    err = dg_error(np.zeros(dm.total), case, m, f, dm, cfg)
    assert err.dg_error ** 2 == pytest.approx(ref, rel=1e-6)
    err = dg_error(np.zeros(dm.total), case, m, f, dm, cfg, extra_points=8)
    assert err.dg_error ** 2 == pytest.approx(ref, rel=1e-12)
    assert err.jump_error <= 1e-14 and err.pressure_l2_error == 0
    assert err.check_identity()


def test_error_identity_after_solve():
    m, cfg, res = solved("EdgeSing", "edge", 1, 2, 0.375)
    err = dg_error(res.field, get_case("EdgeSing"), m, res.faces, res.field.dofmap, cfg)
    assert err.check_identity(1e-12)
    assert err.N == res.field.dofmap.M + res.field.dofmap.N - 1


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 0.5))
def test_error_result_identity_property(v, p, nu):
    dg = np.sqrt(v * v + (2 - 2 * nu) * p * p)
    assert ErrorResult(dg, v, p, 1, 0, 1, nu).check_identity(1e-12)


def test_dg_error_needs_exact_or_reference():
    m, cfg, res = solved()
    with pytest.raises(ValueError, match="reference"):
        dg_error(res.field, get_case("CircularForce"), m, res.faces, res.field.dofmap, cfg)


def test_zero_data_gives_zero_solution():
    zero = ExactCase("Zero", *(lambda x: np.zeros((len(x), 3)),
                               lambda x: np.zeros((len(x), 3, 3)),
                               lambda x, nu: np.zeros(len(x)),
                               lambda x, nu: np.zeros((len(x), 3))))
    m = build_patch_mesh("corner", 0.5, 1)
    res = solve_case(m, zero, DGConfig(k=2, nu=0.5))
    assert np.abs(res.field.x).max() == 0.0


# -- reference fields ----------------------------------------------------------------

def test_reference_constant_field(rng):
    m = build_patch_mesh("corner", 0.5, 2)
    dm = build_dofmap(m, 2)
    x = np.zeros(dm.total)
    u, p, _ = dm.split(x)
    x[: dm.M].reshape(u.shape)[:, 1, :] = 3.0
    x[dm.M: dm.M + dm.N] = -2.0
    fld = DiscreteField(m, dm, x)
    pts = rng.uniform(0, 1, (200, 3))
    uu, gu, pp = evaluate_reference(fld, pts)
    assert np.allclose(uu, [0, 3, 0]) and np.allclose(pp, -2) and np.abs(gu).max() <= 1e-12


def test_reference_at_quadrature_points(rng):
    m, cfg, res = solved("SmoothDivFree", levels=1, k=3, nu=0.375)
    fld = res.field
    e = 5
    box = m.elements[e]
    pts = box.center + 0.3 * box.size * rng.uniform(-1, 1, (20, 3))
    direct = fld.eval_element(e, pts)
    via = evaluate_reference(fld, pts)
    for a, b in zip(direct, via):
        assert np.abs(a - b).max() <= 1e-13


def test_reference_tie_break():
    m = mesh_from_boxes([Box3((0.5, 0, 0), (1, 1, 1)), Box3((0, 0, 0), (0.5, 1, 1))])
    dm = build_dofmap(m, 1)
    x = np.zeros(dm.total)
    x[: dm.M].reshape(2, 3, dm.nv)[0, 0] = 1.0      # element 0 (right half): u_x = 1
    x[: dm.M].reshape(2, 3, dm.nv)[1, 0] = 2.0      # element 1 (left half): u_x = 2
    fld = DiscreteField(m, dm, x)
    pts = np.array([[0.5, 0.3, 0.3], [0.25, 0.5, 0.5], [0.75, 0.5, 0.5]])
    assert list(fld.locate(pts)) == [0, 1, 0]
    assert np.allclose(fld.evaluate(pts)[0][:, 0], [1, 2, 1])
    with pytest.raises(ValueError, match="outside"):
        fld.locate([[1.5, 0.5, 0.5]])


def test_reference_error_of_itself_is_boundary_only():
    m, cfg, res = solved("SmoothDivFree", levels=1, k=2, nu=0.375)
    err = dg_error(res.field, get_case("CircularForce"), m, res.faces, res.field.dofmap, cfg,
                   reference=res.field)
    assert err.grad_error <= 1e-12 and err.pressure_l2_error <= 1e-12
    own = dg_error(res.field, get_case("SmoothDivFree"), m, res.faces, res.field.dofmap, cfg)
    assert err.jump_error > 0 and err.jump_error < own.jump_error * 10


# -- studies -------------------------------------------------------------------------

def test_convergence_level_zero():
    rows = convergence_study(get_case("EdgeSing"), [0.375], 0, quad_check=False)
    assert len(rows) == 1 and rows[0]["k"] == 1 and rows[0]["levels"] == 0
    assert set(STUDY_FIELDS) <= set(rows[0])


def test_convergence_rows_sorted():
    rows = convergence_study(get_case("CornerSing"), [0.375, 0.125], 1, quad_check=True)
    assert [(r["nu"], r["levels"]) for r in rows] == [(0.125, 0), (0.125, 1), (0.375, 0), (0.375, 1)]
    for r in rows:
        assert abs(r["dg_error_quad_check"] - r["dg_error"]) <= 1e-6 * r["dg_error"]


def test_empty_ranges():
    with pytest.raises(ValueError):
        convergence_study(get_case("EdgeSing"), [0.375], 1, min_level=2)
    with pytest.raises(ValueError):
        degree_study(get_case("SmoothDivFree"), [0.375], [])


def test_degree_study_nu_robust():
    rows = degree_study(get_case("SmoothDivFree"), [0.375, 0.5], [1, 2, 3], levels=1)
    err = {(r["nu"], r["k"]): r["dg_error"] for r in rows}
    for k in (1, 2, 3):
        assert err[(0.5, k)] / err[(0.375, k)] <= 2
    assert err[(0.375, 3)] < err[(0.375, 2)] < err[(0.375, 1)]


def test_fit_rate_synthetic():
    rows = [{"levels": l, "N": n, "dg_error": 3.0 * np.exp(-0.7 * n ** 0.25)}
            for l, n in enumerate([10, 100, 1000, 5000, 20000])]
    fit = fit_rate(rows, 4)
    assert fit.points == 3 and fit.b == pytest.approx(0.7, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert np.isnan(fit_rate(rows[:3], 4).slope)
