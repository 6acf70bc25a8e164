"""Gauss-Legendre rules and tensor Lagrange bases on axis-parallel boxes."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Box3, Face, MeshError

MAX_GAUSS_POINTS = 64


@dataclass(frozen=True)
class GaussRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(n: int) -> GaussRule:
    """n-point Gauss-Legendre rule on [-1, 1]."""
    if int(n) != n or n < 1:
        raise ValueError(f"Gauss rule needs n >= 1, got {n}")
    if n > MAX_GAUSS_POINTS:
        raise ValueError(f"Gauss rules are limited to {MAX_GAUSS_POINTS} points")
    if n == 1:
        return GaussRule(1, np.zeros(1), np.full(1, 2.0))
    x, w = _gauss(int(n))
    return GaussRule(int(n), x, w)


def lagrange_1d(nodes, x):
    """Values and derivatives of the Lagrange polynomials on ``nodes`` at ``x``.

    Returns arrays of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, float)
    x = np.atleast_1d(np.asarray(x, float))
    n = len(nodes)
    diff = x[:, None] - nodes[None, :]                 # (p, n)
    denom = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(denom, 1.0)
    inv = 1.0 / denom                                  # inv[i, j] = 1/(x_i - x_j), i != j
    np.fill_diagonal(inv, 0.0)
    vals = np.empty((len(x), n))
    ders = np.zeros((len(x), n))
    for i in range(n):
        fac = diff * inv[i][None, :]                   # (x - x_j)/(x_i - x_j)
        fac[:, i] = 1.0
        vals[:, i] = np.prod(fac, axis=1)
        for m in range(n):
            if m == i:
                continue
            f2 = fac.copy()
            f2[:, m] = inv[i, m]
            ders[:, i] += np.prod(f2, axis=1)
    return vals, ders


@dataclass(frozen=True)
class TensorBasis:
    """Tensor Lagrange basis of per-axis degree ``degree`` interpolating at the
    Gauss points of count ``degree + 1``.  Shape function ``(i0, i1, i2)`` has
    flat index ``(i0 * n + i1) * n + i2``."""
    degree: int

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be non-negative")

    @property
    def n1d(self) -> int:
        return self.degree + 1

    @property
    def size(self) -> int:
        return self.n1d ** 3

    @property
    def nodes(self) -> np.ndarray:
        return gauss_rule(self.n1d).nodes

    def eval_1d(self, xi):
        return lagrange_1d(self.nodes, xi)


@dataclass
class EvalTable:
    """Basis values on a point set: ``values[q, i]``, ``grads[q, i, d]``."""
    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    grads: np.ndarray


def _to_ref(box: Box3, axis: int, x):
    lo, hi = box.lo[axis], box.hi[axis]
    return (2.0 * np.asarray(x, float) - (lo + hi)) / (hi - lo)


def tensor_eval(basis: TensorBasis, box: Box3, axis_points, axis_weights=None,
                gradients: bool = True) -> EvalTable:
    """Evaluate ``basis`` on ``box`` at the tensor grid of physical per-axis
    coordinates ``axis_points``; weights are the tensor product of
    ``axis_weights`` (physical)."""
    size = box.size
    if np.any(size <= 0):
        raise MeshError("degenerate element")
    v, dv = [], []
    for a in range(3):
        xi = _to_ref(box, a, axis_points[a])
        va, da = basis.eval_1d(xi)
        v.append(va)
        dv.append(da * (2.0 / size[a]))
    n0, n1, n2 = (len(p) for p in axis_points)
    nb = basis.size
    values = np.einsum("ai,bj,ck->abcijk", v[0], v[1], v[2]).reshape(n0 * n1 * n2, nb)
    grads = None
    if gradients:
        grads = np.empty((n0 * n1 * n2, nb, 3))
        grads[:, :, 0] = np.einsum("ai,bj,ck->abcijk", dv[0], v[1], v[2]).reshape(-1, nb)
        grads[:, :, 1] = np.einsum("ai,bj,ck->abcijk", v[0], dv[1], v[2]).reshape(-1, nb)
        grads[:, :, 2] = np.einsum("ai,bj,ck->abcijk", v[0], v[1], dv[2]).reshape(-1, nb)
    P = np.stack(np.meshgrid(*axis_points, indexing="ij"), axis=-1).reshape(-1, 3)
    if axis_weights is None:
        W = np.ones(len(P))
    else:
        W = np.einsum("a,b,c->abc", *axis_weights).ravel()
    return EvalTable(P, W, values, grads)


def box_rule(lo, hi, rule: GaussRule):
    """Per-axis physical Gauss points/weights on ``[lo, hi]``; a degenerate
    axis gets the single point ``lo`` with weight 1."""
    pts, wts = [], []
    for a in range(3):
        h = hi[a] - lo[a]
        if h == 0:
            pts.append(np.array([float(lo[a])]))
            wts.append(np.ones(1))
        else:
            pts.append(0.5 * (lo[a] + hi[a]) + 0.5 * h * rule.nodes)
            wts.append(0.5 * h * rule.weights)
    return pts, wts


def eval_basis(basis: TensorBasis, element: Box3, rule: GaussRule) -> EvalTable:
    """Physical values/gradients at the tensor Gauss points of ``element``."""
    pts, wts = box_rule(element.lo, element.hi, rule)
    return tensor_eval(basis, element, pts, wts)


def trace_basis(basis: TensorBasis, element: Box3, face: Face, rule: GaussRule) -> EvalTable:
    """Values and full gradients of the element basis at the Gauss points of the
    face rectangle (which may be a strict part of the element facet)."""
    d = face.axis
    tol = 1e-12 * max(1.0, float(np.max(np.abs(element.size))))
    on_plane = abs(element.lo[d] - face.coord) <= tol or abs(element.hi[d] - face.coord) <= tol
    inside = all(element.lo[a] - tol <= face.lo[a] and face.hi[a] <= element.hi[a] + tol
                 for a in face.tangential_axes)
    if not (on_plane and inside):
        raise MeshError("face does not lie on the element boundary")
    pts, wts = box_rule(face.lo, face.hi, rule)
    return tensor_eval(basis, element, pts, wts)


def interpolate(basis: TensorBasis, element: Box3, func) -> np.ndarray:
    """Nodal interpolation coefficients of ``func`` (vectorised over points,
    returning shape ``(npts,)`` or ``(npts, m)``)."""
    pts, _ = box_rule(element.lo, element.hi, gauss_rule(basis.n1d))
    P = np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1).reshape(-1, 3)
    return np.asarray(func(P))


def eval_points(basis: TensorBasis, element: Box3, points, gradients: bool = True):
    """Values ``(P, nb)`` and gradients ``(P, nb, 3)`` at arbitrary points."""
    points = np.atleast_2d(np.asarray(points, float))
    size = element.size
    v, dv = [], []
    for a in range(3):
        va, da = basis.eval_1d(_to_ref(element, a, points[:, a]))
        v.append(va)
        dv.append(da * (2.0 / size[a]))
    P, nb = len(points), basis.size
    values = np.einsum("pi,pj,pk->pijk", v[0], v[1], v[2]).reshape(P, nb)
    if not gradients:
        return values, None
    grads = np.empty((P, nb, 3))
    grads[:, :, 0] = np.einsum("pi,pj,pk->pijk", dv[0], v[1], v[2]).reshape(P, nb)
    grads[:, :, 1] = np.einsum("pi,pj,pk->pijk", v[0], dv[1], v[2]).reshape(P, nb)
    grads[:, :, 2] = np.einsum("pi,pj,pk->pijk", v[0], v[1], dv[2]).reshape(P, nb)
    return values, grads


# A singular "flat" is (point, free_axes): the point itself when free_axes is
# empty, or the axis-parallel line through it along the free axes.

def _touches(lo, hi, flat):
    pt, free = flat
    return all(lo[a] <= pt[a] <= hi[a] for a in range(3) if a not in free)


def graded_boxes(lo, hi, flats=(), depth: int = 0):
    """Recursively bisect ``[lo, hi]`` toward the singular ``flats``.

    Only the constrained axes of the touched flats are bisected, and only
    children still touching a flat are refined further.  Degenerate axes
    (face rectangles) are never split.
    """
    lo, hi = tuple(map(float, lo)), tuple(map(float, hi))
    touched = [f for f in flats if _touches(lo, hi, f)]
    if depth <= 0 or not touched:
        return [(lo, hi)]
    axes = sorted({a for pt, free in touched for a in range(3) if a not in free and hi[a] > lo[a]})
    if not axes:
        return [(lo, hi)]
    out = []
    for bits in np.ndindex(*(2,) * len(axes)):
        clo, chi = list(lo), list(hi)
        for a, b in zip(axes, bits):
            mid = 0.5 * (lo[a] + hi[a])
            if b:
                clo[a] = mid
            else:
                chi[a] = mid
        out.extend(graded_boxes(clo, chi, flats, depth - 1))
    return out


def boxes_rule(boxes, n: int, max_points: int | None = None):
    """Tensor Gauss rule with ``n`` points per axis on each of ``boxes``.

    Yields ``(points, weights)`` batches of at most about ``max_points``
    points (a single batch when ``max_points`` is None).
    """
    rule = gauss_rule(n)
    pts, wts, count = [], [], 0
    for blo, bhi in boxes:
        ax, aw = box_rule(blo, bhi, rule)
        pts.append(np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3))
        wts.append(np.einsum("a,b,c->abc", *aw).ravel())
        count += len(wts[-1])
        if max_points is not None and count >= max_points:
            yield np.concatenate(pts), np.concatenate(wts)
            pts, wts, count = [], [], 0
    if pts:
        yield np.concatenate(pts), np.concatenate(wts)


def composite_rule(lo, hi, n: int, flats=(), depth: int = 0):
    """Points ``(P, 3)`` and weights of a tensor Gauss rule with ``n`` points per
    axis, applied on every box of :func:`graded_boxes`."""
    return next(boxes_rule(graded_boxes(lo, hi, flats, depth), n))


def composite_batches(lo, hi, n: int, flats=(), depth: int = 0, max_points: int = 20000):
    """:func:`composite_rule` split into batches of bounded size."""
    return boxes_rule(graded_boxes(lo, hi, flats, depth), n, max_points)
