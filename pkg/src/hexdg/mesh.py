"""Geometric hexahedral patch meshes and their smallest faces.

Every mesh lives on axis-parallel boxes.  The canonical patches sit in the
unit cube with the singular support attached to the origin:

* ``edge``: the edge ``x = y = 0`` (running along ``z``),
* ``corner``: the vertex ``(0, 0, 0)``,
* ``corner_edge``: the vertex together with the edge along ``z``,
* ``corner_all_edges``: the vertex together with all three incident edges.

``fichera`` glues seven unit cubes into ``(-1, 1)^3 minus [0, 1)^3`` and refines
the reentrant vertex and its three edges.  ``all_edges`` refines every edge and
vertex of the unit cube (used for reference solutions).
"""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class PatchKind(str, enum.Enum):
    UNIFORM = "uniform"
    EDGE = "edge"
    CORNER = "corner"
    CORNER_EDGE = "corner_edge"
    CORNER_ALL_EDGES = "corner_all_edges"
    FICHERA = "fichera"
    ALL_EDGES = "all_edges"

    @classmethod
    def parse(cls, value: "str | PatchKind") -> "PatchKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for kind in cls:
            if kind.value == key or kind.name.lower() == key:
                return kind
        raise MeshError(f"unknown patch kind {value!r}")


@dataclass(frozen=True)
class Box3:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise MeshError("Box3 needs three coordinates per corner")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise MeshError(f"degenerate box {self.lo} .. {self.hi}")

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.hi, float) - np.asarray(self.lo, float)

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo, float) + np.asarray(self.hi, float))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))


@dataclass
class GeometricMesh:
    elements: list[Box3]
    sigma: float
    levels: int
    kind: PatchKind
    domain: list[Box3]

    def __len__(self):
        return len(self.elements)

    @property
    def lo(self) -> np.ndarray:
        return np.array([e.lo for e in self.elements], float)

    @property
    def hi(self) -> np.ndarray:
        return np.array([e.hi for e in self.elements], float)

    @property
    def volume(self) -> float:
        return float(sum(b.volume for b in self.domain))

    @property
    def diameter(self) -> float:
        lo = np.min([b.lo for b in self.domain], axis=0)
        hi = np.max([b.hi for b in self.domain], axis=0)
        return float(np.linalg.norm(hi - lo))

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "sigma": self.sigma,
            "levels": self.levels,
            "elements": [{"lo": list(e.lo), "hi": list(e.hi)} for e in self.elements],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, data: dict) -> "GeometricMesh":
        kind = PatchKind.parse(data["kind"])
        elements = [Box3(tuple(e["lo"]), tuple(e["hi"])) for e in data["elements"]]
        return cls(elements, float(data["sigma"]), int(data["levels"]), kind,
                   _macro_boxes(kind))

    @classmethod
    def load(cls, path) -> "GeometricMesh":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# patch construction in reference coordinates

def _split(lo, hi, axes, sigma):
    """Split ``[lo, hi]`` at ratio sigma (measured from ``lo``) along ``axes``.

    Yields ``(bits, lo, hi)`` where ``bits[a] = 1`` marks the far half.
    """
    for bits in itertools.product((0, 1), repeat=len(axes)):
        clo, chi = list(lo), list(hi)
        for a, b in zip(axes, bits):
            cut = lo[a] + sigma * (hi[a] - lo[a])
            if b:
                clo[a] = cut
            else:
                chi[a] = cut
        full = [0, 0, 0]
        for a, b in zip(axes, bits):
            full[a] = b
        yield tuple(full), tuple(clo), tuple(chi)


def _edge_boxes(lo, hi, axis, sigma, levels):
    """Edge patch: 2-D geometric refinement toward the edge at ``lo`` in the
    two axes transverse to ``axis``, extruded along ``axis``."""
    cross = [a for a in range(3) if a != axis]
    out = []
    cur_lo, cur_hi = tuple(lo), tuple(hi)
    for _ in range(levels):
        children = list(_split(cur_lo, cur_hi, cross, sigma))
        inner = None
        for bits, clo, chi in children:
            if not any(bits):
                inner = (clo, chi)
            else:
                out.append((clo, chi))
        cur_lo, cur_hi = inner
    out.append((cur_lo, cur_hi))
    return out


def _corner_boxes(lo, hi, edges, sigma, levels):
    """Corner patch toward ``lo`` with edge refinement along each axis in
    ``edges`` (edges emanate from the corner)."""
    if levels == 0:
        return [(tuple(lo), tuple(hi))]
    out = []
    tail = None
    for bits, clo, chi in _split(lo, hi, (0, 1, 2), sigma):
        far = [a for a in range(3) if bits[a]]
        if not far:
            tail = _corner_boxes(clo, chi, edges, sigma, levels - 1)
        elif len(far) == 1 and far[0] in edges:
            out.extend(_edge_boxes(clo, chi, far[0], sigma, levels - 1))
        else:
            out.append((clo, chi))
    return tail + out


def _uniform_boxes(lo, hi, levels):
    n = 2 ** levels
    xs = [np.linspace(lo[a], hi[a], n + 1) for a in range(3)]
    out = []
    for i, j, l in itertools.product(range(n), repeat=3):
        out.append(((xs[0][i], xs[1][j], xs[2][l]), (xs[0][i + 1], xs[1][j + 1], xs[2][l + 1])))
    return out


def _place(boxes, origin, signs):
    """Map reference boxes in [0,1]^3 by x -> origin + signs * x."""
    out = []
    for lo, hi in boxes:
        a = [origin[d] + signs[d] * lo[d] for d in range(3)]
        b = [origin[d] + signs[d] * hi[d] for d in range(3)]
        out.append(Box3(tuple(float(min(p, q)) for p, q in zip(a, b)),
                        tuple(float(max(p, q)) for p, q in zip(a, b))))
    return out


def _fichera_octants():
    for signs in itertools.product((-1, 1), repeat=3):
        if signs != (1, 1, 1):
            yield signs


def _macro_boxes(kind: PatchKind) -> list[Box3]:
    if kind is PatchKind.FICHERA:
        return [Box3(tuple(min(0.0, s) for s in sg), tuple(max(0.0, s) for s in sg))
                for sg in _fichera_octants()]
    return [Box3((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))]


def build_patch_mesh(kind, sigma: float = 0.5, levels: int = 0) -> GeometricMesh:
    """Build the geometric mesh of the given patch kind after ``levels``
    refinement steps at ratio ``sigma``."""
    kind = PatchKind.parse(kind)
    if not (0.0 < sigma < 1.0):
        raise MeshError(f"sigma must lie in (0, 1), got {sigma}")
    if int(levels) != levels or levels < 0:
        raise MeshError(f"levels must be a non-negative integer, got {levels}")
    levels = int(levels)
    unit = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    ident = ((0.0, 0.0, 0.0), (1, 1, 1))

    if kind is PatchKind.UNIFORM:
        elements = _place(_uniform_boxes(*unit, levels), *ident)
    elif kind is PatchKind.EDGE:
        elements = _place(_edge_boxes(*unit, 2, sigma, levels), *ident)
    elif kind is PatchKind.CORNER:
        elements = _place(_corner_boxes(*unit, (), sigma, levels), *ident)
    elif kind is PatchKind.CORNER_EDGE:
        elements = _place(_corner_boxes(*unit, (2,), sigma, levels), *ident)
    elif kind is PatchKind.CORNER_ALL_EDGES:
        elements = _place(_corner_boxes(*unit, (0, 1, 2), sigma, levels), *ident)
    elif kind is PatchKind.FICHERA:
        elements = []
        for signs in _fichera_octants():
            edges = tuple(a for a in range(3) if signs[a] > 0)
            ref = _corner_boxes(*unit, edges, sigma, levels)
            elements.extend(_place(ref, (0.0, 0.0, 0.0), signs))
    elif kind is PatchKind.ALL_EDGES:
        if levels == 0:
            elements = _place([unit], *ident)
        else:
            # eight half-size octants, each refined toward its outer cube vertex
            elements = []
            for bits in itertools.product((0, 1), repeat=3):
                origin = tuple(float(b) for b in bits)
                signs = tuple(0.5 if b == 0 else -0.5 for b in bits)
                ref = _corner_boxes(*unit, (0, 1, 2), sigma, levels - 1)
                elements.extend(_place(ref, origin, signs))
    else:  # pragma: no cover
        raise MeshError(f"unknown patch kind {kind}")
    return GeometricMesh(elements, float(sigma), levels, kind, _macro_boxes(kind))


def mesh_from_boxes(boxes, kind=PatchKind.UNIFORM, sigma=0.5, levels=0, domain=None) -> GeometricMesh:
    """Wrap explicit boxes (given as Box3 or ``(lo, hi)`` pairs) as a mesh."""
    elements = [b if isinstance(b, Box3) else Box3(tuple(map(float, b[0])), tuple(map(float, b[1])))
                for b in boxes]
    if domain is None:
        lo = tuple(np.min([e.lo for e in elements], axis=0))
        hi = tuple(np.max([e.hi for e in elements], axis=0))
        domain = [Box3(lo, hi)]
    return GeometricMesh(elements, sigma, levels, PatchKind.parse(kind), domain)


def is_dyadic(mesh: GeometricMesh, max_denominator: int = 2 ** 40) -> bool:
    for e in mesh.elements:
        for c in e.lo + e.hi:
            f = Fraction(c)
            if f.denominator > max_denominator or f.denominator & (f.denominator - 1):
                return False
    return True


# ---------------------------------------------------------------------------
# faces

@dataclass(frozen=True)
class Face:
    """A smallest face.

    ``minus`` is the owner on the negative side of the plane (its ``hi`` lies on
    the plane), ``plus`` the owner on the positive side.  Boundary faces have
    exactly one of them set; ``normal_sign`` is then the sign of the outward
    normal along ``axis``.  For interior faces ``normal_sign`` is +1, the
    direction of the normal of the minus owner.
    """
    axis: int
    coord: float
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    minus: int | None
    plus: int | None
    hperp: float
    area: float

    @property
    def is_boundary(self) -> bool:
        return self.minus is None or self.plus is None

    @property
    def kind(self) -> str:
        return "boundary" if self.is_boundary else "interior"

    @property
    def owner(self) -> int:
        """The single owner of a boundary face (minus owner if interior)."""
        return self.minus if self.minus is not None else self.plus

    @property
    def owners(self) -> tuple[int, ...]:
        return tuple(o for o in (self.minus, self.plus) if o is not None)

    @property
    def normal_sign(self) -> int:
        return -1 if self.minus is None else 1

    @property
    def tangential_axes(self) -> tuple[int, int]:
        return tuple(a for a in range(3) if a != self.axis)


@dataclass
class FaceSet:
    faces: list[Face]
    interior: list[int] = field(default_factory=list)
    boundary: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.interior = [i for i, f in enumerate(self.faces) if not f.is_boundary]
        self.boundary = [i for i, f in enumerate(self.faces) if f.is_boundary]

    def __len__(self):
        return len(self.faces)

    def __iter__(self):
        return iter(self.faces)

    def __getitem__(self, i):
        return self.faces[i]

    @property
    def interior_faces(self) -> list[Face]:
        return [self.faces[i] for i in self.interior]

    @property
    def boundary_faces(self) -> list[Face]:
        return [self.faces[i] for i in self.boundary]


def _rect_overlap(alo, ahi, blo, bhi, axes):
    lo = [max(alo[a], blo[a]) for a in axes]
    hi = [min(ahi[a], bhi[a]) for a in axes]
    return lo, hi


def _uncovered_rects(flo, fhi, covers, axes, tol):
    """Pieces of the facet rectangle not covered by the ``covers`` rectangles."""
    a0, a1 = axes
    xs = sorted({flo[a0], fhi[a0], *[c[0][0] for c in covers], *[c[1][0] for c in covers]})
    ys = sorted({flo[a1], fhi[a1], *[c[0][1] for c in covers], *[c[1][1] for c in covers]})
    xs = [x for x in xs if flo[a0] - tol <= x <= fhi[a0] + tol]
    ys = [y for y in ys if flo[a1] - tol <= y <= fhi[a1] + tol]
    cells = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        if x1 - x0 <= tol:
            continue
        for y0, y1 in zip(ys[:-1], ys[1:]):
            if y1 - y0 <= tol:
                continue
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            if not any(c[0][0] < cx < c[1][0] and c[0][1] < cy < c[1][1] for c in covers):
                cells.append(((x0, y0), (x1, y1)))
    return cells


def _check_disjoint(lo, hi, tol, chunk=512):
    """Raise if two elements overlap with positive volume."""
    n = len(lo)
    for s in range(0, n, chunk):
        ov = np.minimum(hi[s:s + chunk, None], hi[None]) - np.maximum(lo[s:s + chunk, None], lo[None])
        bad = np.all(ov > tol, axis=2)
        bad[np.arange(min(chunk, n - s)), np.arange(s, min(s + chunk, n))] = False
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise MeshError(f"elements {s + i} and {j} overlap")


def extract_faces(mesh: GeometricMesh, tol: float | None = None) -> FaceSet:
    """Enumerate the smallest faces of ``mesh`` with hanging-node resolution."""
    lo, hi = mesh.lo, mesh.hi
    if tol is None:
        tol = 0.0 if is_dyadic(mesh) else 1e-12 * mesh.diameter
    size = hi - lo
    _check_disjoint(lo, hi, tol)
    faces: list[Face] = []

    def key(c):
        return c if tol == 0.0 else round(c / tol)

    for d in range(3):
        tang = tuple(a for a in range(3) if a != d)
        planes: dict = {}
        for e in range(len(mesh)):
            planes.setdefault(key(hi[e, d]), ([], [], hi[e, d]))[0].append(e)
            planes.setdefault(key(lo[e, d]), ([], [], lo[e, d]))[1].append(e)
        for pk in sorted(planes):
            minus, plus, coord = planes[pk]
            covers = {e: [] for e in minus}
            covers.update({e: [] for e in plus})
            for i in minus:
                for j in plus:
                    rlo, rhi = _rect_overlap(lo[i], hi[i], lo[j], hi[j], tang)
                    if rhi[0] - rlo[0] <= tol or rhi[1] - rlo[1] <= tol:
                        continue
                    covers[i].append((rlo, rhi))
                    covers[j].append((rlo, rhi))
                    flo, fhi = [0.0] * 3, [0.0] * 3
                    flo[d] = fhi[d] = float(coord)
                    for t, a in enumerate(tang):
                        flo[a], fhi[a] = float(rlo[t]), float(rhi[t])
                    area = (rhi[0] - rlo[0]) * (rhi[1] - rlo[1])
                    faces.append(Face(d, float(coord), tuple(flo), tuple(fhi), i, j,
                                      float(min(size[i, d], size[j, d])), float(area)))
            for side, group in ((0, minus), (1, plus)):
                for e in group:
                    facet_area = size[e, tang[0]] * size[e, tang[1]]
                    got = sum((c[1][0] - c[0][0]) * (c[1][1] - c[0][1]) for c in covers[e])
                    if got > facet_area * (1 + 1e-12) + tol:
                        raise MeshError(f"overlapping facets at element {e}, axis {d}")
                    if got >= facet_area * (1 - 1e-12) - tol:
                        continue
                    if not covers[e]:
                        pieces = [((lo[e, tang[0]], lo[e, tang[1]]), (hi[e, tang[0]], hi[e, tang[1]]))]
                    else:
                        pieces = _uncovered_rects(lo[e], hi[e], covers[e], tang, tol)
                    for plo, phi in pieces:
                        flo, fhi = [0.0] * 3, [0.0] * 3
                        flo[d] = fhi[d] = float(coord)
                        for t, a in enumerate(tang):
                            flo[a], fhi[a] = float(plo[t]), float(phi[t])
                        area = (phi[0] - plo[0]) * (phi[1] - plo[1])
                        faces.append(Face(d, float(coord), tuple(flo), tuple(fhi),
                                          e if side == 0 else None, None if side == 0 else e,
                                          float(size[e, d]), float(area)))
    return FaceSet(faces)


def perp_diameter(element: Box3, face: Face, tol: float = 1e-12) -> float:
    """Extent of ``element`` along the normal axis of ``face``."""
    d = face.axis
    scale = tol * max(1.0, float(np.max(np.abs(element.size))))
    on_plane = abs(element.lo[d] - face.coord) <= scale or abs(element.hi[d] - face.coord) <= scale
    inside = all(element.lo[a] - scale <= face.lo[a] and face.hi[a] <= element.hi[a] + scale
                 for a in face.tangential_axes)
    if not (on_plane and inside):
        raise MeshError("face does not lie on the element boundary")
    return float(element.hi[d] - element.lo[d])


def boundary_area(faces: FaceSet) -> float:
    return float(sum(f.area for f in faces.boundary_faces))
