"""Sparse assembly of the interior penalty mixed DG forms.

Conventions
-----------
Rows are test functions, columns trial functions.  On an interior face the
jump of a scalar is taken along the normal of the minus owner, ``[w] = w- - w+``;
on a boundary face ``[w] = w`` and the normal is the outward one.  With
axis-parallel faces the velocity Laplacian part decouples into three copies
of the scalar SIP matrix.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import (TensorBasis, box_rule, composite_batches, eval_points, gauss_rule,
                  tensor_eval)
from .mesh import FaceSet, GeometricMesh, MeshError
from .spaces import DofMap


@dataclass
class DGConfig:
    k: int = 2
    theta: float = 1.0
    gamma: float = 10.0
    nu: float = 0.5
    # rhs/error rules use k + 1 + quad_extra points per axis
    quad_extra: int = 3
    # bisection depth of the composite rule on cells touching a singular set
    singular_depth: int = 24
    volume_points: int | None = None

    def __post_init__(self):
        if not (-1.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [-1, 1], got {self.theta}")
        if self.gamma <= 0:
            raise ValueError(f"penalty gamma must be positive, got {self.gamma}")
        if not (0.0 < self.nu <= 0.5):
            raise ValueError(f"Poisson ratio must lie in (0, 1/2], got {self.nu}")
        if self.k < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {self.k}")

    @property
    def form_points(self) -> int:
        return self.volume_points or self.k + 1

    @property
    def rhs_points(self) -> int:
        return self.k + 1 + self.quad_extra

    def penalty(self, hperp: float) -> float:
        if hperp <= 0:
            raise MeshError("face with non-positive perpendicular diameter")
        return self.gamma * self.k ** 2 / hperp


@dataclass
class SystemBlocks:
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    E: sp.csr_matrix
    m: np.ndarray
    volume: float
    nu: float = 0.5

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.E.shape[0]

    def a_matrix(self) -> sp.csr_matrix:
        """Matrix of a_h on V_h x Q~_h (rows: test functions)."""
        return sp.bmat([[self.A, self.B], [-self.B.T, self.C]], format="csr")

    def dg_gram(self) -> sp.csr_matrix:
        """Gram matrix of the DG norm, blockdiag(D, (2 - 2 nu) E)."""
        return sp.block_diag([self.D, (2 - 2 * self.nu) * self.E], format="csr")


class _Coo:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rows, cols, block):
        r, c = np.meshgrid(rows, cols, indexing="ij")
        self.rows.append(r.ravel().astype(np.int32))
        self.cols.append(c.ravel().astype(np.int32))
        self.vals.append(np.asarray(block, float).ravel())

    def tocsr(self, shape):
        if not self.rows:
            return sp.csr_matrix(shape)
        mat = sp.coo_matrix((np.concatenate(self.vals),
                             (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape)
        return mat.tocsr()


class Assembler:
    """Caches reference tables for one (mesh, faces, dofmap, config)."""

    def __init__(self, mesh: GeometricMesh, faces: FaceSet, dofmap: DofMap, config: DGConfig):
        if dofmap.k != config.k:
            raise ValueError("dofmap and config disagree on the polynomial degree")
        if dofmap.n_elements != len(mesh):
            raise ValueError("dofmap does not match the mesh")
        self.mesh, self.faces, self.dofmap, self.config = mesh, faces, dofmap, config
        self.vb = TensorBasis(config.k)
        self.pb = TensorBasis(config.k - 1)
        self.rule = gauss_rule(config.form_points)
        self._vol_cache: dict = {}
        self._face_cache: dict = {}
        self._lo = mesh.lo
        self._hi = mesh.hi

    # -- local tables ------------------------------------------------------
    def _key(self, *arrays):
        return tuple(np.round(np.concatenate([np.ravel(a) for a in arrays]), 14))

    def volume_tables(self, e):
        """(scalar stiffness, [B volume block per component], pressure mass, pressure moments)."""
        box = self.mesh.elements[e]
        key = self._key(box.size)
        hit = self._vol_cache.get(key)
        if hit is not None:
            return hit
        pts, wts = box_rule(box.lo, box.hi, self.rule)
        vt = tensor_eval(self.vb, box, pts, wts)
        pt = tensor_eval(self.pb, box, pts, wts)
        w = vt.weights
        Gw = vt.grads * w[:, None, None]
        K = np.tensordot(Gw, vt.grads, axes=([0, 2], [0, 2]))
        # B_h in integrated-by-parts form: int grad_h q . v - sum_FI int [q] <v>.n
        Vw = vt.values * w[:, None]
        Bv = [Vw.T @ pt.grads[:, :, d] for d in range(3)]
        E = (pt.values * w[:, None]).T @ pt.values
        m = pt.values.T @ w
        out = (K, Bv, E, m)
        self._vol_cache[key] = out
        return out

    def face_traces(self, face, e):
        """Velocity values, normal derivatives, pressure values and weights of
        element ``e``'s basis on ``face``."""
        box = self.mesh.elements[e]
        lo = np.asarray(box.lo)
        key = (face.axis,) + self._key(box.size, np.asarray(face.lo) - lo, np.asarray(face.hi) - lo)
        hit = self._face_cache.get(key)
        if hit is not None:
            return hit
        pts, wts = box_rule(face.lo, face.hi, self.rule)
        vt = tensor_eval(self.vb, box, pts, wts)
        pt = tensor_eval(self.pb, box, pts, wts, gradients=False)
        out = (vt.values, vt.grads[:, :, face.axis], pt.values, vt.weights)
        self._face_cache[key] = out
        return out

    def face_parts(self, face):
        """Local face matrices: (scalar dofs, consistency, penalty, B rows, B cols, B block)."""
        cfg, dm = self.config, self.dofmap
        c = cfg.penalty(face.hperp)
        d = face.axis
        if face.is_boundary:
            e = face.owner
            s = face.normal_sign
            V, dn, P, w = self.face_traces(face, e)
            J, G = V, s * dn
            sdofs = np.arange(e * dm.nv, (e + 1) * dm.nv)
            vrows = pcols = Bblk = None       # boundary terms cancel in this form of B_h
        else:
            a, b = face.minus, face.plus
            Va, dna, Pa, w = self.face_traces(face, a)
            Vb, dnb, Pb, _ = self.face_traces(face, b)
            J = np.hstack([Va, -Vb])
            G = 0.5 * np.hstack([dna, dnb])
            sdofs = np.concatenate([np.arange(a * dm.nv, (a + 1) * dm.nv),
                                    np.arange(b * dm.nv, (b + 1) * dm.nv)])
            vrows = np.concatenate([dm.velocity(a, d), dm.velocity(b, d)])
            pcols = np.concatenate([dm.pressure(a), dm.pressure(b)])
            Vav = 0.5 * np.hstack([Va, Vb])
            Bblk = -(Vav * w[:, None]).T @ np.hstack([Pa, -Pb])
        JW = J * w[:, None]
        GW = G * w[:, None]
        consistency = -cfg.theta * (GW.T @ J) - JW.T @ G
        penalty = c * (JW.T @ J)
        return sdofs, consistency, penalty, vrows, pcols, Bblk

    # -- global blocks -----------------------------------------------------
    def _expand(self, S):
        """Scalar matrix on (element, shape) -> vector layout on (element, component, shape)."""
        nv = self.dofmap.nv
        S = S.tocoo()
        er, ir = np.divmod(S.row, nv)
        ec, ic = np.divmod(S.col, nv)
        rows = np.concatenate([er * 3 * nv + c * nv + ir for c in range(3)])
        cols = np.concatenate([ec * 3 * nv + c * nv + ic for c in range(3)])
        vals = np.tile(S.data, 3)
        M = self.dofmap.M
        return sp.coo_matrix((vals, (rows, cols)), shape=(M, M)).tocsr()

    def assemble(self, which=("A", "B", "C", "D", "E")) -> dict:
        dm, cfg = self.dofmap, self.config
        ns = dm.n_elements * dm.nv
        want = set(which)
        stiff, cons, pen = _Coo(), _Coo(), _Coo()
        Bc, Ec = _Coo(), _Coo()
        m = np.zeros(dm.N)
        for e in range(dm.n_elements):
            K, Bv, E, me = self.volume_tables(e)
            sd = np.arange(e * dm.nv, (e + 1) * dm.nv)
            pd = dm.pressure(e)
            if want & {"A", "D"}:
                stiff.add(sd, sd, K)
            if "B" in want:
                for d in range(3):
                    Bc.add(dm.velocity(e, d), pd, Bv[d])
            if want & {"C", "E"}:
                Ec.add(pd, pd, E)
            m[pd] = me
        for face in self.faces:
            if not (want & {"A", "B", "D"}):
                break
            sdofs, consistency, penalty, vrows, pcols, Bblk = self.face_parts(face)
            if "A" in want:
                cons.add(sdofs, sdofs, consistency)
            if want & {"A", "D"}:
                pen.add(sdofs, sdofs, penalty)
            if "B" in want and Bblk is not None:
                Bc.add(vrows, pcols, Bblk)
        out = {"m": m}
        if want & {"A", "D"}:
            K = stiff.tocsr((ns, ns))
            P = pen.tocsr((ns, ns))
            if "D" in want:
                out["D"] = self._expand(K + P)
            if "A" in want:
                out["A"] = self._expand(K + P + cons.tocsr((ns, ns)))
        if "B" in want:
            out["B"] = Bc.tocsr((dm.M, dm.N))
        if want & {"C", "E"}:
            E = Ec.tocsr((dm.N, dm.N))
            out["E"] = E
            out["C"] = ((1 - 2 * cfg.nu) * E).tocsr()
        return out


def _asm(mesh, faces, dofmap, config):
    return Assembler(mesh, faces, dofmap, config)


def assemble_A(mesh, faces, dofmap, config) -> sp.csr_matrix:
    return _asm(mesh, faces, dofmap, config).assemble(("A",))["A"]


def assemble_B(mesh, faces, dofmap, config) -> sp.csr_matrix:
    return _asm(mesh, faces, dofmap, config).assemble(("B",))["B"]


def assemble_C(mesh, dofmap, config) -> sp.csr_matrix:
    return _asm(mesh, FaceSet([]), dofmap, config).assemble(("C",))["C"]


def assemble_norm_matrices(mesh, faces, dofmap, config, check: bool = True):
    """Gram matrices D (of ||.||_h) and E (pressure L2)."""
    out = _asm(mesh, faces, dofmap, config).assemble(("D", "E"))
    D, E = out["D"], out["E"]
    if check:
        _check_spd(D, "D")
        _check_spd(E, "E")
    return D, E


def _check_spd(X, name):
    # D and E are block-structured; a sparse LU with positive pivots is cheap
    # evidence, a dense Cholesky is used below a size threshold.
    if X.shape[0] <= 4000:
        try:
            np.linalg.cholesky(X.toarray())
        except np.linalg.LinAlgError as exc:
            raise MeshError(f"{name} is not positive definite") from exc
    elif np.any(X.diagonal() <= 0):
        raise MeshError(f"{name} has non-positive diagonal entries")


def assemble_blocks(mesh, faces, dofmap, config) -> SystemBlocks:
    out = _asm(mesh, faces, dofmap, config).assemble()
    return SystemBlocks(out["A"], out["B"], out["C"], out["D"], out["E"], out["m"],
                        mesh.volume, config.nu)


def assemble_augmented(blocks: SystemBlocks, config=None) -> sp.csr_matrix:
    """[[A, B, 0], [-B^T, C, -m], [0, m^T/|Omega|, -1]]."""
    m = sp.csr_matrix(blocks.m.reshape(-1, 1))
    M = blocks.M
    zero_col = sp.csr_matrix((M, 1))
    return sp.bmat([
        [blocks.A, blocks.B, zero_col],
        [-blocks.B.T, blocks.C, -m],
        [zero_col.T, m.T / blocks.volume, sp.csr_matrix([[-1.0]])],
    ], format="csr")


def element_rule(config: DGConfig, lo, hi, flats=(), max_points: int = 20000):
    """Batches ``(points, weights)`` of the load/error rule on ``[lo, hi]``."""
    return composite_batches(lo, hi, config.rhs_points, flats,
                             config.singular_depth if flats else 0, max_points)


def assemble_rhs(mesh, faces, dofmap, config, case) -> np.ndarray:
    """Load vector of the augmented system.

    Velocity rows get the volume load plus the Nitsche lifting of the
    Dirichlet data g on boundary faces, ``int c g.v - theta (grad v n).g``;
    pressure rows get ``-int q g.n`` from the boundary part of -B_h(u, q).
    """
    cfg, dm = config, dofmap
    case.check_nu(cfg.nu)
    vb, pb = TensorBasis(cfg.k), TensorBasis(cfg.k - 1)
    flats = tuple(getattr(case, "singular_set", ()) or ())
    F = np.zeros(dm.total)
    for e, box in enumerate(mesh.elements):
        for pts, w in element_rule(cfg, box.lo, box.hi, flats):
            V, _ = eval_points(vb, box, pts, gradients=False)
            f = case.forcing(pts, cfg.nu)
            local = (V * w[:, None]).T @ f          # (nv, 3)
            for c in range(3):
                F[dm.velocity(e, c)] += local[:, c]
    for face in faces.boundary_faces:
        e, s, d = face.owner, face.normal_sign, face.axis
        box = mesh.elements[e]
        c = cfg.penalty(face.hperp)
        for pts, w in element_rule(cfg, face.lo, face.hi, flats):
            g = case.dirichlet(pts)
            if not np.any(g):
                continue
            V, G = eval_points(vb, box, pts)
            P, _ = eval_points(pb, box, pts, gradients=False)
            dn = s * G[:, :, d]
            lift = ((c * V - cfg.theta * dn) * w[:, None]).T @ g     # (nv, 3)
            for comp in range(3):
                F[dm.velocity(e, comp)] += lift[:, comp]
            F[dm.pressure(e, offset=True)] -= (P * w[:, None]).T @ (s * g[:, d])
    return F


def export_matrix_market(matrix, path=None) -> str | None:
    """Write ``matrix`` in MatrixMarket coordinate format (returns text if no path)."""
    if path is not None:
        scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))
        return None
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(matrix))
    return buf.getvalue().decode()
