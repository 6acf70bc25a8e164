"""Linear algebra backends: right-preconditioned restarted GMRES with a
block saddle-point or incomplete-LU preconditioner, dense SVD, and
Cholesky congruences."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

PRECONDITIONERS = ("block", "ilu", "none")


class SolverError(RuntimeError):
    """GMRES failed; ``x`` holds the best iterate and ``report`` the history."""

    def __init__(self, msg, x=None, report=None):
        super().__init__(msg)
        self.x = x
        self.report = report


class DenseCapError(ValueError):
    pass


@dataclass
class SolveConfig:
    tol: float = 1e-12            # on the Euclidean norm of the unpreconditioned residual
    maxiter: int = 2000           # total inner iterations
    restart: int = 200
    preconditioner: str = "block"
    drop_tol: float = 1e-4        # incomplete-LU threshold
    fill_factor: float = 10.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.restart < 1 or self.maxiter < 1:
            raise ValueError("restart and maxiter must be >= 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    preconditioner: str
    setup_seconds: float
    solve_seconds: float
    history: list = field(default_factory=list)   # (iteration, true-or-estimated residual)

    def to_json_lines(self) -> str:
        return "".join(json.dumps({"iteration": i, "residual": r}) + "\n" for i, r in self.history)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("history")
        return d


def ilu_preconditioner(matrix, config: SolveConfig):
    """Threshold ILU of ``matrix``; returns ``(apply, label)``.

    A failed factorization (zero pivot, possible when the pressure block
    vanishes) is retried with diagonal pivoting and then dropped, in which
    case GMRES runs unpreconditioned.
    """
    A = sp.csc_matrix(matrix)
    attempts = [dict(), dict(diag_pivot_thresh=1.0)]
    for extra in attempts:
        try:
            fac = spla.spilu(A, drop_tol=config.drop_tol, fill_factor=config.fill_factor, **extra)
        except RuntimeError as exc:
            log.warning("ILU failed (%s)%s", exc, "; retrying" if not extra else "")
            continue
        return fac.solve, "ilu" if not extra else "ilu-pivot"
    log.warning("falling back to unpreconditioned GMRES")
    return None, "none"


class SaddlePreconditioner:
    """Block upper-triangular right preconditioner for the augmented system
    ``[[A, B, 0], [-B^T, C, -m], [0, m^T/|O|, -1]]``.

    The velocity block is inverted exactly through a sparse LU of the scalar
    SIP matrix (A acts identically on the three components).  The Schur
    complement ``C + B^T A^-1 B`` is replaced by ``C + E - m m^T/|O|``: the
    pressure mass matrix on zero-mean pressures and C on constants, where
    ``B^T A^-1 B`` vanishes.  The rank-one term and the multiplier border are
    eliminated by hand so that only the block-diagonal ``E + C`` is factorized.
    """

    def __init__(self, blocks, nv: int):
        self.M, self.N = blocks.M, blocks.N
        self.nv = nv
        self.nel = self.M // (3 * nv)
        idx = (np.arange(self.nel)[:, None] * 3 * nv + np.arange(nv)[None]).ravel()
        As = sp.csc_matrix(blocks.A[idx][:, idx])
        if 3 * As.nnz != blocks.A.nnz:
            raise ValueError("velocity block does not decouple into components")
        self.B = sp.csr_matrix(blocks.B)
        self._alu = spla.splu(As)
        self._glu = spla.splu(sp.csc_matrix(blocks.E + blocks.C))
        self.m = np.asarray(blocks.m, float)
        self.vol = float(blocks.volume)
        self._w = self._glu.solve(self.m)
        self._s = float(self.m @ self._w)
        self._den = 1.0 - 2.0 * self._s / self.vol
        self.shape = (self.M + self.N + 1,) * 2

    def _schur(self, v, vr):
        # solve (G - m m^T/|O|) z - m r = v,  m^T z/|O| - r = vr
        g = self._glu.solve(v)
        t = (self.m @ g - self._s * vr) / self._den
        r = t / self.vol - vr
        return g + self._w * (t / self.vol + r), r

    def __call__(self, v):
        M, N, nel, nv = self.M, self.N, self.nel, self.nv
        z, r = self._schur(v[M:M + N], v[M + N])
        rhs = (v[:M] - self.B @ z).reshape(nel, 3, nv).transpose(0, 2, 1).reshape(nel * nv, 3)
        u = self._alu.solve(rhs).reshape(nel, nv, 3).transpose(0, 2, 1).ravel()
        return np.concatenate([u, z, [r]])


def make_preconditioner(operator, config: SolveConfig, blocks=None, nv=None):
    """``(apply, label)`` for the configured kind.  The block preconditioner
    needs the system blocks; without them the ILU path is used."""
    if config.preconditioner == "block" and blocks is not None:
        return SaddlePreconditioner(blocks, nv), "block"
    if config.preconditioner == "none" or not sp.issparse(operator):
        return None, "none"
    return ilu_preconditioner(operator, config)


def gmres_solve(operator, rhs, config: SolveConfig | None = None, x0=None,
                precond=None, log_path=None, blocks=None, nv=None):
    """Solve ``operator x = rhs`` by restarted GMRES with right preconditioning.

    Right preconditioning keeps the Arnoldi residual equal to the true
    residual, so the stopping rule ``||rhs - op x|| <= tol`` is checked on the
    unpreconditioned system; it is re-verified explicitly before returning.
    Raises :class:`SolverError` (carrying the best iterate) on breakdown or
    when ``maxiter`` is exhausted.
    """
    cfg = config or SolveConfig()
    b = np.asarray(rhs, float)
    n = b.shape[0]
    if operator.shape != (n, n):
        raise ValueError(f"operator shape {operator.shape} does not match rhs length {n}")
    matvec = operator.dot if hasattr(operator, "dot") else operator.matvec
    t0 = time.perf_counter()
    if precond is None:
        Minv, label = make_preconditioner(operator, cfg, blocks, nv)
    else:
        Minv, label = precond, "user"
    setup = time.perf_counter() - t0
    apply_M = Minv if Minv is not None else (lambda v: v)

    t0 = time.perf_counter()
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    history = [(0, float(beta))]
    best_x, best_res = x.copy(), beta
    its = 0
    m = cfg.restart
    while beta > cfg.tol and its < cfg.maxiter:
        beta_prev = beta
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        s = np.zeros(m + 1)
        s[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = matvec(apply_M(V[j]))
            for i in range(j + 1):             # modified Gram-Schmidt, twice
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            for i in range(j + 1):
                c = V[i] @ w
                H[i, j] += c
                w -= c * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            if den == 0:
                break
            cs[j], sn[j] = H[j, j] / den, H[j + 1, j] / den
            hn = H[j + 1, j]
            H[j, j], H[j + 1, j] = den, 0.0
            s[j + 1] = -sn[j] * s[j]
            s[j] = cs[j] * s[j]
            its += 1
            j_done = j + 1
            history.append((its, float(abs(s[j + 1]))))
            if abs(s[j + 1]) <= 0.5 * cfg.tol or its >= cfg.maxiter or hn == 0:
                break
            V[j + 1] = w / hn
        if j_done == 0:
            break
        y = sla.solve_triangular(H[:j_done, :j_done], s[:j_done])
        x = x + apply_M(V[:j_done].T @ y)
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        history.append((its, float(beta)))
        if beta < best_res:
            best_x, best_res = x.copy(), beta
        if beta >= beta_prev:
            break                               # a full cycle without progress
    report = SolveReport(bool(best_res <= cfg.tol), its, float(best_res), label, setup,
                         time.perf_counter() - t0, history)
    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write(report.to_json_lines())
    if not report.converged:
        raise SolverError(f"GMRES did not reach {cfg.tol:g} (best residual {best_res:.3e} "
                          f"after {its} iterations)", best_x, report)
    return best_x, report


def direct_solve(matrix, rhs):
    """Sparse LU solve, used as an oracle and a fallback."""
    return spla.spsolve(sp.csc_matrix(matrix), np.asarray(rhs, float))


def dense_svd(matrix, cap: int = 6000, check: bool = True):
    """Full SVD ``U, s, Vt`` via LAPACK (divide and conquer, falling back to
    the QR-iteration driver)."""
    X = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, float)
    if max(X.shape) > cap:
        raise DenseCapError(f"matrix of shape {X.shape} exceeds the dense cap {cap}; "
                            "use smaller levels or degree")
    try:
        U, s, Vt = sla.svd(X, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        U, s, Vt = sla.svd(X, full_matrices=False, lapack_driver="gesvd")
    if check and s.size:
        if np.max(np.abs(X - (U * s) @ Vt)) > 1e-10 * s[0]:
            raise np.linalg.LinAlgError("SVD reconstruction check failed")
    return U, s, Vt


def singular_values(matrix, cap: int = 6000):
    X = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, float)
    if max(X.shape) > cap:
        raise DenseCapError(f"matrix of shape {X.shape} exceeds the dense cap {cap}")
    return sla.svdvals(X)


def cholesky_factor(G):
    """Lower Cholesky factor of a dense or sparse SPD matrix."""
    G = G.toarray() if sp.issparse(G) else np.asarray(G, float)
    try:
        return sla.cholesky(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Gram matrix is not positive definite") from exc


def cholesky_congruence(G, X, side: str = "both", L=None):
    """``L^-1 X``, ``X L^-T`` or ``L^-1 X L^-T`` with ``G = L L^T``.

    Singular values coincide with those of the symmetric-square-root version.
    """
    if side not in ("left", "right", "both"):
        raise ValueError("side must be 'left', 'right' or 'both'")
    L = cholesky_factor(G) if L is None else L
    X = X.toarray() if sp.issparse(X) else np.array(X, float)
    if side in ("left", "both"):
        X = sla.solve_triangular(L, X, lower=True)
    if side in ("right", "both"):
        X = sla.solve_triangular(L, X.T, lower=True).T
    return X
