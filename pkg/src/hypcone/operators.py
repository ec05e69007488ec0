"""Discrete differential operators on chart meshes.

The stiffness matrix uses piecewise-linear cotangent weights computed in each
triangle's own flat chart coordinates; since the Dirichlet energy is a
conformal invariant in two dimensions, the assembled matrix is independent of
the chart choice and discretizes the fixed conformal structure.  The mass
vector carries the background conformal factor, so

    P u := sqrt(-1) Lambda dd-bar u  ~  -(1/2) M^{-1} S u

is the contraction-with-the-Kahler-form operator appearing in the curvature
equation (one half of the Laplace-Beltrami operator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .charts import Chart
from .mesh import SurfaceMesh


def stiffness(mesh: SurfaceMesh) -> sp.csr_matrix:
    """Cotangent stiffness matrix S (positive semidefinite, row sums zero)."""
    z = mesh.tri_z
    t = mesh.tris
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        u = z[:, k] - z[:, (k + 2) % 3]
        v = z[:, (k + 1) % 3] - z[:, (k + 2) % 3]
        cross = np.imag(np.conj(u) * v)
        dot = np.real(np.conj(u) * v)
        w = 0.5 * dot / cross  # 0.5 cot(angle at opposite corner)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    S = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.nv, mesh.nv))
    S.sum_duplicates()
    return S


@dataclass
class LinearOperator:
    """The discrete Kahler-contraction operator with its area weights.

    ``apply`` computes -(1/2) M^{-1} S u; the operator annihilates constants,
    is self-adjoint in the mass inner product, and its nonzero spectrum is
    negative (S is positive semidefinite).
    """

    S: sp.csr_matrix
    mass: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        return -0.5 * (self.S @ u) / self.mass

    @property
    def area(self) -> float:
        return float(self.mass.sum())


def laplacian(mesh: SurfaceMesh, phi=None) -> LinearOperator:
    if mesh.phi0 is None and phi is None:
        raise ValueError("background conformal factor not set; run uniformize_background")
    return LinearOperator(S=stiffness(mesh), mass=mesh.mass_vector(phi))


def lu_solver(A: sp.spmatrix):
    return splu(A.tocsc()).solve


def solve_pinned(S: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    """Solve S g = rhs for compatible rhs (sum zero) by pinning vertex 0."""
    n = S.shape[0]
    A = S.tolil(copy=True)
    A[0, :] = 0.0
    A[:, 0] = 0.0
    A[0, 0] = 1.0
    b = rhs.copy()
    b[0] = 0.0
    return splu(A.tocsc()).solve(b)


def greens_field(mesh: SurfaceMesh, sources, op: LinearOperator | None = None) -> np.ndarray:
    """Log-singularity field: discrete Laplacian = point masses minus uniform.

    ``sources`` is a list of (vertex, weight); the output g satisfies
    -(S g)_v = sum_i w_i [v == v_i] - (sum_i w_i / Area) m_v exactly, and is
    normalized to max 0.  Empty source list gives the zero field.
    """
    if len(mesh.boundary_edges):
        raise ValueError("greens_field requires a closed surface")
    op = op if op is not None else laplacian(mesh)
    if not sources:
        return np.zeros(mesh.nv)
    rhs = np.zeros(mesh.nv)
    total = 0.0
    for v, w in sources:
        if not (0 <= int(v) < mesh.nv):
            raise ValueError(f"source {v} is not a mesh vertex")
        rhs[int(v)] += w
        total += w
    rhs -= total / op.area * op.mass
    g = solve_pinned(op.S, -rhs)
    return g - g.max()


def dirichlet_solve(S: sp.csr_matrix, interior: np.ndarray, rhs: np.ndarray, u_b: np.ndarray):
    """Solve S u = rhs on interior vertices with u = u_b elsewhere."""
    n = S.shape[0]
    u = u_b.copy()
    Sii = S[interior][:, interior]
    b = rhs[interior] - S[interior] @ u_b
    u[interior] = splu(Sii.tocsc()).solve(b)
    return u


# ---------------------------------------------------------------------------
# moving least squares derivatives on vertex fields
# ---------------------------------------------------------------------------


def _poly_cols(dz: np.ndarray, order: int) -> np.ndarray:
    x, y = dz.real, dz.imag
    cols = [np.ones_like(x), x, y, x * x, x * y, y * y]
    if order >= 3:
        cols += [x**3, x * x * y, x * y * y, y**3]
    return np.stack(cols, axis=1)


class MlsDerivatives:
    """Weighted least-squares polynomial fits of vertex fields around a vertex.

    Fits are done in the vertex's home chart over the two-ring; values of the
    field in that chart are supplied by a callback (to accommodate fields that
    transform with the chart, like conformal log-factors).
    """

    def __init__(self, mesh: SurfaceMesh, order: int = 2):
        self.mesh = mesh
        self.order = order

    def fit(self, v: int, values_in_chart, chart: Chart | None = None):
        mesh = self.mesh
        chart = mesh.vert_chart(v) if chart is None else chart
        nbrs = mesh.two_ring(v)
        ids = np.concatenate([[v], nbrs])
        z = mesh.coords_in(chart, ids)
        dz = z - z[0]
        vals = values_in_chart(ids, chart)
        r = np.abs(dz)
        sigma = max(r.max(), 1e-300) / 1.5
        wts = np.exp(-((r / sigma) ** 2))
        cols = _poly_cols(dz, self.order)
        if len(ids) < cols.shape[1]:
            cols = cols[:, :6]
        a, *_ = np.linalg.lstsq(cols * wts[:, None], vals * wts, rcond=None)
        return a

    def dz(self, v: int, values_in_chart, chart: Chart | None = None) -> complex:
        """Complex derivative d/dz = (d/dx - i d/dy)/2 at v."""
        a = self.fit(v, values_in_chart)
        return 0.5 * (a[1] - 1j * a[2])


def scalar_values(field: np.ndarray):
    """Callback for chart-independent vertex scalars."""

    def get(ids, chart):
        return field[ids]

    return get


def conformal_log_values(mesh: SurfaceMesh, field: np.ndarray):
    """Callback for log-conformal-factor type fields: f_c = f_home + log|jac|."""

    def get(ids, chart):
        return field[ids] + mesh.logjac_to(chart, ids)

    return get
