"""Background curvature -4 conformal factor.

On the disk model the factor is closed form, phi0 = -log(1 - |z|^2).  On a
hyperelliptic curve it is produced by a Liouville-type Newton solve for the
correction v in phi0 = phi_ref + v, where the reference factor

    e^{phi_ref} = 2 (1+|x|^2)^{(g-1)/2} prod_i |x - b_i|^{-1/2}   (x-chart)

is an explicit smooth positive metric on the curve (the square-root factors
cancel the vanishing of dx at the ramification points, the power of 1+|x|^2
fixes the two points over infinity).  The accuracy gate is the Gauss-Bonnet
area pi (g-1).
"""

from __future__ import annotations

import numpy as np

from .charts import WCHART, XCHART, XICHART
from .mesh import SurfaceMesh
from .newton import damped_newton
from .operators import stiffness
from scipy.sparse.linalg import splu
import scipy.sparse as sp


def disk_phi0(z: np.ndarray) -> np.ndarray:
    return -np.log1p(-np.abs(z) ** 2)


def reference_factor(mesh: SurfaceMesh) -> np.ndarray:
    """phi_ref per vertex in its home chart, singular factors cancelled exactly."""
    curve = mesh.domain
    g = mesh.genus
    b = curve.branch
    out = np.empty(mesh.nv)
    for v in range(mesh.nv):
        kind = int(mesh.vchart_kind[v])
        x = mesh.verts_x[v]
        if kind == XCHART:
            out[v] = (
                np.log(2.0)
                + 0.5 * (g - 1) * np.log1p(abs(x) ** 2)
                - 0.5 * np.sum(np.log(np.abs(x - b)))
            )
        elif kind == WCHART:
            i = int(mesh.vchart_index[v])
            others = np.abs(x - b[np.arange(len(b)) != i])
            out[v] = (
                2.0 * np.log(2.0)
                + 0.5 * (g - 1) * np.log1p(abs(x) ** 2)
                - 0.5 * np.sum(np.log(others))
            )
        else:  # XICHART
            xi = mesh.vz[v]
            out[v] = (
                np.log(2.0)
                + 0.5 * (g - 1) * np.log1p(abs(xi) ** 2)
                - 0.5 * np.sum(np.log(np.abs(1.0 - b * xi)))
            )
    return out


def _reference_weak_vector(mesh: SurfaceMesh, phi_ref: np.ndarray) -> np.ndarray:
    """Per-triangle assembly of the weak vector (S phi_ref) in triangle charts."""
    z = mesh.tri_z
    t = mesh.tris
    phi_c = np.empty((mesh.nt, 3))
    keys = np.stack([mesh.tri_chart_kind, mesh.tri_chart_index], axis=1)
    for kind, index in np.unique(keys, axis=0):
        sel = (keys[:, 0] == kind) & (keys[:, 1] == index)
        ch = mesh.chart(kind, index)
        vids = t[sel].ravel()
        phi_c[sel] = (phi_ref[vids] + mesh.logjac_to(ch, vids)).reshape(-1, 3)
    out = np.zeros(mesh.nv)
    for k in range(3):
        i, j, o = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        u = z[:, k] - z[:, (k + 2) % 3]
        v = z[:, (k + 1) % 3] - z[:, (k + 2) % 3]
        w = 0.5 * np.real(np.conj(u) * v) / np.imag(np.conj(u) * v)
        contrib = w * (phi_c[:, k] - phi_c[:, (k + 1) % 3])
        np.add.at(out, i, contrib)
        np.add.at(out, j, -contrib)
    return out


def uniformize_background(mesh: SurfaceMesh, tol: float = 1e-11, max_iter: int = 60) -> SurfaceMesh:
    """Fill mesh.phi0 with the curvature -4 conformal factor."""
    if mesh.kind == "disk":
        mesh.phi0 = disk_phi0(mesh.vz)
        return mesh

    phi_ref = reference_factor(mesh)
    S = stiffness(mesh)
    b_ref = _reference_weak_vector(mesh, phi_ref)
    fa = mesh.flat_areas()
    tri_logjac = mesh.tri_phi(phi_ref)  # phi_ref at corners in tri charts

    def massvec(vfield):
        m = np.zeros(mesh.nv)
        e = np.exp(2.0 * (tri_logjac + vfield[mesh.tris]))
        for k in range(3):
            np.add.at(m, mesh.tris[:, k], fa / 3.0 * e[:, k])
        return m

    mass0 = massvec(np.zeros(mesh.nv))

    def weak_residual(v):
        return S @ v + b_ref + 4.0 * massvec(v)

    def resnorm(v):
        return float(np.max(np.abs(weak_residual(v) / mass0)))

    def step(v):
        J = (S + sp.diags(8.0 * massvec(v))).tocsc()
        return splu(J).solve(-weak_residual(v))

    v0 = np.zeros(mesh.nv)
    v, history, _ = damped_newton(v0, step, resnorm, tol, max_iter=max_iter)
    mesh.phi0 = phi_ref + v
    mesh.background_history = history
    return mesh
