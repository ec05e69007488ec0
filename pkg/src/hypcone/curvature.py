"""Gaussian curvature estimators.

Two routes are implemented:

* ``gaussian_curvature``: for conformal metrics e^{2 psi}|dz|^2, the identity
  K = -e^{-2 psi} Delta_flat psi evaluated per vertex in its home chart with
  the cotangent weights (weights are chart-invariant; the field and the flat
  mass are re-charted).

* ``brioschi_curvature``: for a general symmetric tensor given by chart
  components (E complex weight-2, H real weight-(1,1)), the Brioschi formula
  on the real components (E_r, F_r, G_r), with first and second derivatives
  from weighted least-squares cubic fits on the two-ring.

Vertices within the documented exclusion radius of cone or marked points are
flagged rather than evaluated.
"""

from __future__ import annotations

import numpy as np

from .mesh import SurfaceMesh
from .operators import MlsDerivatives, stiffness

EXCLUSION_SPACINGS = 5.0  # radius around cone/marked points, in mesh spacings


def evaluation_mask(mesh: SurfaceMesh, exclude_vertices=(), spacings=EXCLUSION_SPACINGS):
    """True where curvature may be evaluated: away from flagged points and boundary."""
    ok = np.ones(mesh.nv, dtype=bool)
    if len(mesh.boundary_edges):
        ok &= ~mesh.boundary_vertex
        # one more ring off the boundary
        for e in mesh.edges[mesh.boundary_edges]:
            for v in e:
                ok[mesh.ring(v)] = False
    for v0 in exclude_vertices:
        ch = mesh.vert_chart(int(v0))
        z0 = mesh.coords_in(ch, np.array([int(v0)]))[0]
        # exclusion measured in the background metric around v0
        scale = np.exp(mesh.phi0[int(v0)]) if mesh.phi0 is not None else 1.0
        for v in range(mesh.nv):
            if mesh.vchart_kind[v] == ch.kind and mesh.vchart_index[v] == ch.index:
                if abs(mesh.vz[v] - z0) * scale < spacings * mesh.h:
                    ok[v] = False
        ok[int(v0)] = False
    return ok


def gaussian_curvature(mesh: SurfaceMesh, psi: np.ndarray, mask=None) -> np.ndarray:
    """K = -e^{-2 psi} Delta_flat psi per vertex (nan where not evaluated)."""
    S = stiffness(mesh)
    K = np.full(mesh.nv, np.nan)
    mask = np.ones(mesh.nv, dtype=bool) if mask is None else mask
    keys = np.stack([mesh.vchart_kind, mesh.vchart_index], axis=1)
    fa = mesh.flat_areas()
    for kind, index in np.unique(keys, axis=0):
        ch = mesh.chart(kind, index)
        sel = np.where((keys[:, 0] == kind) & (keys[:, 1] == index) & mask)[0]
        if not len(sel):
            continue
        # field and flat vertex mass in this chart; values are only consumed
        # on the stars of `sel`, where the chart is valid
        with np.errstate(all="ignore"):
            psi_c = psi + mesh.logjac_to(ch, np.arange(mesh.nv))
            lap_weak = (S @ np.where(np.isfinite(psi_c), psi_c, 0.0))[sel]
        mflat = np.zeros(mesh.nv)
        tri_ids = np.unique(np.concatenate([mesh.vertex_tris(v) for v in sel]))
        zc = mesh.coords_in(ch, mesh.tris[tri_ids].ravel()).reshape(-1, 3)
        a2 = 0.5 * np.imag(np.conj(zc[:, 1] - zc[:, 0]) * (zc[:, 2] - zc[:, 0]))
        for k in range(3):
            np.add.at(mflat, mesh.tris[tri_ids, k], np.abs(a2) / 3.0)
        lap = -lap_weak / mflat[sel]
        K[sel] = -np.exp(-2.0 * psi[sel]) * lap
    return K


def brioschi_curvature(mesh: SurfaceMesh, E: np.ndarray, H: np.ndarray, mask=None) -> np.ndarray:
    """Curvature of 2 Re(E dz^2) + H |dz|^2 from chart-component derivatives."""
    K = np.full(mesh.nv, np.nan)
    mask = np.ones(mesh.nv, dtype=bool) if mask is None else mask
    mls = MlsDerivatives(mesh, order=3)

    def comp_values(which):
        def get(ids, chart):
            r = mesh.jac_to(chart, ids)
            Ec = E[ids] * r**2
            Hc = H[ids] * np.abs(r) ** 2
            if which == "E":
                return 2.0 * Ec.real + Hc
            if which == "F":
                return -2.0 * Ec.imag
            return Hc - 2.0 * Ec.real

        return get

    for v in np.where(mask)[0]:
        aE = mls.fit(v, comp_values("E"))
        aF = mls.fit(v, comp_values("F"))
        aG = mls.fit(v, comp_values("G"))
        Er, Fr, Gr = aE[0], aF[0], aG[0]
        Eu, Ev = aE[1], aE[2]
        Fu, Fv = aF[1], aF[2]
        Gu, Gv = aG[1], aG[2]
        Evv, Fuv, Guu = 2 * aE[5], aF[4], 2 * aG[3]
        det = Er * Gr - Fr * Fr
        if det <= 0:
            continue
        m1 = np.array(
            [
                [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
                [Fv - 0.5 * Gu, Er, Fr],
                [0.5 * Gv, Fr, Gr],
            ]
        )
        m2 = np.array(
            [
                [0.0, 0.5 * Ev, 0.5 * Gu],
                [0.5 * Ev, Er, Fr],
                [0.5 * Gu, Fr, Gr],
            ]
        )
        K[v] = (np.linalg.det(m1) - np.linalg.det(m2)) / det**2
    return K
