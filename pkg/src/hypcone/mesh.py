"""Triangulated surfaces with conformal charts.

A :class:`SurfaceMesh` is the computational stage for everything else: vertices
carry a home chart and coordinate, triangles carry the chart their flat FEM
geometry lives in, and all fields are stored per vertex in home-chart
trivialization.  Two builders are provided:

* ``disk``: a single-chart triangulated disk of radius < 1 (boundary flagged),
* ``hyperelliptic``: the curve y^2 = p(x) meshed as a branched double cover of
  the x-sphere.  The sphere is triangulated in two conformal pieces (x-plane
  disk |x| <= R and xi = 1/x disk) glued along a shared circle; the cover is
  assembled combinatorially from per-dual-edge sheet parities counted against
  a fixed non-crossing system of branch cuts.

Euler characteristic, orientation and chart-validity invariants are asserted at
build time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .charts import (
    DISK,
    WCHART,
    XCHART,
    XICHART,
    Chart,
    DiskDomain,
    HyperellipticCurve,
    _seg_cross,
)

MIN_RESOLUTION = 8


@dataclass
class SurfaceSpec:
    """Which surface to build: a disk patch or a hyperelliptic curve."""

    kind: str  # "disk" | "hyperelliptic"
    radius: float = 0.8
    branch_points: np.ndarray | None = None
    lead: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.kind not in ("disk", "hyperelliptic"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.kind == "hyperelliptic":
            if self.branch_points is None or len(self.branch_points) < 6:
                raise ValueError("hyperelliptic spec needs >= 6 branch points (genus >= 2)")
            self.branch_points = np.asarray(self.branch_points, dtype=complex)

    @property
    def genus(self) -> int:
        if self.kind == "disk":
            return 0
        return (len(self.branch_points) - 2) // 2

    def domain(self):
        if self.kind == "disk":
            return DiskDomain(self.radius)
        return HyperellipticCurve(self.branch_points, self.lead)


@dataclass
class MarkedPoint:
    """A surface point that must become a mesh vertex (divisor support etc.)."""

    name: str
    x: complex
    sheet: int = 0


class MeshError(ValueError):
    pass


@dataclass
class SurfaceMesh:
    kind: str
    genus: int
    domain: object  # DiskDomain | HyperellipticCurve
    verts_x: np.ndarray  # complex; curve x (disk: z); inf at infinity vertices
    verts_y: np.ndarray  # complex; 0 on the disk
    vchart_kind: np.ndarray
    vchart_index: np.ndarray
    vz: np.ndarray  # home-chart coordinate
    tris: np.ndarray  # (nt, 3) vertex ids, oriented ccw in tri chart
    tri_chart_kind: np.ndarray
    tri_chart_index: np.ndarray
    tri_z: np.ndarray  # (nt, 3) complex corner coords in tri chart
    marked: dict = field(default_factory=dict)
    tri_sheet: np.ndarray | None = None  # construction sheet label (covers)
    phi0: np.ndarray | None = None
    h: float = 0.0  # typical chart spacing (for exclusion radii)
    radius: float = 0.0  # disk only

    # ----- derived topology, built once ------------------------------------

    def __post_init__(self):
        self.nv = len(self.verts_x)
        self.nt = len(self.tris)
        self._build_edges()

    def _build_edges(self):
        t = self.tris
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs_sorted = np.sort(pairs, axis=1)
        self.edges, inv, counts = np.unique(
            pairs_sorted, axis=0, return_inverse=True, return_counts=True
        )
        self.ne = len(self.edges)
        self.edge_count = counts
        self.boundary_edges = np.where(counts == 1)[0]
        bmask = np.zeros(self.nv, dtype=bool)
        bmask[self.edges[self.boundary_edges].ravel()] = True
        self.boundary_vertex = bmask
        # one adjacent triangle per edge (chart carrier)
        self.edge_tri = np.full(self.ne, -1, dtype=int)
        self.edge_tri[inv] = np.concatenate([np.arange(self.nt)] * 3)
        # vertex -> incident vertices (one ring)
        self._ring = [[] for _ in range(self.nv)]
        for a, b in self.edges:
            self._ring[a].append(b)
            self._ring[b].append(a)
        self._ring = [np.array(sorted(r), dtype=int) for r in self._ring]
        # vertex -> incident triangles
        self._vtris = [[] for _ in range(self.nv)]
        for f, (i, j, k) in enumerate(self.tris):
            self._vtris[i].append(f)
            self._vtris[j].append(f)
            self._vtris[k].append(f)
        self._vtris = [np.array(v, dtype=int) for v in self._vtris]

    # ----- invariants -------------------------------------------------------

    def euler_characteristic(self) -> int:
        return self.nv - self.ne + self.nt

    def validate(self):
        chi = self.euler_characteristic()
        if self.kind == "disk":
            if chi != 1:
                raise MeshError(f"disk mesh has Euler characteristic {chi}, expected 1")
            if len(self.boundary_edges) == 0:
                raise MeshError("disk mesh has no boundary")
        else:
            if len(self.boundary_edges) != 0:
                raise MeshError("closed mesh has boundary edges")
            if chi != 2 - 2 * self.genus:
                raise MeshError(
                    f"Euler characteristic {chi} != {2 - 2 * self.genus} for genus {self.genus}"
                )
        # oriented, non-degenerate triangles in their charts
        z = self.tri_z
        area2 = np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))
        if np.any(area2 <= 0):
            raise MeshError("triangle with non-positive chart area")

    # ----- chart helpers ----------------------------------------------------

    def chart(self, kind: int, index: int = -1) -> Chart:
        return Chart(int(kind), int(index))

    def tri_chart(self, f: int) -> Chart:
        return Chart(int(self.tri_chart_kind[f]), int(self.tri_chart_index[f]))

    def vert_chart(self, v: int) -> Chart:
        return Chart(int(self.vchart_kind[v]), int(self.vchart_index[v]))

    def coords_in(self, chart: Chart, vids) -> np.ndarray:
        return self.domain.coord(chart, self.verts_x[vids], self.verts_y[vids])

    def dxdz_in(self, chart: Chart, vids) -> np.ndarray:
        return self.domain.dxdz(chart, self.verts_x[vids], self.verts_y[vids])

    def home_dxdz(self, vids) -> np.ndarray:
        vids = np.atleast_1d(vids)
        out = np.empty(len(vids), dtype=complex)
        keys = np.stack([self.vchart_kind[vids], self.vchart_index[vids]], axis=1)
        for kind, index in np.unique(keys, axis=0):
            sel = (keys[:, 0] == kind) & (keys[:, 1] == index)
            out[sel] = self.dxdz_in(Chart(int(kind), int(index)), vids[sel])
        return out

    def jac_to(self, chart: Chart, vids) -> np.ndarray:
        """Complex transition derivative dz_home/dz_chart per vertex.

        Exactly 1 where home == chart (the formula would be 0/0 at branch
        points and infinity vertices in their own charts).
        """
        vids = np.atleast_1d(vids)
        same = (self.vchart_kind[vids] == chart.kind) & (self.vchart_index[vids] == chart.index)
        out = np.ones(len(vids), dtype=complex)
        rest = np.where(~same)[0]
        if len(rest):
            sub = vids[rest]
            out[rest] = self.dxdz_in(chart, sub) / self.home_dxdz(sub)
        return out

    def logjac_to(self, chart: Chart, vids) -> np.ndarray:
        """log|dz_home/dz_chart| per vertex: phi_chart = phi_home + this."""
        return np.log(np.abs(self.jac_to(chart, vids)))

    def phi_in(self, chart: Chart, vids, phi=None) -> np.ndarray:
        phi = self.phi0 if phi is None else phi
        return phi[vids] + self.logjac_to(chart, vids)

    def tri_phi(self, phi=None) -> np.ndarray:
        """(nt, 3) conformal log-factor at corners, in each triangle's own chart."""
        phi = self.phi0 if phi is None else phi
        out = np.empty((self.nt, 3), dtype=float)
        keys = np.stack([self.tri_chart_kind, self.tri_chart_index], axis=1)
        for kind, index in np.unique(keys, axis=0):
            sel = (self.tri_chart_kind == kind) & (self.tri_chart_index == index)
            ch = Chart(int(kind), int(index))
            vids = self.tris[sel].ravel()
            out[sel] = self.phi_in(ch, vids, phi).reshape(-1, 3)
        return out

    def eta_values(self, vids) -> np.ndarray:
        """y / x^{g+1} per vertex; at infinity vertices the limit, by continuity."""
        vids = np.atleast_1d(vids)
        out = np.empty(len(vids), dtype=complex)
        lead_rt = np.sqrt(complex(getattr(self.domain, "lead", 1.0)))
        for k, v in enumerate(vids):
            x, y = self.verts_x[v], self.verts_y[v]
            if np.isinf(x.real):
                u = next(int(q) for q in self.ring(v) if not np.isinf(self.verts_x[q].real))
                eta_u = self.verts_y[u] / self.verts_x[u] ** (self.genus + 1)
                out[k] = lead_rt if abs(eta_u - lead_rt) < abs(eta_u + lead_rt) else -lead_rt
            else:
                out[k] = y / x ** (self.genus + 1)
        return out

    def ring(self, v: int) -> np.ndarray:
        return self._ring[v]

    def vertex_tris(self, v: int) -> np.ndarray:
        return self._vtris[v]

    def two_ring(self, v: int) -> np.ndarray:
        r1 = self._ring[v]
        out = set(r1.tolist())
        for u in r1:
            out.update(self._ring[u].tolist())
        out.discard(v)
        return np.array(sorted(out), dtype=int)

    def flat_areas(self) -> np.ndarray:
        z = self.tri_z
        return 0.5 * np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))

    def area(self, phi=None) -> float:
        """Total area of e^{2 phi} |dz|^2 (lumped one-point-per-corner quadrature)."""
        fa = self.flat_areas()
        ephi = np.exp(2.0 * self.tri_phi(phi))
        return float(np.sum(fa / 3.0 * np.sum(ephi, axis=1)))

    def mass_vector(self, phi=None) -> np.ndarray:
        fa = self.flat_areas()
        ephi = np.exp(2.0 * self.tri_phi(phi))
        m = np.zeros(self.nv)
        for k in range(3):
            np.add.at(m, self.tris[:, k], fa / 3.0 * ephi[:, k])
        return m


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------


def _hex_lattice(radius: float, h: float, center: complex = 0.0) -> np.ndarray:
    n = int(np.ceil(radius / h)) + 2
    i, j = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1))
    pts = (i + 0.5 * (j % 2)) * h + 1j * (j * h * np.sqrt(3) / 2)
    pts = pts.ravel() + center
    return pts[np.abs(pts - center) < radius]


def _rings(center: complex, radii, counts, phase=0.0) -> np.ndarray:
    out = []
    for r, n in zip(radii, counts):
        th = phase + 2 * np.pi * np.arange(n) / n
        out.append(center + r * np.exp(1j * th))
    return np.concatenate(out) if out else np.empty(0, dtype=complex)


def _drop_near(pts: np.ndarray, centers, radii) -> np.ndarray:
    keep = np.ones(len(pts), dtype=bool)
    for c, r in zip(centers, radii):
        keep &= np.abs(pts - c) > r
    return pts[keep]


def _dedupe(pts: np.ndarray, tol: float) -> np.ndarray:
    """Drop points that coincide with an earlier one up to tol (grid hashing)."""
    seen = {}
    keep = []
    for idx, p in enumerate(pts):
        ci, cj = round(p.real / tol), round(p.imag / tol)
        dup = False
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for q in seen.get((ci + di, cj + dj), ()):
                    if abs(p - q) <= tol:
                        dup = True
                        break
                if dup:
                    break
            if dup:
                break
        if not dup:
            seen.setdefault((ci, cj), []).append(p)
            keep.append(idx)
    return pts[np.array(keep, dtype=int)]


def _ccw(tris: np.ndarray, z: np.ndarray) -> np.ndarray:
    p = z[tris]
    area2 = np.imag(np.conj(p[:, 1] - p[:, 0]) * (p[:, 2] - p[:, 0]))
    flip = area2 < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


# ---------------------------------------------------------------------------
# disk builder
# ---------------------------------------------------------------------------


def _build_disk(spec: SurfaceSpec, resolution: int, marked: list[MarkedPoint]) -> SurfaceMesh:
    R = spec.radius
    h = 2.0 * R / resolution
    mpts = np.array([m.x for m in marked], dtype=complex)
    if len(mpts) and np.max(np.abs(mpts)) > R - 3 * h:
        raise MeshError("marked point too close to the disk boundary")
    if len(mpts) > 1:
        d = np.abs(mpts[:, None] - mpts[None, :])
        np.fill_diagonal(d, np.inf)
        if d.min() < 4 * h:
            raise MeshError("resolution too low to separate marked points")
    pts = [mpts]
    for p in mpts:
        pts.append(_rings(p, [0.45 * h, 0.95 * h], [8, 14]))
    nb = max(12, int(round(2 * np.pi * R / h)))
    boundary = R * np.exp(2j * np.pi * np.arange(nb) / nb)
    lattice = _hex_lattice(R - 0.55 * h, h)
    lattice = _drop_near(lattice, mpts, np.full(len(mpts), 1.35 * h))
    pts.append(lattice)
    pts.append(boundary)
    allpts = _dedupe(np.concatenate(pts), 0.2 * h)
    xy = np.stack([allpts.real, allpts.imag], axis=1)
    tris = _ccw(Delaunay(xy).simplices, allpts)

    nv = len(allpts)
    mesh = SurfaceMesh(
        kind="disk",
        genus=0,
        domain=spec.domain(),
        verts_x=allpts,
        verts_y=np.zeros(nv, dtype=complex),
        vchart_kind=np.full(nv, DISK),
        vchart_index=np.full(nv, -1),
        vz=allpts,
        tris=tris,
        tri_chart_kind=np.full(len(tris), DISK),
        tri_chart_index=np.full(len(tris), -1),
        tri_z=allpts[tris],
        h=h,
        radius=R,
    )
    for m in marked:
        v = int(np.argmin(np.abs(allpts - m.x)))
        if abs(allpts[v] - m.x) > 1e-12:
            raise MeshError(f"marked point {m.name} lost during meshing")
        mesh.marked[m.name] = v
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# hyperelliptic builder
# ---------------------------------------------------------------------------


def _sphere_points(curve: HyperellipticCurve, resolution: int, marked):
    """Point cloud on the x-sphere: inner x-disk cloud, shared circle, xi cloud."""
    b = curve.branch
    r_char = max(1.0, float(np.max(np.abs(b))))
    h = 2.0 * r_char / resolution
    r_out = 2.5 * r_char

    mpts = np.array([m.x for m in marked], dtype=complex)
    if len(mpts) > 1:
        d = np.abs(mpts[:, None] - mpts[None, :])
        np.fill_diagonal(d, np.inf)
        dpos = d[d > 1e-12]
        if len(dpos) and dpos.min() < 4 * h:
            raise MeshError("resolution too low to separate marked points")
        mpts = _dedupe(mpts, 1e-12) if d.min() < 1e-12 else mpts
    for p in mpts:
        if np.min(np.abs(p - b)) < 1.2 * np.max(curve.branch_radius):
            raise MeshError("marked point inside a branch disk")
        for (ia, ib) in curve.cuts:
            a_, b_ = b[ia], b[ib]
            t = np.clip(np.real((p - a_) * np.conj(b_ - a_)) / abs(b_ - a_) ** 2, 0, 1)
            if abs(p - (a_ + t * (b_ - a_))) < 2 * h:
                raise MeshError("marked point on a chart-seam (branch cut)")

    inner = [b, mpts]
    # graded rings inside each branch disk: quadratic radii make the lifted
    # w-chart rings uniform (w = sqrt of the x-offset)
    min_ring = np.inf
    for i, bi in enumerate(b):
        rho = curve.branch_radius[i]
        K = int(np.clip(round(rho / h) + 1, 3, 7))
        radii = rho * (np.arange(1, K + 1) / K) ** 2
        min_ring = min(min_ring, radii[0])
        counts = [max(8, int(round(np.pi * k)) * 2) for k in range(1, K + 1)]
        inner.append(_rings(bi, radii, counts, phase=0.37 * i))
    for p in mpts:
        inner.append(_rings(p, [0.5 * h, 1.05 * h], [8, 14]))

    nb = max(24, int(round(2 * np.pi * r_out / h)))
    circle = r_out * np.exp(2j * np.pi * (np.arange(nb) + 0.5) / nb)

    lattice = _hex_lattice(r_out - 0.55 * h, h, center=0.013 * h + 0.007j * h)
    lattice = _drop_near(lattice, b, 1.3 * curve.branch_radius)
    if len(mpts):
        lattice = _drop_near(lattice, mpts, np.full(len(mpts), 1.4 * h))
    # keep lattice points off the cut segments (parity predicates need margin)
    keep = np.ones(len(lattice), dtype=bool)
    for (ia, ib) in curve.cuts:
        a_, b_ = b[ia], b[ib]
        t = np.clip(np.real((lattice - a_) * np.conj(b_ - a_)) / abs(b_ - a_) ** 2, 0, 1)
        keep &= np.abs(lattice - (a_ + t * (b_ - a_))) > 0.25 * h
    inner.append(lattice[keep])
    tol = min(0.2 * h, 0.4 * min_ring)
    inner_pts = _dedupe(np.concatenate(inner), tol)
    inner_pts = inner_pts[np.abs(inner_pts) < r_out - 0.45 * h]
    # no interior vertex may sit exactly on a cut (sheet parity would be
    # ill-defined there); branch points are the allowed cut endpoints
    on_cut = np.zeros(len(inner_pts), dtype=bool)
    for (ia, ib) in curve.cuts:
        a_, b_ = b[ia], b[ib]
        t = np.clip(np.real((inner_pts - a_) * np.conj(b_ - a_)) / abs(b_ - a_) ** 2, 0, 1)
        on_cut |= np.abs(inner_pts - (a_ + t * (b_ - a_))) < 1e-6
    is_special = np.zeros(len(inner_pts), dtype=bool)
    for p in np.concatenate([b, mpts]) if len(mpts) else b:
        is_special |= np.abs(inner_pts - p) < 1e-12
    inner_pts = inner_pts[~on_cut | is_special]

    # xi-side cloud: the shared circle maps to |xi| = 1/r_out; spacing matched
    h_xi = h / r_out**2
    xi_lattice = _hex_lattice(1.0 / r_out - 0.55 * h_xi, h_xi)
    xi_pts = _dedupe(np.concatenate([np.array([0.0 + 0.0j]), xi_lattice]), 0.25 * h_xi)
    return inner_pts, circle, xi_pts, h, r_out


def _build_hyperelliptic(spec: SurfaceSpec, resolution: int, marked) -> SurfaceMesh:
    curve = spec.domain()
    g = curve.genus
    inner_pts, circle, xi_pts, h, r_out = _sphere_points(curve, resolution, marked)

    # --- triangulate the two sphere pieces --------------------------------
    pts_x = np.concatenate([inner_pts, circle])  # x-plane coordinates
    xy = np.stack([pts_x.real, pts_x.imag], axis=1)
    tri_in = _ccw(Delaunay(xy).simplices, pts_x)

    circle_ids = np.arange(len(inner_pts), len(pts_x))
    xi_of_circle = 1.0 / circle
    pts_xi = np.concatenate([xi_of_circle, xi_pts])
    xy2 = np.stack([pts_xi.real, pts_xi.imag], axis=1)
    tri_out_local = _ccw(Delaunay(xy2).simplices, pts_xi)

    # merge vertex tables: sphere vertex list = inner+circle then xi interior
    n_inner = len(pts_x)
    xi_interior_global = np.arange(n_inner, n_inner + len(xi_pts))
    out_map = np.concatenate([circle_ids, xi_interior_global])
    tri_out = out_map[tri_out_local]

    with np.errstate(divide="ignore", invalid="ignore"):
        sph_x = np.concatenate([pts_x, 1.0 / xi_pts])  # x-coordinates (inf at xi=0)
    sph_xi = np.concatenate([np.full(n_inner, np.nan + 0j), xi_pts])
    is_inf = np.zeros(len(sph_x), dtype=bool)
    iz = np.where(np.abs(xi_pts) == 0)[0]
    if len(iz) != 1:
        raise MeshError("expected exactly one infinity point in the xi cloud")
    inf_vertex = n_inner + iz[0]
    is_inf[inf_vertex] = True
    sph_x[inf_vertex] = np.inf

    tris_s = np.concatenate([tri_in, tri_out])
    n_in_tris = len(tri_in)
    nts = len(tris_s)

    # --- sheet parities on dual edges --------------------------------------
    # interior reference point (x-plane) per inner triangle; deliberately
    # asymmetric so cuts of symmetric configurations cannot pass through it
    # exactly; outer triangles never cross cuts
    cen = np.zeros(nts, dtype=complex)
    order = np.argsort(tri_in, axis=1)
    sorted_corners = np.take_along_axis(tri_in, order, axis=1)
    zc = pts_x[sorted_corners]
    cen[:n_in_tris] = (1.0 * zc[:, 0] + 2.0 * zc[:, 1] + 4.0 * zc[:, 2]) / 7.0

    edge_key = {}
    for f, t in enumerate(tris_s):
        for k in range(3):
            e = (min(t[k], t[(k + 1) % 3]), max(t[k], t[(k + 1) % 3]))
            edge_key.setdefault(e, []).append(f)
    for e, fs in edge_key.items():
        if len(fs) != 2:
            raise MeshError("sphere mesh is not closed")

    def dual_parity(f1, f2, u, v):
        # two-leg path through a point on the shared edge stays inside the
        # triangle pair, so the parity cocycle matches the per-triangle
        # y-continuation exactly; the split is deliberately asymmetric so that
        # cuts of symmetric configurations cannot pass through it exactly
        if f1 >= n_in_tris or f2 >= n_in_tris:
            return 0
        a, bb = (u, v) if u < v else (v, u)
        m = sph_x[a] + 0.37 * (sph_x[bb] - sph_x[a])
        return (curve.cut_crossings(cen[f1], m) + curve.cut_crossings(m, cen[f2])) % 2

    # --- build the double cover by corner union-find -----------------------
    # cover triangle id: f + s*nts; corner instance id: 3*(f + s*nts) + k
    parent = np.arange(6 * nts)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    corner_index = {}
    for f, t in enumerate(tris_s):
        for k in range(3):
            corner_index[(f, t[k])] = k

    for (u, v), (f1, f2) in edge_key.items():
        p = dual_parity(f1, f2, u, v)
        for s in (0, 1):
            s2 = s ^ p
            for vv in (u, v):
                a = 3 * (f1 + s * nts) + corner_index[(f1, vv)]
                bb = 3 * (f2 + s2 * nts) + corner_index[(f2, vv)]
                union(a, bb)

    roots = {}
    cover_corner_vid = np.empty(6 * nts, dtype=int)
    for f in range(nts):
        for s in (0, 1):
            for k in range(3):
                cid = 3 * (f + s * nts) + k
                r = find(cid)
                if r not in roots:
                    roots[r] = len(roots)
                cover_corner_vid[cid] = roots[r]
    nv = len(roots)

    cover_tris = np.empty((2 * nts, 3), dtype=int)
    cover_sheet = np.empty(2 * nts, dtype=int)
    for s in (0, 1):
        for f in range(nts):
            for k in range(3):
                cover_tris[f + s * nts, k] = cover_corner_vid[3 * (f + s * nts) + k]
            cover_sheet[f + s * nts] = s

    # --- vertex data: x and a continued y-branch ---------------------------
    verts_x = np.empty(nv, dtype=complex)
    verts_y = np.empty(nv, dtype=complex)
    verts_eta = np.zeros(nv, dtype=complex)  # y/x^{g+1} at infinity vertices
    seen = np.zeros(nv, dtype=bool)
    branch_set = {complex(bb) for bb in curve.branch}

    for s in (0, 1):
        sgn_s = -1.0 if s == 1 else 1.0
        for f in range(nts):
            t = tris_s[f]
            for k in range(3):
                vid = cover_tris[f + s * nts, k]
                if seen[vid]:
                    continue
                seen[vid] = True
                xk = sph_x[t[k]]
                verts_x[vid] = xk
                if is_inf[t[k]]:
                    verts_y[vid] = np.inf
                    verts_eta[vid] = sgn_s * np.sqrt(complex(curve.lead))
                elif complex(xk) in branch_set:
                    verts_y[vid] = 0.0
                else:
                    if f < n_in_tris:
                        sig = -1.0 if curve.cut_crossings(cen[f], xk) % 2 else 1.0
                    else:
                        sig = 1.0
                    verts_y[vid] = sgn_s * sig * curve.y0(np.array([xk]))[0]

    # --- charts -------------------------------------------------------------
    vkind = np.full(nv, XCHART)
    vindex = np.full(nv, -1)
    finite = ~np.isinf(verts_x.real)
    big = ~finite | (np.abs(np.where(finite, verts_x, 0.0)) > r_out + 1e-9)
    vkind[big] = XICHART
    for i, bi in enumerate(curve.branch):
        selb = finite & (np.abs(verts_x - bi) < curve.branch_radius[i] * (1 + 1e-12))
        vkind[selb] = WCHART
        vindex[selb] = i

    tkind = np.full(2 * nts, XCHART)
    tindex = np.full(2 * nts, -1)
    for s in (0, 1):
        tkind[s * nts + n_in_tris :] = XICHART
    for i, bi in enumerate(curve.branch):
        inside = np.zeros(nv, dtype=bool)
        inside[finite] = np.abs(verts_x[finite] - bi) < curve.branch_radius[i] * (1 + 1e-12)
        selt = inside[cover_tris].all(axis=1)
        tkind[selt] = WCHART
        tindex[selt] = i
        # the branch vertex star must be inside its w-chart
        bvid = np.where(finite & (np.abs(verts_x - bi) < 1e-12))[0]
        if len(bvid) != 1:
            raise MeshError("branch point did not become a single cover vertex")
        star = np.where((cover_tris == bvid[0]).any(axis=1))[0]
        if not np.all(tkind[star] == WCHART):
            raise MeshError("resolution too low: branch star leaves the w-chart disk")

    # corner coordinates per triangle chart
    tri_z = np.empty((2 * nts, 3), dtype=complex)
    for kind, index in {(int(k), int(i)) for k, i in zip(tkind, tindex)}:
        ch = Chart(kind, index)
        sel = (tkind == kind) & (tindex == index)
        vids = cover_tris[sel].ravel()
        if kind == XICHART:
            with np.errstate(divide="ignore"):
                z = np.where(np.isinf(verts_x[vids].real), 0.0, 1.0 / verts_x[vids])
        else:
            z = curve.coord(ch, verts_x[vids], verts_y[vids])
        tri_z[sel] = z.reshape(-1, 3)
    cover_tris_ccw = np.empty_like(cover_tris)
    area2 = np.imag(np.conj(tri_z[:, 1] - tri_z[:, 0]) * (tri_z[:, 2] - tri_z[:, 0]))
    flip = area2 < 0
    cover_tris_ccw[:] = cover_tris
    cover_tris_ccw[flip] = cover_tris[flip][:, [0, 2, 1]]
    tri_z[flip] = tri_z[flip][:, [0, 2, 1]]

    # home coordinates
    vz = np.empty(nv, dtype=complex)
    for kind, index in {(int(k), int(i)) for k, i in zip(vkind, vindex)}:
        ch = Chart(kind, index)
        sel = (vkind == kind) & (vindex == index)
        ids = np.where(sel)[0]
        if kind == XICHART:
            with np.errstate(divide="ignore"):
                vz[ids] = np.where(np.isinf(verts_x[ids].real), 0.0, 1.0 / verts_x[ids])
        else:
            vz[ids] = curve.coord(ch, verts_x[ids], verts_y[ids])

    mesh = SurfaceMesh(
        kind="hyperelliptic",
        genus=g,
        domain=curve,
        verts_x=verts_x,
        verts_y=verts_y,
        vchart_kind=vkind,
        vchart_index=vindex,
        vz=vz,
        tris=cover_tris_ccw,
        tri_chart_kind=tkind,
        tri_chart_index=tindex,
        tri_z=tri_z,
        tri_sheet=cover_sheet,
        h=h,
        radius=r_out,
    )
    mesh.verts_eta = verts_eta

    for m in marked:
        cands = np.where(finite & (np.abs(verts_x - m.x) < 1e-10))[0]
        if len(cands) != 2:
            raise MeshError(f"marked point {m.name} has {len(cands)} cover vertices, expected 2")
        y_ref = curve.y0(np.array([m.x]))[0]
        want = y_ref if m.sheet == 0 else -y_ref
        v = cands[int(np.argmin(np.abs(verts_y[cands] - want)))]
        mesh.marked[m.name] = int(v)
    mesh.validate()
    return mesh


def build_mesh(spec: SurfaceSpec, resolution: int, marked_points=()) -> SurfaceMesh:
    """Triangulate the surface; every marked point becomes a mesh vertex."""
    if resolution < MIN_RESOLUTION:
        raise MeshError(f"resolution {resolution} below documented minimum {MIN_RESOLUTION}")
    marked = list(marked_points)
    names = [m.name for m in marked]
    if len(set(names)) != len(names):
        raise MeshError("marked point names must be distinct")
    pts = np.array([m.x for m in marked], dtype=complex)
    if len(pts) > 1:
        d = np.abs(pts[:, None] - pts[None, :])
        np.fill_diagonal(d, np.inf)
        if spec.kind == "hyperelliptic":
            same_fiber = d < 1e-12
            sheets = np.array([m.sheet for m in marked])
            coincident = same_fiber & (sheets[:, None] == sheets[None, :])
            if np.any(coincident):
                raise MeshError("coincident marked points")
        elif np.any(d < 1e-12):
            raise MeshError("coincident marked points")
    if spec.kind == "disk":
        return _build_disk(spec, resolution, marked)
    return _build_hyperelliptic(spec, resolution, marked)


# ---------------------------------------------------------------------------
# mesh text format
# ---------------------------------------------------------------------------

_KIND_TO_NAME = {DISK: "disk", XCHART: "x", WCHART: "w", XICHART: "xi"}
_NAME_TO_KIND = {v: k for k, v in _KIND_TO_NAME.items()}


def save_mesh(mesh: SurfaceMesh, path):
    """Structured text export: vertex, triangle and marked-point tables."""
    with open(path, "w") as fh:
        fh.write("# hypcone mesh v1\n")
        fh.write(f"kind {mesh.kind}\n")
        fh.write(f"genus {mesh.genus}\n")
        if mesh.kind == "disk":
            fh.write(f"radius {float(mesh.radius)!r}\n")
        else:
            bs = " ".join(f"{float(b.real)!r} {float(b.imag)!r}" for b in mesh.domain.branch)
            fh.write(f"branch {bs}\n")
            lead = complex(mesh.domain.lead)
            fh.write(f"lead {lead.real!r} {lead.imag!r}\n")
            cuts = " ".join(f"{a} {b}" for a, b in mesh.domain.cuts)
            fh.write(f"cuts {cuts}\n")
        fh.write(f"h {float(mesh.h)!r}\n")
        fh.write("vertices id chart chart_index re im phi0 x_re x_im y_re y_im\n")
        phi = mesh.phi0 if mesh.phi0 is not None else np.zeros(mesh.nv)
        for v in range(mesh.nv):
            fh.write(
                f"{v} {_KIND_TO_NAME[int(mesh.vchart_kind[v])]} {int(mesh.vchart_index[v])} "
                f"{float(mesh.vz[v].real)!r} {float(mesh.vz[v].imag)!r} {float(phi[v])!r} "
                f"{float(mesh.verts_x[v].real)!r} {float(mesh.verts_x[v].imag)!r} "
                f"{float(mesh.verts_y[v].real)!r} {float(mesh.verts_y[v].imag)!r}\n"
            )
        fh.write("triangles v0 v1 v2 chart chart_index sheet\n")
        for f in range(mesh.nt):
            sheet = -1 if mesh.tri_sheet is None else int(mesh.tri_sheet[f])
            fh.write(
                f"{mesh.tris[f,0]} {mesh.tris[f,1]} {mesh.tris[f,2]} "
                f"{_KIND_TO_NAME[int(mesh.tri_chart_kind[f])]} {int(mesh.tri_chart_index[f])} {sheet}\n"
            )
        fh.write("marked name vertex\n")
        for name, v in sorted(mesh.marked.items()):
            fh.write(f"{name} {v}\n")


def load_mesh(path) -> SurfaceMesh:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines[0].startswith("# hypcone mesh"):
        raise MeshError(f"{path}: not a hypcone mesh file")
    i = 1
    head = {}
    while not lines[i].startswith("vertices"):
        key, _, val = lines[i].partition(" ")
        head[key] = val
        i += 1
    kind = head["kind"]
    genus = int(head["genus"])
    if kind == "disk":
        spec = SurfaceSpec(kind="disk", radius=float(head["radius"]))
        domain = spec.domain()
    else:
        vals = [float(t) for t in head["branch"].split()]
        branch = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        lr, li = (float(t) for t in head["lead"].split())
        cut_vals = [int(t) for t in head["cuts"].split()]
        cuts = list(zip(cut_vals[0::2], cut_vals[1::2]))
        domain = HyperellipticCurve(branch, complex(lr, li), cuts=cuts)
    i += 1
    vrows = []
    while not lines[i].startswith("triangles"):
        vrows.append(lines[i].split())
        i += 1
    i += 1
    trows = []
    while i < len(lines) and not lines[i].startswith("marked"):
        trows.append(lines[i].split())
        i += 1
    marked = {}
    for ln in lines[i + 1 :]:
        if ln.strip():
            name, v = ln.split()
            marked[name] = int(v)

    nv = len(vrows)
    verts_x = np.empty(nv, complex)
    verts_y = np.empty(nv, complex)
    vz = np.empty(nv, complex)
    phi0 = np.empty(nv)
    vk = np.empty(nv, int)
    vi = np.empty(nv, int)
    for r in vrows:
        v = int(r[0])
        vk[v] = _NAME_TO_KIND[r[1]]
        vi[v] = int(r[2])
        vz[v] = complex(float(r[3]), float(r[4]))
        phi0[v] = float(r[5])
        verts_x[v] = complex(float(r[6]), float(r[7]))
        verts_y[v] = complex(float(r[8]), float(r[9]))
    tris = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in trows])
    tk = np.array([_NAME_TO_KIND[r[3]] for r in trows])
    ti = np.array([int(r[4]) for r in trows])
    sheets = np.array([int(r[5]) for r in trows])
    tri_z = np.empty((len(tris), 3), complex)
    for kind_i, index in {(int(k), int(ix)) for k, ix in zip(tk, ti)}:
        ch = Chart(kind_i, index)
        sel = (tk == kind_i) & (ti == index)
        vids = tris[sel].ravel()
        if kind_i == XICHART:
            with np.errstate(divide="ignore"):
                z = np.where(np.isinf(verts_x[vids].real), 0.0, 1.0 / verts_x[vids])
        else:
            z = domain.coord(ch, verts_x[vids], verts_y[vids])
        tri_z[sel] = z.reshape(-1, 3)
    mesh = SurfaceMesh(
        kind=kind,
        genus=genus,
        domain=domain,
        verts_x=verts_x,
        verts_y=verts_y,
        vchart_kind=vk,
        vchart_index=vi,
        vz=vz,
        tris=tris,
        tri_chart_kind=tk,
        tri_chart_index=ti,
        tri_z=tri_z,
        marked=marked,
        tri_sheet=None if np.all(sheets < 0) else sheets,
        phi0=phi0,
        h=float(head["h"]),
        radius=float(head.get("radius", 0.0)),
    )
    return mesh
