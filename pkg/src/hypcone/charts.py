"""Coordinate charts on the supported surfaces.

Two surface backends are supported:

* a unit-disk patch with the identity chart, and
* a hyperelliptic curve y^2 = lead * prod_i (x - b_i) presented as a double
  cover of the x-sphere, with three chart families:

  - 'x'  : the sheet coordinate x itself (away from branch points and infinity),
  - 'w'  : a square-root coordinate w = y / sqrt(s_i(x)) with w^2 = x - b_i
           near the branch point b_i (the curve is smooth there),
  - 'xi' : xi = 1/x near the two points over infinity (even-degree model).

All transition data is algebraic, so derivatives between charts are exact.
Conformal factors transform by phi' = phi + log|dz/dz'|; tensors of weight m
pick up (dz/dz')^m.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# chart kind codes used in mesh arrays
DISK, XCHART, WCHART, XICHART = 0, 1, 2, 3

_KIND_NAMES = {DISK: "disk", XCHART: "x", WCHART: "w", XICHART: "xi"}


@dataclass(frozen=True)
class Chart:
    """A chart id: kind code plus branch-point index (w-charts only)."""

    kind: int
    index: int = -1

    @property
    def name(self) -> str:
        if self.kind == WCHART:
            return f"w{self.index}"
        return _KIND_NAMES[self.kind]


def _cross2(u: complex, v: complex) -> float:
    return u.real * v.imag - u.imag * v.real


def _seg_cross(a0, a1, b0, b1) -> bool:
    """Proper segment intersection test (open segments, generic position)."""
    a0, a1, b0, b1 = complex(a0), complex(a1), complex(b0), complex(b1)
    d1 = _cross2(a1 - a0, b0 - a0)
    d2 = _cross2(a1 - a0, b1 - a0)
    d3 = _cross2(b1 - b0, a0 - b0)
    d4 = _cross2(b1 - b0, a1 - b0)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _noncrossing_pairs(pts: np.ndarray) -> list[tuple[int, int]]:
    """Pair up an even set of planar points with pairwise non-crossing segments.

    Consecutive-by-angle pairing first (short cuts for circular layouts); if
    any two segments cross, swap partners until crossing-free (total segment
    length strictly decreases, so this terminates).
    """
    center = pts.mean()
    order = np.argsort(np.angle(pts - center))
    pairs = [[order[2 * k], order[2 * k + 1]] for k in range(len(pts) // 2)]
    changed = True
    guard = 0
    while changed:
        changed = False
        guard += 1
        if guard > 200:
            raise ValueError("degenerate branch configuration: cannot build non-crossing cuts")
        for i in range(len(pairs)):
            for j in range(i + 1, len(pairs)):
                a, b = pairs[i], pairs[j]
                if _seg_cross(pts[a[0]], pts[a[1]], pts[b[0]], pts[b[1]]):
                    # uncross by swapping endpoints
                    a[1], b[0] = b[0], a[1]
                    changed = True
    return [tuple(p) for p in pairs]


@dataclass
class HyperellipticCurve:
    """The curve y^2 = lead * prod (x - b_i), deg even, as a branched double cover.

    ``cuts`` is a non-crossing perfect matching of the branch points; off the
    cut segments the square root y0(x) below is single valued, and mesh sheet
    labels count cut crossings mod 2.
    """

    branch: np.ndarray
    lead: complex = 1.0 + 0.0j
    cuts: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.branch = np.asarray(self.branch, dtype=complex)
        if len(self.branch) % 2 != 0:
            raise ValueError("even-degree model required: give an even number of branch points")
        d = np.abs(self.branch[:, None] - self.branch[None, :])
        np.fill_diagonal(d, np.inf)
        self.min_sep = float(d.min())
        if self.min_sep <= 0:
            raise ValueError("branch points must be pairwise distinct")
        if not self.cuts:
            self.cuts = _noncrossing_pairs(self.branch)
        self.genus = (len(self.branch) - 2) // 2
        if self.genus < 2:
            raise ValueError("hyperelliptic backend requires genus >= 2")
        # chart radii: w-charts valid well inside the nearest-neighbour distance
        self.branch_radius = 0.25 * d.min(axis=1)

    # -- defining polynomial ------------------------------------------------

    def p(self, x):
        x = np.asarray(x, dtype=complex)
        out = np.full(x.shape, self.lead, dtype=complex)
        for b in self.branch:
            out = out * (x - b)
        return out

    def s(self, i, x):
        """s_i(x) = p(x)/(x - b_i), nonvanishing near b_i."""
        x = np.asarray(x, dtype=complex)
        out = np.full(x.shape, self.lead, dtype=complex)
        for j, b in enumerate(self.branch):
            if j != i:
                out = out * (x - b)
        return out

    def sqrt_s(self, i, x):
        """Branch of sqrt(s_i) continuous on the branch disk (principal rel. s_i(b_i))."""
        s0 = self.s(i, np.array([self.branch[i]]))[0]
        ratio = np.asarray(self.s(i, x) / s0)
        bad = (ratio.real <= 0) & (np.abs(ratio.imag) < 1e-14 * np.abs(ratio.real))
        if np.any(bad):
            raise ValueError("sqrt_s branch left the principal domain; shrink the branch disk")
        return np.sqrt(s0) * np.exp(0.5 * np.log(ratio))

    def y0(self, x):
        """Single-valued branch of sqrt(p) on the x-plane minus the cut segments.

        Built from per-cut factors sqrt((x-a)(x-b)) = (x-m) sqrt(1 - (h/(x-m))^2)
        whose principal-branch cut is exactly the segment [a, b].
        """
        x = np.asarray(x, dtype=complex)
        out = np.full(x.shape, np.sqrt(complex(self.lead)), dtype=complex)
        for (ia, ib) in self.cuts:
            a, b = self.branch[ia], self.branch[ib]
            m, h = 0.5 * (a + b), 0.5 * (b - a)
            out = out * (x - m) * np.sqrt(1.0 - (h / (x - m)) ** 2)
        return out

    def cut_crossings(self, z0, z1) -> int:
        """Number of cut segments properly crossed by the segment [z0, z1]."""
        n = 0
        for (ia, ib) in self.cuts:
            if _seg_cross(z0, z1, self.branch[ia], self.branch[ib]):
                n += 1
        return n

    # -- chart formulas -----------------------------------------------------

    def coord(self, chart: Chart, x, y):
        if chart.kind == XCHART:
            return np.asarray(x, dtype=complex)
        if chart.kind == XICHART:
            x = np.asarray(x, dtype=complex)
            with np.errstate(divide="ignore"):
                z = np.where(np.isinf(x), 0.0 + 0.0j, 1.0 / x)
            return z
        if chart.kind == WCHART:
            return np.asarray(y, dtype=complex) / self.sqrt_s(chart.index, x)
        raise ValueError(f"chart {chart} not defined on a hyperelliptic curve")

    def dxdz(self, chart: Chart, x, y):
        """dx/dz at the point, z the chart coordinate."""
        if chart.kind == XCHART:
            return np.ones_like(np.asarray(x, dtype=complex))
        if chart.kind == XICHART:
            xi = self.coord(chart, x, y)
            return -1.0 / xi**2
        if chart.kind == WCHART:
            w = self.coord(chart, x, y)
            return 2.0 * w
        raise ValueError(f"chart {chart} not defined on a hyperelliptic curve")

    def dlog_dxdz(self, chart: Chart, z):
        """lambda'(z) = d/dz log(dx/dz), used when re-charting derivatives."""
        z = np.asarray(z, dtype=complex)
        if chart.kind == XCHART:
            return np.zeros_like(z)
        if chart.kind == XICHART:
            return -2.0 / z
        if chart.kind == WCHART:
            return 1.0 / z
        raise ValueError(f"chart {chart}")


@dataclass
class DiskDomain:
    """Identity-chart disk model of radius < 1 in the curvature -4 disk."""

    radius: float

    def __post_init__(self):
        if not (0.0 < self.radius < 1.0):
            raise ValueError("disk radius must lie strictly inside the unit disk")

    def coord(self, chart: Chart, x, y):
        return np.asarray(x, dtype=complex)

    def dxdz(self, chart: Chart, x, y):
        return np.ones_like(np.asarray(x, dtype=complex))

    def dlog_dxdz(self, chart: Chart, z):
        return np.zeros_like(np.asarray(z, dtype=complex))
