"""Convex domains, P1 simplicial meshes, and boundary-distance queries.

Fields vanish identically outside the domain, so the mesh only covers
the closure of Omega; the complement enters through exact radial tail
integrals driven by ray exit distances.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Domain:
    """Bounded convex domain: an interval or a convex CCW polygon."""

    kind: str
    data: tuple

    @classmethod
    def interval(cls, lo, hi):
        lo, hi = float(lo), float(hi)
        if hi <= lo:
            raise ValueError("interval needs lo < hi")
        return cls("interval", (lo, hi))

    @classmethod
    def polygon(cls, vertices):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise ValueError("polygon needs at least three 2d vertices")
        area2 = 0.0
        m = len(verts)
        for i in range(m):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % m]
            area2 += x0 * y1 - x1 * y0
        if area2 <= 1e-14:
            raise ValueError("polygon vertices must be counterclockwise with "
                             "positive area")
        scale = np.max(np.abs(verts)) + 1.0
        for i in range(m):
            a = verts[i]
            b = verts[(i + 1) % m]
            c = verts[(i + 2) % m]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross < -1e-12 * scale * scale:
                raise ValueError("polygon must be convex (cross-product test "
                                 "failed at vertex %d)" % ((i + 1) % m))
        return cls("polygon", tuple(map(tuple, verts)))

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    @property
    def vertices(self):
        return np.asarray(self.data, dtype=float)

    def diameter(self):
        if self.kind == "interval":
            return self.data[1] - self.data[0]
        v = self.vertices
        d = 0.0
        for i in range(len(v)):
            d = max(d, float(np.max(np.linalg.norm(v - v[i], axis=1))))
        return d

    def measure(self):
        if self.kind == "interval":
            return self.data[1] - self.data[0]
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    @cached_property
    def _edge_data(self):
        v = self.vertices
        m = len(v)
        normals = np.empty((m, 2))
        offsets = np.empty(m)
        for i in range(m):
            a, b = v[i], v[(i + 1) % m]
            t = b - a
            n = np.array([-t[1], t[0]])     # CCW order makes this inward
            n /= np.linalg.norm(n)
            normals[i] = n
            offsets[i] = n @ a
        return normals, offsets

    def edge_normals(self):
        """Inward unit normals and offsets c with n.x >= c inside."""
        return self._edge_data

    def ray_exits(self, x, dirs):
        """Exit distances from interior x along many unit directions."""
        if self.kind == "interval":
            lo, hi = self.data
            xv = float(np.asarray(x).reshape(-1)[0])
            d = np.asarray(dirs, dtype=float).reshape(-1)
            return np.where(d > 0, hi - xv, xv - lo)
        normals, offsets = self._edge_data
        x = np.asarray(x, dtype=float).reshape(2)
        dirs = np.asarray(dirs, dtype=float)
        dots = normals @ dirs.T                   # (edges, ndirs)
        gaps = (normals @ x - offsets)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dots < -1e-15, gaps / (-dots), np.inf)
        return np.min(t, axis=0)

    def distance_to_boundary(self, x):
        """Distance from x to the complement; zero outside the closure."""
        if self.kind == "interval":
            lo, hi = self.data
            xv = float(np.asarray(x).reshape(-1)[0])
            return max(0.0, min(xv - lo, hi - xv))
        normals, offsets = self.edge_normals()
        x = np.asarray(x, dtype=float).reshape(2)
        # for a convex polygon the nearest boundary point of an interior
        # point always lies inside an edge, so edge-line distances suffice
        d = float(np.min(normals @ x - offsets))
        return max(0.0, d)

    def exterior_distance(self, x):
        """Distance from an exterior point x to the closure of the domain."""
        if self.kind == "interval":
            lo, hi = self.data
            xv = float(np.asarray(x).reshape(-1)[0])
            return max(0.0, lo - xv, xv - hi)
        return float(self.exterior_distances(
            np.asarray(x, dtype=float).reshape(1, 2))[0])

    def exterior_distances(self, pts):
        """Vectorized exterior distance for a batch of 2d points."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        v = self.vertices
        normals, offsets = self._edge_data
        inside = np.all(pts @ normals.T - offsets >= 0.0, axis=1)
        best = np.full(len(pts), np.inf)
        m = len(v)
        for i in range(m):
            a, b = v[i], v[(i + 1) % m]
            t = b - a
            lam = np.clip((pts - a) @ t / (t @ t), 0.0, 1.0)
            proj = a + lam[:, None] * t
            best = np.minimum(best, np.linalg.norm(pts - proj, axis=1))
        best[inside] = 0.0
        return best

    def ray_exit(self, x, theta):
        """sup{t > 0 : x + t*theta in Omega} for interior x."""
        if self.kind == "interval":
            lo, hi = self.data
            xv = float(np.asarray(x).reshape(-1)[0])
            th = float(np.asarray(theta).reshape(-1)[0])
            return (hi - xv) if th > 0 else (xv - lo)
        theta = np.asarray(theta, dtype=float).reshape(1, 2)
        return float(self.ray_exits(x, theta)[0])


def _is_axis_rectangle(domain):
    v = domain.vertices
    if len(v) != 4:
        return False
    for i in range(4):
        d = v[(i + 1) % 4] - v[i]
        if abs(d[0]) > 1e-14 and abs(d[1]) > 1e-14:
            return False
    return True


class FeSpace:
    """Conforming P1 mesh over a convex domain with boundary metadata."""

    def __init__(self, domain, nodes, elements):
        self.domain = domain
        self.nodes = np.asarray(nodes, dtype=float)
        self.elements = np.asarray(elements, dtype=int)
        self.dim = domain.dim
        self._finalize()

    def _finalize(self):
        if self.dim == 1:
            coords = self.nodes.reshape(-1)
            order = np.argsort(coords)
            if not np.array_equal(order, np.arange(len(coords))):
                raise ValueError("1d nodes must be sorted")
            self.element_measures = np.abs(
                coords[self.elements[:, 1]] - coords[self.elements[:, 0]])
        else:
            v = self.nodes[self.elements]
            self.element_measures = 0.5 * np.abs(
                (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))
        if np.any(self.element_measures <= 0.0):
            raise ValueError("mesh contains degenerate elements")
        delta = np.array([self.domain.distance_to_boundary(x)
                          for x in np.atleast_2d(self.nodes.reshape(len(self.nodes), -1))])
        snap = 1e-12 * max(self.domain.diameter(), 1.0)
        delta[delta < snap] = 0.0
        self.node_delta = delta
        self.interior_nodes = np.flatnonzero(delta > 0.0)
        self.boundary_nodes = np.flatnonzero(delta == 0.0)
        self.n_interior = len(self.interior_nodes)
        self.interior_index = np.full(len(self.nodes), -1, dtype=int)
        self.interior_index[self.interior_nodes] = np.arange(self.n_interior)
        if self.dim == 1:
            self.h_max = float(np.max(self.element_measures))
        else:
            v = self.nodes[self.elements]
            edges = np.stack([
                np.linalg.norm(v[:, 1] - v[:, 0], axis=1),
                np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
                np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
            ])
            self.h_max = float(np.max(edges))
        self._cache = {}

    # -- queries -------------------------------------------------------

    def boundary_distance(self, x):
        return self.domain.distance_to_boundary(x)

    def ray_exit_distance(self, x, theta):
        return self.domain.ray_exit(x, theta)

    def pair_class(self, e1, e2):
        """'identical', 'facet', 'vertex' or 'disjoint' for two elements."""
        if e1 == e2:
            return "identical"
        shared = len(set(self.elements[e1]) & set(self.elements[e2]))
        if self.dim == 1:
            return "facet" if shared == 1 else "disjoint"
        return {2: "facet", 1: "vertex", 0: "disjoint"}[shared]

    def element_vertices(self, e):
        return self.nodes[self.elements[e]]

    # -- refinement ----------------------------------------------------

    def refine(self):
        """Uniform refinement halving every element diameter."""
        if self.dim == 1:
            coords = self.nodes.reshape(-1)
            mids = 0.5 * (coords[:-1] + coords[1:])
            new = np.sort(np.concatenate([coords, mids]))
            elements = np.column_stack([np.arange(len(new) - 1),
                                        np.arange(1, len(new))])
            return FeSpace(self.domain, new, elements)
        nodes = [tuple(p) for p in self.nodes]
        node_of = {p: i for i, p in enumerate(nodes)}
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                p = tuple(0.5 * (self.nodes[i] + self.nodes[j]))
                if p not in node_of:
                    node_of[p] = len(nodes)
                    nodes.append(p)
                midpoint[key] = node_of[p]
            return midpoint[key]

        elements = []
        for tri in self.elements:
            i, j, k = (int(t) for t in tri)
            a, b, c = mid(i, j), mid(j, k), mid(k, i)
            elements.extend([(i, a, c), (a, j, b), (c, b, k), (a, b, c)])
        return FeSpace(self.domain, np.array(nodes), np.array(elements))


def build_mesh(domain, target_h):
    """Conforming mesh with every element diameter at most 1.5 * target_h."""
    target_h = float(target_h)
    if target_h <= 0.0 or target_h >= domain.diameter():
        raise ValueError("target_h must be positive and smaller than the "
                         "domain diameter")
    if domain.kind == "interval":
        lo, hi = domain.data
        m = int(np.ceil((hi - lo) / target_h))
        nodes = np.linspace(lo, hi, m + 1)
        elements = np.column_stack([np.arange(m), np.arange(1, m + 1)])
        return FeSpace(domain, nodes, elements)

    if _is_axis_rectangle(domain):
        v = domain.vertices
        x0, x1 = v[:, 0].min(), v[:, 0].max()
        y0, y1 = v[:, 1].min(), v[:, 1].max()
        mx = int(np.ceil((x1 - x0) / target_h))
        my = int(np.ceil((y1 - y0) / target_h))
        xs = np.linspace(x0, x1, mx + 1)
        ys = np.linspace(y0, y1, my + 1)
        nodes = np.array([(x, y) for y in ys for x in xs])
        elements = []
        for j in range(my):
            for i in range(mx):
                n00 = j * (mx + 1) + i
                n10 = n00 + 1
                n01 = n00 + (mx + 1)
                n11 = n01 + 1
                elements.append((n00, n10, n11))
                elements.append((n00, n11, n01))
        return FeSpace(domain, nodes, np.array(elements))

    # general convex polygon: fan from the centroid, then refine down to h
    v = domain.vertices
    centroid = v.mean(axis=0)
    nodes = np.vstack([v, centroid])
    c = len(v)
    elements = np.array([(i, (i + 1) % c, c) for i in range(c)])
    space = FeSpace(domain, nodes, elements)
    while space.h_max > 1.5 * target_h:
        space = space.refine()
    return space


@dataclass
class Field:
    """FE coefficients on interior nodes; zero on and outside the boundary.

    An optional exterior trace (see the assembly module) replaces the zero
    extension for nonhomogeneous problems.
    """

    space: FeSpace
    coeffs: np.ndarray
    exterior: object = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if len(self.coeffs) != self.space.n_interior:
            raise ValueError("coefficient count %d does not match the %d "
                             "interior nodes" % (len(self.coeffs),
                                                 self.space.n_interior))

    @classmethod
    def zero(cls, space):
        return cls(space, np.zeros(space.n_interior))

    def nodal_values(self):
        """Values on all mesh nodes, zeros at boundary nodes."""
        vals = np.zeros(len(self.space.nodes))
        vals[self.space.interior_nodes] = self.coeffs
        return vals
