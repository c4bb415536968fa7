"""Structured triangulations of rectangles with oriented-face connectivity.

The face records carry everything the lowest-order Raviart-Thomas space
needs: one unit normal per face oriented owner -> neighbor (outward on
boundaries), deterministic owner < neighbor ordering, and per-side
unwrapped endpoint coordinates so periodic meshes can evaluate both
traces of a face at the same physical point.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .quadrature import segment_gauss

BOUNDARY = -1


class BoundaryKind(enum.Enum):
    NO_FLUX = "noflux"
    PERIODIC = "periodic"


@dataclass
class Mesh:
    """Triangulation of an axis-aligned rectangle.

    Geometry is stored per cell occurrence (``cell_coords``), not per
    canonical vertex, so seam cells of a periodic mesh keep their true
    unwrapped coordinates.  Instances are treated as immutable after
    construction; ``cache`` holds derived tensors keyed by name.
    """

    boundary_kind: BoundaryKind
    domain: tuple
    vertices: np.ndarray        # (V, 2) canonical vertex coordinates
    cells: np.ndarray           # (C, 3) vertex ids, counterclockwise
    cell_coords: np.ndarray     # (C, 3, 2) unwrapped vertex coordinates
    cell_area: np.ndarray       # (C,)
    cell_diameter: np.ndarray   # (C,)
    face_vertices: np.ndarray   # (F, 2) vertex ids in canonical order
    face_owner: np.ndarray      # (F,)
    face_neighbor: np.ndarray   # (F,) BOUNDARY where no neighbor
    face_normal: np.ndarray     # (F, 2) unit, owner -> neighbor
    face_length: np.ndarray     # (F,)
    face_pts_owner: np.ndarray      # (F, 2, 2) endpoints in owner frame
    face_pts_neighbor: np.ndarray   # (F, 2, 2) same points in neighbor frame
    cell_faces: np.ndarray      # (C, 3) face ids per cell
    cell_face_sign: np.ndarray  # (C, 3) +1 where face normal is outward
    h: float
    periodic_pairs: list = field(default_factory=list)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.face_owner)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_neighbor != BOUNDARY)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_neighbor == BOUNDARY)

    @property
    def cell_centroids(self):
        return self.cell_coords.mean(axis=1)

    @property
    def opposite_vertex(self):
        """(C, 3, 2) coordinates of the vertex opposite each local face."""
        # local faces are the edges (v0,v1), (v1,v2), (v2,v0)
        return self.cell_coords[:, [2, 0, 1], :]


def build_structured_mesh(n, domain=(0.0, 0.0, 1.0, 1.0), boundary_kind=BoundaryKind.NO_FLUX):
    """Build an n x n grid of squares, each split along the lower-left
    to upper-right diagonal.

    Periodic meshes identify opposite sides at build time, so every face
    is interior and identified faces share a single record.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"mesh resolution must be a positive integer, got {n}")
    x0, y0, x1, y1 = map(float, domain)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"degenerate domain {domain}")
    periodic = boundary_kind is BoundaryKind.PERIODIC
    dx = (x1 - x0) / n
    dy = (y1 - y0) / n

    if periodic:
        def vid(i, j):
            return (j % n) * n + (i % n)
        verts = np.array([(x0 + i * dx, y0 + j * dy)
                          for j in range(n) for i in range(n)])
        n_h = n * n
        n_v = n * n

        def fid_h(i, j):
            return (j % n) * n + i

        def fid_v(i, j):
            return n_h + j * n + (i % n)
    else:
        def vid(i, j):
            return j * (n + 1) + i
        verts = np.array([(x0 + i * dx, y0 + j * dy)
                          for j in range(n + 1) for i in range(n + 1)])
        n_h = n * (n + 1)
        n_v = (n + 1) * n

        def fid_h(i, j):
            return j * n + i

        def fid_v(i, j):
            return n_h + j * (n + 1) + i

    def fid_d(i, j):
        return n_h + n_v + j * n + i

    n_faces = n_h + n_v + n * n
    n_cells = 2 * n * n

    cells = np.empty((n_cells, 3), dtype=np.int64)
    cell_coords = np.empty((n_cells, 3, 2))
    cell_faces = np.empty((n_cells, 3), dtype=np.int64)
    cell_sign = np.empty((n_cells, 3), dtype=np.int64)

    face_owner = np.full(n_faces, -2, dtype=np.int64)
    face_neighbor = np.full(n_faces, BOUNDARY, dtype=np.int64)
    face_vertices = np.empty((n_faces, 2), dtype=np.int64)
    face_pts_owner = np.full((n_faces, 2, 2), np.nan)
    face_pts_neighbor = np.full((n_faces, 2, 2), np.nan)

    def register(cell, slot, fid, va, vb, pa, pb):
        if face_owner[fid] == -2:
            face_owner[fid] = cell
            face_vertices[fid] = (va, vb)
            face_pts_owner[fid, 0] = pa
            face_pts_owner[fid, 1] = pb
            cell_sign[cell, slot] = 1
        else:
            face_neighbor[fid] = cell
            # the neighbor traverses the shared edge backwards; store its
            # endpoints in the owner's canonical order
            face_pts_neighbor[fid, 0] = pb
            face_pts_neighbor[fid, 1] = pa
            cell_sign[cell, slot] = -1
        cell_faces[cell, slot] = fid

    for j in range(n):
        for i in range(n):
            ll = np.array((x0 + i * dx, y0 + j * dy))
            lr = ll + (dx, 0.0)
            ur = ll + (dx, dy)
            ul = ll + (0.0, dy)
            v_ll, v_lr, v_ur, v_ul = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)

            lo = 2 * (j * n + i)
            cells[lo] = (v_ll, v_lr, v_ur)
            cell_coords[lo] = (ll, lr, ur)
            register(lo, 0, fid_h(i, j), v_ll, v_lr, ll, lr)
            register(lo, 1, fid_v(i + 1, j), v_lr, v_ur, lr, ur)
            register(lo, 2, fid_d(i, j), v_ur, v_ll, ur, ll)

            up = lo + 1
            cells[up] = (v_ll, v_ur, v_ul)
            cell_coords[up] = (ll, ur, ul)
            register(up, 0, fid_d(i, j), v_ll, v_ur, ll, ur)
            register(up, 1, fid_h(i, j + 1), v_ur, v_ul, ur, ul)
            register(up, 2, fid_v(i, j), v_ul, v_ll, ul, ll)

    edge = face_pts_owner[:, 1] - face_pts_owner[:, 0]
    face_length = np.hypot(edge[:, 0], edge[:, 1])
    face_normal = np.stack([edge[:, 1], -edge[:, 0]], axis=1) / face_length[:, None]

    e1 = cell_coords[:, 1] - cell_coords[:, 0]
    e2 = cell_coords[:, 2] - cell_coords[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(area <= 0):
        raise ValueError("cell orientation is not counterclockwise")
    sides = cell_coords - cell_coords[:, [1, 2, 0], :]
    diam = np.sqrt((sides ** 2).sum(axis=2)).max(axis=1)

    periodic_pairs = []
    if periodic:
        for i in range(n):
            periodic_pairs.append((("bottom", i), ("top", i), fid_h(i, 0)))
        for j in range(n):
            periodic_pairs.append((("left", j), ("right", j), fid_v(0, j)))

    return Mesh(
        boundary_kind=boundary_kind,
        domain=(x0, y0, x1, y1),
        vertices=verts,
        cells=cells,
        cell_coords=cell_coords,
        cell_area=area,
        cell_diameter=diam,
        face_vertices=face_vertices,
        face_owner=face_owner,
        face_neighbor=face_neighbor,
        face_normal=face_normal,
        face_length=face_length,
        face_pts_owner=face_pts_owner,
        face_pts_neighbor=face_pts_neighbor,
        cell_faces=cell_faces,
        cell_face_sign=cell_sign,
        h=float(diam.max()),
        periodic_pairs=periodic_pairs,
    )


def face_quadrature_points(mesh, face, order):
    """Gauss points and weights on one face; weights sum to its length."""
    if order not in (1, 2, 3, 4, 5):
        raise ValueError(f"unsupported face quadrature order {order}")
    return _face_rule(mesh, order)[0][face], _face_rule(mesh, order)[1][face]


def _face_rule(mesh, npts):
    """Quadrature on all faces at once: owner-frame points (F, m, 2),
    neighbor-frame points (F, m, 2) and weights (F, m)."""
    key = ("face_rule", npts)
    if key not in mesh.cache:
        gx, gw = segment_gauss(npts)
        lam = 0.5 * (gx + 1.0)
        a_o = mesh.face_pts_owner[:, 0][:, None, :]
        b_o = mesh.face_pts_owner[:, 1][:, None, :]
        pts_o = a_o + lam[None, :, None] * (b_o - a_o)
        a_n = mesh.face_pts_neighbor[:, 0][:, None, :]
        b_n = mesh.face_pts_neighbor[:, 1][:, None, :]
        pts_n = a_n + lam[None, :, None] * (b_n - a_n)
        wts = 0.5 * gw[None, :] * mesh.face_length[:, None]
        mesh.cache[key] = (pts_o, wts, pts_n)
    pts_o, wts, pts_n = mesh.cache[key]
    return pts_o, wts, pts_n


def write_mesh_csv(mesh, path):
    """Dump vertices, cells and faces in the three-section CSV layout."""
    with open(path, "w") as f:
        f.write("#vertices x,y\n")
        for x, y in mesh.vertices:
            f.write(f"{float(x)!r},{float(y)!r}\n")
        f.write("#cells v0,v1,v2\n")
        for v0, v1, v2 in mesh.cells:
            f.write(f"{v0},{v1},{v2}\n")
        f.write("#faces v0,v1,owner,neighbor,nx,ny,len\n")
        for k in range(mesh.n_faces):
            v0, v1 = mesh.face_vertices[k]
            nx, ny = mesh.face_normal[k]
            f.write(f"{v0},{v1},{mesh.face_owner[k]},{mesh.face_neighbor[k]},"
                    f"{float(nx)!r},{float(ny)!r},{float(mesh.face_length[k])!r}\n")
