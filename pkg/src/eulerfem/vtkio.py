"""Legacy ASCII VTK and CSV field dumps.

Points are written per cell (three per triangle) so seam cells of a
periodic mesh keep their unwrapped geometry and the file stays valid.
"""

from .analysis import vorticity
from .fespace import velocity_at_cell_points


def write_vtk(state, path, title="eulerfem fields"):
    """Unstructured-grid file with cell data velocity (z = 0), pressure
    and reconstructed vorticity."""
    mesh = state.u.mesh
    centroids = mesh.cell_centroids
    vel = velocity_at_cell_points(state.u, centroids[:, None, :])[:, 0, :]
    curl = vorticity(state).dofs
    nc = mesh.n_cells
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {3 * nc} double\n")
        for tri in mesh.cell_coords:
            for x, y in tri:
                f.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        f.write(f"CELLS {nc} {4 * nc}\n")
        for k in range(nc):
            f.write(f"3 {3 * k} {3 * k + 1} {3 * k + 2}\n")
        f.write(f"CELL_TYPES {nc}\n")
        f.write("5\n" * nc)
        f.write(f"CELL_DATA {nc}\n")
        f.write("VECTORS velocity double\n")
        for vx, vy in vel:
            f.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
        f.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for p in state.p.dofs:
            f.write(f"{float(p)!r}\n")
        f.write("SCALARS vorticity double 1\nLOOKUP_TABLE default\n")
        for w in curl:
            f.write(f"{float(w)!r}\n")


def write_field_csv(state, path):
    """Centroid samples: cell_id, xc, yc, u1, u2, p."""
    mesh = state.u.mesh
    centroids = mesh.cell_centroids
    vel = velocity_at_cell_points(state.u, centroids[:, None, :])[:, 0, :]
    with open(path, "w") as f:
        f.write("cell_id,xc,yc,u1,u2,p\n")
        for k in range(mesh.n_cells):
            f.write(f"{k},{float(centroids[k, 0])!r},{float(centroids[k, 1])!r},"
                    f"{float(vel[k, 0])!r},{float(vel[k, 1])!r},{float(state.p.dofs[k])!r}\n")
