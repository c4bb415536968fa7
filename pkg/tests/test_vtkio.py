import numpy as np

from eulerfem import (BoundaryKind, PressureField, build_structured_mesh,
                      interpolate, shear_layer, write_field_csv, write_vtk)
from eulerfem.stepper import State


def make_state():
    sl = shear_layer()
    mesh = build_structured_mesh(6, sl.domain, BoundaryKind.PERIODIC)
    u = interpolate(mesh, sl.initial_velocity)
    p = PressureField(mesh, np.linspace(-1.0, 1.0, mesh.n_cells))
    return State(0.5, u, p)


def test_vtk_file_structure(tmp_path):
    state = make_state()
    mesh = state.u.mesh
    path = tmp_path / "fields.vtk"
    write_vtk(state, path, title="test dump")
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert lines[1] == "test dump"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == f"POINTS {3 * mesh.n_cells} double"

    idx_cells = lines.index(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}")
    first_cell = lines[idx_cells + 1].split()
    assert first_cell == ["3", "0", "1", "2"]
    idx_types = lines.index(f"CELL_TYPES {mesh.n_cells}")
    assert all(line == "5" for line in lines[idx_types + 1: idx_types + 1 + mesh.n_cells])

    assert f"CELL_DATA {mesh.n_cells}" in lines
    vec_idx = lines.index("VECTORS velocity double")
    vec0 = [float(v) for v in lines[vec_idx + 1].split()]
    assert len(vec0) == 3 and vec0[2] == 0.0
    assert "SCALARS pressure double 1" in lines
    assert "SCALARS vorticity double 1" in lines

    # every point row parses as three floats
    for line in lines[5:5 + 3 * mesh.n_cells]:
        assert len([float(v) for v in line.split()]) == 3


def test_vtk_points_unwrap_periodic_cells(tmp_path):
    state = make_state()
    path = tmp_path / "wrap.vtk"
    write_vtk(state, path)
    lines = path.read_text().splitlines()
    pts = np.array([[float(v) for v in line.split()]
                    for line in lines[5:5 + 3 * state.u.mesh.n_cells]])
    # per-cell triangles stay local: no triangle spans the domain
    tri = pts.reshape(-1, 3, 3)
    spans = tri.max(axis=1) - tri.min(axis=1)
    assert spans.max() < 2.0 * state.u.mesh.h


def test_field_csv(tmp_path):
    state = make_state()
    mesh = state.u.mesh
    path = tmp_path / "fields.csv"
    write_field_csv(state, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cell_id,xc,yc,u1,u2,p"
    assert len(lines) == 1 + mesh.n_cells
    row = lines[1].split(",")
    assert int(row[0]) == 0
    assert float(row[5]) == state.p.dofs[0]
    xc, yc = float(row[1]), float(row[2])
    assert np.allclose([xc, yc], mesh.cell_centroids[0], atol=1e-15)
