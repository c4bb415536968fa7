import numpy as np
import pytest

from eulerfem import BOUNDARY, BoundaryKind, build_structured_mesh, face_quadrature_points
from eulerfem.mesh import write_mesh_csv

TWO_PI = 2.0 * np.pi


def test_smallest_mesh_counts():
    mesh = build_structured_mesh(1, (0, 0, 1, 1))
    assert mesh.n_cells == 2
    assert mesh.n_faces == 5
    assert mesh.n_vertices == 4
    assert len(mesh.boundary_faces) == 4
    assert len(mesh.interior_faces) == 1


def test_periodic_n2_torus_counts():
    mesh = build_structured_mesh(2, (0, 0, 1, 1), BoundaryKind.PERIODIC)
    assert mesh.n_cells == 8
    assert mesh.n_faces == 12
    assert mesh.n_vertices == 4
    assert len(mesh.boundary_faces) == 0
    # torus Euler characteristic
    assert mesh.n_vertices - mesh.n_faces + mesh.n_cells == 0


def test_noflux_euler_formula():
    for n in (1, 3, 7):
        mesh = build_structured_mesh(n, (0, 0, 2, 1))
        assert mesh.n_vertices - mesh.n_faces + mesh.n_cells == 1


def test_table_mesh_sizes():
    # h = sqrt(2) * 2*pi / n for the square benchmark domain
    expected = {12: 0.7405, 24: 0.3702, 48: 0.1851, 96: 0.0926}
    for n, h4 in expected.items():
        mesh = build_structured_mesh(n, (0, 0, TWO_PI, TWO_PI))
        assert mesh.h == pytest.approx(np.sqrt(2) * TWO_PI / n, rel=1e-14)
        assert round(mesh.h, 4) == h4


def test_refinement_halves_h():
    for n in (3, 10):
        coarse = build_structured_mesh(n, (0, 0, 1, 2))
        fine = build_structured_mesh(2 * n, (0, 0, 1, 2))
        assert fine.h == pytest.approx(coarse.h / 2, rel=1e-14)


def test_areas_positive_and_sum_to_domain():
    mesh = build_structured_mesh(9, (0.5, -1.0, 3.5, 2.0))
    assert np.all(mesh.cell_area > 0)
    assert mesh.cell_area.sum() == pytest.approx(3.0 * 3.0, rel=1e-12)


def test_owner_before_neighbor_and_normal_orientation():
    mesh = build_structured_mesh(5, (0, 0, 1, 1))
    for f in mesh.interior_faces:
        assert mesh.face_owner[f] < mesh.face_neighbor[f]
        # normal points from the owner cell toward the neighbor cell
        owner_c = mesh.cell_coords[mesh.face_owner[f]].mean(axis=0)
        neigh_c = mesh.cell_coords[mesh.face_neighbor[f]].mean(axis=0)
        mid = mesh.face_pts_owner[f].mean(axis=0)
        assert mesh.face_normal[f] @ (mid - owner_c) > 0
        gap = neigh_c - owner_c
        if np.linalg.norm(gap) < mesh.h:  # skip wrapped comparisons
            assert mesh.face_normal[f] @ gap > 0
    for f in mesh.boundary_faces:
        assert mesh.face_neighbor[f] == BOUNDARY
        owner_c = mesh.cell_coords[mesh.face_owner[f]].mean(axis=0)
        mid = mesh.face_pts_owner[f].mean(axis=0)
        assert mesh.face_normal[f] @ (mid - owner_c) > 0


def test_signed_incidence_cancels_per_interior_face():
    for kind in (BoundaryKind.NO_FLUX, BoundaryKind.PERIODIC):
        mesh = build_structured_mesh(4, (0, 0, 1, 1), kind)
        sums = np.zeros(mesh.n_faces)
        counts = np.zeros(mesh.n_faces)
        np.add.at(sums, mesh.cell_faces.ravel(), mesh.cell_face_sign.ravel())
        np.add.at(counts, mesh.cell_faces.ravel(), 1)
        assert np.all(counts[mesh.interior_faces] == 2)
        assert np.all(sums[mesh.interior_faces] == 0)
        assert np.all(counts[mesh.boundary_faces] == 1)
        assert np.all(sums[mesh.boundary_faces] == 1)


def test_periodic_identification_is_fixed_point_free_involution():
    mesh = build_structured_mesh(4, (0, 0, 1, 1), BoundaryKind.PERIODIC)
    pairing = {}
    for key_a, key_b, _face in mesh.periodic_pairs:
        pairing[key_a] = key_b
        pairing[key_b] = key_a
    assert len(pairing) == 2 * len(mesh.periodic_pairs)
    for key, partner in pairing.items():
        assert partner != key
        assert pairing[partner] == key


def test_periodic_seam_geometry_consistent():
    mesh = build_structured_mesh(3, (0, 0, 1, 1), BoundaryKind.PERIODIC)
    for f in range(mesh.n_faces):
        own = mesh.face_pts_owner[f]
        nei = mesh.face_pts_neighbor[f]
        len_own = np.linalg.norm(own[1] - own[0])
        len_nei = np.linalg.norm(nei[1] - nei[0])
        assert len_own == pytest.approx(mesh.face_length[f], rel=1e-14)
        assert len_nei == pytest.approx(mesh.face_length[f], rel=1e-14)
        # the two frames describe the same points modulo the lattice
        shift = (own - nei) / np.array([1.0, 1.0])
        frac = shift - np.round(shift)
        assert np.abs(frac).max() < 1e-12


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_structured_mesh(0, (0, 0, 1, 1))
    with pytest.raises(ValueError):
        build_structured_mesh(4, (0, 0, 0, 1))
    with pytest.raises(ValueError):
        build_structured_mesh(4, (0, 2, 1, 1))


def test_face_quadrature_partition_of_unity():
    mesh = build_structured_mesh(2, (0, 0, 1, 1))
    # unit-length horizontal bottom face of the first cell
    f = mesh.cell_faces[0, 0]
    pts, wts = face_quadrature_points(mesh, f, 3)
    assert len(wts) == 3
    assert wts.sum() == pytest.approx(mesh.face_length[f], abs=1e-15)


def test_face_quadrature_half_length_face():
    mesh = build_structured_mesh(2, (0, 0, 1, 1))
    f = mesh.cell_faces[0, 0]
    assert mesh.face_length[f] == pytest.approx(0.5)
    _, wts = face_quadrature_points(mesh, f, 4)
    assert wts.sum() == pytest.approx(0.5, abs=1e-15)


def test_face_quadrature_two_point_exact_cubic():
    mesh = build_structured_mesh(1, (0, 0, 1, 1))
    f = mesh.cell_faces[0, 0]  # the segment y=0, x in [0, 1]
    pts, wts = face_quadrature_points(mesh, f, 2)
    assert (wts * pts[:, 0] ** 3).sum() == pytest.approx(0.25, abs=1e-15)


def test_face_quadrature_rejects_unsupported_order():
    mesh = build_structured_mesh(1, (0, 0, 1, 1))
    with pytest.raises(ValueError):
        face_quadrature_points(mesh, 0, 6)
    with pytest.raises(ValueError):
        face_quadrature_points(mesh, 0, 0)


def test_mesh_csv_dump(tmp_path):
    mesh = build_structured_mesh(2, (0, 0, 1, 1))
    path = tmp_path / "mesh.csv"
    write_mesh_csv(mesh, path)
    text = path.read_text().splitlines()
    assert text[0] == "#vertices x,y"
    assert f"#cells v0,v1,v2" in text
    assert sum(1 for line in text if not line.startswith("#")) == \
        mesh.n_vertices + mesh.n_cells + mesh.n_faces
