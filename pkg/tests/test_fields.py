import numpy as np
import pytest

from misfitrod.fields import (
    DisplacementField,
    change_of_variables,
    load_field,
    rescale,
    save_field,
    strain,
)
from misfitrod.geometry import (
    CrossSection,
    DislocationSpec,
    Grid,
    build_grid,
    burgers_circuit,
    linking_loop,
)
from misfitrod.material import ElasticModel


@pytest.fixture
def grid():
    return build_grid(CrossSection("square", 1.0), 1.0, 0.125)


@pytest.fixture
def model():
    return ElasticModel.isotropic(0.05)


def full_section_cut(grid, jump):
    faces = np.argwhere(np.asarray(grid.mask2d))
    return DislocationSpec.from_jump(jump, faces)


class TestStrain:
    def test_affine_exact(self, grid, model):
        rng = np.random.default_rng(0)
        A = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        u = DisplacementField.from_affine(grid, A)
        G = strain(u).G
        assert np.max(np.abs(G - A)) < 5e-15

    def test_mismatch_affine(self, grid, model):
        u = DisplacementField.from_affine(grid, model.well_right)
        assert np.max(np.abs(strain(u).G - model.well_right)) < 5e-15

    def test_jump_metadata_gives_eigendistortion_layer(self, grid):
        # u = 0 with a declared jump: G is the identity except on the layer
        # right-adjacent to the jump faces, where the across-face correction
        # -hb/a carries the entire curl; circuits still read -hb exactly.
        J = np.array([0.0, 0.004, -0.002])
        spec = full_section_cut(grid, J)
        u = DisplacementField.zeros(grid, jumps=(spec,))
        S = strain(u)
        i1 = grid.plane_node_index
        expected_layer = np.eye(3) - np.outer(J, [1.0, 0.0, 0.0]) / grid.spacing
        assert np.max(np.abs(S.G[i1] - expected_layer)) < 1e-14
        others = np.delete(S.G, i1, axis=0)
        assert np.max(np.abs(others - np.eye(3))) < 1e-14

    def test_partial_plate_circuit_reads_jump(self, grid):
        # same zero displacement, plate covering half the section: a loop
        # entering through the plate and returning outside reads -hb
        J = np.array([0.0, 0.004, -0.002])
        faces = np.argwhere(np.asarray(grid.mask2d)[: grid.n2 // 2, :])
        spec = DislocationSpec.from_jump(J, faces)
        u = DisplacementField.zeros(grid, jumps=(spec,))
        c = burgers_circuit(strain(u), linking_loop(grid, (2, 4), (12, 4)))
        assert np.max(np.abs(c + J)) <= 1e-12

    def test_jump_consistency_invariant(self, grid):
        # adding c on one side of the cut and hb + c on the other adds one
        # jump quantum to the stored values; with the jump surface carrying
        # that extra quantum the absolutely continuous part is unchanged
        rng = np.random.default_rng(1)
        J = np.array([0.003, 0.001, 0.0])
        spec = full_section_cut(grid, J)
        vals = 0.05 * rng.standard_normal(grid.node_shape + (3,))
        u = DisplacementField(grid, vals, (spec,))
        G = strain(u).G
        c = np.array([0.01, -0.02, 0.005])
        vals2 = vals.copy()
        right = grid.axial_nodes > 0.0
        vals2[~right] += c
        vals2[right] += J + c
        spec2 = full_section_cut(grid, 2 * J)
        G2 = strain(DisplacementField(grid, vals2, (spec2,))).G
        assert np.max(np.abs(G2 - G)) < 1e-13


class TestRescale:
    def test_half_thickness_columns(self, grid):
        u = DisplacementField.zeros(grid)
        F = strain(u)
        R = rescale(F, 0.5)
        assert np.allclose(R.F_h[0, 0, 0], np.diag([1.0, 2.0, 2.0]))

    def test_identity_thickness(self, grid):
        u = DisplacementField.zeros(grid)
        assert np.array_equal(rescale(strain(u), 1.0).F_h, strain(u).G)

    def test_matches_right_multiplication_oracle(self, grid):
        rng = np.random.default_rng(2)
        u = DisplacementField(grid, 0.1 * rng.standard_normal(grid.node_shape + (3,)))
        F = strain(u)
        R = rescale(F, 0.25)
        oracle = F.G @ np.diag([1.0, 4.0, 4.0])
        assert np.max(np.abs(R.F_h - oracle)) < 1e-14

    @pytest.mark.parametrize("h", [0.0, -0.5, 1.5])
    def test_invalid_thickness(self, grid, h):
        u = DisplacementField.zeros(grid)
        with pytest.raises(ValueError):
            rescale(strain(u), h)


class TestChangeOfVariables:
    def test_round_trip_bit_identical(self, grid):
        rng = np.random.default_rng(3)
        thin = Grid(CrossSection("square", 0.25), grid.axial_half_length,
                    grid.spacing, cross_scale=0.25)
        u = DisplacementField(grid, rng.standard_normal(grid.node_shape + (3,)))
        v = change_of_variables(u, thin)
        w = change_of_variables(v, grid)
        assert np.array_equal(w.values, u.values)

    def test_identity_rescaling(self, grid):
        u = DisplacementField.zeros(grid)
        v = change_of_variables(u, grid)
        assert np.array_equal(v.values, u.values)

    def test_affine_chain_rule_oracle(self, grid):
        # displacement gradients transform by the thin column rule
        h = 0.25
        rng = np.random.default_rng(4)
        A = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
        thin = Grid(CrossSection("square", h * 1.0), grid.axial_half_length,
                    grid.spacing, cross_scale=h)
        u = DisplacementField.from_affine(grid, A)
        v = change_of_variables(u, thin)
        Du_thin = strain(v).G - np.eye(3)
        Du_fat = strain(u).G - np.eye(3)
        oracle = Du_fat @ np.diag([1.0, 1.0 / h, 1.0 / h])
        assert np.max(np.abs(Du_thin - oracle)) < 1e-12

    def test_non_conforming_rejected(self, grid):
        other = build_grid(CrossSection("square", 1.0), 1.5, 0.125)
        u = DisplacementField.zeros(grid)
        with pytest.raises(ValueError, match="conformal"):
            change_of_variables(u, other)


class TestSerialization:
    def test_round_trip(self, grid, tmp_path):
        rng = np.random.default_rng(5)
        spec = full_section_cut(grid, np.array([0.0, 0.001, 0.0]))
        u = DisplacementField(
            grid, rng.standard_normal(grid.node_shape + (3,)), (spec,)
        )
        path = tmp_path / "field.npz"
        save_field(u, path, h=0.5)
        v, header = load_field(path, grid, jumps=(spec,))
        assert np.array_equal(v.values, u.values)
        assert header["h"] == 0.5
        assert header["grid"] == grid.grid_hash

    def test_grid_hash_mismatch(self, grid, tmp_path):
        u = DisplacementField.zeros(grid)
        path = tmp_path / "field.npz"
        save_field(u, path)
        other = build_grid(CrossSection("square", 1.0), 1.5, 0.125)
        with pytest.raises(ValueError, match="grid"):
            load_field(path, other)

    def test_nonfinite_rejected(self, grid):
        vals = np.zeros(grid.node_shape + (3,))
        vals[0, 0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            DisplacementField(grid, vals)
