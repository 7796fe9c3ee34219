import numpy as np
import pytest

from misfitrod.material import (
    ElasticModel,
    truncation_branch,
    MismatchSpec,
    density_batch,
    dist_to_rotation_well,
    energy_density,
    energy_density_gradient,
    equivalence_constants,
    mismatch_to_H,
    well_distance_sq_batch,
    well_incompatibility_gap,
)
from misfitrod.so3 import exp_so3, random_rotation


@pytest.fixture(scope="module")
def model():
    return ElasticModel.isotropic(alpha=0.05, p=1.5)


class TestMismatch:
    def test_zero_mismatch_is_identity(self):
        assert np.array_equal(mismatch_to_H(0.0), np.eye(3))

    def test_typical_mismatch(self):
        assert np.allclose(mismatch_to_H(0.05), 0.95 * np.eye(3), atol=0)

    def test_half_mismatch(self):
        assert np.allclose(mismatch_to_H(0.5), 0.5 * np.eye(3), atol=0)

    @pytest.mark.parametrize("alpha", [1.0, 1.2, -0.1, np.inf])
    def test_degenerate_rejected(self, alpha):
        with pytest.raises(ValueError):
            mismatch_to_H(alpha)

    def test_zeta_validation(self):
        with pytest.raises(ValueError):
            MismatchSpec(zeta=[1.0, -0.5, 1.0])
        spec = MismatchSpec(zeta=[0.9, 1.1, 1.0])
        assert np.linalg.det(spec.H) > 0

    def test_p_range(self):
        with pytest.raises(ValueError):
            ElasticModel.isotropic(0.05, p=2.0)
        with pytest.raises(ValueError):
            ElasticModel.isotropic(0.05, p=1.0)


def brute_force_well_distance(A, K, seed=0, samples=20000):
    """Independent oracle: random search over SO(3) plus local refinement."""
    rng = np.random.default_rng(seed)
    best, best_R = np.inf, None
    for _ in range(samples):
        R = random_rotation(rng)
        d = np.linalg.norm(A - R @ K)
        if d < best:
            best, best_R = d, R
    # local refinement around the best sample
    step = 0.1
    for _ in range(200):
        improved = False
        for axis in np.vstack([np.eye(3), -np.eye(3)]):
            R = best_R @ exp_so3(step * axis)
            d = np.linalg.norm(A - R @ K)
            if d < best:
                best, best_R, improved = d, R, True
        if not improved:
            step *= 0.5
            if step < 1e-9:
                break
    return best


class TestWellDistance:
    def test_identity_in_well(self):
        assert dist_to_rotation_well(np.eye(3), np.eye(3)) == 0.0

    def test_uniform_stretch(self):
        d = dist_to_rotation_well(2.0 * np.eye(3), np.eye(3))
        assert abs(d - np.sqrt(3.0)) < 1e-14

    def test_reflection_flip(self):
        # det < 0: smallest singular value flips, dist = sigma_min + 1 per axis
        d = dist_to_rotation_well(np.diag([1.0, 1.0, -1.0]), np.eye(3))
        assert abs(d - 2.0) < 1e-12

    def test_against_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(4):
            A = rng.standard_normal((3, 3))
            K = np.diag(rng.uniform(0.5, 1.5, size=3))
            exact = dist_to_rotation_well(A, K)
            approx = brute_force_well_distance(A, K)
            assert exact <= approx + 1e-9
            assert approx - exact < 5e-4

    def test_rejects_nonfinite(self):
        A = np.eye(3)
        A = A.copy()
        A[0, 0] = np.nan
        with pytest.raises(ValueError):
            dist_to_rotation_well(A, np.eye(3))

    def test_rejects_singular_anchor(self):
        with pytest.raises(ValueError):
            dist_to_rotation_well(np.eye(3), np.diag([1.0, 1.0, 0.0]))


class TestDensity:
    def test_left_well_point(self, model):
        assert energy_density("left", np.eye(3), model) == 0.0

    def test_right_well_point(self, model):
        assert energy_density("right", model.well_right, model) == 0.0

    def test_p_branch_large_argument(self, model):
        A = 1000.0 * np.eye(3)
        # both branches recomputed independently: the p-branch wins
        dist2 = (np.sqrt(3) * 999.0) ** 2
        pbranch = (np.sqrt(3) * 1000.0) ** 1.5 + 1.0
        assert dist2 > pbranch
        got = energy_density("left", A, model)
        assert abs(got - pbranch) < 1e-9 * pbranch

    def test_growth_identity_bitwise(self, model):
        # the density IS dist^2 ^ (|A|^p + 1): the two-sided growth bounds
        # hold with constants one by construction
        rng = np.random.default_rng(3)
        for _ in range(100):
            A = rng.standard_normal((3, 3)) * rng.choice([0.3, 1.0, 30.0])
            w = energy_density("left", A, model)
            d2 = well_distance_sq_batch(A[None], np.eye(3))[0]
            pb = truncation_branch(A[None], model.p)[0]
            assert w == min(d2, pb)

    def test_frame_indifference_sampled(self, model):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(10_000):
            A = rng.standard_normal((3, 3)) * rng.choice([0.1, 1.0, 10.0])
            R = random_rotation(rng)
            w = energy_density("left", A, model)
            wr = energy_density("left", R @ A, model)
            worst = max(worst, abs(w - wr) / (1.0 + w))
        assert worst <= 1e-12

    def test_phase_validation(self, model):
        with pytest.raises(ValueError):
            energy_density("middle", np.eye(3), model)


class TestDensityGradient:
    def test_zero_at_wells(self, model):
        assert np.array_equal(
            energy_density_gradient("left", np.eye(3), model), np.zeros((3, 3))
        )
        assert np.max(np.abs(
            energy_density_gradient("right", model.well_right, model)
        )) < 1e-12

    def test_quadratic_branch_formula(self, model):
        g = energy_density_gradient("left", 1.1 * np.eye(3), model)
        assert np.allclose(g, 0.2 * np.eye(3), atol=1e-12)

    def test_finite_difference_oracle(self, model):
        rng = np.random.default_rng(5)
        eps = 1e-6
        checked = 0
        worst = 0.0
        while checked < 1000:
            A = rng.standard_normal((3, 3)) * rng.choice([0.5, 1.0, 2.0])
            d2 = well_distance_sq_batch(A[None], np.eye(3))[0]
            pb = np.linalg.norm(A) ** model.p + 1.0
            if abs(d2 - pb) < 1e-6 * (1.0 + pb):  # skip the branch tie set
                continue
            g = energy_density_gradient("left", A, model)
            fd = np.zeros((3, 3))
            for i in range(3):
                for j in range(3):
                    Ap, Am = A.copy(), A.copy()
                    Ap[i, j] += eps
                    Am[i, j] -= eps
                    fd[i, j] = (
                        energy_density("left", Ap, model)
                        - energy_density("left", Am, model)
                    ) / (2 * eps)
            worst = max(
                worst, np.max(np.abs(g - fd)) / (1.0 + np.max(np.abs(fd)))
            )
            checked += 1
        assert worst <= 1e-5

    def test_gradient_bounded_near_origin(self, model):
        g = energy_density_gradient("left", 1e-12 * np.eye(3), model)
        assert np.all(np.isfinite(g))
        assert np.max(np.abs(g)) < 1e-5


class TestEquivalenceLemma:
    def test_constructed_constants_hold(self, model):
        rng = np.random.default_rng(9)
        G = rng.standard_normal((3, 3))
        G *= 5.0 / np.linalg.norm(G)
        c1, c2 = equivalence_constants(G, model.p)
        assert 0 < c1 <= 1 <= c2
        for _ in range(2000):
            mag = 10.0 ** rng.uniform(-3, 3)
            A = rng.standard_normal((3, 3))
            A *= mag / np.linalg.norm(A)
            a2 = np.sum(A * A)
            ref = min(a2, a2 ** (model.p / 2) + 1.0)
            mid = min(a2, np.linalg.norm(A + G) ** model.p + 1.0)
            assert c1 * ref <= mid * (1 + 1e-12) + 1e-12
            assert mid <= c2 * ref * (1 + 1e-12) + 1e-12

    def test_zero_shift_admits_unit_constants(self, model):
        rng = np.random.default_rng(1)
        for _ in range(200):
            A = rng.standard_normal((3, 3)) * rng.choice([0.1, 1.0, 10.0])
            a2 = np.sum(A * A)
            mid = min(a2, np.linalg.norm(A) ** model.p + 1.0)
            ref = min(a2, a2 ** (model.p / 2) + 1.0)
            assert np.isclose(mid, ref, rtol=1e-12)


def test_well_incompatibility_gap(model, capsys):
    gap = well_incompatibility_gap(model, samples=2000, seed=0)
    # the identity rotation leaves |(H - I) restricted to columns 2,3|
    assert 0 < gap <= 0.05 * np.sqrt(2.0) + 1e-12
    print(f"sampled incompatibility gap min |R - H - a x e1| = {gap:.6f}")


def test_density_batch_matches_scalar(model):
    rng = np.random.default_rng(2)
    A = rng.standard_normal((64, 3, 3))
    W = density_batch(A, model.well_right, model.p)
    for k in range(0, 64, 7):
        assert W[k] == energy_density("right", A[k], model)
