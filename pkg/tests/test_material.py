import numpy as np
import pytest

from rod_homogenization.material import (
    ElasticityTensor,
    NonlinearLaw,
    admissibility_bounds,
    expansion_defect_curve,
    isotropic_tensor,
    quadratic_energy,
    strain_from_voigt,
    svk_energy,
    tensor_from_block,
    tensor_to_block,
    voigt_vector,
    young_modulus,
)
from utils.models import IsotropicMaterialBlock, Matrix6MaterialBlock

E1 = np.diag([1.0, 0.0, 0.0])


class TestVoigtMaps:
    def test_norm_matches_frobenius_of_symmetric_part(self):
        G = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0], [4.0, 1.0, 0.5]])
        sym = 0.5 * (G + G.T)
        assert np.linalg.norm(voigt_vector(G=G)) == pytest.approx(np.linalg.norm(sym))

    def test_strain_from_voigt_inverts_voigt_vector(self):
        sym = np.array([[1.0, 0.2, -0.3], [0.2, 2.0, 0.7], [-0.3, 0.7, -1.0]])
        np.testing.assert_allclose(strain_from_voigt(v=voigt_vector(G=sym)), sym)

    def test_skew_part_is_ignored(self):
        skew = np.array([[0.0, 1.0, 2.0], [-1.0, 0.0, 3.0], [-2.0, -3.0, 0.0]])
        np.testing.assert_allclose(voigt_vector(G=skew), np.zeros(6))


class TestElasticityTensor:
    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="must be 6x6"):
            ElasticityTensor(matrix=np.eye(5))

    def test_rejects_asymmetric_matrix(self):
        matrix = np.eye(6)
        matrix[0, 1] = 1.0
        with pytest.raises(ValueError, match="not symmetric"):
            ElasticityTensor(matrix=matrix)

    def test_rejects_non_finite_entries(self):
        matrix = np.eye(6)
        matrix[2, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ElasticityTensor(matrix=matrix)

    def test_matrix_is_read_only(self):
        tensor = isotropic_tensor(lame_lambda=1.0, lame_mu=1.0)
        with pytest.raises(ValueError):
            tensor.matrix[0, 0] = 3.0

    def test_equal_tensors_hash_equal(self):
        a = isotropic_tensor(lame_lambda=1.0, lame_mu=2.0)
        b = isotropic_tensor(lame_lambda=1.0, lame_mu=2.0)
        assert a == b
        assert hash(a) == hash(b)


class TestQuadraticEnergy:
    def test_unit_shear_modulus_uniaxial(self, unit_tensor):
        assert quadratic_energy(tensor=unit_tensor, G=E1) == pytest.approx(1.0)

    def test_identity_with_unit_lame_constants(self):
        tensor = isotropic_tensor(lame_lambda=1.0, lame_mu=1.0)
        assert quadratic_energy(tensor=tensor, G=np.eye(3)) == pytest.approx(7.5)

    def test_vanishes_on_skew_matrices(self):
        tensor = isotropic_tensor(lame_lambda=2.0, lame_mu=3.0)
        skew = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]])
        assert quadratic_energy(tensor=tensor, G=skew) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4], ids=[f"seed-{seed}" for seed in range(5)])
    def test_polarization_recovers_bilinear_form(self, seed):
        rng = np.random.default_rng(seed)
        factor = rng.standard_normal((6, 6))
        tensor = ElasticityTensor(matrix=factor @ factor.T + np.eye(6))
        G, H = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        bilinear = voigt_vector(G=G) @ tensor.matrix @ voigt_vector(G=H)
        polarized = quadratic_energy(tensor=tensor, G=G + H) - quadratic_energy(tensor=tensor, G=G) - quadratic_energy(
            tensor=tensor, G=H
        )
        assert polarized == pytest.approx(bilinear, rel=1e-10, abs=1e-10)
        parallelogram = quadratic_energy(tensor=tensor, G=G + H) + quadratic_energy(tensor=tensor, G=G - H)
        assert parallelogram == pytest.approx(
            2.0 * quadratic_energy(tensor=tensor, G=G) + 2.0 * quadratic_energy(tensor=tensor, G=H), rel=1e-12
        )
        assert quadratic_energy(tensor=tensor, G=-2.5 * G) == pytest.approx(6.25 * quadratic_energy(tensor=tensor, G=G))

    def test_isotropic_spectrum(self):
        tensor = isotropic_tensor(lame_lambda=1.0, lame_mu=1.0)
        np.testing.assert_allclose(np.linalg.eigvalsh(tensor.matrix), [2.0, 2.0, 2.0, 2.0, 2.0, 5.0])

    @pytest.mark.parametrize(
        "lame_lambda, lame_mu, expected",
        [(0.0, 1.0, 2.0), (1.0, 1.0, 2.5), (2.0, 5.0, 5.0 * 16.0 / 7.0)],
        ids=["no-poisson", "unit", "stiff"],
    )
    def test_young_modulus(self, lame_lambda, lame_mu, expected):
        assert young_modulus(lame_lambda=lame_lambda, lame_mu=lame_mu) == pytest.approx(expected)

    @pytest.mark.parametrize(
        "lame_lambda, lame_mu",
        [(1.0, 0.0), (1.0, -1.0), (-0.5, 1.0)],
        ids=["zero-mu", "negative-mu", "negative-lambda"],
    )
    def test_isotropic_rejects_invalid_constants(self, lame_lambda, lame_mu):
        with pytest.raises(ValueError):
            isotropic_tensor(lame_lambda=lame_lambda, lame_mu=lame_mu)


class TestAdmissibilityBounds:
    def test_isotropic_bounds(self):
        tensor = isotropic_tensor(lame_lambda=1.0, lame_mu=1.0)
        alpha, beta = admissibility_bounds(tensor=tensor)
        assert alpha == pytest.approx(2.0)
        assert beta == pytest.approx(5.0)

    @pytest.mark.parametrize(
        "tensor",
        [isotropic_tensor(lame_lambda=1.0, lame_mu=1.0), isotropic_tensor(lame_lambda=2.0, lame_mu=5.0), "random"],
        ids=["unit", "stiff", "random-anisotropic"],
    )
    def test_bounds_energy_over_random_strains(self, tensor):
        rng = np.random.default_rng(2024)
        if isinstance(tensor, str):
            factor = rng.standard_normal((6, 6))
            tensor = ElasticityTensor(matrix=factor @ factor.T + 0.1 * np.eye(6))
        alpha, beta = admissibility_bounds(tensor=tensor)
        for G in rng.standard_normal((1000, 3, 3)):
            norm = float(np.sum((0.5 * (G + G.T)) ** 2))
            energy = quadratic_energy(tensor=tensor, G=G)
            assert 0.5 * alpha * norm * (1.0 - 1e-12) <= energy <= 0.5 * beta * norm * (1.0 + 1e-12)

    def test_rejects_indefinite_tensor(self):
        matrix = np.eye(6)
        matrix[3, 3] = -1.0
        with pytest.raises(ValueError, match="Inadmissible material"):
            admissibility_bounds(tensor=ElasticityTensor(matrix=matrix))

    def test_rejects_spectrum_outside_class(self):
        tensor = isotropic_tensor(lame_lambda=1.0, lame_mu=1.0)
        with pytest.raises(ValueError, match="outside admissible class"):
            admissibility_bounds(tensor=tensor, class_bounds=(1.0, 4.0))

    def test_accepts_spectrum_inside_class(self):
        tensor = isotropic_tensor(lame_lambda=1.0, lame_mu=1.0)
        assert admissibility_bounds(tensor=tensor, class_bounds=(1.0, 6.0)) == pytest.approx((2.0, 5.0))


class TestSvkEnergy:
    def test_small_uniaxial_stretch(self):
        law = NonlinearLaw(lame_lambda=1.0, lame_mu=1.0)
        assert svk_energy(law=law, F=np.eye(3) + 0.01 * E1) == pytest.approx(1.5150375e-4, rel=1e-6)

    def test_frame_indifference(self):
        law = NonlinearLaw(lame_lambda=1.0, lame_mu=2.0)
        angle = 0.7
        rotation = np.array(
            [[np.cos(angle), -np.sin(angle), 0.0], [np.sin(angle), np.cos(angle), 0.0], [0.0, 0.0, 1.0]]
        )
        F = np.eye(3) + 0.1 * np.array([[1.0, 0.3, 0.0], [0.0, 0.5, 0.2], [0.1, 0.0, -0.4]])
        assert svk_energy(law=law, F=rotation @ F) == pytest.approx(svk_energy(law=law, F=F))

    def test_vectorized_over_leading_axes(self):
        law = NonlinearLaw(lame_lambda=1.0, lame_mu=1.0)
        stack = np.stack([np.eye(3), np.eye(3) + 0.01 * E1])
        energies = svk_energy(law=law, F=stack)
        assert energies.shape == (2,)
        assert energies[0] == 0.0

    def test_quadratic_tensor_matches_parameters(self):
        law = NonlinearLaw(lame_lambda=2.0, lame_mu=5.0)
        assert law.quadratic_tensor() == isotropic_tensor(lame_lambda=2.0, lame_mu=5.0)

    def test_expansion_defect_is_cubic(self):
        law = NonlinearLaw(lame_lambda=1.0, lame_mu=1.0)
        G = np.array([[0.3, 0.1, 0.0], [0.2, -0.4, 0.5], [0.0, 0.1, 0.2]])
        curve = expansion_defect_curve(law=law, G=G, deltas=[1e-1, 5e-2, 2.5e-2, 1.25e-2, 6.25e-3])
        assert curve.slope == pytest.approx(3.0, abs=0.1)
        assert len(curve.defects) == 5

    def test_rejects_nonpositive_mu(self):
        with pytest.raises(ValueError, match="lame_mu must be positive"):
            NonlinearLaw(lame_lambda=1.0, lame_mu=0.0)


class TestMaterialBlocks:
    def test_isotropic_block_uses_aliases(self):
        block = IsotropicMaterialBlock.model_validate({"kind": "isotropic", "lambda": 2.0, "mu": 5.0})
        assert tensor_from_block(block=block) == isotropic_tensor(lame_lambda=2.0, lame_mu=5.0)

    def test_block_round_trips(self):
        tensor = isotropic_tensor(lame_lambda=2.0, lame_mu=5.0)
        assert tensor_from_block(block=tensor_to_block(tensor=tensor)) == tensor

    def test_isotropic_tensor_round_trips_as_isotropic_block(self):
        block = tensor_to_block(tensor=isotropic_tensor(lame_lambda=2.0, lame_mu=5.0))
        assert isinstance(block, IsotropicMaterialBlock)
        assert block.model_dump(by_alias=True) == {"kind": "isotropic", "lambda": 2.0, "mu": 5.0}
        assert tensor_from_block(block=block) == isotropic_tensor(lame_lambda=2.0, lame_mu=5.0)

    def test_anisotropic_tensor_stays_matrix6(self):
        matrix = np.array(isotropic_tensor(lame_lambda=1.0, lame_mu=1.0).matrix)
        matrix[0, 0] += 0.5
        block = tensor_to_block(tensor=ElasticityTensor(matrix=matrix))
        assert isinstance(block, Matrix6MaterialBlock)
        assert tensor_from_block(block=block) == ElasticityTensor(matrix=matrix)
