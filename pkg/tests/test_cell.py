import logging
import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from rod_homogenization.cell import (
    AxialGrid,
    CellProblem,
    EffectiveForm,
    LinearAxialGrid,
    Regime,
    RegimeSpec,
    cell_energy,
    effective_form,
    make_axial_grid,
    reduce_form,
    rve_window_sweep,
    solve_corrector,
    spectral_derivative,
)
from rod_homogenization.geometry import MacroStrain, refine_uniform, section_quadrature
from rod_homogenization.material import young_modulus
from rod_homogenization.microstructure import realize
from tests.factories import make_homogeneous_spec, make_laminate_spec, make_regime, make_renewal_spec, make_section

ALL_REGIMES = [Regime.GAMMA_ZERO, Regime.GAMMA_FINITE, Regime.GAMMA_INFINITE]


@pytest.fixture(scope="module")
def coarse_square():
    return make_section(target_h=0.5)


@pytest.fixture(scope="module")
def laminate():
    return realize(spec=make_laminate_spec())


@pytest.fixture(scope="module")
def homogeneous():
    return realize(spec=make_homogeneous_spec(lame_lambda=1.0, lame_mu=1.0))


def dense_minimizer(problem, ms):
    K = problem.matrix.toarray()
    C = problem.constraints.toarray()
    n, m = K.shape[0], C.shape[0]
    kkt = np.block([[K, C.T], [C, np.zeros((m, m))]])
    rhs = np.concatenate([-(problem.loads @ ms.vector()), np.zeros(m)])
    return np.linalg.solve(kkt, rhs)[:n]


class TestRegimeSpec:
    def test_finite_requires_gamma(self):
        with pytest.raises(ValueError, match="requires gamma > 0"):
            RegimeSpec(regime=Regime.GAMMA_FINITE)

    def test_zero_rejects_gamma(self):
        with pytest.raises(ValueError, match="takes no gamma"):
            RegimeSpec(regime=Regime.GAMMA_ZERO, gamma=1.0)

    def test_rejects_single_node(self):
        with pytest.raises(ValueError):
            make_regime(nodes=1)

    def test_aperiodic_requires_window(self):
        with pytest.raises(ValueError, match="requires an RVE window"):
            make_regime().cell_length(micro=realize(spec=make_renewal_spec()))

    def test_periodic_cell_is_one_period(self, laminate):
        assert make_regime().cell_length(micro=laminate) == 1.0

    def test_warns_on_incommensurate_window(self, laminate, caplog):
        with caplog.at_level(logging.WARNING):
            assert make_regime(window=1.5).cell_length(micro=laminate) == 1.5
        assert "not a multiple of the period" in caplog.text

    def test_regime_display_name(self):
        assert Regime("gamma_infinite").display_name == "γ = ∞"


class TestReduceForm:
    def test_stretch_bending_coupling(self):
        a0 = np.array([[2.0, 1.0, 0.0, 0.0], [1.0, 3.0, 0.0, 0.0], [0.0, 0.0, 4.0, 0.0], [0.0, 0.0, 0.0, 5.0]])
        a0_1, rho0 = reduce_form(a0=a0)
        np.testing.assert_allclose(a0_1, np.diag([2.5, 4.0, 5.0]))
        np.testing.assert_allclose(rho0, [-0.5, 0.0, 0.0])

    def test_block_diagonal_has_zero_stretch(self):
        a0 = np.diag([1.0, 2.0, 3.0, 4.0])
        a0_1, rho0 = reduce_form(a0=a0)
        np.testing.assert_allclose(a0_1, np.diag([2.0, 3.0, 4.0]))
        np.testing.assert_array_equal(rho0, np.zeros(3))

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_minimum_over_stretch(self, seed):
        rng = np.random.default_rng(seed)
        factor = rng.standard_normal((4, 4))
        form = EffectiveForm.from_a0(a0=factor @ factor.T + 0.5 * np.eye(4))
        kappa = rng.standard_normal(3)
        search = minimize_scalar(lambda z: form.energy(rho=z, kappa=kappa), method="brent", options={"xtol": 1e-12})
        assert form.reduced_energy(kappa=kappa) == pytest.approx(search.fun, rel=1e-8)
        assert float(form.rho0(kappa=kappa)) == pytest.approx(search.x, rel=1e-6, abs=1e-8)
        assert form.energy(rho=float(form.rho0(kappa=kappa)), kappa=kappa) == pytest.approx(
            form.reduced_energy(kappa=kappa), rel=1e-12
        )

    def test_rejects_nonpositive_stretch_stiffness(self):
        with pytest.raises(ValueError, match="Coercivity failure"):
            reduce_form(a0=np.diag([0.0, 1.0, 1.0, 1.0]))


class TestEffectiveForm:
    def test_rejects_indefinite_a0(self):
        with pytest.raises(ValueError, match="not positive definite"):
            EffectiveForm.from_a0(a0=np.diag([1.0, 1.0, -1.0, 1.0]))

    def test_rejects_asymmetric_a0(self):
        a0 = np.eye(4)
        a0[0, 1] = 0.5
        with pytest.raises(ValueError, match="not symmetric"):
            EffectiveForm(a0=a0, a0_1=np.eye(3), rho0_coeffs=np.zeros(3))

    def test_dict_round_trip(self):
        form = EffectiveForm.from_a0(a0=np.diag([2.0, 1.0, 3.0, 4.0]), iterations=[1, 2, 3, 4])
        restored = EffectiveForm.from_dict(data=form.to_dict())
        np.testing.assert_array_equal(restored.a0, form.a0)
        np.testing.assert_array_equal(restored.a0_1, form.a0_1)

    def test_from_dict_recomputes_reduction(self):
        form = EffectiveForm.from_dict(data={"a0": [[2, 1, 0, 0], [1, 3, 0, 0], [0, 0, 4, 0], [0, 0, 0, 5]]})
        np.testing.assert_allclose(form.rho0_coeffs, [-0.5, 0.0, 0.0])


class TestAxialGrid:
    @pytest.mark.parametrize("nodes", [5, 8])
    def test_derivative_exact_on_trigonometric_modes(self, nodes):
        grid = AxialGrid(nodes=nodes, period=1.5)
        omega = 2.0 * math.pi / 1.5
        np.testing.assert_allclose(
            grid.derivative @ np.sin(omega * grid.points), omega * np.cos(omega * grid.points), atol=1e-12
        )

    @pytest.mark.parametrize("nodes", [5, 8])
    def test_kernel_modes_are_annihilated(self, nodes):
        grid = AxialGrid(nodes=nodes, period=1.0)
        np.testing.assert_allclose(grid.derivative @ grid.kernel_modes().T, 0.0, atol=1e-12)
        assert len(grid.kernel_modes()) == (2 if nodes % 2 == 0 else 1)

    def test_derivative_is_skew_symmetric(self):
        derivative = spectral_derivative(nodes=6, period=2.0)
        np.testing.assert_allclose(derivative, -derivative.T, atol=1e-14)

    @pytest.mark.parametrize("nodes", [5, 8])
    def test_interpolation_at_nodes(self, nodes):
        grid = AxialGrid(nodes=nodes, period=1.0)
        values, derivatives = grid.interpolation(s=grid.points)
        np.testing.assert_allclose(values, np.eye(nodes), atol=1e-12)
        np.testing.assert_allclose(derivatives, grid.derivative, atol=1e-10)

    def test_interpolation_between_nodes(self):
        grid = AxialGrid(nodes=8, period=1.0)
        s = np.array([0.01, 0.37, 0.99])
        values, derivatives = grid.interpolation(s=s)
        np.testing.assert_allclose(values @ np.cos(2.0 * math.pi * grid.points), np.cos(2.0 * math.pi * s), atol=1e-12)
        np.testing.assert_allclose(
            derivatives @ np.cos(2.0 * math.pi * grid.points), -2.0 * math.pi * np.sin(2.0 * math.pi * s), atol=1e-10
        )


class TestLinearAxialGrid:
    def test_interpolation_reproduces_linear_functions_inside_the_cell(self):
        grid = LinearAxialGrid(nodes=6, period=1.5)
        s = np.array([0.0, 0.11, 0.6, 1.2, 1.249])
        values, derivatives = grid.interpolation(s=s)
        np.testing.assert_allclose(values @ (2.0 - 3.0 * grid.points), 2.0 - 3.0 * s, atol=1e-12)
        np.testing.assert_allclose(derivatives @ (2.0 - 3.0 * grid.points), -3.0, atol=1e-12)

    def test_last_element_wraps_to_first_node(self):
        grid = LinearAxialGrid(nodes=4, period=1.0)
        values, derivatives = grid.interpolation(s=np.array([0.875]))
        np.testing.assert_allclose(values[0], [0.5, 0.0, 0.0, 0.5])
        np.testing.assert_allclose(derivatives[0], [4.0, 0.0, 0.0, -4.0])

    def test_partition_of_unity(self):
        grid = LinearAxialGrid(nodes=5, period=2.0)
        values, derivatives = grid.interpolation(s=np.linspace(0.0, 2.0, 41))
        np.testing.assert_allclose(values.sum(axis=1), 1.0, atol=1e-14)
        np.testing.assert_allclose(derivatives.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_array_equal(grid.kernel_modes(), np.ones((1, 5)))

    def test_two_point_rule_integrates_products_exactly(self, laminate):
        grid = LinearAxialGrid(nodes=4, period=1.0)
        samples = grid.samples(micro=laminate)
        nodal = np.array([1.0, -2.0, 0.5, 3.0])
        left, right = nodal, np.roll(nodal, -1)
        exact = np.sum(grid.step * (left**2 + left * right + right**2) / 3.0)
        assert samples.weights @ (samples.values @ nodal) ** 2 == pytest.approx(exact, rel=1e-13)
        assert samples.weights.sum() == pytest.approx(1.0, rel=1e-14)

    def test_unknown_scheme_raises(self):
        with pytest.raises(ValueError, match="Unknown axial scheme 'spline'"):
            make_axial_grid(scheme="spline", nodes=4, period=1.0)


class TestSegmentSamples:
    @pytest.fixture(scope="class")
    def thin_laminate(self):
        return realize(spec=make_laminate_spec(fractions=(0.3, 0.7)))

    @pytest.mark.parametrize("axial", ["fourier", "p1"])
    def test_phase_weights_are_volume_fractions(self, coarse_square, thin_laminate, axial):
        problem = CellProblem(regime=make_regime(nodes=8, axial=axial), cs=coarse_square, micro=thin_laminate)
        samples = problem.samples
        assert samples.weights.sum() == pytest.approx(1.0, rel=1e-14)
        assert samples.weights[samples.phases == 0].sum() == pytest.approx(0.3, rel=1e-13)
        assert samples.weights[samples.phases == 1].sum() == pytest.approx(0.7, rel=1e-13)

    def test_boundary_inside_element_splits_it(self, coarse_square, thin_laminate):
        problem = CellProblem(regime=make_regime(nodes=8), cs=coarse_square, micro=thin_laminate)
        # 0.3 falls inside [0.25, 0.375)
        assert problem.samples.size == 9
        assert problem.mesh_stats()["axial_samples"] == 9

    @pytest.mark.parametrize("axial", ["fourier", "p1"])
    def test_zero_corrector_gram_is_volume_average(self, coarse_square, thin_laminate, axial):
        problem = CellProblem(regime=make_regime(nodes=8, axial=axial), cs=coarse_square, micro=thin_laminate)
        grams = [
            CellProblem(
                regime=make_regime(nodes=8, axial=axial),
                cs=coarse_square,
                micro=realize(spec=make_homogeneous_spec(lame_lambda=lame_lambda, lame_mu=lame_mu)),
            ).macro_gram
            for lame_lambda, lame_mu in ((1.0, 1.0), (2.0, 5.0))
        ]
        np.testing.assert_allclose(problem.macro_gram, 0.3 * grams[0] + 0.7 * grams[1], rtol=1e-12)
        energy = problem.energy(vector=np.zeros(problem.n_dofs), ms=MacroStrain(rho=1.0))
        assert energy == pytest.approx(0.3 * 1.5 + 0.7 * 6.0, rel=1e-12)

    def test_scheme_defaults_follow_microstructure(self, laminate):
        renewal = realize(spec=make_renewal_spec())
        assert make_regime(window=2.0).axial_scheme(micro=renewal) == "p1"
        assert make_regime().axial_scheme(micro=laminate) == "fourier"
        assert make_regime(axial="p1").axial_scheme(micro=laminate) == "p1"
        assert make_regime(window=2.0, axial="fourier").axial_scheme(micro=renewal) == "fourier"

    def test_renewal_window_uses_linear_elements(self, coarse_square):
        problem = CellProblem(regime=make_regime(nodes=4, window=3.0), cs=coarse_square, micro=realize(spec=make_renewal_spec()))
        assert isinstance(problem.grid, LinearAxialGrid)
        assert problem.solve(ms=MacroStrain(rho=1.0)).axial == "p1"

    def test_linear_laminate_matches_dense_oracle(self, coarse_square, thin_laminate):
        problem = CellProblem(regime=make_regime(nodes=8, axial="p1"), cs=coarse_square, micro=thin_laminate)
        ms = MacroStrain(rho=0.7, kappa=(0.3, -0.5, 1.1))
        corrector = problem.solve(ms=ms)
        np.testing.assert_allclose(problem.constraints @ corrector.vector, 0.0, atol=1e-10)
        expected = problem.energy(vector=dense_minimizer(problem=problem, ms=ms), ms=ms)
        assert problem.energy(vector=corrector.vector, ms=ms) == pytest.approx(expected, rel=1e-9)

    def test_linear_homogeneous_stretch_is_young_modulus(self, coarse_square, homogeneous):
        regime = make_regime(nodes=4, axial="p1")
        ms = MacroStrain(rho=1.0)
        corrector = solve_corrector(regime=regime, cs=coarse_square, micro=homogeneous, ms=ms, method="direct")
        energy = cell_energy(corrector=corrector, regime=regime, cs=coarse_square, micro=homogeneous, ms=ms)
        assert energy == pytest.approx(0.5 * young_modulus(lame_lambda=1.0, lame_mu=1.0), rel=1e-8)


class TestCellEnergy:
    def test_zero_corrector_unit_stretch(self, coarse_square):
        micro = realize(spec=make_homogeneous_spec(lame_lambda=0.0, lame_mu=1.0))
        regime = make_regime(nodes=4)
        problem = CellProblem(regime=regime, cs=coarse_square, micro=micro)
        corrector = problem.corrector(vector=np.zeros(problem.n_dofs), ms=MacroStrain(rho=1.0))
        assert cell_energy(
            corrector=corrector, regime=regime, cs=coarse_square, micro=micro, ms=MacroStrain(rho=1.0)
        ) == pytest.approx(1.0)

    @pytest.mark.parametrize("regime", ALL_REGIMES, ids=[r.value for r in ALL_REGIMES])
    def test_zero_macro_strain_gives_zero(self, coarse_square, homogeneous, regime):
        corrector = solve_corrector(
            regime=make_regime(regime=regime, nodes=4), cs=coarse_square, micro=homogeneous, ms=MacroStrain()
        )
        np.testing.assert_array_equal(corrector.vector, 0.0)

    def test_homogeneous_stretch_is_young_modulus(self, coarse_square, homogeneous):
        regime = make_regime(nodes=4)
        ms = MacroStrain(rho=1.0)
        corrector = solve_corrector(regime=regime, cs=coarse_square, micro=homogeneous, ms=ms, method="direct")
        energy = cell_energy(corrector=corrector, regime=regime, cs=coarse_square, micro=homogeneous, ms=ms)
        assert energy == pytest.approx(0.5 * young_modulus(lame_lambda=1.0, lame_mu=1.0), rel=1e-8)

    def test_laminate_matches_dense_oracle(self, coarse_square, laminate):
        problem = CellProblem(regime=make_regime(gamma=1.0, nodes=8), cs=coarse_square, micro=laminate)
        ms = MacroStrain(rho=0.7, kappa=(0.3, -0.5, 1.1))
        corrector = problem.solve(ms=ms)
        expected = problem.energy(vector=dense_minimizer(problem=problem, ms=ms), ms=ms)
        assert problem.energy(vector=corrector.vector, ms=ms) == pytest.approx(expected, rel=1e-9)

    def test_minimizer_beats_perturbations_quadratically(self, coarse_square, laminate):
        problem = CellProblem(regime=make_regime(nodes=4), cs=coarse_square, micro=laminate, method="direct")
        ms = MacroStrain(rho=1.0, kappa=(0.5, 0.0, 0.2))
        corrector = problem.solve(ms=ms)
        minimum = problem.energy(vector=corrector.vector, ms=ms)
        zero = problem.energy(vector=np.zeros(problem.n_dofs), ms=ms)
        direction = problem.project_admissible(vector=np.random.default_rng(1).standard_normal(problem.n_dofs))
        np.testing.assert_allclose(problem.constraints @ direction, 0.0, atol=1e-10)
        increases = [problem.energy(vector=corrector.vector + delta * direction, ms=ms) - minimum for delta in (1e-2, 2e-2)]
        assert minimum <= zero
        assert increases[0] > 0.0
        assert increases[1] / increases[0] == pytest.approx(4.0, rel=1e-4)

    def test_gauge_shift_leaves_energy_unchanged(self, coarse_square, laminate):
        problem = CellProblem(regime=make_regime(nodes=4), cs=coarse_square, micro=laminate)
        ms = MacroStrain(kappa=(1.0, 0.0, 0.0))
        x2, x3 = coarse_square.vertices[:, 0], coarse_square.vertices[:, 1]
        rigid = np.stack([np.full_like(x2, 0.3), -0.2 * x3, 0.2 * x2], axis=-1)
        shifted = np.tile(rigid.ravel(), problem.grid.nodes)
        vector = np.random.default_rng(2).standard_normal(problem.n_dofs)
        assert problem.energy(vector=vector + shifted, ms=ms) == pytest.approx(problem.energy(vector=vector, ms=ms))

    def test_layout_mismatch_raises(self, coarse_square, homogeneous):
        corrector = solve_corrector(
            regime=make_regime(regime=Regime.GAMMA_ZERO, nodes=4), cs=coarse_square, micro=homogeneous, ms=MacroStrain()
        )
        with pytest.raises(ValueError, match="does not match"):
            cell_energy(
                corrector=corrector, regime=make_regime(nodes=4), cs=coarse_square, micro=homogeneous, ms=MacroStrain()
            )

    def test_corrector_fields_follow_layout(self, coarse_square, laminate):
        corrector = solve_corrector(
            regime=make_regime(regime=Regime.GAMMA_ZERO, nodes=4),
            cs=coarse_square,
            micro=laminate,
            ms=MacroStrain(kappa=(0.0, 1.0, 0.0)),
        )
        fields = corrector.fields
        assert fields["psi1"].shape == (4, 3)
        assert fields["theta1"].shape == (4, 3)
        assert fields["theta2"].shape == (4, coarse_square.n_vertices, 3)
        assert corrector.nodes == 4
        with pytest.raises(ValueError, match="layout needs"):
            corrector.with_vector(vector=np.zeros(3))

    def test_skew_block_only_for_finite_regime(self, coarse_square, laminate):
        with pytest.raises(ValueError, match="only defined for the gamma_finite"):
            CellProblem(regime=make_regime(regime=Regime.GAMMA_INFINITE), cs=coarse_square, micro=laminate, skew_block=True)


class TestEffectiveFormAssembly:
    def test_homogeneous_square_entries(self, homogeneous):
        cs = make_section(target_h=0.25)
        form = effective_form(regime=make_regime(nodes=2), cs=cs, micro=homogeneous, method="direct")
        E = young_modulus(lame_lambda=1.0, lame_mu=1.0)
        assert form.a0[0, 0] == pytest.approx(E, rel=1e-8)
        assert form.a0[2, 2] == pytest.approx(E / 12.0, rel=2e-2)
        assert form.a0[3, 3] == pytest.approx(form.a0[2, 2], rel=1e-8)
        # conforming upper bound on the torsion constant, below the unwarped polar moment
        assert 0.14058 < form.a0[1, 1] < 1.0 / 6.0
        off_diagonal = form.a0 - np.diag(np.diag(form.a0))
        np.testing.assert_allclose(off_diagonal, 0.0, atol=1e-8)

    @pytest.mark.parametrize("regime", [Regime.GAMMA_ZERO, Regime.GAMMA_INFINITE], ids=["zero", "infinite"])
    def test_homogeneous_regime_independence(self, coarse_square, homogeneous, regime):
        reference = effective_form(regime=make_regime(nodes=4), cs=coarse_square, micro=homogeneous, method="direct")
        other = effective_form(regime=make_regime(regime=regime, nodes=4), cs=coarse_square, micro=homogeneous, method="direct")
        np.testing.assert_allclose(other.a0, reference.a0, rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("regime", ALL_REGIMES, ids=[r.value for r in ALL_REGIMES])
    def test_loewner_bound_by_zero_corrector(self, coarse_square, laminate, regime):
        problem = CellProblem(regime=make_regime(regime=regime, nodes=4), cs=coarse_square, micro=laminate)
        form = problem.effective_form()
        assert np.linalg.eigvalsh(form.a0)[0] > 0.0
        assert np.linalg.eigvalsh(problem.macro_gram - form.a0)[0] >= -1e-9 * np.max(problem.macro_gram)

    def test_skew_block_is_absorbed(self, coarse_square, laminate):
        regime = make_regime(gamma=0.5, nodes=4)
        plain = effective_form(regime=regime, cs=coarse_square, micro=laminate, method="direct")
        augmented = effective_form(regime=regime, cs=coarse_square, micro=laminate, method="direct", skew_block=True)
        np.testing.assert_allclose(augmented.a0, plain.a0, rtol=1e-9, atol=1e-12)

    def test_section_refinement_is_monotone(self, coarse_square, laminate):
        regime = make_regime(nodes=4)
        coarse = effective_form(regime=regime, cs=coarse_square, micro=laminate, method="direct")
        fine = effective_form(regime=regime, cs=refine_uniform(cs=coarse_square), micro=laminate, method="direct")
        assert np.all(np.diag(fine.a0) <= np.diag(coarse.a0) * (1.0 + 1e-10))

    def test_threaded_assembly_is_bit_identical(self, coarse_square, laminate):
        regime = make_regime(nodes=4)
        serial = effective_form(regime=regime, cs=coarse_square, micro=laminate, threads=1)
        threaded = effective_form(regime=regime, cs=coarse_square, micro=laminate, threads=4)
        np.testing.assert_array_equal(threaded.a0, serial.a0)

    def test_reports_solver_statistics(self, coarse_square, laminate):
        form = effective_form(regime=make_regime(nodes=4), cs=coarse_square, micro=laminate)
        assert len(form.residuals) == 4
        assert all(residual <= 1e-10 for residual in form.residuals)
        assert form.mesh_stats["vertices"] == coarse_square.n_vertices
        assert form.mesh_stats["axial_nodes"] == 4


class TestStrainFields:
    def test_zero_corrector_gives_macro_strain(self, coarse_square, laminate):
        problem = CellProblem(regime=make_regime(nodes=4), cs=coarse_square, micro=laminate)
        basis = section_quadrature(cs=coarse_square)
        strains = problem.strain_fields(
            vectors=np.zeros(problem.n_dofs), macros=np.array([0.0, 0.0, 0.0, 1.0]), basis=basis
        )
        assert strains.shape == (1, problem.samples.size, basis.n_points, 6)
        np.testing.assert_allclose(strains[0, :, :, 0], np.tile(-basis.points[:, 0], (problem.samples.size, 1)))
        np.testing.assert_allclose(strains[0, :, :, 1:], 0.0)

    def test_homogeneous_minimizer_strain_is_axially_constant(self, coarse_square, homogeneous):
        problem = CellProblem(regime=make_regime(nodes=4), cs=coarse_square, micro=homogeneous, method="direct")
        corrector = problem.solve(ms=MacroStrain(rho=1.0))
        strains = problem.strain_fields(
            vectors=corrector.vector,
            macros=np.array([1.0, 0.0, 0.0, 0.0]),
            basis=section_quadrature(cs=coarse_square),
            s=np.array([0.1, 0.45, 0.8]),
        )
        np.testing.assert_allclose(strains[0], np.broadcast_to(strains[0, :1], strains[0].shape), atol=1e-10)


class TestRveWindowSweep:
    def test_rows_per_window(self, coarse_square):
        rows = rve_window_sweep(
            regime=make_regime(nodes=4), cs=coarse_square, spec=make_renewal_spec(), windows=[2.0, 4.0], seeds=[1, 2, 3]
        )
        assert [row.window for row in rows] == [2.0, 4.0]
        assert all(len(row.mean_diagonal) == 4 for row in rows)
        assert all(min(row.variance_diagonal) >= 0.0 for row in rows)
