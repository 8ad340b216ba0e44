"""
Tests for the ground states Q and W and the threshold data derived from them.
"""
import numpy as np
import pytest

from models.exceptions import ConvergenceError, DomainError
from models.schemas import Criticality, PhysicsParams
from utils.ground_states import (gagliardo_nirenberg_quotient, ground_state_solver,
                                 pohozaev_residuals, profile_norms, sobolev_quotient,
                                 threshold_functions)
from utils.spectral import Field, Grid, h_norm

ENERGY_CRITICAL = PhysicsParams(2, 0.75, 6.0)


@pytest.fixture(scope="module")
def ground_state_W():
    return ground_state_solver.make_W(Grid(2, 128, 40.0), ENERGY_CRITICAL)


class TestSolveQ:
    """Petviashvili iteration for Q."""

    @pytest.mark.parametrize("name", ["ground_state_1d", "ground_state_2d"])
    def test_pohozaev_identities(self, request, name):
        Q = request.getfixturevalue(name)
        assert Q.converged
        assert max(Q.pohozaev_residuals) <= 1e-4

    @pytest.mark.parametrize("name", ["ground_state_1d", "ground_state_2d"])
    def test_virial_quantity_vanishes(self, request, name):
        Q = request.getfixturevalue(name)
        assert abs(Q.norms["K"]) <= 1e-6 * h_norm(Q.profile, Q.params.s) ** 2

    def test_profile_is_positive_and_even(self, ground_state_1d):
        values = ground_state_1d.profile.values
        assert ground_state_1d.profile.is_real(tol=0.0)
        assert values.real.min() > -1e-12 * values.real.max()
        # x_j and -x_j sit at j and n - j
        assert np.allclose(values[1:], values[1:][::-1], atol=1e-13)
        assert np.argmax(values.real) == len(values) // 2

    def test_two_dimensional_profile_is_symmetric(self, ground_state_2d):
        values = ground_state_2d.profile.values.real
        assert np.allclose(values, values.T, atol=1e-13)

    def test_equation_residual_and_trace(self, ground_state_1d):
        assert ground_state_1d.diagnostics["equation_residual"] < 1e-6
        assert ground_state_1d.residual_trace[-1] < 1e-11
        assert ground_state_1d.iterations == len(ground_state_1d.residual_trace)

    def test_intercritical_energy_is_positive(self, ground_state_1d):
        assert ground_state_1d.norms["energy"] > 0

    def test_mass_critical_ground_state(self, mass_critical_1d):
        Q = ground_state_solver.solve_Q(Grid(1, 1024, 40.0), mass_critical_1d)
        assert max(Q.pohozaev_residuals) <= 1e-4
        # at the mass-critical power E(Q) = 0
        assert abs(Q.norms["energy"]) <= 1e-4 * Q.norms["X"]

    def test_mass_stable_under_refinement(self, ground_state_1d, intercritical_1d):
        finer = ground_state_solver.solve_Q(Grid(1, 2048, 40.0), intercritical_1d)
        coarse_mass = ground_state_1d.norms["mass"]
        assert abs(finer.norms["mass"] - coarse_mass) <= 1e-5 * coarse_mass

    def test_norms_helpers_agree(self, ground_state_1d, intercritical_1d):
        norms = profile_norms(ground_state_1d.profile, intercritical_1d)
        assert norms == ground_state_1d.norms
        assert pohozaev_residuals(norms, intercritical_1d) == ground_state_1d.pohozaev_residuals

    def test_rejects_energy_critical(self):
        with pytest.raises(DomainError, match="no ground state"):
            ground_state_solver.solve_Q(Grid(2, 32, 20.0), ENERGY_CRITICAL)

    def test_rejects_grid_mismatch(self, intercritical_1d):
        with pytest.raises(DomainError, match="params describe"):
            ground_state_solver.solve_Q(Grid(2, 32, 20.0), intercritical_1d)

    def test_rejects_tiny_tolerance(self, intercritical_1d):
        with pytest.raises(DomainError, match="tolerance"):
            ground_state_solver.solve_Q(Grid(1, 64, 20.0), intercritical_1d, tol=1e-14)

    def test_zero_initial_guess(self, intercritical_1d):
        grid = Grid(1, 64, 20.0)
        with pytest.raises(ConvergenceError, match="zero field"):
            ground_state_solver.solve_Q(grid, intercritical_1d, initial=Field.zeros(grid))

    def test_iteration_budget(self, intercritical_1d):
        with pytest.raises(ConvergenceError) as excinfo:
            ground_state_solver.solve_Q(Grid(1, 256, 20.0), intercritical_1d, max_iter=2)
        assert len(excinfo.value.residual_trace) == 2

    def test_defaults_from_environment(self, monkeypatch):
        monkeypatch.setenv("FNLS_GS_TOL", "1e-9")
        monkeypatch.setenv("FNLS_GS_MAX_ITER", "77")
        assert ground_state_solver.default_tolerance() == 1e-9
        assert ground_state_solver.default_max_iter() == 77


class TestIntercriticalThresholds:
    """Sharp Gagliardo-Nirenberg constant, x0 and E(Q) M(Q)^sigma."""

    def test_consistency(self, thresholds_1d):
        assert thresholds_1d.regime == Criticality.INTERCRITICAL
        for gap in thresholds_1d.consistency.values():
            assert gap <= 1e-4

    def test_threshold_function_peaks_at_critical_point(self, thresholds_1d):
        x0 = thresholds_1d.critical_point
        peak = threshold_functions(x0, thresholds_1d)
        assert peak == pytest.approx(thresholds_1d.threshold_energy, rel=1e-4)
        assert threshold_functions(0.9 * x0, thresholds_1d) < peak
        assert threshold_functions(1.1 * x0, thresholds_1d) < peak
        assert threshold_functions(0.0, thresholds_1d) == 0.0

    def test_two_dimensional_consistency(self, ground_state_2d):
        data = ground_state_solver.intercritical_thresholds(ground_state_2d)
        for gap in data.consistency.values():
            assert gap <= 1e-4

    def test_ground_state_maximises_weinstein_quotient(self, ground_state_1d, thresholds_1d, intercritical_1d):
        grid = ground_state_1d.profile.grid
        assert gagliardo_nirenberg_quotient(ground_state_1d.profile, intercritical_1d) == pytest.approx(
            thresholds_1d.sharp_constant, rel=1e-12)
        for width in (0.5, 1.0, 2.0):
            trial = Field(grid, values=np.exp(-(grid.coordinates[0] / width) ** 2))
            assert gagliardo_nirenberg_quotient(trial, intercritical_1d) < thresholds_1d.sharp_constant

    def test_quotient_undefined_for_zero(self, intercritical_1d):
        with pytest.raises(DomainError, match="undefined"):
            gagliardo_nirenberg_quotient(Field.zeros(Grid(1, 32, 5.0)), intercritical_1d)

    def test_negative_argument(self, thresholds_1d):
        with pytest.raises(DomainError, match="nonnegative"):
            threshold_functions(-1.0, thresholds_1d)

    def test_needs_intercritical_Q(self, mass_critical_1d):
        Q = ground_state_solver.solve_Q(Grid(1, 256, 20.0), mass_critical_1d, tol=1e-9)
        with pytest.raises(DomainError, match="intercritical"):
            ground_state_solver.intercritical_thresholds(Q)


class TestEnergyCritical:
    """Power-law W and the sharp Sobolev chain."""

    def test_sobolev_identity(self, ground_state_W):
        assert ground_state_W.kind == "W"
        assert ground_state_W.norms["X"] == pytest.approx(ground_state_W.norms["Y"], rel=1e-3)
        assert ground_state_W.pohozaev_residuals[0] <= 1e-10

    def test_threshold_chain(self, ground_state_W):
        data = ground_state_solver.energy_critical_thresholds(ground_state_W)
        assert data.regime == Criticality.ENERGY_CRITICAL
        assert threshold_functions(data.critical_point, data) == pytest.approx(ground_state_W.norms["energy"], rel=1e-3)
        for gap in data.consistency.values():
            assert gap <= 1e-3

    def test_sobolev_quotient_of_W(self, ground_state_W):
        data = ground_state_solver.energy_critical_thresholds(ground_state_W)
        assert sobolev_quotient(ground_state_W.profile, ENERGY_CRITICAL) == pytest.approx(
            data.sharp_constant, rel=1e-8)

    def test_fitted_amplitude_near_closed_form(self, ground_state_W):
        assert ground_state_W.diagnostics["kappa_relative_gap"] < 5e-2

    def test_equation_residual_has_no_mass_term(self):
        W = ground_state_solver.make_W(Grid(2, 256, 40.0), ENERGY_CRITICAL)
        assert W.diagnostics["equation_residual"] < 0.1

    def test_box_too_small(self):
        with pytest.raises(DomainError, match="half_length"):
            ground_state_solver.make_W(Grid(2, 64, 20.0), ENERGY_CRITICAL)

    def test_needs_energy_critical_power(self, intercritical_2d):
        with pytest.raises(DomainError, match="energy-critical"):
            ground_state_solver.make_W(Grid(2, 64, 40.0), intercritical_2d)

    def test_thresholds_need_W(self, ground_state_2d):
        with pytest.raises(DomainError, match="intercritical|energy-critical"):
            ground_state_solver.energy_critical_thresholds(ground_state_2d)
