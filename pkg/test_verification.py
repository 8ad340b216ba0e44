"""
Tests for the residual checks behind the verify command.
"""
import numpy as np
import pytest

from models.exceptions import DomainError
from utils.balakrishnan import build_quadrature
from utils.cutoffs import make_phi, make_psi
from utils.run_config import parse_config
from utils.spectral import Grid
from utils.verification import (VerificationManager, band_limited_field, central_difference_rates,
                                moving_gaussian, relative_gap)


class TestHelpers:
    """Test fields and difference quotients."""

    def test_band_limited_field(self, rng):
        grid = Grid(2, 32, 5.0)
        field = band_limited_field(grid, rng, band=4)
        k = np.abs(np.fft.fftfreq(32, d=1.0 / 32))
        outside = (k[:, None] > 4) | (k[None, :] > 4)
        assert np.all(field.spectral[outside] == 0)
        assert np.any(field.spectral[~outside] != 0)

    def test_relative_gap_floor(self):
        assert relative_gap(1.0, 2.0) == 0.5
        assert relative_gap(1e-9, 0.0) == pytest.approx(0.1)

    def test_difference_quotients_match_identities(self, mass_critical_1d):
        grid = Grid(1, 512, 20.0)
        u = moving_gaussian(grid)
        quad = build_quadrature(mass_critical_1d.s)
        rates = central_difference_rates(u, make_psi(grid, 4.0), mass_critical_1d, quad)
        assert relative_gap(*rates["V"]) <= 1e-3
        rates = central_difference_rates(u, make_phi(grid, 4.0), mass_critical_1d, quad)
        assert relative_gap(*rates["M"]) <= 1e-3


class TestRunVerification:
    """Check bookkeeping of the manager."""

    def test_failing_check_is_recorded(self):
        results = {}

        def compute():
            raise DomainError("resolvent shift must be positive")

        VerificationManager()._check(results, "broken", 1.0, compute)
        assert results["broken"]["passed"] is False
        assert results["broken"]["residual"] is None
        assert "resolvent shift" in results["broken"]["error"]

    def test_threshold_comparison(self):
        results = {}
        manager = VerificationManager()
        manager._check(results, "small", 1e-6, lambda: 1e-7)
        manager._check(results, "large", 1e-6, lambda: 1e-5)
        assert results["small"]["passed"]
        assert not results["large"]["passed"]

    @pytest.mark.slow
    def test_report(self):
        config = parse_config({"physics": {"dim": 1, "s": 0.7, "alpha": 2.8}, "grid": {"n": 512, "L": 20.0},
                               "monitors": {"R": [4.0]}})
        report = VerificationManager().run_verification(config)
        assert report["success"]
        assert report["params"] == {"dim": 1, "s": 0.7, "alpha": 2.8}
        assert {"quadrature_symbol", "scaling_law", "mass_conservation", "weight_properties",
                "pohozaev"} <= set(report["checks"])
        assert report["checks"]["quadrature_symbol"]["passed"]
        assert report["checks"]["mass_conservation"]["passed"]
