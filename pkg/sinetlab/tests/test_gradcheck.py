"""Tests for the finite-difference gradient checker."""

import logging

import numpy as np
import pytest

from sinetlab.src.gradcheck import (
    DEFAULT_TOLERANCE,
    GradcheckResult,
    check,
    numeric_gradient,
    relative_error,
    run_suite,
)
from sinetlab.src.tensor import Tensor, mul, relu6, sum_all


@pytest.fixture(scope="module")
def suite():
    return run_suite(seed=0)


def _cube_sum(x: Tensor) -> Tensor:
    return sum_all(mul(mul(x, x), x))


def _wrong_gradient(x: Tensor) -> Tensor:
    """sum(x^2) computed through a detached copy, so one factor gets no gradient."""

    return sum_all(mul(x, x.detach()))


class TestRelativeError:
    """Tests for the error metric."""

    def test_identical(self):
        """Test equal arrays have zero error."""
        assert relative_error(np.ones(3), np.ones(3)) == 0.0

    def test_scaled_by_largest_magnitude(self):
        """Test the difference is divided by the largest absolute entry."""
        assert relative_error(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.5)

    def test_tiny_values_use_floor(self):
        """Test the 1e-8 floor prevents division by zero."""
        assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


class TestNumericGradient:
    """Tests for central differences."""

    def test_polynomial(self):
        """Test d/dx sum(x^3) = 3x^2."""
        x = Tensor(np.array([1.0, -2.0, 0.5]))
        grad = numeric_gradient(lambda: _cube_sum(x), x)
        np.testing.assert_allclose(grad, 3 * x.data**2, rtol=1e-6)

    def test_restores_input(self):
        """Test perturbation leaves the tensor unchanged afterwards."""
        data = np.array([0.3, 0.7])
        x = Tensor(data.copy())
        numeric_gradient(lambda: _cube_sum(x), x)
        np.testing.assert_array_equal(x.data, data)

    def test_refines_near_relu6_kink(self):
        """Test a point just beside the kink at 0 still gets the one-sided slope."""
        x = Tensor(np.array([2e-6]))
        grad = numeric_gradient(lambda: sum_all(relu6(x)), x)
        assert grad[0] == pytest.approx(1.0, abs=1e-6)


class TestCheck:
    """Tests for a single gradient check."""

    def test_correct_gradient_passes(self):
        """Test a differentiable expression passes at the default tolerance."""
        x = Tensor(np.random.default_rng(0).standard_normal(4))
        result = check("cube", lambda: _cube_sum(x), [x])
        assert result.passed
        assert result.tol == DEFAULT_TOLERANCE

    def test_broken_gradient_fails_and_warns(self, caplog):
        """Test a missing gradient contribution is reported."""
        x = Tensor(np.array([1.0, 2.0]))
        with caplog.at_level(logging.WARNING, logger="sinetlab.src.gradcheck"):
            result = check("broken", lambda: _wrong_gradient(x), [x])
        assert not result.passed
        assert result.max_rel_error == pytest.approx(0.5, rel=1e-4)
        assert "broken failed" in caplog.text

    def test_result_pass_flag(self):
        """Test passing is inclusive of the tolerance."""
        assert GradcheckResult("edge", 1e-4, 1e-4).passed
        assert not GradcheckResult("edge", 2e-4, 1e-4).passed


class TestSuite:
    """Tests for the full operator and block suite."""

    def test_covers_operators_and_blocks(self, suite):
        """Test every operator and block with a gradient has a case."""
        names = {r.name for r in suite}
        assert {
            "conv2d",
            "conv2d_depthwise",
            "batchnorm2d_train",
            "softmax_cross_entropy",
            "composite_h",
            "exchange_shortcut",
            "dense_funnel",
            "si_unit",
            "attention_weight",
            "joint_decision",
            "plain_decision",
        } <= names

    def test_all_cases_pass(self, suite):
        """Test analytic gradients agree with finite differences to 1e-4."""
        failures = {r.name: r.max_rel_error for r in suite if not r.passed}
        assert not failures

    def test_deterministic_in_seed(self, suite):
        """Test the same seed reproduces the same errors."""
        again = run_suite(seed=0)
        assert [r.max_rel_error for r in again] == [r.max_rel_error for r in suite]

    def test_impossible_tolerance_fails(self):
        """Test a tolerance below finite-difference noise reports failures."""
        assert any(not r.passed for r in run_suite(seed=1, tol=1e-14))
