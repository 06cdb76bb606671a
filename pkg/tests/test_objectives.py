"""Loss decompositions and distortion functions."""

import math

import pytest
import torch

from taskcodec import objectives
from taskcodec.objectives import (
    ConfigurationError,
    ContractViolation,
    aux_reconstruction_term,
    base_loss,
    distortion,
    enhancement_loss,
)


class TestDistortion:
    def test_identical_is_zero(self):
        x = torch.rand(2, 3, 8, 8)
        assert float(distortion("reconstruction", x, x)) == 0.0

    def test_constant_offset_rmse(self):
        x = torch.rand(2, 1, 8, 8, dtype=torch.float64)
        assert float(distortion("depth_regression", x + 0.1, x)) == pytest.approx(0.1, abs=1e-9)

    def test_uniform_segmentation_scores(self):
        """Uniform scores over 4 classes -> cross-entropy = ln 4 nats."""
        scores = torch.zeros(2, 4, 8, 8)
        labels = torch.randint(0, 4, (2, 8, 8))
        assert float(distortion("segmentation", scores, labels)) == pytest.approx(
            math.log(4.0), abs=1e-6)

    def test_nan_rejected(self):
        x = torch.full((4,), float("nan"))
        with pytest.raises(FloatingPointError):
            distortion("reconstruction", x, torch.zeros(4))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            distortion("detection", torch.zeros(1), torch.zeros(1))


class TestAuxTerm:
    def test_identity_and_offset(self):
        x = torch.rand(3, 16, 16, dtype=torch.float64)
        assert float(aux_reconstruction_term(x, x)) == 0.0
        assert float(aux_reconstruction_term(x, x + 0.25)) == pytest.approx(0.25, abs=1e-12)

    def test_matches_independent_rmse_oracle(self):
        torch.manual_seed(0)
        x = torch.rand(3, 8, 8, dtype=torch.float64)
        x_hat = torch.rand(3, 8, 8, dtype=torch.float64)
        oracle = math.sqrt(float(((x_hat - x) ** 2).sum()) / x.numel())
        assert float(aux_reconstruction_term(x, x_hat)) == pytest.approx(oracle, abs=1e-12)


class TestBaseLoss:
    def _inputs(self):
        x = torch.rand(1, 3, 16, 16)
        z = torch.rand(1, 1, 16, 16)
        return x, z

    def test_worked_arithmetic(self):
        """lambda=1, d=0.5, R=2.0, beta=0.1, aux=1.0 -> total 2.6."""
        z = torch.zeros(1, 1, 2, 2)
        z_hat = torch.full((1, 1, 2, 2), 0.5)
        x = torch.zeros(1, 3, 2, 2)
        x_hat = torch.ones(1, 3, 2, 2)
        out = base_loss("depth_regression", z, z_hat, torch.tensor(2.0),
                        x, x_hat, lambda_b=1.0, beta=0.1)
        assert float(out.total) == pytest.approx(2.6, abs=1e-6)

    def test_exact_decomposition(self):
        torch.manual_seed(1)
        x, z = self._inputs()
        out = base_loss("depth_regression", z, torch.rand_like(z),
                        torch.tensor(1.7), x, torch.rand_like(x),
                        lambda_b=48.0, beta=0.1)
        recomposed = (out.lambda_b * out.task_distortion + out.rate_bits
                      + out.beta * out.aux_recon)
        assert torch.equal(out.total, recomposed)

    def test_beta_zero_reproduces_baseline(self):
        x, z = self._inputs()
        z_hat = torch.rand_like(z)
        rate = torch.tensor(3.0)
        out = base_loss("depth_regression", z, z_hat, rate, x, None,
                        lambda_b=2.0, beta=0.0)
        assert float(out.total) == pytest.approx(
            2.0 * float(out.task_distortion) + 3.0)
        assert float(out.aux_recon) == 0.0

    def test_negative_beta_rejected(self):
        x, z = self._inputs()
        with pytest.raises(ConfigurationError):
            base_loss("depth_regression", z, z, torch.tensor(0.0), x, x,
                      lambda_b=1.0, beta=-0.1)

    def test_positive_beta_requires_reconstruction(self):
        x, z = self._inputs()
        with pytest.raises(ConfigurationError):
            base_loss("depth_regression", z, z, torch.tensor(0.0), x, None,
                      lambda_b=1.0, beta=0.1)

    def test_beta_weight_scales_aux_gradient(self):
        """The aux-term weight in d(total)/d(aux) is beta itself: linear."""
        x, z = self._inputs()
        grads = []
        for beta in (0.1, 0.2):
            x_hat = torch.full_like(x, 0.4, requires_grad=True)
            out = base_loss("depth_regression", z, z, torch.tensor(0.0),
                            torch.zeros_like(x), x_hat, lambda_b=1.0, beta=beta)
            out.total.backward()
            grads.append(x_hat.grad.clone())
        assert torch.allclose(grads[1], 2.0 * grads[0], rtol=1e-5)


class TestEnhancementLoss:
    def test_worked_arithmetic(self):
        """lambda=1, d=0.2, cond_rate=3.0 -> total 3.2."""
        z = torch.zeros(1, 3, 2, 2)
        z_hat = torch.full((1, 3, 2, 2), 0.2)
        out = enhancement_loss("reconstruction", z, z_hat, torch.tensor(3.0),
                               lambda_e=1.0)
        assert float(out.total) == pytest.approx(3.2, abs=1e-6)

    def test_exact_decomposition(self):
        z = torch.rand(1, 3, 4, 4)
        out = enhancement_loss("reconstruction", z, torch.rand_like(z),
                               torch.tensor(0.8), lambda_e=12.0)
        assert torch.equal(out.total,
                           out.lambda_e * out.task_distortion
                           + out.conditional_rate_bits)

    def test_unfrozen_base_detected(self):
        z = torch.rand(1, 3, 4, 4)
        frozen = [torch.nn.Parameter(torch.zeros(3), requires_grad=False)]
        live = [torch.nn.Parameter(torch.zeros(3), requires_grad=True)]
        enhancement_loss("reconstruction", z, z, torch.tensor(0.1), 1.0,
                         frozen_base_params=frozen)
        with pytest.raises(ContractViolation):
            enhancement_loss("reconstruction", z, z, torch.tensor(0.1), 1.0,
                             frozen_base_params=live)

    def test_zero_side_information_is_finite(self):
        z = torch.rand(1, 3, 4, 4)
        out = enhancement_loss("reconstruction", z, torch.zeros_like(z),
                               torch.tensor(2.0), lambda_e=1.0)
        assert torch.isfinite(out.total)
