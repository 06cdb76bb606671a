"""Analysis/synthesis transform contracts."""

import pytest
import torch

from taskcodec.transforms import (
    AnalysisTransform,
    ShapeError,
    SynthesisTransform,
    TaskHeadSpec,
    TransformSpec,
    aux_spec_from,
    check_subsumption,
    count_params,
)

# Pinned at first build from the layer algebra of the reference spec
# (M=64, base_width=32, blocks_per_stage=1).
GOLDEN_ANALYSIS_PARAMS = 136_960


class TestAnalysis:
    def test_latent_shape_64(self):
        net = AnalysisTransform(TransformSpec(latent_channels=64))
        out = net(torch.zeros(2, 3, 64, 64))
        assert out.shape == (2, 64, 4, 4)

    def test_latent_shape_full_scale(self):
        net = AnalysisTransform(TransformSpec(latent_channels=192, base_width=64))
        out = net(torch.zeros(1, 3, 128, 96))
        assert out.shape == (1, 192, 8, 6)

    def test_indivisible_input_rejected(self):
        net = AnalysisTransform(TransformSpec())
        with pytest.raises(ShapeError):
            net(torch.zeros(1, 3, 60, 64))

    def test_zero_weights_give_zero_latent(self):
        net = AnalysisTransform(TransformSpec(latent_channels=8, base_width=4))
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
        out = net(torch.rand(1, 3, 32, 32))
        assert torch.equal(out, torch.zeros_like(out))


class TestSynthesis:
    def test_reconstruction_shape_and_bounds(self):
        spec = TransformSpec(latent_channels=64)
        net = SynthesisTransform(spec, TaskHeadSpec("reconstruction"))
        out = net(torch.randn(2, 64, 4, 4))
        assert out.shape == (2, 3, 64, 64)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_segmentation_scores_unbounded(self):
        spec = TransformSpec(latent_channels=64)
        net = SynthesisTransform(spec, TaskHeadSpec("segmentation", num_classes=4))
        out = net(torch.randn(1, 64, 4, 4) * 10)
        assert out.shape == (1, 4, 64, 64)

    def test_depth_head_single_channel(self):
        spec = TransformSpec(latent_channels=32, base_width=16)
        net = SynthesisTransform(spec, TaskHeadSpec("depth_regression"))
        out = net(torch.randn(1, 32, 2, 2))
        assert out.shape == (1, 1, 32, 32)

    def test_channel_mismatch_rejected(self):
        net = SynthesisTransform(TransformSpec(latent_channels=64),
                                 TaskHeadSpec("reconstruction"))
        with pytest.raises(ShapeError):
            net(torch.zeros(1, 32, 4, 4))

    def test_deterministic(self):
        net = SynthesisTransform(TransformSpec(latent_channels=16, base_width=8),
                                 TaskHeadSpec("reconstruction"))
        latent = torch.randn(1, 16, 4, 4)
        assert torch.equal(net(latent), net(latent))

    def test_analyze_synthesize_shape_roundtrip(self):
        spec = TransformSpec(latent_channels=16, base_width=8)
        analysis = AnalysisTransform(spec)
        synthesis = SynthesisTransform(spec, TaskHeadSpec("reconstruction"))
        for h, w in ((64, 64), (32, 48), (80, 16)):
            x = torch.rand(1, 3, h, w)
            assert synthesis(analysis(x)).shape == (1, 3, h, w)


class TestParamCounts:
    def test_golden_reference_count(self):
        assert count_params(TransformSpec(64, 32, 1)) == GOLDEN_ANALYSIS_PARAMS

    def test_doubling_blocks_strictly_increases(self):
        small = count_params(TransformSpec(64, 32, 1))
        big = count_params(TransformSpec(64, 32, 2))
        assert big > small

    def test_aux_is_smaller_than_enhancement(self):
        spec = TransformSpec(64, 32, 1)
        head = TaskHeadSpec("reconstruction")
        assert count_params(aux_spec_from(spec), head) <= count_params(spec, head)


class TestSubsumption:
    def test_aux_maps_injectively_into_enhancement(self):
        spec = TransformSpec(latent_channels=32, base_width=16, blocks_per_stage=1)
        head = TaskHeadSpec("reconstruction")
        aux = SynthesisTransform(aux_spec_from(spec), head)
        enh = SynthesisTransform(spec, head)
        mapping = check_subsumption(aux, enh)
        assert len(mapping) == len(list(aux.named_parameters()))
        assert len(set(mapping.values())) == len(mapping)  # injective

    def test_width_mismatch_rejected(self):
        head = TaskHeadSpec("reconstruction")
        aux = SynthesisTransform(TransformSpec(32, 32, 0), head)
        enh = SynthesisTransform(TransformSpec(32, 16, 1), head)
        with pytest.raises(ValueError):
            check_subsumption(aux, enh)


class TestGradientFlow:
    def test_autodiff_matches_finite_differences(self):
        """Central finite differences vs autograd on a miniature transform at
        float64, rtol 1e-2 (no quantizer in the path)."""
        torch.manual_seed(0)
        spec = TransformSpec(latent_channels=8, base_width=4, blocks_per_stage=1)
        net = AnalysisTransform(spec).double()
        x = torch.rand(1, 3, 16, 16, dtype=torch.float64)
        target = torch.rand(1, 8, 1, 1, dtype=torch.float64)

        def loss_fn():
            return ((net(x) - target) ** 2).mean()

        loss_fn().backward()
        checked = 0
        for param in net.parameters():
            if param.numel() == 0 or param.grad is None:
                continue
            flat = param.detach().reshape(-1)
            idx = min(1, flat.numel() - 1)
            eps = 1e-5
            with torch.no_grad():
                original = flat[idx].item()
                flat[idx] = original + eps
                up = loss_fn().item()
                flat[idx] = original - eps
                down = loss_fn().item()
                flat[idx] = original
            numeric = (up - down) / (2 * eps)
            analytic = param.grad.reshape(-1)[idx].item()
            assert numeric == pytest.approx(analytic, rel=1e-2, abs=1e-8)
            checked += 1
        assert checked >= 3
