import hashlib

import numpy as np
import pytest
import torch

from safepaint.models import (
    CHECKPOINT_HEADER,
    DomainPatternExtractor,
    ModelConfig,
    PatchDiscriminator,
    ResnetGenerator,
    build_models,
    coarse_forward,
    load_checkpoint,
    pattern_map,
    refine_forward,
    restore_models,
    run_pipeline,
    save_checkpoint,
)

SMALL = ModelConfig(base_width=8, disc_width=8, extractor_width=8)


def tensor_hash(t):
    return hashlib.sha256(t.detach().numpy().tobytes()).hexdigest()[:16]


@pytest.fixture(scope="module")
def nets():
    built = build_models(SMALL, seed=123)
    for net in built.values():
        net.eval()
    return built


def sample_case(size=32, seed=77):
    gen = torch.Generator().manual_seed(seed)
    image = torch.rand(1, 3, size, size, generator=gen)
    mask = torch.zeros(1, 1, size, size)
    mask[:, :, size // 4 : size // 2 + 4, size // 3 : size - 8] = 1.0
    return image, mask


class TestTwoStageForward:
    def test_background_exact_any_weights(self, nets):
        for seed in range(5):
            gen = torch.Generator().manual_seed(seed)
            image = torch.rand(2, 3, 32, 32, generator=gen)
            mask = (torch.rand(2, 1, 32, 32, generator=gen) < 0.4).float()
            image_in = image * (1 - mask) + mask
            with torch.no_grad():
                coarse = coarse_forward(nets["g1"], image_in, mask)
                z = nets["p"](coarse, 1 - mask)
                refined = refine_forward(nets["g2"], coarse, mask, pattern_map(z, 32, 32))
            known = mask.expand_as(image) < 0.5
            assert torch.equal(coarse[known], image[known])
            assert torch.equal(refined[known], image[known])

    def test_output_shape(self, nets):
        image, mask = sample_case()
        with torch.no_grad():
            coarse = coarse_forward(nets["g1"], image * (1 - mask) + mask, mask)
        assert coarse.shape == image.shape

    def test_golden_regression(self, nets):
        image, mask = sample_case()
        image_in = image * (1 - mask) + mask
        with torch.no_grad():
            coarse = coarse_forward(nets["g1"], image_in, mask)
            z = nets["p"](coarse, 1 - mask)
            refined = refine_forward(nets["g2"], coarse, mask, pattern_map(z, 32, 32))
        # frozen at first build; guards initialization and forward stability
        assert tensor_hash(coarse) == "780bdc9c923490c0"
        assert tensor_hash(refined) == "1e078e1b8e82991e"

    def test_changing_pattern_changes_only_hole(self, nets):
        image, mask = sample_case(seed=5)
        image_in = image * (1 - mask) + mask
        with torch.no_grad():
            coarse = coarse_forward(nets["g1"], image_in, mask)
            z = nets["p"](coarse, 1 - mask)
            out_a = refine_forward(nets["g2"], coarse, mask, pattern_map(z, 32, 32))
            out_b = refine_forward(nets["g2"], coarse, mask, pattern_map(z + 1.0, 32, 32))
        known = mask.expand_as(image) < 0.5
        assert torch.equal(out_a[known], out_b[known])
        assert not torch.equal(out_a, out_b)

    def test_pattern_resolution_mismatch_rejected(self, nets):
        image, mask = sample_case()
        with pytest.raises(ValueError, match="resolution"):
            refine_forward(nets["g2"], image, mask, torch.zeros(1, 16, 8, 8))


class TestDomainPatternExtractor:
    def test_output_length_16(self, nets):
        image, mask = sample_case(seed=9)
        with torch.no_grad():
            z = nets["p"](image, mask)
        assert z.shape == (1, 16)
        assert torch.isfinite(z).all()

    def test_outside_region_perturbation_invariance(self, nets):
        image, mask = sample_case(seed=10)
        perturbed = image + (1 - mask) * torch.rand_like(image)
        with torch.no_grad():
            z_a = nets["p"](image, mask)
            z_b = nets["p"](perturbed, mask)
        assert (z_a - z_b).abs().max().item() < 1e-6

    def test_deterministic(self, nets):
        image, mask = sample_case(seed=11)
        with torch.no_grad():
            assert torch.equal(nets["p"](image, mask), nets["p"](image, mask))

    def test_empty_region_rejected(self, nets):
        image, _ = sample_case()
        with pytest.raises(ValueError, match="positive"):
            nets["p"](image, torch.zeros(1, 1, 32, 32))

    def test_depends_on_region_content(self, nets):
        image, mask = sample_case(seed=12)
        inside_change = image.clone()
        inside_change[:, :, 10, 12] += 0.5  # inside the mask window
        assert mask[0, 0, 10, 12] == 1.0
        with torch.no_grad():
            z_a = nets["p"](image, mask)
            z_b = nets["p"](inside_change, mask)
        assert not torch.equal(z_a, z_b)


class TestPatchDiscriminator:
    def test_score_map_shape_contract(self, nets):
        for size in (32, 64):
            with torch.no_grad():
                scores = nets["d"](torch.rand(1, 3, size, size))
            assert scores.shape == (1, 1, size // 8, size // 8)

    def test_translation_equivariance_interior(self, nets):
        # two crops of one wide image, offset by the 8 px output stride; score
        # maps must agree on cells whose receptive field (70 px) lies in both
        gen = torch.Generator().manual_seed(13)
        wide = torch.rand(1, 3, 128, 136, generator=gen)
        with torch.no_grad():
            base = nets["d"](wide[:, :, :, 0:128])
            moved = nets["d"](wide[:, :, :, 8:136])
        trim = 5  # ceil((70 / 2) / 8)
        diff = (moved[:, :, trim:-trim, trim:-trim] - base[:, :, trim:-trim, trim + 1 : -trim + 1]).abs()
        assert diff.max().item() < 1e-5

    def test_deterministic_given_seed(self):
        a = build_models(SMALL, seed=9)["d"]
        b = build_models(SMALL, seed=9)["d"]
        x = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(14))
        a.eval(), b.eval()
        with torch.no_grad():
            assert torch.equal(a(x), b(x))

    def test_non_rgb_rejected(self, nets):
        with pytest.raises(ValueError, match="3-channel"):
            nets["d"](torch.rand(1, 4, 32, 32))


class TestGradientFlow:
    def test_losses_reach_all_networks(self):
        from safepaint.losses import (
            FeaturePyramid,
            LossWeights,
            domain_distance_loss,
            generator_adversarial_loss,
            l1_loss,
            perceptual_loss,
            style_loss,
            total_loss,
        )

        nets = build_models(SMALL, seed=3)
        pyramid = FeaturePyramid(seed=0)
        gen = torch.Generator().manual_seed(15)
        image = torch.rand(2, 3, 32, 32, generator=gen)
        mask = torch.zeros(2, 1, 32, 32)
        mask[:, :, 8:24, 8:24] = 1.0
        image_in = image * (1 - mask) + mask

        coarse = coarse_forward(nets["g1"], image_in, mask)
        z_back = nets["p"](coarse, 1 - mask)
        refined = refine_forward(nets["g2"], coarse, mask, pattern_map(z_back, 32, 32))
        parts = {
            "l1": l1_loss(coarse, refined, image),
            "per": perceptual_loss(coarse, refined, image, pyramid),
            "sty": style_loss(coarse, refined, image, pyramid),
            "adv": generator_adversarial_loss(nets["d"](refined)),
            "dom": domain_distance_loss(
                nets["p"](refined, mask), z_back, nets["p"](image, mask)
            ),
        }
        total_loss(parts, LossWeights()).backward()
        for name in ("g1", "g2", "p"):
            grads = [p.grad for p in nets[name].parameters() if p.grad is not None]
            assert grads, f"{name} received no gradient"
            assert any(g.abs().max().item() > 0 for g in grads), f"{name} gradient all zero"


class TestRunPipeline:
    def test_numpy_roundtrip_background_bit_exact(self, nets):
        rng = np.random.default_rng(16)
        image = rng.uniform(0, 1, (32, 32, 3))
        mask = np.zeros((32, 32))
        mask[10:20, 6:26] = 1.0
        for stage in ("stage1", "full"):
            out = run_pipeline(nets, image, mask, stage=stage)
            known = mask < 0.5
            assert np.array_equal(out[known], image[known])
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_unknown_stage_rejected(self, nets):
        with pytest.raises(ValueError, match="stage"):
            run_pipeline(nets, np.zeros((32, 32, 3)), np.zeros((32, 32)), stage="late")


class TestCheckpoint:
    def test_roundtrip_restores_forward(self, nets, tmp_path):
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, nets, config=SMALL, seed=123, step=7)
        blob = load_checkpoint(path)
        assert blob["step"] == 7
        assert blob["seed"] == 123
        fresh = build_models(SMALL, seed=0)
        restore_models(fresh, blob)
        for net in fresh.values():
            net.eval()
        image, mask = sample_case(seed=17)
        with torch.no_grad():
            a = coarse_forward(nets["g1"], image, mask)
            b = coarse_forward(fresh["g1"], image, mask)
        assert torch.equal(a, b)

    def test_header_versioned(self, nets, tmp_path):
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, nets, config=SMALL)
        assert path.read_bytes().startswith(CHECKPOINT_HEADER)
        bad = tmp_path / "bad.pt"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError, match="header"):
            load_checkpoint(bad)

    def test_save_is_byte_deterministic(self, nets, tmp_path):
        a, b = tmp_path / "a.pt", tmp_path / "b.pt"
        save_checkpoint(a, nets, config=SMALL, seed=1, step=2)
        save_checkpoint(b, nets, config=SMALL, seed=1, step=2)
        assert a.read_bytes() == b.read_bytes()


def test_generator_standalone_shapes():
    torch.manual_seed(18)
    g = ResnetGenerator(4, base=8, residual_blocks=2)
    g.eval()
    with torch.no_grad():
        out = g(torch.rand(1, 4, 16, 16))
    assert out.shape == (1, 3, 16, 16)
    assert out.min() >= 0.0 and out.max() <= 1.0
