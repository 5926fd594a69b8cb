import numpy as np
import pytest

from vixseg import tensor as T
from vixseg.errors import ConfigError, ShapeError
from vixseg.losses import composite_loss, one_hot
from vixseg.unet import ModelConfig, VilUNet, architecture_summary, model_flops

from conftest import fd_check


def small_cfg(**kw):
    base = dict(
        spatial_rank=2, levels=2, base_channels=4, patch_size=2,
        embed_dim=8, vil_blocks=1, num_classes=3,
    )
    base.update(kw)
    return ModelConfig(**base)


def test_default_configuration_pins():
    cfg = ModelConfig()
    assert cfg.vil_blocks == 6
    assert cfg.levels == 4
    assert cfg.patch_size == 2
    assert cfg.heads == 4


class TestEncoder:
    def test_channel_and_extent_ladder(self):
        cfg = ModelConfig(levels=4, base_channels=16, embed_dim=64, vil_blocks=1,
                          num_classes=3)
        m = VilUNet(cfg, (64, 64), seed=0)
        img = T.Tensor(np.zeros((1, 64, 64), dtype=np.float32))
        with T.no_grad():
            r, trace = m.encoder_forward(img)
        assert r.shape == (128, 8, 8)
        assert [t.shape[0] for t in trace] == [16, 32, 64, 128]
        assert [t.shape[1] for t in trace] == [64, 32, 16, 8]

    def test_3d_bottleneck_eighth_resolution(self):
        cfg = ModelConfig(spatial_rank=3, levels=4, base_channels=2, embed_dim=8,
                          vil_blocks=1, num_classes=2)
        m = VilUNet(cfg, (64, 64, 64), seed=0)
        with T.no_grad():
            r, _ = m.encoder_forward(T.Tensor(np.zeros((1, 64, 64, 64), dtype=np.float32)))
        assert r.shape == (16, 8, 8, 8)

    def test_zero_weights_give_zero_features(self):
        m = VilUNet(small_cfg(), (16, 16), seed=0)
        for name, p in m.param_dict().items():
            if name.startswith("enc."):
                p.data[...] = 0.0
        with T.no_grad():
            r, trace = m.encoder_forward(T.Tensor(np.random.default_rng(0)
                                                  .uniform(size=(1, 16, 16))
                                                  .astype(np.float32)))
        for t in trace:
            assert np.array_equal(t.data, np.zeros_like(t.data))

    def test_indivisible_input_rejected_before_compute(self):
        with pytest.raises(ConfigError, match="divisible"):
            VilUNet(small_cfg(), (18, 16), seed=0)

    def test_wrong_forward_extents(self):
        m = VilUNet(small_cfg(), (16, 16), seed=0)
        with pytest.raises(ShapeError):
            m.encoder_forward(T.Tensor(np.zeros((1, 32, 32), dtype=np.float32)))

    def test_maxpool_downsample_variant(self):
        m = VilUNet(small_cfg(downsample="maxpool"), (16, 16), seed=0)
        img = T.Tensor(np.random.default_rng(1).uniform(size=(1, 16, 16)).astype(np.float32))
        with T.no_grad():
            out = m.forward(img)
        assert out.shape == (3, 16, 16)
        assert not any(
            n.startswith("enc.") and n.endswith("down.w") for n in m.param_dict()
        )


class TestDecoder:
    def test_channel_arithmetic(self):
        cfg = ModelConfig(levels=4, base_channels=16, embed_dim=64, vil_blocks=1,
                          num_classes=2)
        m = VilUNet(cfg, (64, 64), seed=0)
        f = T.Tensor(np.zeros((128, 8, 8), dtype=np.float32))
        e = T.Tensor(np.zeros((64, 16, 16), dtype=np.float32))
        with T.no_grad():
            out = m.decoder_level(f, e, 3)
        assert out.shape == (64, 16, 16)

    def test_concat_wiring(self, f64):
        # zero the kernel taps reading the skip half: output becomes
        # independent of the skip; restore them: it no longer is
        m = VilUNet(small_cfg(), (16, 16), seed=0)
        with T.precision("float64"):
            m2 = VilUNet(small_cfg(), (16, 16), seed=0)
        w1 = m2.dec[1][0]
        c_up = small_cfg().channels_at(2)
        rng = np.random.default_rng(2)
        f_next = T.Tensor(rng.normal(size=(c_up, 8, 8)))
        e1 = T.Tensor(rng.normal(size=(4, 16, 16)))
        e2 = T.Tensor(rng.normal(size=(4, 16, 16)))
        with T.no_grad():
            base1 = m2.decoder_level(f_next, e1, 1).data
            base2 = m2.decoder_level(f_next, e2, 1).data
        assert not np.allclose(base1, base2)
        w1.data[:, c_up:] = 0.0
        with T.no_grad():
            cut1 = m2.decoder_level(f_next, e1, 1).data
            cut2 = m2.decoder_level(f_next, e2, 1).data
        assert np.array_equal(cut1, cut2)

    def test_gradient_flows_to_both_branches(self, f64):
        m = VilUNet(small_cfg(), (16, 16), seed=0)
        rng = np.random.default_rng(3)
        f_next = T.Tensor(rng.normal(size=(8, 4, 4)), requires_grad=True)
        e_skip = T.Tensor(rng.normal(size=(4, 8, 8)), requires_grad=True)
        params = [T.Parameter(f_next.data, "f_next"), T.Parameter(e_skip.data, "e_skip")]

        def loss():
            out = m.decoder_level(params[0], params[1], 1)
            return T.tsum(T.mul(out, out))

        fd_check(loss, params, h=1e-6, tol=1e-4)


class TestFullModel:
    def test_output_shape_and_normalization(self):
        cfg = ModelConfig(levels=4, base_channels=16, embed_dim=64, vil_blocks=2,
                          num_classes=3)
        m = VilUNet(cfg, (64, 64), seed=0)
        img = T.Tensor(np.random.default_rng(0).uniform(size=(1, 64, 64)).astype(np.float32))
        with T.no_grad():
            out = m.forward(img)
        assert out.shape == (3, 64, 64)
        assert np.abs(out.data.sum(axis=0) - 1.0).max() <= 1e-6

    def test_residual_ablation_still_valid(self):
        m = VilUNet(small_cfg(vil_blocks=2), (16, 16), seed=0)
        for name, p in m.param_dict().items():
            if ".down." in name and name.startswith("vil."):
                p.data[...] = 0.0
        img = T.Tensor(np.random.default_rng(1).uniform(size=(1, 16, 16)).astype(np.float32))
        with T.no_grad():
            out = m.forward(img)
        assert np.abs(out.data.sum(axis=0) - 1.0).max() <= 1e-6
        assert np.isfinite(out.data).all()

    def test_parameter_count_monotone_in_depth_and_levels(self):
        counts_l = []
        for blocks in (3, 6, 12, 18, 24):
            cfg = ModelConfig(levels=3, base_channels=4, embed_dim=8,
                              vil_blocks=blocks, num_classes=2)
            counts_l.append(VilUNet(cfg, (16, 16), seed=0).num_parameters())
        assert all(a < b for a, b in zip(counts_l, counts_l[1:]))
        counts_x = []
        for levels in (3, 4, 5):
            cfg = ModelConfig(levels=levels, base_channels=4, embed_dim=8,
                              vil_blocks=3, num_classes=2)
            counts_x.append(VilUNet(cfg, (32, 32), seed=0).num_parameters())
        assert all(a < b for a, b in zip(counts_x, counts_x[1:]))

    def test_flops_affine_in_token_count(self):
        cfg = ModelConfig(levels=2, base_channels=4, embed_dim=8, vil_blocks=1,
                          num_classes=2)
        # token count scales with pixel count; check collinearity over sizes
        sizes = [(16, 16), (16, 32), (16, 48)]
        tokens = [s[0] * s[1] // (2 * 2 * 4) for s in sizes]
        totals = [model_flops(cfg, s)["total"] for s in sizes]
        slope01 = (totals[1] - totals[0]) / (tokens[1] - tokens[0])
        slope12 = (totals[2] - totals[1]) / (tokens[2] - tokens[1])
        assert slope01 == slope12

    def test_deterministic_forward(self):
        outs = []
        for _ in range(2):
            m = VilUNet(small_cfg(), (16, 16), seed=9)
            img = T.Tensor(np.random.default_rng(5).uniform(size=(1, 16, 16)).astype(np.float32))
            with T.no_grad():
                outs.append(m.forward(img).data.copy())
        assert np.array_equal(outs[0], outs[1])

    def test_translation_consistency_ablated(self):
        # one full token stride with the mixer contribution neutralized:
        # interior logits shift exactly
        cfg = small_cfg(levels=2, patch_size=2)  # stride 4
        m = VilUNet(cfg, (64, 64), seed=3)
        for name, p in m.param_dict().items():
            if (name.startswith("vil.") and ".down." in name) or name == "embed.pos":
                p.data[...] = 0.0
        rng = np.random.default_rng(4)
        stride = 4
        img = np.zeros((1, 64, 64), dtype=np.float32)
        img[0, 20:32, 20:32] = rng.uniform(0.2, 1.0, size=(12, 12)).astype(np.float32)
        shifted = np.roll(img, (stride, stride), axis=(1, 2))
        with T.no_grad():
            a = m.forward(T.Tensor(img), return_logits=True).data
            b = m.forward(T.Tensor(shifted), return_logits=True).data
        band = 20  # receptive-field radius in pixels, conservative
        inner = np.roll(a, (stride, stride), axis=(1, 2))[:, band:-band, band:-band]
        assert np.array_equal(inner, b[:, band:-band, band:-band])

    def test_full_model_gradients_micro(self, f64):
        cfg = ModelConfig(levels=2, base_channels=2, patch_size=2, embed_dim=4,
                          vil_blocks=1, num_classes=2)
        m = VilUNet(cfg, (8, 8), seed=1)
        rng = np.random.default_rng(6)
        # move off the zero-bias kink manifold so the loss is differentiable
        # at the tested point (see gradcheck.run_reference_gradcheck)
        for p in m.parameters():
            p.data += rng.normal(0.0, 0.02, size=p.shape)
        img = T.Tensor(rng.uniform(size=(1, 8, 8)))
        gt = one_hot(rng.integers(0, 2, size=(8, 8)), 2, dtype=np.float64)

        def loss():
            return composite_loss(m.forward(img), gt)

        fd_check(loss, m.parameters(), h=5e-6, tol=1e-4, floor=1e-5)

    def test_architecture_summary_structure(self):
        m = VilUNet(small_cfg(), (16, 16), seed=0)
        text = architecture_summary(m)
        for key in ("encoder", "mixer", "decoder", "head", "total"):
            assert key in text
        total_line = [l for l in text.splitlines() if l.strip().startswith("total")][0]
        assert str(m.num_parameters()) in total_line
