import numpy as np
import pytest

from smokeda import autodiff as ad
from smokeda import losses as lo
from smokeda.autodiff import Tensor
from smokeda.nets import ConfigError, Model, ModelVariantConfig, Variant, assemble_variant

SMALL = dict(image_size=8, feature_dim=16, adapt_dim=8)


def small_model(variant, seed=0, phi=-1.0):
    cfg = ModelVariantConfig(variant=variant, grl={"phi": phi}, **SMALL)
    return Model(cfg, seed=seed)


def batch(n=4, size=8, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(0.0, 1.0, size=(n, 3, size, size)))


class TestConfig:
    def test_string_variant_coerced(self):
        cfg = ModelVariantConfig(variant="GRL_ONLY", **SMALL)
        assert cfg.variant is Variant.GRL_ONLY

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            ModelVariantConfig(variant="GRL_EXTRA", **SMALL)

    def test_image_size_multiple_of_four(self):
        with pytest.raises(ConfigError):
            ModelVariantConfig(image_size=30)

    def test_adapt_dim_must_shrink(self):
        with pytest.raises(ConfigError):
            ModelVariantConfig(feature_dim=16, adapt_dim=16)

    def test_dict_roundtrip(self):
        cfg = ModelVariantConfig(variant="GRL_ADAPT_D", grl={"phi": -0.5}, **SMALL)
        again = ModelVariantConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()


class TestParameterSets:
    def test_baseline_has_no_domain_or_adapt(self):
        m = small_model("BASELINE")
        assert "domain.W" not in m.params
        assert "adapt.A" not in m.params

    def test_grl_only_has_domain_but_no_adapt(self):
        m = small_model("GRL_ONLY")
        assert "domain.W" in m.params
        assert "adapt.A" not in m.params

    @pytest.mark.parametrize("v", ["GRL_ADAPT_D", "GRL_ADAPT_SD", "GRL_ADAPT_CORAL"])
    def test_adapted_variants_have_adapt_layer(self, v):
        m = small_model(v)
        assert m.params["adapt.A"].shape == (16, 8)
        assert m.params["domain.W"].shape == (8, 2)

    def test_label_head_input_dim_per_variant(self):
        # D-variant classifies the unadapted features; SD/CORAL the adapted ones
        assert small_model("GRL_ADAPT_D").params["label.W"].shape == (16, 2)
        assert small_model("GRL_ADAPT_SD").params["label.W"].shape == (8, 2)

    def test_same_seed_reproduces_init(self):
        a = small_model("GRL_ADAPT_CORAL", seed=7)
        b = small_model("GRL_ADAPT_CORAL", seed=7)
        for name in a.params:
            assert np.array_equal(a.params[name].data, b.params[name].data)

    def test_different_seed_differs(self):
        a = small_model("GRL_ONLY", seed=1)
        b = small_model("GRL_ONLY", seed=2)
        assert not np.array_equal(a.params["conv1.k"].data, b.params["conv1.k"].data)


class TestForward:
    def test_output_shapes_and_simplex(self):
        m = small_model("GRL_ADAPT_CORAL")
        out = m.forward(batch())
        assert out["probs_s"].shape == (4, 2)
        assert out["probs_d"].shape == (4, 2)
        assert out["features_for_coral"].shape == (4, 8)
        assert out["f_represent"].shape == (4, 16)
        assert np.abs(out["probs_s"].data.sum(1) - 1.0).max() < 1e-12

    def test_baseline_has_no_domain_outputs(self):
        out = small_model("BASELINE").forward(batch())
        assert out["probs_d"] is None
        assert out["features_for_coral"] is None

    def test_only_coral_variant_exposes_features(self):
        for v in ("GRL_ONLY", "GRL_ADAPT_D", "GRL_ADAPT_SD"):
            assert small_model(v).forward(batch())["features_for_coral"] is None

    def test_grl_is_identity_in_forward(self):
        # phi changes no forward value, only gradients
        imgs = batch()
        out_a = small_model("GRL_ONLY", phi=-1.0).forward(imgs)
        out_b = small_model("GRL_ONLY", phi=-0.1).forward(imgs)
        assert np.array_equal(out_a["probs_d"].data, out_b["probs_d"].data)
        assert np.array_equal(out_a["probs_s"].data, out_b["probs_s"].data)

    def test_phi_override(self):
        m = small_model("GRL_ONLY", phi=-1.0)
        imgs = batch()
        m.zero_grad()
        ad.tsum(m.forward(imgs)["probs_d"]).backward()
        g_full = m.params["conv1.k"].grad.copy()
        m.zero_grad()
        ad.tsum(m.forward(imgs, phi_override=-0.5)["probs_d"]).backward()
        assert np.allclose(m.params["conv1.k"].grad, 0.5 * g_full, atol=1e-15)


class TestGradientFlow:
    def test_domain_loss_reaches_conv_with_reversed_sign(self):
        m = small_model("GRL_ONLY", phi=-1.0)
        imgs = batch()
        out = m.forward(imgs)
        lo.hinge_domain_loss(out["probs_d"], [0, 1, 0, 1], p=1).backward()
        g_rev = m.params["conv1.k"].grad.copy()

        m2 = small_model("GRL_ONLY", phi=-1.0)
        out2 = m2.forward(imgs, phi_override=1e300)  # placeholder, not used
        # recompute without reversal by applying the domain head directly
        feats = out2["f_represent"]
        probs = ad.op_softmax(
            ad.op_affine(feats, m2.params["domain.W"], m2.params["domain.b"])
        )
        m2.zero_grad()
        lo.hinge_domain_loss(probs, [0, 1, 0, 1], p=1).backward()
        assert np.allclose(g_rev, -m2.params["conv1.k"].grad, atol=1e-14)

    def test_label_loss_bypasses_grl(self):
        # the label path never crosses the reversal node, so phi is irrelevant
        imgs = batch()
        grads = []
        for phi in (-1.0, -0.25):
            m = small_model("GRL_ADAPT_SD", phi=phi)
            out = m.forward(imgs)
            m.zero_grad()
            lo.softmax_cross_entropy(out["probs_s"], [0, 1, 0, 1]).backward()
            grads.append(m.params["adapt.A"].grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_end_to_end_finite_difference_small(self):
        # below the GRL the analytic gradient deliberately differs from the
        # gradient of the forward function: the domain term arrives scaled by
        # phi. The oracle is therefore finite differences of the effective
        # objective alpha*L_s + phi*beta*L_d + gamma*L_coral.
        m = small_model("GRL_ADAPT_CORAL", seed=3)
        rng = np.random.default_rng(4)
        imgs = rng.uniform(size=(4, 3, 8, 8))
        labels = [0, 1, 1, 0]
        w = lo.LossWeights()

        def losses():
            out = m.forward(Tensor(imgs))
            L_s = lo.softmax_cross_entropy(out["probs_s"], labels)
            L_d = lo.hinge_domain_loss(out["probs_d"], [0, 0, 1, 1], w.p)
            L_c = lo.coral_loss(
                ad.gather_rows(out["features_for_coral"], [0, 1]),
                ad.gather_rows(out["features_for_coral"], [2, 3]),
            )
            return L_s, L_d, L_c

        m.zero_grad()
        lo.joint_loss(*losses(), w).backward()
        name = "adapt.b"
        got = m.params[name].grad.copy()

        theta = m.params[name].data
        phi = m.cfg.grl.phi

        def f(v):
            m.params[name].data = v
            L_s, L_d, L_c = losses()
            return float(
                w.alpha_label * L_s.data
                + phi * w.beta_domain * L_d.data
                + w.gamma_coral * L_c.data
            )

        fd = ad.finite_diff_grad(f, theta.copy())
        m.params[name].data = theta
        denom = max(np.abs(fd).max(), 1e-300)
        assert np.abs(got - fd).max() / denom < 1e-4

    def test_assemble_variant_helper(self):
        m = assemble_variant(ModelVariantConfig(variant="BASELINE", **SMALL), seed=5)
        assert m.cfg.variant is Variant.BASELINE
