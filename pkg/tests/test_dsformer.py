import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsvpr.dsformer import (
    AttentionWeights,
    DsFormerConfig,
    DsFormerWeights,
    FeatureMap,
    TokenSequence,
    descriptor_head,
    dsformer_forward,
    embed_images,
    encoder_block,
    gem_pool,
    mhca_shared,
    mhsa_irpe,
    parameter_shapes,
    project_and_patchify,
    rpe_buckets,
    toy_backbone,
)
from dsvpr.errors import ConfigurationError, DimensionError, ParameterError
from dsvpr.numerics import Tensor, decode_weights, encode_weights, grad_check
from helpers import E2E_STEP, conditioned_weights
from oracles import cross_attention, self_attention_irpe

TINY = dict(num_layers=2, num_heads=2, embed_dim=4, ffn_ratio=2, rpe_clip=1, descriptor_dim=3,
            input_side=16, backbone_channels=(3, 4), stem_channels=(2, 2))


def t(x, grad=True):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


def randomized(cfg, seed=0, scale=0.5):
    """Weights with every tensor (tables, positions, LN affines included) set to generic values."""
    w = DsFormerWeights.init(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for name, p in w.items():
        if name.startswith("gem.p"):
            p.data = np.full(p.shape, 2.5)
        elif name.endswith(".g"):
            p.data = 1.0 + 0.2 * rng.normal(size=p.shape)
        else:
            p.data = scale * rng.normal(size=p.shape)
    return w


def attn(c, rng, rpe_rows=None, d=None):
    mats = [t(rng.normal(size=(c, c))) for _ in range(4)]
    tables = [t(rng.normal(size=(rpe_rows, d))) for _ in range(3)] if rpe_rows else [None] * 3
    return AttentionWeights(*mats, *tables)


# ------------------------------------------------------------------ config
def test_config_validation():
    with pytest.raises(ConfigurationError):
        DsFormerConfig(embed_dim=30, num_heads=4)
    with pytest.raises(ConfigurationError):
        DsFormerConfig(num_layers=-1)
    with pytest.raises(ConfigurationError):
        DsFormerConfig(rpe_clip=0)
    with pytest.raises(ConfigurationError):
        DsFormerConfig(input_side=40)
    cfg = DsFormerConfig(**TINY)
    assert DsFormerConfig.from_dict(cfg.to_dict()) == cfg


def test_full_scale_defaults():
    cfg = DsFormerConfig()
    assert (cfg.num_layers, cfg.num_heads, cfg.descriptor_dim, cfg.rpe_clip, cfg.gem_p_init) == (3, 16, 512, 7, 3.0)


# ---------------------------------------------------------------- backbone
def test_backbone_shapes():
    cfg = DsFormerConfig(input_side=64, backbone_channels=(32, 64))
    w = DsFormerWeights.init(cfg)
    f1, f2 = toy_backbone(t(np.zeros((3, 64, 64))), w)
    assert f1.values.shape == (32, 8, 8) and f2.values.shape == (64, 4, 4)
    assert (f2.height, f2.width) == ((f1.height + 1) // 2, (f1.width + 1) // 2)


def test_backbone_zero_image_zero_bias_gives_zero_maps():
    w = DsFormerWeights.init(DsFormerConfig(**TINY))
    f1, f2 = toy_backbone(t(np.zeros((3, 16, 16))), w)
    assert not np.any(f1.values.data) and not np.any(f2.values.data)


def test_backbone_rejects_bad_side():
    w = DsFormerWeights.init(DsFormerConfig(**TINY))
    with pytest.raises(DimensionError):
        toy_backbone(t(np.zeros((3, 24, 24))), w)


def test_backbone_kernel_gradient():
    cfg = DsFormerConfig(**TINY)
    w = randomized(cfg)
    img = t(np.random.default_rng(3).uniform(size=(3, 16, 16)), grad=False)
    params = {n: w[n] for n in w if n.startswith("backbone")}
    rep = grad_check(lambda: toy_backbone(img, w)[1].values.sum(), params)
    assert rep.max_relative_error < 1e-4, rep


# -------------------------------------------------------------- patchify
def test_patchify_single_cell():
    f = FeatureMap(t(np.array([1.0, 2.0]).reshape(2, 1, 1)))
    w_in = t([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])
    pos = t([[0.5, 0.5, 0.5]])
    z = project_and_patchify(f, w_in, pos)
    np.testing.assert_allclose(z.tokens.data, [[1.5, 2.5, 0.5]])


def test_patchify_identity_and_raster_order():
    vals = np.arange(2 * 2 * 2, dtype=np.float64).reshape(2, 2, 2)  # (C, H, W)
    z = project_and_patchify(FeatureMap(t(vals)), t(np.eye(2)), t(np.zeros((4, 2))))
    expected = [vals[:, 0, 0], vals[:, 0, 1], vals[:, 1, 0], vals[:, 1, 1]]
    np.testing.assert_array_equal(z.tokens.data, np.array(expected))
    assert z.grid == (2, 2)


def test_patchify_positional_mismatch():
    with pytest.raises(DimensionError):
        project_and_patchify(FeatureMap(t(np.zeros((2, 2, 2)))), t(np.eye(2)), t(np.zeros((3, 2))))


def test_token_sequence_grid_mismatch():
    with pytest.raises(DimensionError):
        TokenSequence(t(np.zeros((5, 4))), (2, 2))


# ------------------------------------------------------------------- IRPE
def test_rpe_buckets_clip_and_center():
    idx = rpe_buckets((3, 3), 1)
    center = 4  # (0, 0) offset in a 3x3 table
    assert np.all(np.diag(idx) == center)
    # token 0 is (0,0), token 8 is (2,2): offset (-2,-2) clips to (-1,-1) -> bucket 0
    assert idx[0, 8] == 0 and idx[8, 0] == 8


def test_mhsa_single_token():
    rng = np.random.default_rng(0)
    c = 4
    w = attn(c, rng, rpe_rows=9, d=2)
    x = rng.normal(size=(1, c))
    out = mhsa_irpe(TokenSequence(t(x), (1, 1)), w, num_heads=2, clip=1).data
    v = x @ w.wv.data
    center = w.rpe_v.data[4]
    heads = np.concatenate([v[0, :2] + center, v[0, 2:] + center])
    np.testing.assert_allclose(out[0], heads @ w.wo.data, rtol=1e-12)


def test_mhsa_hand_oracle_two_tokens():
    rng = np.random.default_rng(42)
    c = 3
    w = attn(c, rng, rpe_rows=9, d=3)
    x = rng.normal(size=(2, c))
    out = mhsa_irpe(TokenSequence(t(x), (1, 2)), w, num_heads=1, clip=1).data
    ref = self_attention_irpe(
        x.tolist(), [(0, 0), (0, 1)],
        *(m.data.tolist() for m in (w.wq, w.wk, w.wv, w.wo, w.rpe_q, w.rpe_k, w.rpe_v)), clip=1,
    )
    np.testing.assert_allclose(out, ref, atol=1e-10, rtol=0)


def test_mhsa_without_irpe_ignores_tables():
    rng = np.random.default_rng(1)
    w = attn(4, rng, rpe_rows=9, d=2)
    z = TokenSequence(t(rng.normal(size=(4, 4))), (2, 2))
    stripped = AttentionWeights(w.wq, w.wk, w.wv, w.wo)
    a = mhsa_irpe(z, w, 2, use_irpe=False, clip=1).data
    b = mhsa_irpe(z, stripped, 2, use_irpe=True, clip=1).data
    np.testing.assert_array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_mhsa_permutation_equivariant_without_positions(n, seed):
    rng = np.random.default_rng(seed)
    w = attn(4, rng)
    x = rng.normal(size=(n, 4))
    perm = rng.permutation(n)
    out = mhsa_irpe(TokenSequence(t(x), (1, n)), w, 2, use_irpe=False).data
    out_p = mhsa_irpe(TokenSequence(t(x[perm]), (1, n)), w, 2, use_irpe=False).data
    np.testing.assert_allclose(out[perm], out_p, atol=1e-10)


def test_mhsa_gradient_with_tables():
    rng = np.random.default_rng(5)
    w = attn(4, rng, rpe_rows=9, d=2)
    x = t(rng.normal(size=(2, 6, 4)))  # batch of two 2x3 grids
    probe = rng.normal(size=(2, 6, 4))
    params = {"x": x, "wq": w.wq, "wk": w.wk, "wv": w.wv, "wo": w.wo, "tq": w.rpe_q, "tk": w.rpe_k, "tv": w.rpe_v}
    rep = grad_check(lambda: (mhsa_irpe(TokenSequence(x, (2, 3)), w, 2, clip=1) * t(probe, grad=False)).sum(), params)
    assert rep.max_relative_error < 1e-6, rep


# -------------------------------------------------------------- cross-attn
def test_mhca_hand_oracle():
    rng = np.random.default_rng(7)
    c = 3
    w = attn(c, rng)
    x1, x2 = rng.normal(size=(2, c)), rng.normal(size=(2, c))
    o1, o2 = mhca_shared(TokenSequence(t(x1), (1, 2)), TokenSequence(t(x2), (2, 1)), w, num_heads=1)
    mats = [m.data.tolist() for m in (w.wq, w.wk, w.wv, w.wo)]
    np.testing.assert_allclose(o1.data, cross_attention(x1.tolist(), x2.tolist(), *mats), atol=1e-10, rtol=0)
    np.testing.assert_allclose(o2.data, cross_attention(x2.tolist(), x1.tolist(), *mats), atol=1e-10, rtol=0)


def test_mhca_symmetry_and_shapes():
    rng = np.random.default_rng(8)
    w = attn(4, rng)
    x = rng.normal(size=(3, 4))
    a, b = mhca_shared(TokenSequence(t(x), (1, 3)), TokenSequence(t(x.copy()), (1, 3)), w, 2)
    np.testing.assert_array_equal(a.data, b.data)
    z1 = TokenSequence(t(rng.normal(size=(1, 4))), (1, 1))
    z2 = TokenSequence(t(rng.normal(size=(3, 4))), (1, 3))
    o1, o2 = mhca_shared(z1, z2, w, 2)
    assert o1.shape == (1, 4) and o2.shape == (3, 4)
    s2, s1 = mhca_shared(z2, z1, w, 2)
    assert np.array_equal(s1.data, o1.data) and np.array_equal(s2.data, o2.data)


def test_mhca_dim_mismatch():
    rng = np.random.default_rng(9)
    with pytest.raises(DimensionError):
        mhca_shared(TokenSequence(t(np.zeros((1, 4))), (1, 1)), TokenSequence(t(np.zeros((1, 2))), (1, 1)), attn(4, rng), 2)


# ----------------------------------------------------------- encoder block
def _streams(cfg, rng):
    (h1, w1), (h2, w2) = cfg.grids
    c = cfg.embed_dim
    return (TokenSequence(t(rng.normal(size=(h1 * w1, c))), (h1, w1)),
            TokenSequence(t(rng.normal(size=(h2 * w2, c))), (h2, w2)))


def test_encoder_block_bypass_is_identity():
    cfg = DsFormerConfig(**{**TINY, "use_self_encoder": False, "use_cross_encoder": False})
    w = DsFormerWeights.init(cfg)
    z1, z2 = _streams(cfg, np.random.default_rng(0))
    y1, y2 = encoder_block(z1, z2, w, 0, cfg)
    assert np.array_equal(y1.tokens.data, z1.tokens.data) and np.array_equal(y2.tokens.data, z2.tokens.data)


def test_encoder_block_zero_branches_pass_residual():
    cfg = DsFormerConfig(**TINY)
    w = DsFormerWeights.init(cfg)
    for name, p in w.items():
        if name.startswith("layer."):
            p.data = np.zeros(p.shape)
    z1, z2 = _streams(cfg, np.random.default_rng(1))
    y1, y2 = encoder_block(z1, z2, w, 0, cfg)
    np.testing.assert_array_equal(y1.tokens.data, z1.tokens.data)
    np.testing.assert_array_equal(y2.tokens.data, z2.tokens.data)


def test_encoder_block_gradient():
    cfg = DsFormerConfig(**TINY)
    w = randomized(cfg, seed=3)
    z1, z2 = _streams(cfg, np.random.default_rng(2))
    params = {n: p for n, p in w.items() if n.startswith("layer.0.")}
    params.update(z1=z1.tokens, z2=z2.tokens)

    def f():
        a, b = encoder_block(z1, z2, w, 0, cfg)
        return (a.tokens**2.0).sum() + (b.tokens**3.0).sum()

    rep = grad_check(f, params)
    assert rep.max_relative_error < 1e-4, rep


def test_cross_encoder_weights_appear_once_per_layer():
    cfg = DsFormerConfig(num_layers=3, embed_dim=32, num_heads=4)
    shapes = parameter_shapes(cfg)
    c, hid = cfg.embed_dim, cfg.ffn_ratio * cfg.embed_dim
    one_direction = 4 * c * c + 4 * c + c * hid + hid + hid * c + c
    w = DsFormerWeights.init(cfg)
    for layer in range(3):
        assert w.num_parameters(f"layer.{layer}.cross.") == one_direction
        names = [n for n in shapes if n.startswith(f"layer.{layer}.cross.")]
        assert sorted(n.rsplit(".", 1)[-1] for n in names if n.split(".")[-1].startswith("w")) == ["w1", "w2", "wk", "wo", "wq", "wv"]


def test_weight_names_unique_and_container_round_trip():
    cfg = DsFormerConfig(**TINY)
    w = randomized(cfg)
    arrays = {k: v.astype(np.float32) for k, v in w.to_arrays().items()}
    back = decode_weights(encode_weights(arrays))
    assert list(back) == list(parameter_shapes(cfg))
    w2 = DsFormerWeights.from_arrays(cfg, back)
    for n in w:
        assert w2[n].data.astype(np.float32).tobytes() == arrays[n].tobytes()


def test_ablation_configs_drop_their_tensors():
    names = lambda **kw: set(parameter_shapes(DsFormerConfig(**{**TINY, **kw})))
    assert not any(".rpe." in n for n in names(use_irpe=False))
    assert not any(".self." in n for n in names(use_self_encoder=False))
    assert not any(".cross." in n for n in names(use_cross_encoder=False))
    assert not any(n.startswith("layer.") for n in names(num_layers=0))


# -------------------------------------------------------------------- GeM
def test_gem_p1_is_mean_and_constant_case():
    x = np.random.default_rng(0).uniform(0.1, 3.0, size=(7, 5))
    np.testing.assert_allclose(gem_pool(t(x), t([1.0])).data, x.mean(axis=0), rtol=1e-12)
    for p in (0.5, 1.0, 3.0, 17.0):
        np.testing.assert_allclose(gem_pool(t(np.full((4, 3), 2.5)), t([p])).data, 2.5, rtol=1e-12)


def test_gem_high_p_approaches_max():
    x = np.array([[1.0], [2.0], [3.0]])
    out = gem_pool(t(x), t([100.0])).data[0]
    # (1/3 (1 + 2^100 + 3^100))^(1/100) evaluated directly
    ref = ((1 + 2.0**100 + 3.0**100) / 3.0) ** 0.01
    assert abs(out - ref) < 1e-10 * ref and abs(out - 3.0) / 3.0 < 0.02


def test_gem_clamps_negative_inputs():
    out = gem_pool(t([[-5.0], [-1.0]]), t([3.0])).data
    np.testing.assert_allclose(out, 1e-6, rtol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gem_monotone_in_p(seed):
    x = np.random.default_rng(seed).uniform(0.0, 5.0, size=(6, 4))
    outs = [gem_pool(t(x, grad=False), t([p], grad=False)).data for p in (1.0, 2.0, 3.0, 5.0)]
    for lo, hi in zip(outs, outs[1:]):
        assert np.all(hi >= lo - 1e-12)


def test_gem_rejects_nonpositive_p():
    with pytest.raises(ParameterError):
        gem_pool(t(np.ones((2, 2))), t([0.0]))


def test_gem_gradient_includes_exponent():
    rng = np.random.default_rng(4)
    x, p = t(rng.uniform(0.2, 2.0, size=(2, 5, 3))), t([2.7])
    probe = t([1.0, -2.0, 0.5], grad=False)
    rep = grad_check(lambda: (gem_pool(x, p) * probe).sum(), {"x": x, "p": p})
    assert rep.max_relative_error < 1e-6


# ------------------------------------------------------------------- head
def test_descriptor_head_properties():
    rng = np.random.default_rng(5)
    g1, g2 = rng.normal(size=4), rng.normal(size=4)
    w = rng.normal(size=(8, 6))
    d = descriptor_head(t(g1), t(g2), t(w)).data
    assert abs(np.linalg.norm(d) - 1.0) < 1e-12
    d_scaled = descriptor_head(t(3.7 * g1), t(3.7 * g2), t(w)).data
    np.testing.assert_allclose(d, d_scaled, atol=1e-14)
    w_sel = w.copy()
    w_sel[4:] = 0.0
    a = descriptor_head(t(g1), t(g2), t(w_sel)).data
    b = descriptor_head(t(g1), t(rng.normal(size=4)), t(w_sel)).data
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- forward
def test_forward_zero_layers_and_desk_config():
    zero = DsFormerConfig(**{**TINY, "num_layers": 0})
    d0 = dsformer_forward(np.random.default_rng(0).uniform(size=(3, 16, 16)), DsFormerWeights.init(zero)).data
    assert d0.shape == (3,) and abs(np.linalg.norm(d0) - 1) < 1e-6
    desk = DsFormerConfig(num_layers=3, num_heads=4, embed_dim=32, input_side=64)
    d = dsformer_forward(np.random.default_rng(1).uniform(size=(3, 64, 64)), DsFormerWeights.init(desk)).data
    assert d.shape == (512,) and abs(np.linalg.norm(d) - 1) < 1e-6


def test_forward_batch_equals_single():
    cfg = DsFormerConfig(**TINY)
    w = randomized(cfg)
    imgs = np.random.default_rng(2).uniform(size=(3, 3, 16, 16))
    batch = dsformer_forward(imgs, w).data
    for i in range(3):
        np.testing.assert_allclose(batch[i], dsformer_forward(imgs[i], w).data, atol=1e-13)


def test_forward_rejects_foreign_config():
    w = DsFormerWeights.init(DsFormerConfig(**TINY))
    with pytest.raises(ConfigurationError):
        dsformer_forward(np.zeros((3, 16, 16)), w, DsFormerConfig(**{**TINY, "num_layers": 1}))


def test_end_to_end_gradient_reaches_every_parameter():
    # 32 px: a 16 px input leaves one stride-16 token, where GeM is the identity in p
    cfg = DsFormerConfig(**{**TINY, "input_side": 32})
    w = conditioned_weights(cfg, seed=2)
    img = t(np.random.default_rng(3).uniform(size=(3, 32, 32)), grad=False)
    probe = t(np.random.default_rng(4).normal(size=3), grad=False)
    rep = grad_check(lambda: (dsformer_forward(img, w) * probe).sum(), dict(w.items()), h=E2E_STEP)
    assert rep.max_relative_error < 1e-4, rep
    dead = [n for n, p in w.items() if p.grad is None or not np.any(p.grad)]
    assert dead == []


def test_embed_images_deterministic_unit_descriptors():
    cfg = DsFormerConfig(**TINY)
    w = DsFormerWeights.init(cfg, dtype=np.float32)
    imgs = np.random.default_rng(3).uniform(size=(5, 3, 16, 16)).astype(np.float32)
    a = embed_images(imgs, w, ids=list("abcde"), batch_size=2)
    b = embed_images(imgs, w, ids=list("abcde"), batch_size=2)
    assert [d.id for d in a] == list("abcde")
    for x, y in zip(a, b):
        assert np.array_equal(x.values, y.values) and abs(np.linalg.norm(x.values) - 1) < 1e-6
