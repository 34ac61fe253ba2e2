import json

import numpy as np
import pytest

from convtran.autodiff import Tensor, count_parameters
from convtran.autodiff import functional as F
from convtran.checkpoint import load_container, save_container
from convtran.data import find_uea_split, parse_ts
from convtran.harness import model_parameter_delta
from convtran.model import ConvTranNet, ModelConfig, forward, load_checkpoint, save_checkpoint

from conftest import finite_diff, rel_error


def small_config(**kw):
    base = dict(d_x=2, length=8, classes=2, temporal_filters=4, kernel_len=3, d_model=8, d_z=8, heads=2,
                dropout=0.0, dtype="float64")
    base.update(kw)
    return ModelConfig(**base)


def test_defaults_match_reference_hyperparameters():
    cfg = ModelConfig(d_x=3, length=20, classes=4)
    assert (cfg.temporal_filters, cfg.kernel_len, cfg.d_model, cfg.d_z, cfg.heads, cfg.ffn_ratio) == (64, 8, 64, 64, 8, 4)
    assert (cfg.abs_encoding, cfg.rel_encoding, cfg.pooling, cfg.blocks) == ("tape", "erpe", "gap_only", 1)


@pytest.mark.parametrize("kw", [{"heads": 3}, {"abs_encoding": "rope"}, {"rel_encoding": "alibi"},
                                {"d_model": 7}, {"dropout": 1.0}, {"length": 0}, {"pooling": "sum"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        small_config(**kw)


# -- embedding ---------------------------------------------------------------------


def test_embed_zero_input_is_zero():
    net = ConvTranNet(small_config())
    for name, p in net.named_parameters():
        if name.endswith(".bias") and "conv" in name:
            p.data[:] = 0.0
    for training in (True, False):
        net.train(training)
        out = net.embed(Tensor(np.zeros((3, 2, 8))))
        assert out.shape == (3, 8, 8)
        assert np.all(out.data == 0.0)


def _identity_embedder(kernel_len, tap):
    net = ConvTranNet(small_config(d_x=1, temporal_filters=1, kernel_len=kernel_len, d_model=2, d_z=2, heads=1,
                                   conv_norm=False, conv_activation="none", abs_encoding="none"))
    w = np.zeros((1, 1, kernel_len))
    w[0, 0, tap] = 1.0
    emb = net.embedding
    emb.temporal_conv.weight.data = w
    emb.temporal_conv.bias.data[:] = 0.0
    emb.spatial_conv.weight.data = np.array([[1.0, 0.0]])
    emb.spatial_conv.bias.data[:] = 0.0
    return net


def test_embed_identity_kernel_reproduces_series():
    x = np.random.default_rng(0).normal(size=(1, 1, 8))
    for k in (1, 3, 8):
        left = (k - 1) // 2  # centre tap under same padding
        out = _identity_embedder(k, left).embed(Tensor(x)).data
        np.testing.assert_array_equal(out[0, :, 0], x[0, 0])
        assert np.all(out[0, :, 1] == 0.0)


def test_embed_last_tap_shifts_by_right_padding():
    # a [0, ..., 0, 1] kernel reads k - 1 - left steps ahead under same padding
    x = np.arange(1.0, 9.0).reshape(1, 1, 8)
    out = _identity_embedder(8, 7).embed(Tensor(x)).data[0, :, 0]
    np.testing.assert_array_equal(out, [5, 6, 7, 8, 0, 0, 0, 0])


@pytest.mark.parametrize("d_x,length", [(1, 5), (3, 8), (6, 17)])
def test_embed_shape_grid(d_x, length):
    net = ConvTranNet(small_config(d_x=d_x, length=length))
    assert net.embed(Tensor(np.ones((2, d_x, length)))).shape == (2, length, 8)


def test_embed_channel_mismatch():
    net = ConvTranNet(small_config())
    with pytest.raises(ValueError):
        net(np.zeros((2, 3, 8)))


# -- forward --------------------------------------------------------------------------


@pytest.mark.parametrize("abs_enc", ["none", "vanilla", "learned", "tape"])
@pytest.mark.parametrize("rel_enc", ["none", "shaw", "vector", "erpe"])
def test_forward_shapes_and_probabilities(abs_enc, rel_enc):
    net = ConvTranNet(small_config(abs_encoding=abs_enc, rel_encoding=rel_enc, classes=3)).eval()
    x = np.random.default_rng(1).normal(size=(4, 2, 8))
    logits = forward(x, net)
    assert logits.shape == (4, 3)
    single = net(x[0])
    assert single.shape == (3,)
    np.testing.assert_allclose(single.data, logits.data[0], rtol=1e-12)
    np.testing.assert_allclose(net.predict_proba(x).sum(axis=1), 1.0, atol=1e-12)


def test_eval_forward_is_bit_reproducible():
    net = ConvTranNet(small_config(dropout=0.1, dtype="float32")).eval()
    x = np.random.default_rng(2).normal(size=(5, 2, 8))
    a, b = net(x).data, net(x).data
    assert a.tobytes() == b.tobytes()
    again = ConvTranNet(small_config(dropout=0.1, dtype="float32")).eval()
    assert again(x).data.tobytes() == a.tobytes()


def test_nan_input_aborts_with_diagnostics():
    net = ConvTranNet(small_config()).eval()
    x = np.zeros((2, 2, 8))
    x[0, 0, 3] = np.nan
    with pytest.raises(FloatingPointError, match="input contains NaN"):
        net(x)
    net.classifier.weight.data[0, 0] = np.inf
    with pytest.raises(FloatingPointError, match="classifier.weight"):
        net(np.zeros((2, 2, 8)))


def test_untrained_net_is_near_chance_on_basicmotions():
    # an untrained net collapses onto one or two classes, so single seeds scatter
    # (0.0 to 0.45 over seeds 0-11); chance holds for the default seed and on average
    test = parse_ts(find_uea_split("BasicMotions", "TEST"))
    accs = []
    for seed in range(12):
        net = ConvTranNet(ModelConfig(d_x=test.d_x, length=test.length, classes=test.n_classes, seed=seed)).eval()
        accs.append(float((net.predict(test.samples) == test.labels).mean()))
    assert abs(accs[0] - 0.25) <= 0.15, accs
    assert abs(np.mean(accs) - 0.25) <= 0.15, accs


# -- parameter accounting ---------------------------------------------------------------


@pytest.mark.parametrize("method,expected", [
    ("eRPE", 8 * 59),
    ("tAPE", 0),
    ("VanillaAPE", 0),
    ("Learned", 30 * 64),
    ("Shaw", 59 * 64),
    ("Vector", 30 * 64),
])
def test_parameter_deltas(method, expected):
    assert model_parameter_delta(method, 30, 64, heads=8) == expected


def test_count_parameters_by_hand():
    cfg = small_config(abs_encoding="none", rel_encoding="none")
    m, k, d, dx, c = 4, 3, 8, 2, 2
    expected = (
        m * k + m + 2 * m  # temporal conv + BN
        + dx * m * d + d + 2 * d  # spatial conv + BN
        + d * 3 * d + d * d  # fused qkv, output projection
        + 2 * d + 2 * d  # two layer norms
        + d * 4 * d + 4 * d + 4 * d * d + d  # FFN
        + d * c + c  # classifier
    )
    assert count_parameters(ConvTranNet(cfg)) == expected


# -- residual identity -------------------------------------------------------------------


def test_zeroed_block_is_identity_up_to_normalization():
    net = ConvTranNet(small_config(rel_encoding="erpe")).eval()
    block = net.blocks[0]
    block.attention.out.weight.data[:] = 0.0
    block.ffn_out.weight.data[:] = 0.0
    block.ffn_out.bias.data[:] = 0.0
    x = np.random.default_rng(3).normal(size=(3, 2, 8))
    h = net.embed(Tensor(x)).data + net.position_table.array
    ln = (h - h.mean(-1, keepdims=True)) / np.sqrt(h.var(-1, keepdims=True) + 1e-5)
    expected = net.head(Tensor(ln)).data
    # LN(LN(h)) differs from LN(h) by a factor sqrt(1 + eps / var) with eps = 1e-5
    np.testing.assert_allclose(net(x).data, expected, rtol=1e-4, atol=1e-5)
    # exact when the second norm is applied as well
    exact = net.head(block.norm2(block.norm1(Tensor(h)))).data
    np.testing.assert_array_equal(net(x).data, exact)


# -- end-to-end gradient -----------------------------------------------------------------


@pytest.mark.parametrize("abs_enc,rel_enc,pooling", [
    ("tape", "erpe", "gap_only"),
    ("learned", "shaw", "max_plus_gap"),
    ("vanilla", "vector", "gap_only"),
])
def test_end_to_end_gradients(abs_enc, rel_enc, pooling):
    net = ConvTranNet(small_config(abs_encoding=abs_enc, rel_encoding=rel_enc, pooling=pooling, seed=4))
    rng = np.random.default_rng(4)
    for name, p in net.named_parameters():
        if name.startswith("blocks.0.attention.relative") or name.startswith("position_table"):
            p.data = rng.normal(scale=0.3, size=p.shape)
    x = rng.normal(size=(4, 2, 8))
    y = np.array([0, 1, 1, 0])

    def loss():
        return F.cross_entropy(net(x), y).item()

    net.zero_grad()
    F.cross_entropy(net(x), y).backward()
    for name, p in net.named_parameters():
        # conv biases feeding batch norm have an exactly-zero gradient; the
        # floor stops finite-difference noise (~1e-10) from reading as error
        err = rel_error(p.grad, finite_diff(loss, p.data), floor=1e-6)
        assert err < 1e-3, f"{name}: {err:.2e}"


# -- checkpoint ---------------------------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = ConvTranNet(small_config(abs_encoding="learned", rel_encoding="shaw", dtype="float32", seed=9))
    net.train()
    net(np.random.default_rng(0).normal(size=(4, 2, 8)))  # move BN running stats off their init
    path = tmp_path / "m.npz"
    save_checkpoint(path, net, extra={"note": "x"})
    back = load_checkpoint(path)
    assert back.config == net.config
    a, b = net.state_dict(), back.state_dict()
    assert a.keys() == b.keys()
    for name in a:
        assert a[name].dtype == b[name].dtype and a[name].tobytes() == b[name].tobytes(), name
    x = np.random.default_rng(1).normal(size=(3, 2, 8))
    assert net.eval()(x).data.tobytes() == back.eval()(x).data.tobytes()


def test_container_rejects_other_versions(tmp_path):
    path = tmp_path / "c.npz"
    save_container(path, "model", {"a": 1}, {"w": np.arange(3)})
    meta, arrays = load_container(path, kind="model")
    assert meta == {"a": 1} and arrays["w"].tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        load_container(path, kind="dataset")
    header = json.dumps({"format": "convtran-container", "version": 99, "kind": "model", "meta": {}})
    np.savez(tmp_path / "v.npz", __header__=np.array(header))
    with pytest.raises(ValueError, match="version"):
        load_container(tmp_path / "v.npz")
