import warnings

import numpy as np
import pytest

from pmwnet.models import (
    INPUT,
    DeskConfig,
    GraphError,
    HeadConfig,
    ModelGraph,
    WeightFormatError,
    WeightShapeError,
    attach_head,
    build,
    build_inception_s,
    build_inception_v3,
    build_resnet50,
    build_resnet_s,
    build_vgg16,
    build_vgg_s,
    freeze,
    load_weights,
    save_weights,
)
from pmwnet.models.builders import basic_block
from pmwnet.models.layers import BatchNorm, Conv2D, ReLU
from pmwnet.tensor import GradTape, ShapeError, backward, make_rng, ops


def batch(n=2, shape=(3, 32, 32), seed=0):
    return np.random.default_rng(seed).random((n, *shape)).astype(np.float32)


# ------------------------------------------------------------- structure


def test_vgg16_counts():
    g = build_vgg16((3, 32, 32))
    assert len(g.layers_of("conv")) == 13
    assert len(g.layers_of("dense")) == 3


def test_resnet50_has_50_weighted_layers():
    g = build_resnet50()
    assert g.weighted_layer_count() == 50
    # 4 projection shortcuts sit outside the canonical count
    assert len(g.layers_of("conv")) == 53
    assert g.shape_of("resnet50/conv5_block3/relu") == (2048, 7, 7)


def test_inception_v3_structure():
    g = build_inception_v3(include_top=False)
    assert g.shape_of(g.output) == (2048, 8, 8)
    assert len(g.layers_of("conv")) == 94
    g224 = build_inception_v3((3, 224, 224), include_top=False)
    assert g224.shape_of(g224.output) == (2048, 5, 5)


@pytest.mark.parametrize("builder", [build_vgg_s, build_resnet_s, build_inception_s])
def test_desk_forward_shape(builder):
    g = builder()
    out = g.forward(batch())
    assert out.shape == (2, 1)
    assert np.all((out > 0) & (out < 1))


def test_vgg_s_parameter_count_closed_form():
    w = 16
    convs = [(3, w), (w, w), (w, 2 * w), (2 * w, 2 * w)]
    conv_params = sum(9 * cin * cout + cout for cin, cout in convs)
    head = 2 * w * 256 + 256 + 256 + 1
    assert build_vgg_s().param_count() == conv_params + head


def test_full_scale_forward_runs():
    g = build("resnet50", (3, 64, 64))
    assert g.forward(batch(1, (3, 64, 64))).shape == (1, 1)


def test_input_shape_checked():
    with pytest.raises(ShapeError, match="expects input"):
        build_vgg_s().forward(batch(shape=(3, 16, 16)))


# ------------------------------------------------------- residual / inception


def test_zero_residual_block_is_relu_of_input():
    g = ModelGraph((4, 6, 6))
    out = basic_block(g, "blk", INPUT, 4)
    for name, p in g.parameters().items():
        if name.endswith("weight"):
            p[...] = 0
    x = np.random.default_rng(1).standard_normal((3, 4, 6, 6)).astype(np.float32)
    np.testing.assert_array_equal(g.forward(x), np.maximum(x, 0))
    assert out == g.output


def test_identity_shortcut_mismatch_fails_at_build():
    g = ModelGraph((4, 6, 6))
    with pytest.raises(GraphError, match="projection"):
        basic_block(g, "blk", INPUT, 8, project=False)


def test_inception_branch_channels_sum():
    g = build_inception_s(head=None)
    for mod in g.modules.values():
        widths = [g.shape_of(b)[0] for b in mod["branches"]]
        assert sum(widths) == g.shape_of(mod["output"])[0]


def test_inception_module_equals_concatenated_branches():
    g = build_inception_s(head=None, cfg=DeskConfig(seed=3))
    x = batch(3, seed=4)
    mod = g.modules["inception_s/mixed2"]
    vals = g.forward(x, outputs=[mod["input"], mod["output"]])
    module_in = vals[mod["input"]]
    parts = [g.subgraph(mod["input"], br).forward(module_in) for br in mod["branches"]]
    np.testing.assert_array_equal(np.concatenate(parts, axis=1), vals[mod["output"]])


# ------------------------------------------------------------------- head


def test_head_param_count():
    g = build_resnet_s(head=None)
    c = g.shape_of(g.output)[0]
    before = g.param_count()
    attach_head(g, HeadConfig(hidden_width=64))
    assert g.param_count() - before == c * 64 + 64 + 64 + 1


def test_head_layer_order():
    g = build_vgg_s()
    kinds = [g.nodes[n].layer.kind for n in g.head_nodes]
    assert kinds == ["global_avgpool", "flatten", "dense", "relu", "dropout", "dense", "sigmoid"]
    assert g.nodes["head/dropout"].layer.rate == 0.30


def test_windowed_head_pool():
    g = build_vgg_s(head=HeadConfig(pool="window", pool_window=2))
    assert g.forward(batch()).shape == (2, 1)


def test_attach_twice_fails():
    g = build_vgg_s()
    with pytest.raises(GraphError, match="already"):
        attach_head(g)


# ----------------------------------------------------------------- freeze


def _sgd_steps(g, steps=10, lr=0.1):
    x = batch(8, seed=5)
    y = np.array([0, 1] * 4)
    for step in range(steps):
        tape = GradTape(frozenset(g.frozen))
        p = g.forward(x, "train", make_rng(0, "dropout", step), tape)
        _, cache = ops.bce_loss(p, y)
        for name, grad in backward(tape, g.output, ops.bce_loss_backward(cache)).items():
            g.set_tensor(name, g.parameters()[name] - lr * grad)


def test_frozen_backbone_unchanged_head_changes():
    g = build_resnet_s()
    report = freeze(g, "backbone")
    before = {k: v.copy() for k, v in g.state().items()}
    _sgd_steps(g)
    after = g.state()
    for name in before:
        node = name.split(".")[0]
        if node in g.head_nodes:
            continue
        assert before[name].tobytes() == after[name].tobytes(), name
    assert any(before[n].tobytes() != after[n].tobytes() for n in before if n.startswith("head/"))
    assert 0 < report.fraction < 1


def test_freeze_nothing_warns():
    g = build_vgg_s()
    before = {k: v.copy() for k, v in g.state().items()}
    with pytest.warns(UserWarning, match="matched no parameters"):
        report = freeze(g, "no-such-prefix")
    assert report.matched == [] and not g.frozen
    assert all(before[k].tobytes() == v.tobytes() for k, v in g.state().items())


def test_frozen_fraction_matches_graph_walk():
    g = build_inception_s()
    report = freeze(g, lambda n: n.startswith("inception_s/mixed1"))
    walked = sum(
        len(node.layer.params) for node in g.nodes.values() if node.name.startswith("inception_s/mixed1")
    )
    total = sum(len(node.layer.params) for node in g.nodes.values())
    assert report.fraction == walked / total


def test_inference_deterministic():
    g = build_resnet_s()
    x = batch()
    assert g.forward(x).tobytes() == g.forward(x).tobytes()


def test_init_deterministic_by_seed():
    a = build_resnet_s(cfg=DeskConfig(seed=7)).state()
    b = build_resnet_s(cfg=DeskConfig(seed=7)).state()
    c = build_resnet_s(cfg=DeskConfig(seed=8)).state()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert any(a[k].tobytes() != c[k].tobytes() for k in a)


def test_init_schemes():
    g = build_vgg_s()
    w = g.parameters()["head/dense.weight"]
    assert np.abs(w).max() <= np.sqrt(6 / w.shape[0])
    out = g.parameters()["head/out.weight"]
    assert np.abs(out).max() <= np.sqrt(6 / (out.shape[0] + 1))
    assert not g.parameters()["head/out.bias"].any()


# ---------------------------------------------------------- serialization


def test_save_load_roundtrip(tmp_path):
    g = build_resnet_s(cfg=DeskConfig(seed=1))
    _sgd_steps(g, 2)
    save_weights(g, tmp_path / "w.bin")
    h = build_resnet_s(cfg=DeskConfig(seed=2))
    report = load_weights(tmp_path / "w.bin", h)
    assert report.missing == [] and report.skipped == []
    assert all(g.state()[k].tobytes() == v.tobytes() for k, v in h.state().items())


def test_partial_load_reports_missing_head(tmp_path):
    src = build_resnet_s(head=None)
    save_weights(src, tmp_path / "backbone.bin")
    dst = build_resnet_s()
    report = load_weights(tmp_path / "backbone.bin", dst, allow_partial=True)
    assert report.missing and all(n.startswith("head/") for n in report.missing)
    assert set(report.loaded) | set(report.missing) | set(report.skipped) == set(dst.state())
    with pytest.raises(WeightShapeError):
        load_weights(tmp_path / "backbone.bin", build_resnet_s())


def test_shape_mismatch_names_parameter(tmp_path):
    save_weights(build_resnet_s(cfg=DeskConfig(width=8)), tmp_path / "w.bin")
    with pytest.raises(WeightShapeError, match="resnet_s/stem/conv.weight"):
        load_weights(tmp_path / "w.bin", build_resnet_s(), allow_partial=True)


def test_corrupt_magic_rejected(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(build_vgg_s(), path)
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(WeightFormatError, match="magic"):
        load_weights(path, build_vgg_s())


def test_corrupt_payload_rejected(tmp_path):
    path = tmp_path / "w.bin"
    save_weights(build_vgg_s(), path)
    data = bytearray(path.read_bytes())
    data[100] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(WeightFormatError, match="checksum"):
        load_weights(path, build_vgg_s())


def test_weight_file_layout(tmp_path):
    g = ModelGraph((1, 3, 3))
    g.add("c", Conv2D(2, 3, bias=False))
    path = tmp_path / "w.bin"
    save_weights(g, path)
    data = path.read_bytes()
    assert data[:6] == b"PMWW1\0"
    assert int.from_bytes(data[6:10], "little") == len("c.weight")
    assert data[10:18] == b"c.weight"
    assert int.from_bytes(data[18:22], "little") == 4
    dims = [int.from_bytes(data[22 + 8 * i : 30 + 8 * i], "little") for i in range(4)]
    assert dims == [2, 1, 3, 3]
    assert data[54] == 1  # float32
    assert len(data) == 55 + 18 * 4 + 8


def test_frozen_batchnorm_keeps_running_stats():
    g = ModelGraph((2, 4, 4))
    g.add("bn", BatchNorm())
    g.add("r", ReLU())
    freeze(g, "bn")
    g.forward(batch(4, (2, 4, 4)), "train")
    assert not g.buffers()["bn.running_mean"].any()
