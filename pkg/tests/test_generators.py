"""Generator networks: architecture validation, parameter manifest and
initialization contracts, forward-pass output guarantees, and checkpoint
round-trips."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tgvdeconv.generators import (
    GeneratorArch,
    GeneratorParams,
    LatentInputs,
    image_net_forward,
    init_generator_params,
    kernel_net_forward,
    load_checkpoint,
    save_checkpoint,
)


def tiny_arch():
    return GeneratorArch(
        image_shape=(8, 8),
        kernel_size=3,
        image_channels=(2, 3, 4),
        kernel_hidden=8,
        latent_size=6,
    )


# ---------------------------------------------------------------------------
# architecture validation and description round-trip


def test_arch_rejects_non_multiple_of_four_dims():
    for shape in [(6, 8), (8, 6), (3, 4), (0, 4), (4, 2)]:
        with pytest.raises(ValueError):
            GeneratorArch(image_shape=shape, kernel_size=3)


def test_arch_rejects_bad_kernel_size():
    for k in [0, -1, 2, 4]:
        with pytest.raises(ValueError):
            GeneratorArch(image_shape=(8, 8), kernel_size=k)


def test_arch_rejects_bad_channel_tuples():
    with pytest.raises(ValueError):
        GeneratorArch(image_shape=(8, 8), kernel_size=3, image_channels=(16, 32))
    with pytest.raises(ValueError):
        GeneratorArch(image_shape=(8, 8), kernel_size=3, image_channels=(16, 0, 64))


def test_arch_rejects_nonpositive_hidden_sizes():
    with pytest.raises(ValueError):
        GeneratorArch(image_shape=(8, 8), kernel_size=3, kernel_hidden=0)
    with pytest.raises(ValueError):
        GeneratorArch(image_shape=(8, 8), kernel_size=3, latent_size=0)


def test_arch_descriptor_round_trip():
    arch = GeneratorArch(
        image_shape=(16, 12),
        kernel_size=5,
        image_channels=(4, 8, 16),
        kernel_hidden=32,
        latent_size=24,
        logstd_init=-2.5,
    )
    d = arch.describe()
    # the descriptor must survive a JSON round-trip (it is what checkpoints
    # and run manifests store)
    d = json.loads(json.dumps(d))
    assert GeneratorArch.from_descriptor(d) == arch


# ---------------------------------------------------------------------------
# latent inputs


def test_latent_draw_shapes_and_determinism():
    arch = tiny_arch()
    za = LatentInputs.draw(arch, np.random.default_rng(7))
    zb = LatentInputs.draw(arch, np.random.default_rng(7))
    assert za.z_u.shape == (8, 8)
    assert za.z_k.shape == (6,)
    assert_allclose(za.z_u, zb.z_u)
    assert_allclose(za.z_k, zb.z_k)


def test_latent_draw_scale():
    # latents are small perturbations: 0.1 * standard normal
    arch = GeneratorArch(image_shape=(64, 64), kernel_size=3)
    z = LatentInputs.draw(arch, np.random.default_rng(0))
    assert abs(float(np.std(z.z_u)) - 0.1) < 0.01
    assert float(np.max(np.abs(z.z_u))) < 0.6


# ---------------------------------------------------------------------------
# parameter container


def test_params_name_set_is_validated():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    tensors = {n: params[n] for n in params.names()}
    tensors.pop("img.mean.b")
    with pytest.raises(ValueError):
        GeneratorParams(arch, tensors)
    tensors["img.mean.b"] = params["img.mean.b"]
    tensors["bogus"] = params["img.mean.w"]
    with pytest.raises(ValueError):
        GeneratorParams(arch, tensors)


def test_params_split_by_network():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    img = params.image_tensors()
    ker = params.kernel_tensors()
    # five conv blocks of two (weight, gain, shift) triples plus four head
    # tensors on the image side; four weight/bias pairs on the kernel side
    assert len(img) == 5 * 2 * 3 + 4
    assert len(ker) == 8
    assert len(img) + len(ker) == len(params.names())
    assert params.num_params() == sum(t.size for t in img + ker)


def test_pack_unpack_round_trip():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(3))
    flat = params.pack()
    assert flat.shape == (params.num_params(),)
    other = init_generator_params(arch, np.random.default_rng(99))
    other.unpack(flat)
    for n in params.names():
        assert_allclose(other[n].value, params[n].value)
    with pytest.raises(ValueError):
        other.unpack(flat[:-1])
    with pytest.raises(ValueError):
        other.unpack(np.concatenate([flat, [0.0]]))


def test_init_is_seed_deterministic():
    arch = tiny_arch()
    a = init_generator_params(arch, np.random.default_rng(11))
    b = init_generator_params(arch, np.random.default_rng(11))
    assert np.array_equal(a.pack(), b.pack())
    c = init_generator_params(arch, np.random.default_rng(12))
    assert not np.array_equal(a.pack(), c.pack())


def test_init_kinds():
    arch = GeneratorArch(
        image_shape=(8, 8),
        kernel_size=3,
        image_channels=(2, 3, 4),
        kernel_hidden=128,
        latent_size=64,
        logstd_init=-3.0,
    )
    params = init_generator_params(arch, np.random.default_rng(5))
    # output heads start at zero so the untrained nets are flat
    for name in ["img.mean.w", "img.mean.b", "img.logstd.w",
                 "ker.mean.w", "ker.mean.b", "ker.logstd.w"]:
        assert not params[name].value.any()
    # log-std biases start at the configured floor
    assert_allclose(params["img.logstd.b"].value, -3.0)
    assert_allclose(params["ker.logstd.b"].value, -3.0)
    # normalization gains one, shifts zero
    assert_allclose(params["img.enc2a.ng"].value, 1.0)
    assert not params["img.enc2a.nb"].value.any()
    # hidden biases zero
    assert not params["ker.fc1.b"].value.any()
    # He-scaled hidden weights: sample std matches sqrt(2 / fan_in)
    w = params["ker.fc2.w"].value  # 128 x 128 gives a tight sample estimate
    assert w.shape == (128, 128)
    target = np.sqrt(2.0 / 128.0)
    assert abs(float(np.std(w)) - target) / target < 0.05
    assert abs(float(np.mean(w))) < 5.0 * target / np.sqrt(w.size)


# ---------------------------------------------------------------------------
# forward passes


def test_untrained_image_net_is_flat_half():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    z = LatentInputs.draw(arch, np.random.default_rng(1))
    mean, logstd = image_net_forward(params, arch, z.z_u)
    assert mean.shape == (8, 8)
    assert logstd.shape == (8, 8)
    # zeroed output heads: sigmoid(0) = 0.5 mean, bias-only log-std
    assert_allclose(mean.value, 0.5, rtol=0, atol=1e-15)
    assert_allclose(logstd.value, arch.logstd_init, rtol=0, atol=1e-15)


def test_untrained_kernel_net_is_uniform():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    z = LatentInputs.draw(arch, np.random.default_rng(1))
    mean_logits, logstd = kernel_net_forward(params, arch, z.z_k)
    assert mean_logits.shape == (9,)
    assert logstd.shape == (9,)
    assert_allclose(mean_logits.value, 0.0, rtol=0, atol=1e-15)
    assert_allclose(logstd.value, arch.logstd_init, rtol=0, atol=1e-15)
    # zero logits map to the uniform kernel under softmax
    e = np.exp(mean_logits.value - np.max(mean_logits.value))
    assert_allclose(e / e.sum(), np.full(9, 1.0 / 9.0))


def test_image_net_output_bounds_after_perturbation():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    # knock the heads away from zero so the outputs are non-trivial
    rng = np.random.default_rng(2)
    for name in ["img.mean.w", "img.mean.b", "img.logstd.w", "img.logstd.b"]:
        t = params[name]
        t.value = t.value + rng.standard_normal(t.shape)
    z = LatentInputs.draw(arch, np.random.default_rng(1))
    mean, logstd = image_net_forward(params, arch, z.z_u)
    assert np.all(np.isfinite(mean.value)) and np.all(np.isfinite(logstd.value))
    assert np.all(mean.value > 0.0) and np.all(mean.value < 1.0)
    assert float(np.ptp(mean.value)) > 0.0  # no longer flat


def test_forward_latent_shape_validation():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    with pytest.raises(ValueError):
        image_net_forward(params, arch, np.zeros((8, 4)))
    with pytest.raises(ValueError):
        kernel_net_forward(params, arch, np.zeros(5))


def test_forward_passes_are_differentiable():
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(0))
    z = LatentInputs.draw(arch, np.random.default_rng(1))
    from tgvdeconv import autodiff as ad

    mean, logstd = image_net_forward(params, arch, z.z_u)
    loss = ad.add(ad.sum_all(mean), ad.sum_all(logstd))
    mlog, klog = kernel_net_forward(params, arch, z.z_k)
    loss = ad.add(loss, ad.add(ad.sum_all(mlog), ad.sum_all(klog)))
    loss.backward()
    # every parameter reaches the loss: conv weights through the trunk, heads
    # directly (skip connections keep early encoder levels in the graph)
    for n in params.names():
        assert params[n].grad is not None, n
        assert np.all(np.isfinite(params[n].grad)), n


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(21))
    path = tmp_path / "gen.ckpt"
    save_checkpoint(path, params, arch)
    loaded, loaded_arch = load_checkpoint(path)
    assert loaded_arch == arch
    assert loaded.names() == params.names()
    for n in params.names():
        assert_allclose(loaded[n].value, params[n].value, rtol=0, atol=0)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"\x89PNG\r\n\x1a\n not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_wrong_format_tag(tmp_path):
    path = tmp_path / "tag.ckpt"
    path.write_bytes(json.dumps({"format": "something-else"}).encode() + b"\n")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_tampered_manifest(tmp_path):
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(21))
    path = tmp_path / "gen.ckpt"
    save_checkpoint(path, params, arch)
    raw = path.read_bytes()
    header_line, blob = raw.split(b"\n", 1)
    header = json.loads(header_line)
    header["params"][0][1] = [999, 999]
    path.write_bytes(json.dumps(header).encode() + b"\n" + blob)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_future_version(tmp_path):
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(21))
    path = tmp_path / "gen.ckpt"
    save_checkpoint(path, params, arch)
    raw = path.read_bytes()
    header_line, blob = raw.split(b"\n", 1)
    header = json.loads(header_line)
    header["version"] = 999
    path.write_bytes(json.dumps(header).encode() + b"\n" + blob)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_checkpoint_rejects_truncated_payload(tmp_path):
    arch = tiny_arch()
    params = init_generator_params(arch, np.random.default_rng(21))
    path = tmp_path / "gen.ckpt"
    save_checkpoint(path, params, arch)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_checkpoint(path)
