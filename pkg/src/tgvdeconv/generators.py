"""The two untrained-prior generator networks and their parameter handling.

The image network is a small three-level encoder-decoder with skip
connections mapping a fixed single-channel latent to a per-pixel Gaussian
(sigmoid-bounded mean in (0,1), free log-std).  The kernel network is a
two-hidden-layer fully connected net mapping a fixed latent vector to a
per-entry Gaussian over kernel logits.  Both output heads start at zero
weights, so before any training the image mean is exactly 0.5 everywhere and
every log-std equals ``logstd_init``.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

CHECKPOINT_MAGIC = "tgvdeconv-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GeneratorArch:
    """Shapes of both networks; everything downstream sizes itself off this."""

    image_shape: tuple
    kernel_size: int
    image_channels: tuple = (16, 32, 64)
    kernel_hidden: int = 256
    latent_size: int = 64
    logstd_init: float = -3.0

    def __post_init__(self):
        h, w = self.image_shape
        if h % 4 or w % 4 or h < 4 or w < 4:
            raise ValueError(f"image dimensions must be multiples of 4, got {(h, w)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if len(self.image_channels) != 3 or any(c < 1 for c in self.image_channels):
            raise ValueError(f"image_channels must be three positive widths, got {self.image_channels}")
        if self.kernel_hidden < 1 or self.latent_size < 1:
            raise ValueError("kernel_hidden and latent_size must be positive")

    def describe(self):
        return {
            "image_shape": list(self.image_shape),
            "kernel_size": self.kernel_size,
            "image_channels": list(self.image_channels),
            "kernel_hidden": self.kernel_hidden,
            "latent_size": self.latent_size,
            "logstd_init": self.logstd_init,
        }

    @staticmethod
    def from_descriptor(d):
        return GeneratorArch(
            image_shape=tuple(d["image_shape"]),
            kernel_size=int(d["kernel_size"]),
            image_channels=tuple(d["image_channels"]),
            kernel_hidden=int(d["kernel_hidden"]),
            latent_size=int(d["latent_size"]),
            logstd_init=float(d["logstd_init"]),
        )


@dataclass(frozen=True)
class LatentInputs:
    """Fixed network inputs, drawn once per run and never updated."""

    z_u: np.ndarray
    z_k: np.ndarray

    @staticmethod
    def draw(arch, rng):
        h, w = arch.image_shape
        z_u = 0.1 * rng.standard_normal((h, w))
        z_k = 0.1 * rng.standard_normal(arch.latent_size)
        return LatentInputs(z_u=z_u, z_k=z_k)


def _spec_list(arch):
    """Ordered (name, shape, init) parameter manifest for both networks.
    Every encoder/decoder level is a pair of 3x3 convolutions, each followed
    by a per-channel normalization (gain ``.ng``, shift ``.nb``) and SiLU."""
    c1, c2, c3 = arch.image_channels
    kk = arch.kernel_size * arch.kernel_size
    hid, lat = arch.kernel_hidden, arch.latent_size
    specs = []

    def block(name, c_in, c_out):
        for tag, cin in (("a", c_in), ("b", c_out)):
            specs.append((f"img.{name}{tag}.w", (c_out, cin * 9), "he"))
            specs.append((f"img.{name}{tag}.ng", (c_out,), "one"))
            specs.append((f"img.{name}{tag}.nb", (c_out,), "zero"))

    block("enc1", 1, c1)
    block("enc2", c1, c2)
    block("enc3", c2, c3)
    block("dec2", c3 + c2, c2)
    block("dec1", c2 + c1, c1)
    specs += [
        ("img.mean.w", (1, c1 * 9), "zero"), ("img.mean.b", (1,), "zero"),
        ("img.logstd.w", (1, c1 * 9), "zero"), ("img.logstd.b", (1,), "logstd"),
        ("ker.fc1.w", (hid, lat), "he"), ("ker.fc1.b", (hid,), "zero"),
        ("ker.fc2.w", (hid, hid), "he"), ("ker.fc2.b", (hid,), "zero"),
        ("ker.mean.w", (kk, hid), "zero"), ("ker.mean.b", (kk,), "zero"),
        ("ker.logstd.w", (kk, hid), "zero"), ("ker.logstd.b", (kk,), "logstd"),
    ]
    return specs


class GeneratorParams:
    """Named parameter tensors for both networks, in a fixed order."""

    def __init__(self, arch, tensors):
        self.arch = arch
        self._names = [name for name, _, _ in _spec_list(arch)]
        if set(tensors) != set(self._names):
            raise ValueError("parameter names do not match the architecture")
        self._tensors = {name: tensors[name] for name in self._names}

    def __getitem__(self, name):
        return self._tensors[name]

    def names(self):
        return list(self._names)

    def tensors(self):
        return [self._tensors[n] for n in self._names]

    def image_tensors(self):
        return [self._tensors[n] for n in self._names if n.startswith("img.")]

    def kernel_tensors(self):
        return [self._tensors[n] for n in self._names if n.startswith("ker.")]

    def pack(self):
        return np.concatenate([self._tensors[n].value.ravel() for n in self._names])

    def unpack(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for n in self._names:
            t = self._tensors[n]
            t.value = flat[pos:pos + t.size].reshape(t.shape).copy()
            pos += t.size
        if pos != flat.size:
            raise ValueError(f"flat parameter vector has {flat.size} entries, expected {pos}")

    def num_params(self):
        return sum(t.size for t in self._tensors.values())


def init_generator_params(arch, rng):
    """Draw fresh parameters: hidden weights He-scaled normal, biases zero,
    output heads zeroed with the log-std bias at ``arch.logstd_init``.

    Draw order is the manifest order (image network first), so a given seed
    pins every parameter.
    """
    tensors = {}
    for name, shape, kind in _spec_list(arch):
        if kind == "he":
            fan_in = shape[1]
            val = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif kind == "zero":
            val = np.zeros(shape)
        elif kind == "one":
            val = np.ones(shape)
        else:  # logstd bias
            val = np.full(shape, arch.logstd_init)
        tensors[name] = ad.leaf(val, requires_grad=True)
    return GeneratorParams(arch, tensors)


def image_net_forward(params, arch, z_u):
    """Run the image network on latent ``z_u`` ((H, W) array or Tensor).

    Returns ``(mean, logstd)`` Tensors of shape (H, W); the mean is passed
    through a sigmoid so it lies strictly inside (0, 1).
    """
    h, w = arch.image_shape
    x = z_u if isinstance(z_u, ad.Tensor) else ad.leaf(z_u)
    if x.shape != (h, w):
        raise ValueError(f"z_u shape {x.shape} does not match image_shape {(h, w)}")
    x = ad.reshape(x, (1, h, w))
    p = params

    def block(name, t):
        for tag in ("a", "b"):
            t = ad.conv3x3(t, p[f"img.{name}{tag}.w"])
            t = ad.silu(ad.channel_norm(t, p[f"img.{name}{tag}.ng"], p[f"img.{name}{tag}.nb"]))
        return t

    e1 = block("enc1", x)
    e2 = block("enc2", ad.avgpool2(e1))
    e3 = block("enc3", ad.avgpool2(e2))
    d2 = block("dec2", ad.concat_c(ad.upsample2(e3), e2))
    d1 = block("dec1", ad.concat_c(ad.upsample2(d2), e1))
    mean = ad.reshape(ad.sigmoid(ad.conv3x3(d1, p["img.mean.w"], p["img.mean.b"])), (h, w))
    logstd = ad.reshape(ad.conv3x3(d1, p["img.logstd.w"], p["img.logstd.b"]), (h, w))
    return mean, logstd


def kernel_net_forward(params, arch, z_k):
    """Run the kernel network on latent ``z_k`` (length-``latent_size``).

    Returns ``(mean_logits, logstd)`` Tensors of length kernel_size**2; the
    distribution lives in logit space and is mapped to the simplex by softmax
    only when sampling or reading out the kernel.
    """
    x = z_k if isinstance(z_k, ad.Tensor) else ad.leaf(z_k)
    if x.shape != (arch.latent_size,):
        raise ValueError(f"z_k shape {x.shape} does not match latent_size {arch.latent_size}")
    p = params
    h1 = ad.silu(ad.affine(p["ker.fc1.w"], x, p["ker.fc1.b"]))
    h2 = ad.silu(ad.affine(p["ker.fc2.w"], h1, p["ker.fc2.b"]))
    mean_logits = ad.affine(p["ker.mean.w"], h2, p["ker.mean.b"])
    logstd = ad.affine(p["ker.logstd.w"], h2, p["ker.logstd.b"])
    return mean_logits, logstd


def save_checkpoint(path, params, arch):
    """Write a checkpoint: one JSON header line (format, version, architecture
    descriptor, parameter manifest) followed by the packed little-endian
    float64 parameter vector."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "arch": arch.describe(),
        "params": [[n, list(params[n].shape)] for n in params.names()],
    }
    flat = params.pack()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`; returns
    ``(params, arch)`` or raises ValueError on malformed input."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"not a checkpoint file: {exc}") from exc
    if header.get("format") != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file: bad format tag")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
    arch = GeneratorArch.from_descriptor(header["arch"])
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    rng = np.random.default_rng(0)
    params = init_generator_params(arch, rng)
    expected = [[n, list(params[n].shape)] for n in params.names()]
    if header["params"] != expected:
        raise ValueError("checkpoint parameter manifest does not match its architecture")
    params.unpack(flat)
    return params, arch
