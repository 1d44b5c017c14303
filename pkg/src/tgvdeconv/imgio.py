"""File formats: 8-bit grayscale PNG/PGM for interchange, headerless raw
little-endian float64 (row-major) as the lossless numeric sidecar, and plain
text matrices for kernels."""

import hashlib

import numpy as np
from PIL import Image as PilImage

from .core import Image, Kernel


def load_image(path):
    """Read PNG/PGM (any mode Pillow understands) as a luminance Image in
    [0, 1].  Color inputs are converted to luminance before scaling."""
    with PilImage.open(path) as im:
        if im.mode == "I;16":
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return Image(arr)


def save_image_png(path, image):
    """Quantize to 8 bits (round-half-up via rint after clipping) and write
    grayscale PNG.  Round-trip error is at most 1/510 per pixel."""
    arr = image.data if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    q = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    PilImage.fromarray(q, mode="L").save(path)


def save_image_f64(path, image):
    """Raw little-endian float64, row-major, no header; read back with
    numpy.fromfile(path).reshape(shape)."""
    arr = image.data if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    arr.astype("<f8").tofile(path)


def load_image_f64(path, shape):
    arr = np.fromfile(path, dtype="<f8")
    return Image(arr.reshape(shape))


def save_kernel_txt(path, kernel):
    arr = kernel.data if isinstance(kernel, Kernel) else np.asarray(kernel, dtype=np.float64)
    np.savetxt(path, arr, fmt="%.17g")


def load_kernel_txt(path):
    arr = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return Kernel(arr)


def save_kernel_png(path, kernel):
    """Kernel visualization: entries rescaled so the peak maps to 255."""
    arr = kernel.data if isinstance(kernel, Kernel) else np.asarray(kernel, dtype=np.float64)
    peak = arr.max()
    vis = arr / peak if peak > 0 else arr
    PilImage.fromarray(np.rint(vis * 255.0).astype(np.uint8), mode="L").save(path)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
