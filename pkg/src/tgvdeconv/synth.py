"""Synthetic test instances: parametric blur kernels, a deterministic
phantom image with both smooth regions and edges, and the forward model
s = k (*) u + noise."""

import numpy as np

from .core import Image, Kernel, convolve


def gaussian_kernel(size, sigma):
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = (size - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k = np.outer(g, g)
    return Kernel(k / k.sum())


def identity_kernel(size):
    return Kernel.identity(size)


def motion_kernel(size, length, angle_deg):
    """Linear motion blur: a length-``length`` segment through the center at
    ``angle_deg`` (degrees, counterclockwise from the +y image axis),
    rasterized by dense sampling with bilinear splatting."""
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    c = (size - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    # 64 samples per unit length is dense enough that the rasterization is
    # visually smooth and deterministic
    n = max(int(round(64 * length)), 2)
    t = np.linspace(-0.5, 0.5, n) * (length - 1 if length > 1 else 0.0)
    xs = c - t * np.sin(theta)
    ys = c + t * np.cos(theta)
    k = np.zeros((size, size))
    for x, y in zip(xs, ys):
        i0, j0 = int(np.floor(x)), int(np.floor(y))
        fx, fy = x - i0, y - j0
        for di, wx in ((0, 1 - fx), (1, fx)):
            for dj, wy in ((0, 1 - fy), (1, fy)):
                i, j = i0 + di, j0 + dj
                if 0 <= i < size and 0 <= j < size:
                    k[i, j] += wx * wy
    total = k.sum()
    if total <= 0:
        raise ValueError("motion kernel degenerated to zero; check length vs size")
    return Kernel(k / total)


def phantom(shape=(64, 64)):
    """Deterministic grayscale test scene in [0, 1]: an affine ramp
    background with a disk, a rectangle, a diagonal bar, and a smooth bump —
    enough edges and gradients to exercise both TGV terms."""
    h, w = shape
    yy, xx = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h))
    img = 0.25 + 0.30 * xx + 0.15 * yy
    disk = (xx - 0.32) ** 2 + (yy - 0.36) ** 2 < 0.04
    img[disk] = 0.85
    rect = (np.abs(xx - 0.70) < 0.14) & (np.abs(yy - 0.30) < 0.10)
    img[rect] = 0.10
    bar = np.abs((xx - yy) - 0.25) < 0.035
    img[bar] = 0.65
    img += 0.18 * np.exp(-(((xx - 0.72) ** 2 + (yy - 0.75) ** 2) / 0.012))
    return Image(np.clip(img, 0.02, 0.98))


def synthesize(u_clean, kernel, noise_sigma=0.0, seed=0, boundary="circular"):
    """Forward model: blur, then add white Gaussian noise of the given
    standard deviation, clipping the result back into [0, 1] (a no-op for
    zero noise since blurring is a convex combination of pixel values)."""
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    u_clean = u_clean if isinstance(u_clean, Image) else Image(u_clean)
    blurred = convolve(u_clean, kernel, boundary=boundary)
    s = blurred.data
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        s = np.clip(s + noise_sigma * rng.standard_normal(s.shape), 0.0, 1.0)
    return Image(s)
