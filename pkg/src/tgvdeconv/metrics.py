"""Reference quality metrics: PSNR, single-scale SSIM (11x11 Gaussian
window), and shift-aligned kernel recovery error."""

from dataclasses import dataclass

import numpy as np

from .core import Image, Kernel

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class MetricReport:
    """One evaluation row; kernel_mse is None when no true kernel is known."""

    psnr: float
    ssim: float
    kernel_mse: float = None

    def __post_init__(self):
        if not (0.0 <= self.psnr <= PSNR_CAP_DB):
            raise ValueError(f"psnr out of range: {self.psnr}")
        if self.ssim > 1.0 + 1e-12:
            raise ValueError(f"ssim exceeds 1: {self.ssim}")
        if self.kernel_mse is not None and self.kernel_mse < 0:
            raise ValueError(f"kernel_mse negative: {self.kernel_mse}")


def _pair(a, b, name):
    a = a.data if isinstance(a, Image) else np.asarray(a, dtype=np.float64)
    b = b.data if isinstance(b, Image) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{name}: shapes differ, {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """10 log10(peak^2 / MSE), capped at 99 dB (identical inputs hit the cap)."""
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    a, b = _pair(a, b, "psnr")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP_DB)


def _gaussian_window():
    r = (SSIM_WINDOW - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w1 = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    w1 /= w1.sum()
    w = np.outer(w1, w1)
    return w / w.sum()


def _valid_filter(x, w):
    """Windowed weighted means over all fully interior positions."""
    k = w.shape[0]
    h, wid = x.shape
    out = np.zeros((h - k + 1, wid - k + 1))
    for i in range(k):
        for j in range(k):
            out += w[i, j] * x[i:i + h - k + 1, j:j + wid - k + 1]
    return out


def ssim(a, b, peak=1.0):
    """Mean local structural similarity with the standard 11x11 Gaussian
    window (sigma 1.5) and stabilizers C1=(0.01 peak)^2, C2=(0.03 peak)^2;
    windows that would overhang the border are excluded.  Symmetric in its
    arguments; identical images give exactly 1."""
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    a, b = _pair(a, b, "ssim")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image too small for {SSIM_WINDOW}x{SSIM_WINDOW} windows: {a.shape}")
    w = _gaussian_window()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = _valid_filter(a, w)
    mu_b = _valid_filter(b, w)
    var_a = _valid_filter(a * a, w) - mu_a ** 2
    var_b = _valid_filter(b * b, w) - mu_b ** 2
    cov = _valid_filter(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _center_pad(k, size):
    out = np.zeros((size, size))
    off = (size - k.shape[0]) // 2
    out[off:off + k.shape[0], off:off + k.shape[1]] = k
    return out


def kernel_error(k_est, k_true, normalized=True):
    """Minimum MSE between the kernels over circular shifts of the estimate
    within +-floor(K/4) in each direction — blind recovery is only defined up
    to a small translation.  ``normalized`` divides by the pixel count
    (per-pixel MSE, the default); pass False for the raw squared-error sum.

    Kernels of different sizes are compared after zero-padding the smaller
    one, centered.
    """
    ka = k_est.data if isinstance(k_est, Kernel) else np.asarray(k_est, dtype=np.float64)
    kb = k_true.data if isinstance(k_true, Kernel) else np.asarray(k_true, dtype=np.float64)
    size = max(ka.shape[0], kb.shape[0])
    ka = _center_pad(ka, size)
    kb = _center_pad(kb, size)
    max_shift = size // 4
    best = np.inf
    for dx in range(-max_shift, max_shift + 1):
        for dy in range(-max_shift, max_shift + 1):
            shifted = np.roll(np.roll(ka, dx, axis=0), dy, axis=1)
            err = float(np.sum((shifted - kb) ** 2))
            best = min(best, err)
    return best / (size * size) if normalized else best
