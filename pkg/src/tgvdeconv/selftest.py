"""Fast in-process property battery for the ``selftest`` CLI subcommand.

Each check is small enough to run in seconds with no test-only
dependencies; the full oracle-backed suites live in the test tree.
"""

import numpy as np

from . import autodiff as ad
from .admm import AdmmConfig, solve_blind
from .core import Image, Kernel, convolve, grad, grad_adjoint, inner, sym_deriv, sym_deriv_adjoint
from .generators import GeneratorArch, init_generator_params
from .metrics import kernel_error, psnr, ssim
from .synth import gaussian_kernel, phantom
from .tgv import TgvWeights, shrink_frob, shrink_iso, tgv_value
from .varprior import image_generator_forward, kernel_generator_forward


def _check_adjoints():
    rng = np.random.default_rng(11)
    worst = 0.0
    for boundary in ("circular", "replicate"):
        for _ in range(10):
            u = Image(rng.standard_normal((8, 8)))
            from .core import VectorField, SymTensorField
            v = VectorField(rng.standard_normal((8, 8)), rng.standard_normal((8, 8)))
            w = SymTensorField(*[rng.standard_normal((8, 8)) for _ in range(3)])
            lhs = inner(grad(u, boundary), v)
            rhs = inner(u, grad_adjoint(v, boundary))
            worst = max(worst, abs(lhs - rhs))
            lhs2 = inner(sym_deriv(v, boundary), w)
            rhs2 = inner(v, sym_deriv_adjoint(w, boundary))
            worst = max(worst, abs(lhs2 - rhs2))
    return worst <= 1e-10, f"max adjoint mismatch {worst:.2e}"


def _check_convolution():
    rng = np.random.default_rng(12)
    delta = np.zeros((9, 9))
    delta[4, 4] = 1.0
    k = Kernel.normalized(rng.random((3, 3)))
    out = convolve(Image(delta), k).data
    ok1 = np.allclose(out[3:6, 3:6], k.data, atol=1e-14)
    u = Image(rng.random((16, 16)))
    d = convolve(u, k, method="direct").data
    f = convolve(u, k, method="fft").data
    ok2 = np.max(np.abs(d - f)) <= 1e-9
    return ok1 and ok2, "delta reproduction + fft/direct agreement"


def _check_shrinkage():
    out = shrink_iso(np.array([3.0, 4.0]), 1.0)
    ok1 = np.allclose(out, [2.4, 3.2], atol=1e-12)
    ok2 = np.all(shrink_iso(np.array([0.3, 0.4]), 1.0) == 0.0)
    b = np.array([[2.0, 0.0], [0.0, 1.0]])
    sb = shrink_frob(b, np.sqrt(5.0) / 2)
    ok3 = np.allclose(sb, b * 0.5, atol=1e-12)
    return ok1 and ok2 and ok3, "closed-form shrinkage cases"


def _check_tgv_value():
    h, w = 12, 12
    yy, xx = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    affine = Image(0.1 + 0.03 * xx + 0.02 * yy)
    val = tgv_value(affine, TgvWeights(), boundary="replicate", inner_iters=30)
    ok1 = val <= 1e-8
    rng = np.random.default_rng(13)
    u = rng.random((8, 8))
    v1 = tgv_value(Image(u), TgvWeights(), inner_iters=30)
    v2 = tgv_value(Image(3.0 * u), TgvWeights(), inner_iters=30)
    ok2 = abs(v2 - 3.0 * v1) <= 1e-6 * max(1.0, v2)
    return ok1 and ok2, f"affine value {val:.2e}, homogeneity"


def _check_metrics():
    a = phantom((32, 32))
    ok1 = psnr(a, a) == 99.0
    ok2 = abs(ssim(a, a) - 1.0) <= 1e-12
    k = gaussian_kernel(5, 1.0)
    shifted = Kernel(np.roll(k.data, 1, axis=0))
    ok3 = kernel_error(shifted, k) <= 1e-15
    return ok1 and ok2 and ok3, "psnr cap, ssim identity, shift alignment"


def _check_autodiff():
    rng = np.random.default_rng(14)
    x = ad.leaf(rng.standard_normal((2, 4, 4)), requires_grad=True)
    w = ad.leaf(rng.standard_normal((3, 18)) * 0.2, requires_grad=True)
    b = ad.leaf(rng.standard_normal(3) * 0.1, requires_grad=True)
    loss = ad.sum_all(ad.silu(ad.conv3x3(x, w, b)))
    loss.backward()
    base = loss.value.copy()
    idx = (1, 7)
    eps = 1e-6
    w.value[idx] += eps
    up = ad.sum_all(ad.silu(ad.conv3x3(x, w, b))).value
    w.value[idx] -= 2 * eps
    down = ad.sum_all(ad.silu(ad.conv3x3(x, w, b))).value
    w.value[idx] += eps
    fd = (up - down) / (2 * eps)
    rel = abs(fd - w.grad[idx]) / max(abs(fd), 1e-12)
    return rel <= 1e-6, f"conv layer gradient rel err {rel:.2e} (base loss {base:.3f})"


def _check_generator_init():
    arch = GeneratorArch(image_shape=(8, 8), kernel_size=3,
                         image_channels=(2, 3, 4), kernel_hidden=8,
                         latent_size=8, logstd_init=0.0)
    rng = np.random.default_rng(15)
    params = init_generator_params(arch, rng)
    img = image_generator_forward(params, rng.standard_normal((8, 8)))
    ker = kernel_generator_forward(params, rng.standard_normal(8))
    ok1 = np.allclose(img.mean.value, 0.5) and np.allclose(img.std.value, 1.0)
    ok2 = np.allclose(ker.mean_logits.value, 0.0) and np.allclose(ker.std.value, 1.0)
    return ok1 and ok2, "zero-initialized heads give mean 0.5 / std 1"


def _check_determinism():
    s = convolve(phantom((8, 8)), gaussian_kernel(3, 0.8))
    cfg = AdmmConfig(outer_iters=2, inner_steps=2, seed=7,
                     image_channels=(2, 3, 4), kernel_hidden=8, latent_size=8,
                     beta=100.0)
    u1, k1, _ = solve_blind(s, 3, cfg)
    u2, k2, _ = solve_blind(s, 3, cfg)
    ok = u1.data.tobytes() == u2.data.tobytes() and k1.data.tobytes() == k2.data.tobytes()
    return ok, "two seeded solves byte-identical"


CHECKS = [
    ("operator adjoints", _check_adjoints),
    ("convolution", _check_convolution),
    ("shrinkage", _check_shrinkage),
    ("tgv functional", _check_tgv_value),
    ("metrics", _check_metrics),
    ("autodiff", _check_autodiff),
    ("generator init", _check_generator_init),
    ("determinism", _check_determinism),
]


def run_all(verbose=True):
    """Run every check; returns True when all pass."""
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
