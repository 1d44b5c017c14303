"""Variational half of the solver: Gaussian output distributions of the two
generators, the super-Gaussian gradient weights xi, the negative variational
lower bound, and the inner optimization loop that trains both networks
against it (plus the splitting penalty tying the image to the auxiliary
fields).

Sign convention: every loss here is a quantity to *minimize* (the negative of
the variational lower bound), assembled from
  * the kernel prior/entropy terms  1/2 sum(E^2(k) + S^2(k) - 2 ln S(k))
    with a standard-Gaussian prior over kernel logits,
  * the image entropy  -sum ln S(u),
  * gradient penalties 1/4 sum E((Fx u)^2) xi_x + 1/4 sum E((Fy u)^2) xi_y,
    the expectation expanded under per-pixel independence,
  * a Monte Carlo fidelity estimate  (beta/2) mean_i |k_i (*) u_i - s|^2
    with both the image and the kernel drawn by reparameterization.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import (
    Image,
    Kernel,
    NumericalError,
    SolverError,
    diff_axis,
    diff_index_pairs,
    pad_index_maps,
)
from .generators import (
    GeneratorParams,
    LatentInputs,
    image_net_forward,
    init_generator_params,
    kernel_net_forward,
)


def _as_tensor(x):
    return x if isinstance(x, ad.Tensor) else ad.leaf(np.asarray(x, dtype=np.float64))


class GaussianImageDist:
    """Per-pixel Gaussian over the image: mean in (0,1), std > 0.

    Construct from Tensors (training path) or plain arrays (tests/oracles);
    pass either ``std`` or ``logstd``.  The std is parameterized as
    exp(log-std), which is what keeps it strictly positive.
    """

    def __init__(self, mean, std=None, logstd=None):
        if (std is None) == (logstd is None):
            raise ValueError("pass exactly one of std/logstd")
        self.mean = _as_tensor(mean)
        if logstd is not None:
            self.logstd = _as_tensor(logstd)
            self.std = ad.exp(self.logstd)
        else:
            self.logstd = None
            self.std = _as_tensor(std)
            if np.any(self.std.value <= 0):
                raise ValueError("std must be strictly positive")
        if self.mean.shape != self.std.shape or self.mean.value.ndim != 2:
            raise ValueError(f"mean/std shapes disagree: {self.mean.shape} vs {self.std.shape}")

    @property
    def shape(self):
        return self.mean.shape

    def log_std_tensor(self):
        return self.logstd if self.logstd is not None else ad.log(self.std)

    def mean_image(self):
        return Image(self.mean.value)


class GaussianKernelDist:
    """Gaussian over kernel logits (flat, length kernel_size**2); realized
    kernels are softmax projections of logit samples, so E(k)/S(k) entering
    the loss live pre-projection."""

    def __init__(self, mean_logits, std=None, logstd=None):
        if (std is None) == (logstd is None):
            raise ValueError("pass exactly one of std/logstd")
        self.mean_logits = _as_tensor(mean_logits)
        if logstd is not None:
            self.logstd = _as_tensor(logstd)
            self.std = ad.exp(self.logstd)
        else:
            self.logstd = None
            self.std = _as_tensor(std)
            if np.any(self.std.value <= 0):
                raise ValueError("std must be strictly positive")
        n = self.mean_logits.size
        k = int(round(np.sqrt(n)))
        if self.mean_logits.value.ndim != 1 or k * k != n or k % 2 == 0:
            raise ValueError(f"mean_logits length {n} is not an odd square")
        if self.std.shape != self.mean_logits.shape:
            raise ValueError("mean_logits/std shapes disagree")
        self.kernel_size = k

    def log_std_tensor(self):
        return self.logstd if self.logstd is not None else ad.log(self.std)

    def projected_mean(self):
        """softmax(E(logits)) reshaped to (K, K) — the kernel read-out."""
        return Kernel(_softmax_np(self.mean_logits.value).reshape(self.kernel_size, self.kernel_size))


@dataclass(frozen=True)
class XiFields:
    """Detached super-Gaussian gradient weights, strictly positive."""

    xi_x: np.ndarray
    xi_y: np.ndarray

    def __post_init__(self):
        for name, arr in (("xi_x", self.xi_x), ("xi_y", self.xi_y)):
            if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
                raise ValueError(f"{name} must be strictly positive and finite")


def _softmax_np(x):
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


def image_generator_forward(params, z_u):
    """Image network -> per-pixel Gaussian (mean through sigmoid, std = exp)."""
    mean, logstd = image_net_forward(params, params.arch, z_u)
    return GaussianImageDist(mean, logstd=logstd)


def kernel_generator_forward(params, z_k):
    """Kernel network -> Gaussian over kernel logits."""
    mean_logits, logstd = kernel_net_forward(params, params.arch, z_k)
    return GaussianKernelDist(mean_logits, logstd=logstd)


def sample_reparameterized(dist, noise):
    """mean + std * noise, differentiable in the distribution parameters.

    Image distributions return an (H, W) Tensor; kernel distributions map the
    logit sample through softmax and return a (K, K) Tensor on the simplex.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if isinstance(dist, GaussianImageDist):
        if noise.shape != dist.shape:
            raise ValueError(f"noise shape {noise.shape} does not match {dist.shape}")
        return dist.mean + dist.std * ad.leaf(noise)
    if isinstance(dist, GaussianKernelDist):
        if noise.shape != dist.mean_logits.shape:
            raise ValueError(f"noise shape {noise.shape} does not match {dist.mean_logits.shape}")
        logits = dist.mean_logits + dist.std * ad.leaf(noise)
        k = dist.kernel_size
        return ad.reshape(ad.softmax_vec(logits), (k, k))
    raise TypeError(f"cannot sample from {type(dist).__name__}")


def update_xi(u_mean, rho_exponent=1.0, epsilon=1e-3, boundary="circular"):
    """Refresh the gradient weights at the current image point estimate:
    with rho(t) = |t|^p, xi = p * max(|F u|, epsilon)^(p-2)."""
    p = float(rho_exponent)
    if not 0.0 < p <= 1.0:
        raise ValueError(f"rho_exponent must lie in (0, 1], got {p}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    arr = u_mean.data if isinstance(u_mean, Image) else np.asarray(u_mean, dtype=np.float64)
    fx = np.maximum(np.abs(diff_axis(arr, 0, boundary)), epsilon)
    fy = np.maximum(np.abs(diff_axis(arr, 1, boundary)), epsilon)
    return XiFields(xi_x=p * fx ** (p - 2.0), xi_y=p * fy ** (p - 2.0))


def _grad_sq_expectation(mean_t, s2_t, axis, boundary):
    """E((F u)^2) along one axis: (F E(u))^2 plus the independent-pixel
    variance S^2[a] + S^2[b], zeroed where the difference degenerates."""
    n = mean_t.shape[axis]
    a_idx, b_idx = diff_index_pairs(n, boundary)
    fm = ad.index_axis(mean_t, a_idx, axis) - ad.index_axis(mean_t, b_idx, axis)
    var = ad.index_axis(s2_t, a_idx, axis) + ad.index_axis(s2_t, b_idx, axis)
    mask = (a_idx != b_idx).astype(np.float64)
    mask = mask[:, None] if axis == 0 else mask[None, :]
    return fm * fm + ad.leaf(mask) * var


def _check_term(value, name):
    if not np.isfinite(value):
        raise NumericalError(f"elbo_loss: non-finite {name} term")


def elbo_loss(img_dist, ker_dist, xi, s, beta, mc_samples, rng, boundary="circular"):
    """Negative variational lower bound as a scalar Tensor (call
    ``.backward()`` on it to populate parameter gradients).

    When ``beta`` is zero the fidelity term is skipped entirely and ``rng``
    is not consumed.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    s_arr = s.data if isinstance(s, Image) else np.asarray(s, dtype=np.float64)

    fixed_kernel = None
    if isinstance(ker_dist, GaussianKernelDist):
        mu_k = ker_dist.mean_logits
        std_k = ker_dist.std
        kernel_term = 0.5 * ad.sum_all(mu_k * mu_k + std_k * std_k - 2.0 * ker_dist.log_std_tensor())
        _check_term(kernel_term.value, "kernel-prior")
        ksize = ker_dist.kernel_size
    else:
        # known kernel: no distribution, no prior term
        fixed_kernel = ker_dist.data if isinstance(ker_dist, Kernel) else np.asarray(ker_dist, dtype=np.float64)
        kernel_term = None
        ksize = fixed_kernel.shape[0]

    entropy_term = -1.0 * ad.sum_all(img_dist.log_std_tensor())
    _check_term(entropy_term.value, "image-entropy")

    s2 = img_dist.std * img_dist.std
    ex = _grad_sq_expectation(img_dist.mean, s2, 0, boundary)
    ey = _grad_sq_expectation(img_dist.mean, s2, 1, boundary)
    grad_term = 0.25 * ad.sum_all(ex * ad.leaf(xi.xi_x)) + 0.25 * ad.sum_all(ey * ad.leaf(xi.xi_y))
    _check_term(grad_term.value, "gradient-penalty")

    total = entropy_term + grad_term
    if kernel_term is not None:
        total = kernel_term + total
    if beta != 0.0:
        pi_r, pi_c = pad_index_maps(s_arr.shape, ksize, boundary)
        s_const = ad.leaf(s_arr)
        k_const = None if fixed_kernel is None else ad.leaf(fixed_kernel)
        acc = None
        for _ in range(mc_samples):
            u_s = sample_reparameterized(img_dist, rng.standard_normal(s_arr.shape))
            if fixed_kernel is None:
                k_s = sample_reparameterized(ker_dist, rng.standard_normal(ker_dist.mean_logits.size))
            else:
                k_s = k_const
            r = ad.conv_image_kernel(u_s, k_s, pi_r, pi_c) - s_const
            term = ad.sum_all(r * r)
            acc = term if acc is None else acc + term
        fidelity_term = (0.5 * beta / mc_samples) * acc
        _check_term(fidelity_term.value, "fidelity")
        total = total + fidelity_term
    _check_term(total.value, "total")
    return total


def u_subproblem_loss(elbo, u_sample, g, q, g_dual, phi1, boundary="circular"):
    """elbo + (phi1/2) |g - (D u_sample - q) - g~|^2, the gradient flowing
    through the difference operator applied to the image sample."""
    u_t = _as_tensor(u_sample)
    h, w = u_t.shape
    ar, br = diff_index_pairs(h, boundary)
    ac, bc = diff_index_pairs(w, boundary)
    d1 = ad.index_axis(u_t, ar, 0) - ad.index_axis(u_t, br, 0)
    d2 = ad.index_axis(u_t, ac, 1) - ad.index_axis(u_t, bc, 1)
    r1 = ad.leaf(g.c1 + q.c1 - g_dual.c1) - d1
    r2 = ad.leaf(g.c2 + q.c2 - g_dual.c2) - d2
    total = elbo + (0.5 * phi1) * (ad.sum_all(r1 * r1) + ad.sum_all(r2 * r2))
    _check_term(total.value, "splitting-penalty")
    return total


class GeneratorState:
    """Both networks' parameters, their fixed latents, and per-network Adam
    state; owned exclusively by one solve."""

    def __init__(self, arch, rng, image_lr=1e-2, kernel_lr=1e-4):
        self.arch = arch
        self.latents = LatentInputs.draw(arch, rng)
        self.params = init_generator_params(arch, rng)
        self._make_optimizers(image_lr, kernel_lr)
        self.step_count = 0
        self.last_losses = []

    @classmethod
    def from_params(cls, params, latents, image_lr=1e-2, kernel_lr=1e-4):
        state = cls.__new__(cls)
        state.arch = params.arch
        state.latents = latents
        state.params = params
        state._make_optimizers(image_lr, kernel_lr)
        state.step_count = 0
        state.last_losses = []
        return state

    def _make_optimizers(self, image_lr, kernel_lr):
        self.image_lr, self.kernel_lr = image_lr, kernel_lr
        self.opt_image = ad.Adam(self.params.image_tensors(), lr=image_lr)
        self.opt_kernel = ad.Adam(self.params.kernel_tensors(), lr=kernel_lr)

    def distributions(self):
        img = image_generator_forward(self.params, self.latents.z_u)
        ker = kernel_generator_forward(self.params, self.latents.z_k)
        return img, ker

    def current_means(self):
        img, ker = self.distributions()
        return img.mean_image(), ker.projected_mean()


def _clip_grads(tensors, max_norm):
    """Scale the group's gradients so their global norm is at most max_norm."""
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    total = np.sqrt(total)
    if total > max_norm:
        scale = max_norm / total
        for t in tensors:
            if t.grad is not None:
                t.grad *= scale


def solve_u_subproblem(state, s, g, q, g_dual, rng, *, beta, phi1,
                       inner_steps=25, mc_samples=1, rho_exponent=1.0,
                       xi_epsilon=1e-3, boundary="circular",
                       divergence_limit=1e12, fixed_kernel=None,
                       grad_clip=1e4):
    """Train the generators for ``inner_steps`` optimizer steps against the
    penalized loss, refreshing xi from the current image mean before every
    step.  With ``fixed_kernel`` set (non-blind mode) the kernel network is
    bypassed and only the image network trains.  Mutates ``state`` in place
    and returns ``(u_mean, k_mean, state)``; the per-step losses land in
    ``state.last_losses``.

    ``grad_clip`` bounds each network's global gradient norm before the
    optimizer step (0 disables) — the sampled fidelity term occasionally
    produces transient gradient spikes that would otherwise derail Adam.
    """
    if inner_steps < 1:
        raise ValueError("inner_steps must be >= 1")
    s_img = s if isinstance(s, Image) else Image(s)
    if fixed_kernel is not None and not isinstance(fixed_kernel, Kernel):
        fixed_kernel = Kernel(fixed_kernel)
    losses = []
    for it in range(inner_steps):
        img = image_generator_forward(state.params, state.latents.z_u)
        ker = fixed_kernel if fixed_kernel is not None \
            else kernel_generator_forward(state.params, state.latents.z_k)
        xi = update_xi(img.mean.value, rho_exponent, xi_epsilon, boundary)
        loss = elbo_loss(img, ker, xi, s_img, beta, mc_samples, rng, boundary)
        if phi1 != 0.0:
            u_pen = sample_reparameterized(img, rng.standard_normal(img.shape))
            loss = u_subproblem_loss(loss, u_pen, g, q, g_dual, phi1, boundary)
        value = float(loss.value)
        if not np.isfinite(value) or value > divergence_limit:
            raise SolverError(
                f"u-subproblem diverged at inner step {it}: loss={value!r}; "
                f"history={losses}")
        losses.append(value)
        state.opt_image.zero_grad()
        state.opt_kernel.zero_grad()
        loss.backward()
        if grad_clip > 0:
            _clip_grads(state.opt_image.params, grad_clip)
            _clip_grads(state.opt_kernel.params, grad_clip)
        state.opt_image.step()
        if fixed_kernel is None:
            state.opt_kernel.step()
        state.step_count += 1
    state.last_losses = losses
    if fixed_kernel is None:
        u_mean, k_mean = state.current_means()
    else:
        u_mean = image_generator_forward(state.params, state.latents.z_u).mean_image()
        k_mean = fixed_kernel
    return u_mean, k_mean, state
