"""Outer splitting loop for blind and non-blind deconvolution.

One outer iteration updates, in order: the first auxiliary field g
(isotropic shrinkage), the second auxiliary field h (Frobenius shrinkage),
the image/kernel generators (inner gradient steps on the variational loss
plus the splitting penalty), the balancing field q (linear solves), and
finally both multipliers:

    g~ += mu * (D u - q - g),        h~ += mu * (B(q) - h).

Primal residual norms for both constraints are tracked per iteration; the
h-residual uses the same doubled off-diagonal weighting as the TGV norm.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    Image,
    Kernel,
    NumericalError,
    SolverError,
    grad,
    sym_deriv,
)
from .generators import GeneratorArch
from .tgv import TgvWeights, solve_g, solve_h, solve_q
from .varprior import GeneratorState, solve_u_subproblem
from .core import VectorField, SymTensorField

__all__ = [
    "AdmmConfig", "AdmmState", "SolverError",
    "init_state", "step", "solve_blind", "solve_nonblind",
]


@dataclass(frozen=True)
class AdmmConfig:
    """Everything a solve depends on: splitting constants, loop sizes,
    network shapes, learning rates, and the seed."""

    gamma0: float = 2.0
    gamma1: float = 1.0
    phi1: float = 1.0
    phi2: float = 1.0
    beta: float = 1e4
    mu: float = 1.0
    outer_iters: int = 40
    inner_steps: int = 25
    boundary: str = "circular"
    seed: int = 0
    strict_paper_scaling: bool = True
    mc_samples: int = 1
    rho_exponent: float = 1.0
    xi_epsilon: float = 1e-3
    image_lr: float = 1e-2
    kernel_lr: float = 1e-4
    image_channels: tuple = (16, 32, 64)
    kernel_hidden: int = 256
    latent_size: int = 64
    logstd_init: float = -3.0
    early_stop_tol: float = 0.0
    grad_clip: float = 1e4
    # blind-only kernel-identification phase (0 iters = single-phase loop)
    kernel_phase_iters: int = 16
    kernel_phase_beta: float = 3e4
    kernel_phase_lr: float = 1e-3
    kernel_phase_mc_samples: int = 2
    kernel_avg_start: int = 7

    def __post_init__(self):
        for name in ("gamma0", "gamma1", "phi1", "phi2", "beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"AdmmConfig.{name} must be positive")
        if self.mu < 0:
            raise ValueError("AdmmConfig.mu must be nonnegative")
        if self.outer_iters < 1 or self.inner_steps < 1:
            raise ValueError("outer_iters and inner_steps must be >= 1")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.kernel_phase_iters < 0:
            raise ValueError("kernel_phase_iters must be >= 0")
        if self.kernel_phase_iters > 0:
            if self.kernel_phase_beta <= 0 or self.kernel_phase_lr <= 0:
                raise ValueError("kernel phase beta and lr must be positive")
            if self.kernel_phase_mc_samples < 1:
                raise ValueError("kernel_phase_mc_samples must be >= 1")
            if not 1 <= self.kernel_avg_start <= self.kernel_phase_iters:
                raise ValueError(
                    "kernel_avg_start must lie in [1, kernel_phase_iters]")

    def weights(self):
        return TgvWeights(gamma0=self.gamma0, gamma1=self.gamma1)

    def arch_for(self, image_shape, kernel_size):
        return GeneratorArch(
            image_shape=tuple(image_shape),
            kernel_size=kernel_size,
            image_channels=tuple(self.image_channels),
            kernel_hidden=self.kernel_hidden,
            latent_size=self.latent_size,
            logstd_init=self.logstd_init,
        )


class AdmmState:
    """Mutable iterate bundle for one solve (single-writer)."""

    def __init__(self, u, k, q, g, g_dual, h, h_dual, gen, rng, fixed_kernel=None):
        self.u = u
        self.k = k
        self.q = q
        self.g = g
        self.g_dual = g_dual
        self.h = h
        self.h_dual = h_dual
        self.gen = gen
        self.rng = rng
        self.fixed_kernel = fixed_kernel
        self.iteration = 0
        self.residual_history = []
        self.loss_history = []
        self.entropy_history = []

    def check_consistent(self):
        shape = self.u.shape
        ok = (self.q.shape == shape and self.g.shape == shape
              and self.g_dual.shape == shape and self.h.shape == shape
              and self.h_dual.shape == shape)
        if not ok:
            raise ValueError("AdmmState fields have inconsistent dimensions")
        if len(self.residual_history) != self.iteration:
            raise ValueError("residual history out of sync with iteration count")


def init_state(s, kernel_size, config):
    """Fresh state: u0 = s, every auxiliary field and multiplier zero,
    generators seeded from config.seed with their latents drawn and frozen."""
    s = s if isinstance(s, Image) else Image(s)
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and positive, got {kernel_size}")
    if kernel_size > min(s.shape):
        raise ValueError(f"kernel_size {kernel_size} exceeds image extent {s.shape}")
    shape = s.shape
    rng = np.random.default_rng(config.seed)
    arch = config.arch_for(shape, kernel_size)
    gen = GeneratorState(arch, rng, image_lr=config.image_lr, kernel_lr=config.kernel_lr)
    _, k0 = gen.current_means()
    return AdmmState(
        u=Image(s.data.copy()),
        k=k0,
        q=VectorField.zeros(shape),
        g=VectorField.zeros(shape),
        g_dual=VectorField.zeros(shape),
        h=SymTensorField.zeros(shape),
        h_dual=SymTensorField.zeros(shape),
        gen=gen,
        rng=rng,
    )


def _kernel_entropy(k):
    p = k.data[k.data > 0]
    return float(-np.sum(p * np.log(p)))


def step(state, s, config, u_updater=None):
    """One outer iteration, in the documented order (g, h, image/kernel, q,
    multipliers).  ``u_updater(state, s, config, g, h) -> (Image, Kernel)``
    replaces the generator training when given — used to drive the splitting
    with an exact quadratic image solve.
    """
    s = s if isinstance(s, Image) else Image(s)
    bnd = config.boundary
    w = config.weights()
    try:
        g = solve_g(state.u, state.q, state.g_dual, w, config.phi1, bnd,
                    strict_paper_scaling=config.strict_paper_scaling)
        h = solve_h(state.q, state.h_dual, w, config.phi2, bnd,
                    strict_paper_scaling=config.strict_paper_scaling)
        if u_updater is not None:
            u, k = u_updater(state, s, config, g, h)
            loss_value = float("nan")
        else:
            u, k, _ = solve_u_subproblem(
                state.gen, s, g, state.q, state.g_dual, state.rng,
                beta=config.beta, phi1=config.phi1,
                inner_steps=config.inner_steps, mc_samples=config.mc_samples,
                rho_exponent=config.rho_exponent, xi_epsilon=config.xi_epsilon,
                boundary=bnd, fixed_kernel=state.fixed_kernel,
                grad_clip=config.grad_clip)
            loss_value = state.gen.last_losses[-1]
        q = solve_q(u, g, state.g_dual, h, state.h_dual, state.q, w,
                    config.phi1, config.phi2, bnd)
    except SolverError:
        raise
    except NumericalError as exc:
        raise SolverError(f"outer iteration {state.iteration}: {exc}") from exc

    du = grad(u, bnd)
    bq = sym_deriv(q, bnd)
    rg1 = du.c1 - q.c1 - g.c1
    rg2 = du.c2 - q.c2 - g.c2
    rh11 = bq.t11 - h.t11
    rh22 = bq.t22 - h.t22
    rh12 = bq.t12 - h.t12
    state.g_dual = VectorField(state.g_dual.c1 + config.mu * rg1,
                               state.g_dual.c2 + config.mu * rg2)
    state.h_dual = SymTensorField(state.h_dual.t11 + config.mu * rh11,
                                  state.h_dual.t22 + config.mu * rh22,
                                  state.h_dual.t12 + config.mu * rh12)
    state.u, state.k, state.q, state.g, state.h = u, k, q, g, h
    res_g = float(np.sqrt(np.sum(rg1 ** 2) + np.sum(rg2 ** 2)))
    res_h = float(np.sqrt(np.sum(rh11 ** 2) + np.sum(rh22 ** 2) + 2.0 * np.sum(rh12 ** 2)))
    state.iteration += 1
    state.residual_history.append((res_g, res_h))
    state.loss_history.append(loss_value)
    state.entropy_history.append(_kernel_entropy(k))
    return state


def _diagnostics(state, duration=None):
    rows = {
        "iteration": list(range(1, state.iteration + 1)),
        "loss": list(state.loss_history),
        "residual_g": [r[0] for r in state.residual_history],
        "residual_h": [r[1] for r in state.residual_history],
        "kernel_entropy": list(state.entropy_history),
    }
    if duration is not None:
        rows["duration_seconds"] = duration
    return rows


def _should_stop(state, config):
    if config.early_stop_tol <= 0 or state.iteration == 0:
        return False
    res_g, res_h = state.residual_history[-1]
    du = grad(state.u, config.boundary)
    bq = sym_deriv(state.q, config.boundary)
    den_g = np.sqrt(np.sum(du.c1 ** 2) + np.sum(du.c2 ** 2)) + 1e-30
    den_h = np.sqrt(np.sum(bq.t11 ** 2) + np.sum(bq.t22 ** 2) + 2 * np.sum(bq.t12 ** 2)) + 1e-30
    return res_g / den_g < config.early_stop_tol and res_h / den_h < config.early_stop_tol


def _run(state, s, config):
    start = time.monotonic()
    try:
        for _ in range(config.outer_iters):
            step(state, s, config)
            if _should_stop(state, config):
                break
    except SolverError as exc:
        exc.diagnostics = _diagnostics(state, time.monotonic() - start)
        raise
    return _diagnostics(state, time.monotonic() - start)


def _merge_diags(d1, d2):
    n1, n2 = len(d1["iteration"]), len(d2["iteration"])
    out = {"iteration": list(range(1, n1 + n2 + 1))}
    for key in ("loss", "residual_g", "residual_h", "kernel_entropy"):
        out[key] = list(d1.get(key, [])) + list(d2.get(key, []))
    out["phase"] = [1] * n1 + [2] * n2
    out["duration_seconds"] = (d1.get("duration_seconds", 0.0)
                               + d2.get("duration_seconds", 0.0))
    return out


def solve_blind(s, kernel_size, config):
    """Estimate both the image and the kernel from the blurred observation.

    Runs in two phases when ``config.kernel_phase_iters > 0``.  Phase one is
    a short identification pass at a high data weight (``kernel_phase_beta``,
    ``kernel_phase_lr``, ``kernel_phase_mc_samples``); the per-iteration
    kernel means from ``kernel_avg_start`` on are averaged and renormalized
    into a fixed estimate.  Phase two re-solves from scratch with the kernel
    pinned to that estimate.  The high data weight keeps the kernel's
    blur-absorbing width bias small, averaging cancels sampling jitter, and
    the fresh restart discards the image iterate, which by the end of a
    co-training run has picked up inverse-filter artifacts from fitting
    through its own slightly-off kernel.  ``kernel_phase_iters = 0`` runs
    the plain single-phase loop.

    Returns ``(u, k, diagnostics)`` — the final image mean clipped to [0, 1],
    the kernel estimate, and the residual/loss traces (phases concatenated,
    with a ``phase`` column when two-phase).  On solver failure the partial
    traces ride on the exception's ``diagnostics``.
    """
    s = s if isinstance(s, Image) else Image(s)
    if config.kernel_phase_iters == 0:
        state = init_state(s, kernel_size, config)
        diag = _run(state, s, config)
        u = Image(np.clip(state.u.data, 0.0, 1.0))
        return u, state.k, diag

    cfg1 = replace(config,
                   outer_iters=config.kernel_phase_iters,
                   beta=config.kernel_phase_beta,
                   kernel_lr=config.kernel_phase_lr,
                   mc_samples=config.kernel_phase_mc_samples,
                   early_stop_tol=0.0)
    state1 = init_state(s, kernel_size, cfg1)
    start = time.monotonic()
    kernels = []
    try:
        for _ in range(cfg1.outer_iters):
            step(state1, s, cfg1)
            kernels.append(state1.k.data.copy())
    except SolverError as exc:
        exc.diagnostics = _diagnostics(state1, time.monotonic() - start)
        raise
    diag1 = _diagnostics(state1, time.monotonic() - start)
    k_avg = np.mean(kernels[config.kernel_avg_start - 1:], axis=0)
    k_hat = Kernel(k_avg / k_avg.sum())

    state2 = init_state(s, kernel_size, config)
    state2.fixed_kernel = k_hat
    state2.k = k_hat
    try:
        diag2 = _run(state2, s, config)
    except SolverError as exc:
        partial = getattr(exc, "diagnostics", _diagnostics(state2))
        exc.diagnostics = _merge_diags(diag1, partial)
        raise
    u = Image(np.clip(state2.u.data, 0.0, 1.0))
    return u, k_hat, _merge_diags(diag1, diag2)


def solve_nonblind(s, k_known, config):
    """Same loop with the kernel held fixed at ``k_known``; only the image
    generator trains.  Returns ``(u, diagnostics)``."""
    s = s if isinstance(s, Image) else Image(s)
    k_known = k_known if isinstance(k_known, Kernel) else Kernel(k_known)
    state = init_state(s, k_known.data.shape[0], config)
    state.fixed_kernel = k_known
    state.k = k_known
    diag = _run(state, s, config)
    u = Image(np.clip(state.u.data, 0.0, 1.0))
    return u, diag
