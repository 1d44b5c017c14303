"""Blind image deconvolution with second-order TGV regularization, ADMM
splitting, and variational generator priors."""

import os as _os

# Honor the thread cap before numpy first binds its BLAS thread pool.  This
# runs ahead of any submodule import, so the console entry point gets the cap
# applied; if numpy is already loaded (library embedding) it is best-effort.
_threads = _os.environ.get("TGVDECONV_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os, _threads

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Image,
    Kernel,
    NumericalError,
    VectorField,
    SymTensorField,
    convolve,
    grad,
    grad_adjoint,
    sym_deriv,
    sym_deriv_adjoint,
)
from .backend import BACKEND_NAME  # noqa: E402
from .tgv import (  # noqa: E402
    TgvWeights,
    shrink_iso,
    shrink_frob,
    solve_g,
    solve_h,
    solve_q,
    tgv_value,
)
from .varprior import (  # noqa: E402
    GaussianImageDist,
    GaussianKernelDist,
    GeneratorState,
    XiFields,
    image_generator_forward,
    kernel_generator_forward,
    sample_reparameterized,
    update_xi,
    elbo_loss,
    u_subproblem_loss,
    solve_u_subproblem,
)
from .generators import (  # noqa: E402
    GeneratorArch,
    GeneratorParams,
    LatentInputs,
)
from .admm import (  # noqa: E402
    AdmmConfig,
    AdmmState,
    SolverError,
    init_state,
    step,
    solve_blind,
    solve_nonblind,
)
from .metrics import MetricReport, psnr, ssim, kernel_error  # noqa: E402

__all__ = [
    "Image", "Kernel", "NumericalError", "VectorField", "SymTensorField",
    "convolve", "grad", "grad_adjoint", "sym_deriv", "sym_deriv_adjoint",
    "BACKEND_NAME",
    "TgvWeights", "shrink_iso", "shrink_frob", "solve_g", "solve_h",
    "solve_q", "tgv_value",
    "GaussianImageDist", "GaussianKernelDist", "GeneratorState", "XiFields",
    "sample_reparameterized", "update_xi", "elbo_loss", "u_subproblem_loss",
    "solve_u_subproblem",
    "GeneratorArch", "GeneratorParams", "LatentInputs",
    "image_generator_forward", "kernel_generator_forward",
    "AdmmConfig", "AdmmState", "SolverError", "init_state", "step",
    "solve_blind", "solve_nonblind",
    "MetricReport", "psnr", "ssim", "kernel_error",
    "__version__",
]
