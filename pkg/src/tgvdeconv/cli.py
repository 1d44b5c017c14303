"""Command-line surface: synthesize | deblur | evaluate | selftest.

Configuration precedence: built-in defaults < TOML file (--config) < explicit
flags.  Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O
error.  Every run directory receives a manifest sufficient to reproduce the
output bit-identically on the same build.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, fields

try:
    import tomllib as _toml
except ImportError:  # Python < 3.11
    import tomli as _toml

from . import __version__
from .admm import AdmmConfig, solve_blind, solve_nonblind
from .backend import BACKEND_NAME
from .core import NumericalError, SolverError
from .imgio import (
    load_image,
    load_kernel_txt,
    save_image_f64,
    save_image_png,
    save_kernel_png,
    save_kernel_txt,
    sha256_file,
)
from .metrics import MetricReport, kernel_error, psnr, ssim
from .synth import gaussian_kernel, identity_kernel, motion_kernel, phantom, synthesize

DIAG_HEADER = ("iteration", "loss", "residual_g", "residual_h")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    version: str
    seed: int
    config: dict
    arch: dict
    inputs: dict
    outputs: list
    duration_seconds: float
    backend: str = BACKEND_NAME

    def write(self, path):
        payload = {
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "arch": self.arch,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "duration_seconds": self.duration_seconds,
            "backend": self.backend,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def parse_kernel_spec(spec):
    """gaussian:K:sigma | motion:K:length:angle | identity:K | file:path"""
    parts = spec.split(":")
    try:
        if parts[0] == "gaussian" and len(parts) == 3:
            return gaussian_kernel(int(parts[1]), float(parts[2]))
        if parts[0] == "motion" and len(parts) == 4:
            return motion_kernel(int(parts[1]), float(parts[2]), float(parts[3]))
        if parts[0] == "identity" and len(parts) == 2:
            return identity_kernel(int(parts[1]))
        if parts[0] == "file" and len(parts) >= 2:
            return load_kernel_txt(spec.split(":", 1)[1])
    except (ValueError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise UsageError(f"bad kernel spec {spec!r}: {exc}") from exc
    raise UsageError(
        f"bad kernel spec {spec!r}; expected gaussian:K:sigma, motion:K:length:angle, "
        f"identity:K, or file:path")


_FLOAT_FIELDS = ("gamma0", "gamma1", "phi1", "phi2", "beta", "mu",
                 "rho_exponent", "xi_epsilon", "image_lr", "kernel_lr",
                 "logstd_init", "early_stop_tol", "grad_clip")
_INT_FIELDS = ("outer_iters", "inner_steps", "seed", "mc_samples",
               "kernel_hidden", "latent_size")


def _add_config_flags(p):
    for name in _FLOAT_FIELDS:
        p.add_argument("--" + name.replace("_", "-"), type=float, default=None,
                       dest=name, help=f"override AdmmConfig.{name}")
    for name in _INT_FIELDS:
        p.add_argument("--" + name.replace("_", "-"), type=int, default=None,
                       dest=name, help=f"override AdmmConfig.{name}")
    p.add_argument("--boundary", choices=("circular", "replicate"), default=None)
    p.add_argument("--strict-paper-scaling", dest="strict_paper_scaling",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--image-channels", dest="image_channels", default=None,
                   help="encoder-decoder widths, e.g. 16,32,64")
    p.add_argument("--config", default=None, metavar="FILE.toml",
                   help="TOML config file; explicit flags override its values")


def build_config(args):
    """Assemble AdmmConfig from defaults, the optional TOML file, and flags."""
    valid = {f.name for f in fields(AdmmConfig)}
    values = {}
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            try:
                doc = _toml.load(fh)
            except _toml.TOMLDecodeError as exc:
                raise UsageError(f"cannot parse {args.config}: {exc}") from exc
        unknown = set(doc) - valid
        if unknown:
            raise UsageError(f"unknown config keys in {args.config}: {sorted(unknown)}")
        values.update(doc)
    for name in valid:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if isinstance(values.get("image_channels"), str):
        try:
            values["image_channels"] = tuple(int(t) for t in values["image_channels"].split(","))
        except ValueError as exc:
            raise UsageError(f"bad --image-channels: {exc}") from exc
    if "image_channels" in values:
        values["image_channels"] = tuple(values["image_channels"])
    try:
        return AdmmConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _write_diagnostics(path, diag):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAG_HEADER)
        for row in zip(diag["iteration"], diag["loss"],
                       diag["residual_g"], diag["residual_h"]):
            writer.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}"])


def cmd_synthesize(clean_path, kernel_spec, noise_sigma, seed, out_dir,
                   boundary="circular"):
    """Blur a clean image (or the built-in phantom) and write the instance:
    s.png, s.f64, k.txt, k.png, manifest.json."""
    start = time.monotonic()
    if noise_sigma < 0:
        raise UsageError(f"noise sigma must be nonnegative, got {noise_sigma}")
    kernel = parse_kernel_spec(kernel_spec)
    inputs = {}
    if clean_path == "phantom":
        clean = phantom((64, 64))
    else:
        clean = load_image(clean_path)
        inputs[clean_path] = sha256_file(clean_path)
    s = synthesize(clean, kernel, noise_sigma=noise_sigma, seed=seed, boundary=boundary)
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("s.png", "s.f64", "k.txt", "k.png", "clean.png",
                          "clean.f64", "manifest.json")}
    save_image_png(paths["s.png"], s)
    save_image_f64(paths["s.f64"], s)
    save_image_png(paths["clean.png"], clean)
    save_image_f64(paths["clean.f64"], clean)
    save_kernel_txt(paths["k.txt"], kernel)
    save_kernel_png(paths["k.png"], kernel)
    manifest = RunManifest(
        command="synthesize", version=__version__, seed=seed,
        config={"kernel_spec": kernel_spec, "noise_sigma": noise_sigma,
                "boundary": boundary, "clean": clean_path,
                "image_shape": list(s.shape)},
        arch={}, inputs=inputs, outputs=sorted(set(paths) - {"manifest.json"}),
        duration_seconds=time.monotonic() - start)
    manifest.write(paths["manifest.json"])
    return paths


def cmd_deblur(blurred_path, mode, kernel_arg, config, out_dir):
    """Run a solve and write u.png/u.f64, the kernel (text + image),
    diagnostics.csv, and manifest.json.  On numerical failure the partial
    diagnostics and manifest are still written before the error propagates.
    """
    start = time.monotonic()
    s = load_image(blurred_path)
    inputs = {blurred_path: sha256_file(blurred_path)}
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("u.png", "u.f64", "k.txt", "k.png",
                          "diagnostics.csv", "manifest.json")}

    if mode == "blind":
        kernel_size = int(kernel_arg)
        k_known = None
    elif mode == "nonblind":
        k_known = load_kernel_txt(kernel_arg)
        inputs[kernel_arg] = sha256_file(kernel_arg)
        kernel_size = k_known.data.shape[0]
    else:
        raise UsageError(f"unknown mode {mode!r}")

    arch = config.arch_for(s.shape, kernel_size).describe()

    def finish(diag, error=None):
        manifest = RunManifest(
            command="deblur", version=__version__, seed=config.seed,
            config={**_config_dict(config), "mode": mode,
                    "kernel_arg": str(kernel_arg)},
            arch=arch, inputs=inputs,
            outputs=sorted(set(paths) - {"manifest.json"}),
            duration_seconds=time.monotonic() - start)
        manifest.write(paths["manifest.json"])
        _write_diagnostics(paths["diagnostics.csv"], diag)

    try:
        if mode == "blind":
            u, k, diag = solve_blind(s, kernel_size, config)
        else:
            u, diag = solve_nonblind(s, k_known, config)
            k = k_known
    except SolverError as exc:
        finish(getattr(exc, "diagnostics",
                       {k: [] for k in ("iteration", "loss", "residual_g", "residual_h")}))
        raise
    save_image_png(paths["u.png"], u)
    save_image_f64(paths["u.f64"], u)
    save_kernel_txt(paths["k.txt"], k)
    save_kernel_png(paths["k.png"], k)
    finish(diag)
    return paths


def _config_dict(config):
    d = {}
    for f in fields(AdmmConfig):
        v = getattr(config, f.name)
        d[f.name] = list(v) if isinstance(v, tuple) else v
    return d


def cmd_evaluate(recovered_path, reference_path, kernel_est=None,
                 kernel_true=None, csv_path=None):
    """Compute PSNR/SSIM (and kernel error when both kernels are given);
    print one line and optionally append a CSV row."""
    a = load_image(recovered_path)
    b = load_image(reference_path)
    try:
        report = MetricReport(
            psnr=psnr(a, b),
            ssim=ssim(a, b),
            kernel_mse=(kernel_error(load_kernel_txt(kernel_est), load_kernel_txt(kernel_true))
                        if kernel_est and kernel_true else None),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    parts = [f"psnr_db={report.psnr:.4f}", f"ssim={report.ssim:.6f}"]
    if report.kernel_mse is not None:
        parts.append(f"kernel_mse={report.kernel_mse:.8g}")
    print("  ".join(parts))
    if csv_path:
        new = not os.path.exists(csv_path)
        with open(csv_path, "a", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(("recovered", "reference", "psnr", "ssim", "kernel_mse"))
            writer.writerow((recovered_path, reference_path, f"{report.psnr:.17g}",
                             f"{report.ssim:.17g}",
                             "" if report.kernel_mse is None else f"{report.kernel_mse:.17g}"))
    return report


def _build_parser():
    p = argparse.ArgumentParser(
        prog="tgvdeconv",
        description="Blind/non-blind image deconvolution with TGV and variational generator priors.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synthesize", help="blur a clean image into a test instance")
    ps.add_argument("clean", help="clean image path, or 'phantom' for the built-in scene")
    ps.add_argument("--kernel", required=True,
                    help="gaussian:K:sigma | motion:K:length:angle | identity:K | file:path")
    ps.add_argument("--noise-sigma", type=float, default=0.0)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--boundary", choices=("circular", "replicate"), default="circular")
    ps.add_argument("--out-dir", required=True)

    pd = sub.add_parser("deblur", help="recover the sharp image (and kernel, in blind mode)")
    pd.add_argument("blurred", help="blurred image path")
    pd.add_argument("--mode", choices=("blind", "nonblind"), required=True)
    pd.add_argument("--kernel", default=None, help="known kernel text file (nonblind)")
    pd.add_argument("--kernel-size", type=int, default=None, help="kernel support (blind)")
    pd.add_argument("--out-dir", required=True)
    _add_config_flags(pd)

    pe = sub.add_parser("evaluate", help="PSNR/SSIM (and kernel error) between two images")
    pe.add_argument("recovered")
    pe.add_argument("reference")
    pe.add_argument("--kernel-est", default=None)
    pe.add_argument("--kernel-true", default=None)
    pe.add_argument("--csv", default=None, help="append a CSV row here")

    pt = sub.add_parser("selftest", help="run the built-in property checks")
    pt.add_argument("--quiet", action="store_true")
    return p


def _dispatch(args):
    if args.command == "synthesize":
        cmd_synthesize(args.clean, args.kernel, args.noise_sigma, args.seed,
                       args.out_dir, boundary=args.boundary)
        return 0
    if args.command == "deblur":
        if args.mode == "blind":
            if args.kernel_size is None:
                raise UsageError("blind mode requires --kernel-size")
            kernel_arg = args.kernel_size
        else:
            if not args.kernel:
                raise UsageError("nonblind mode requires --kernel")
            kernel_arg = args.kernel
        config = build_config(args)
        cmd_deblur(args.blurred, args.mode, kernel_arg, config, args.out_dir)
        return 0
    if args.command == "evaluate":
        if bool(args.kernel_est) != bool(args.kernel_true):
            raise UsageError("--kernel-est and --kernel-true must be given together")
        cmd_evaluate(args.recovered, args.reference, args.kernel_est,
                     args.kernel_true, args.csv)
        return 0
    if args.command == "selftest":
        from . import selftest
        return 0 if selftest.run_all(verbose=not args.quiet) else 3
    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except SystemExit as exc:  # argparse --help / usage errors
        return 0 if exc.code in (0, None) else int(exc.code)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
