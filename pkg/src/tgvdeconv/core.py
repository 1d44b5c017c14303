"""Dense 2-D fields, convolution, and the discrete difference operators.

Everything downstream (the TGV splitting, the generator losses, the solver)
computes on the four value types defined here.  Conventions, fixed
project-wide:

* x is the row index (axis 0), y is the column index (axis 1);
* D1/D2 are forward differences along x/y;
* ``circular`` boundary wraps; ``replicate`` uses the forward difference
  everywhere except the last row/column, where the one-sided backward
  difference is taken instead, so that D maps affine fields to constants and
  constants to zero (this is what lets second-order TGV annihilate affine
  images exactly);
* all arithmetic is float64.
"""

import numpy as np

from . import backend

BOUNDARY_MODES = ("circular", "replicate")

KERNEL_SUM_TOL = 1e-9


class NumericalError(RuntimeError):
    """A computation produced non-finite values or failed to make progress."""


class SolverError(NumericalError):
    """An iterative solve diverged or reached a non-finite state."""


def _check_boundary(boundary):
    if boundary not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary mode {boundary!r}; expected one of {BOUNDARY_MODES}")


def _as_field(data, name):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-D array with positive dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return np.ascontiguousarray(arr)


class Image:
    """H x W scalar field (float64, finite).

    Intensity range [0,1] is a boundary contract for observations and final
    outputs, not an invariant of the type — solver iterates may exceed it.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = _as_field(data, "Image")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def require_unit_range(self, what="image"):
        """Enforce the [0,1] module-boundary contract for observed/clean images."""
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < -1e-12 or hi > 1.0 + 1e-12:
            raise ValueError(f"{what} samples must lie in [0,1]; found range [{lo:.6g}, {hi:.6g}]")
        return self

    def __repr__(self):
        return f"Image({self.height}x{self.width})"


class Kernel:
    """Odd-sized K x K blur kernel: nonnegative, sums to 1 within 1e-9."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = _as_field(data, "Kernel")
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"Kernel must be square, got {arr.shape}")
        if arr.shape[0] % 2 != 1:
            raise ValueError(f"Kernel size must be odd, got {arr.shape[0]}")
        if np.any(arr < 0):
            raise ValueError("Kernel weights must be nonnegative")
        total = float(arr.sum())
        if abs(total - 1.0) > KERNEL_SUM_TOL:
            raise ValueError(f"Kernel weights must sum to 1 within {KERNEL_SUM_TOL}, got {total!r}")
        self.data = arr

    @property
    def size(self):
        return self.data.shape[0]

    @staticmethod
    def identity(size=1):
        k = np.zeros((size, size))
        k[size // 2, size // 2] = 1.0
        return Kernel(k)

    @staticmethod
    def normalized(data):
        """Build a Kernel from nonnegative weights, renormalizing the sum."""
        arr = np.asarray(data, dtype=np.float64)
        total = arr.sum()
        if total <= 0:
            raise ValueError("cannot normalize kernel with nonpositive total mass")
        return Kernel(arr / total)

    def __repr__(self):
        return f"Kernel({self.size}x{self.size})"


class VectorField:
    """Two-component field (c1, c2) on the image grid; holds q, g, g~ and Du."""

    __slots__ = ("c1", "c2")

    def __init__(self, c1, c2):
        self.c1 = _as_field(c1, "VectorField.c1")
        self.c2 = _as_field(c2, "VectorField.c2")
        if self.c1.shape != self.c2.shape:
            raise ValueError(f"VectorField planes disagree: {self.c1.shape} vs {self.c2.shape}")

    @property
    def shape(self):
        return self.c1.shape

    @staticmethod
    def zeros(shape):
        return VectorField(np.zeros(shape), np.zeros(shape))

    def __repr__(self):
        return f"VectorField({self.shape[0]}x{self.shape[1]})"


class SymTensorField:
    """Per-pixel symmetric 2x2 matrices: planes t11, t22 and the off-diagonal
    t12 stored once.  Holds h, h~ and B(q)."""

    __slots__ = ("t11", "t22", "t12")

    def __init__(self, t11, t22, t12):
        self.t11 = _as_field(t11, "SymTensorField.t11")
        self.t22 = _as_field(t22, "SymTensorField.t22")
        self.t12 = _as_field(t12, "SymTensorField.t12")
        if not (self.t11.shape == self.t22.shape == self.t12.shape):
            raise ValueError("SymTensorField planes disagree in shape")

    @property
    def shape(self):
        return self.t11.shape

    @staticmethod
    def zeros(shape):
        z = np.zeros(shape)
        return SymTensorField(z.copy(), z.copy(), z.copy())

    def __repr__(self):
        return f"SymTensorField({self.shape[0]}x{self.shape[1]})"


# ---------------------------------------------------------------------------
# difference-operator index machinery
#
# Each 1-D forward difference is represented by index pairs (a, b) with
# (D u)[i] = u[a[i]] - u[b[i]].  The adjoint is then the literal transpose
# (scatter-add of +v at a and -v at b), so adjointness holds to machine
# precision by construction, for every boundary mode and axis length.
# ---------------------------------------------------------------------------

def diff_index_pairs(n, boundary):
    """Index pairs (a, b) of the 1-D forward difference on n samples."""
    _check_boundary(boundary)
    idx = np.arange(n, dtype=np.intp)
    if n == 1:
        return idx.copy(), idx.copy()  # degenerate axis: D = 0
    if boundary == "circular":
        a = (idx + 1) % n
        b = idx.copy()
    else:  # replicate: one-sided backward difference at the end
        a = np.minimum(idx + 1, n - 1)
        b = idx.copy()
        b[n - 1] = n - 2
    return a, b


def diff_axis(u, axis, boundary):
    """Forward difference of a 2-D array along the given axis."""
    a, b = diff_index_pairs(u.shape[axis], boundary)
    if axis == 0:
        return u[a, :] - u[b, :]
    return u[:, a] - u[:, b]


def diff_axis_adjoint(v, axis, boundary):
    """Exact transpose of diff_axis (scatter-add through the index pairs)."""
    a, b = diff_index_pairs(v.shape[axis], boundary)
    out = np.zeros_like(v)
    if axis == 0:
        np.add.at(out, a, v)
        np.subtract.at(out, b, v)
    else:
        np.add.at(out.T, a, v.T)
        np.subtract.at(out.T, b, v.T)
    return out


def grad(u, boundary="circular"):
    """Discrete gradient Du = [D1 u; D2 u] (forward differences)."""
    arr = u.data if isinstance(u, Image) else np.asarray(u, dtype=np.float64)
    _check_boundary(boundary)
    return VectorField(diff_axis(arr, 0, boundary), diff_axis(arr, 1, boundary))


def grad_adjoint(v, boundary="circular"):
    """Adjoint of grad: <Du, v> = <u, grad_adjoint(v)> exactly."""
    _check_boundary(boundary)
    out = diff_axis_adjoint(v.c1, 0, boundary) + diff_axis_adjoint(v.c2, 1, boundary)
    return Image(out)


def sym_deriv(q, boundary="circular"):
    """Symmetrized derivative B(q): t11 = D1 q1, t22 = D2 q2,
    t12 = (D2 q1 + D1 q2)/2."""
    _check_boundary(boundary)
    t11 = diff_axis(q.c1, 0, boundary)
    t22 = diff_axis(q.c2, 1, boundary)
    t12 = 0.5 * (diff_axis(q.c1, 1, boundary) + diff_axis(q.c2, 0, boundary))
    return SymTensorField(t11, t22, t12)


def sym_deriv_adjoint(w, boundary="circular"):
    """Adjoint of sym_deriv under the plain inner product on the three stored
    planes (t11, t22, t12 each counted once):

        c1 = D1^T t11 + (1/2) D2^T t12
        c2 = D2^T t22 + (1/2) D1^T t12
    """
    _check_boundary(boundary)
    c1 = diff_axis_adjoint(w.t11, 0, boundary) + 0.5 * diff_axis_adjoint(w.t12, 1, boundary)
    c2 = diff_axis_adjoint(w.t22, 1, boundary) + 0.5 * diff_axis_adjoint(w.t12, 0, boundary)
    return VectorField(c1, c2)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def pad_index_maps(shape, ksize, boundary):
    """Per-axis index maps realizing the boundary extension for a centered
    "same" convolution: length H+K-1 / W+K-1, values in [0,H) / [0,W)."""
    _check_boundary(boundary)
    H, W = shape
    pad = ksize // 2
    rows = np.arange(-pad, H + pad, dtype=np.intp)
    cols = np.arange(-pad, W + pad, dtype=np.intp)
    if boundary == "circular":
        return rows % H, cols % W
    return np.clip(rows, 0, H - 1), np.clip(cols, 0, W - 1)


def conv_same_arr(u, k, boundary):
    """Array-level centered convolution (true convolution, kernel flipped)."""
    H, W = u.shape
    K = k.shape[0]
    if K > min(H, W):
        raise ValueError(f"kernel size {K} exceeds min image dimension {min(H, W)}")
    pi_r, pi_c = pad_index_maps((H, W), K, boundary)
    return backend.conv_same(
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(k, dtype=np.float64),
        pi_r, pi_c,
    )


def _conv_fft_circular(u, k):
    H, W = u.shape
    K = k.shape[0]
    pad = K // 2
    ke = np.zeros((H, W))
    ke[:K, :K] = k
    ke = np.roll(np.roll(ke, -pad, axis=0), -pad, axis=1)
    return np.real(np.fft.ifft2(np.fft.fft2(u) * np.fft.fft2(ke)))


def convolve(u, k, boundary="circular", method="direct"):
    """Blur an image with a kernel: the forward model of observation = kernel
    (*) image + noise.  Output has the input's dimensions (kernel centered).

    ``method="fft"`` is a frequency-domain path available for the circular
    boundary only; it agrees with the direct path within 1e-9.
    """
    _check_boundary(boundary)
    ud = u.data if isinstance(u, Image) else np.asarray(u, dtype=np.float64)
    kd = k.data if isinstance(k, Kernel) else np.asarray(k, dtype=np.float64)
    if kd.shape[0] > min(ud.shape):
        raise ValueError(f"kernel size {kd.shape[0]} exceeds min image dimension {min(ud.shape)}")
    if method == "direct":
        out = conv_same_arr(ud, kd, boundary)
    elif method == "fft":
        if boundary != "circular":
            raise ValueError("fft convolution path requires the circular boundary")
        out = _conv_fft_circular(ud, kd)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return Image(out)


def inner(a, b):
    """Inner product between same-kind fields (planes counted once each)."""
    if isinstance(a, Image):
        return float(np.sum(a.data * b.data))
    if isinstance(a, VectorField):
        return float(np.sum(a.c1 * b.c1) + np.sum(a.c2 * b.c2))
    if isinstance(a, SymTensorField):
        return float(np.sum(a.t11 * b.t11) + np.sum(a.t22 * b.t22) + np.sum(a.t12 * b.t12))
    return float(np.sum(np.asarray(a) * np.asarray(b)))
