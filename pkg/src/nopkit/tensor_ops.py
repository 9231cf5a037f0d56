"""Dense tensor primitives: multichannel convolution, real FFTs, activations.

All arrays follow the layout batch x spatial... x channels: 1D fields are
(n, d, c) and 2D fields are (n, h, w, c).  Training tensors are float32,
the classical solvers work in float64; every operation preserves the dtype
of its input.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.special import ndtr

CIRCULAR = "circular"
ZERO = "zero"

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class TensorOpError(ValueError):
    """Raised on shape, channel, or configuration mismatches."""


@dataclass(frozen=True)
class ConvKernel:
    """Convolution kernel of size 1 or 3 per spatial axis.

    weights has shape (k,)*dim + (c_in, c_out); bias, when present, has
    length c_out.  Stride 2 implies kernel size 3 with one ring of padding,
    which halves each spatial extent (rounding up).
    """

    weights: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: str = CIRCULAR

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim < 3:
            raise TensorOpError("kernel weights need (k,)*dim + (c_in, c_out) axes")
        k = w.shape[0]
        dim = w.ndim - 2
        if dim not in (1, 2):
            raise TensorOpError(f"only 1D/2D kernels supported, got dim={dim}")
        if any(e != k for e in w.shape[:dim]):
            raise TensorOpError("kernel must be square across spatial axes")
        if k not in (1, 3):
            raise TensorOpError(f"kernel size must be 1 or 3, got {k}")
        if self.stride not in (1, 2):
            raise TensorOpError(f"stride must be 1 or 2, got {self.stride}")
        if self.stride == 2 and k != 3:
            raise TensorOpError("stride 2 requires kernel size 3")
        if self.padding not in (CIRCULAR, ZERO):
            raise TensorOpError(f"unknown padding {self.padding!r}")
        if self.padding == CIRCULAR and k != 3:
            raise TensorOpError("circular padding only applies to kernel size 3")
        if self.bias is not None and np.asarray(self.bias).shape != (w.shape[-1],):
            raise TensorOpError("bias length must equal c_out")

    @property
    def dim(self):
        return self.weights.ndim - 2

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def c_in(self):
        return self.weights.shape[-2]

    @property
    def c_out(self):
        return self.weights.shape[-1]


def _pad_spatial(x, dim, pad, mode):
    if pad == 0:
        return x
    width = [(0, 0)] + [(pad, pad)] * dim + [(0, 0)]
    if mode == CIRCULAR:
        return np.pad(x, width, mode="wrap")
    return np.pad(x, width, mode="constant")


def _out_extent(d, k, pad, stride):
    return (d + 2 * pad - k) // stride + 1


def _im2col(xp, k, stride, dim):
    """Flatten sliding windows of the padded input into gemm rows.

    Returns (cols, out_extents) with cols of shape
    (n * prod(out), c_in * k**dim); column order is (channel, tap...).
    """
    if dim == 1:
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
        win = win[:, ::stride]
        n, o1, c = win.shape[0], win.shape[1], win.shape[2]
        return win.reshape(n * o1, c * k), (o1,)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    n, o1, o2, c = win.shape[0], win.shape[1], win.shape[2], win.shape[3]
    return win.reshape(n * o1 * o2, c * k * k), (o1, o2)


def _weight_matrix(w, dim):
    """Reorder kernel axes to (c_in, tap...) x c_out to match _im2col."""
    if dim == 1:
        return w.transpose(1, 0, 2).reshape(-1, w.shape[-1])
    return w.transpose(2, 0, 1, 3).reshape(-1, w.shape[-1])


def conv(x, kernel):
    """Multichannel cross-correlation with the declared stride and padding.

    Stride 1 preserves the spatial extents; stride 2 produces ceil(d/2) per
    axis (kernel 3, one ring of padding).  Bias, when present, is added per
    output channel.
    """
    x = np.asarray(x)
    dim = kernel.dim
    if x.ndim != dim + 2:
        raise TensorOpError(f"expected {dim + 2}D input (batch, spatial, channels), got {x.ndim}D")
    if x.shape[-1] != kernel.c_in:
        raise TensorOpError(f"channel mismatch: input has {x.shape[-1]}, kernel expects {kernel.c_in}")
    k = kernel.size
    if any(e < k for e in x.shape[1:-1]):
        raise TensorOpError("spatial extents must be >= kernel size")
    pad = 1 if k == 3 else 0
    xp = _pad_spatial(x, dim, pad, kernel.padding)
    cols, out_ext = _im2col(xp, k, kernel.stride, dim)
    wmat = _weight_matrix(np.asarray(kernel.weights), dim)
    out = cols @ wmat.astype(cols.dtype, copy=False)
    out = out.reshape((x.shape[0],) + out_ext + (kernel.c_out,))
    if kernel.bias is not None:
        out = out + np.asarray(kernel.bias).astype(out.dtype, copy=False)
    return out


def _col2im(cols_grad, n, in_extents, k, stride, dim, padding, dtype):
    """Adjoint of _im2col: scatter flattened window values back to the input."""
    pad = 1 if k == 3 else 0
    padded = tuple(d + 2 * pad for d in in_extents)
    out_ext = tuple(_out_extent(d, k, pad, stride) for d in in_extents)
    buf = np.zeros((n,) + padded + (cols_grad.shape[1] // k**dim,), dtype=dtype)
    if dim == 1:
        g = cols_grad.reshape((n,) + out_ext + (-1, k))
        for t in range(k):
            stop = t + stride * (out_ext[0] - 1) + 1
            buf[:, t:stop:stride] += g[..., t]
    else:
        g = cols_grad.reshape((n,) + out_ext + (-1, k, k))
        for t1 in range(k):
            s1 = t1 + stride * (out_ext[0] - 1) + 1
            for t2 in range(k):
                s2 = t2 + stride * (out_ext[1] - 1) + 1
                buf[:, t1:s1:stride, t2:s2:stride] += g[..., t1, t2]
    if pad == 0:
        return buf
    if padding == ZERO:
        sl = (slice(None),) + (slice(1, -1),) * dim
        return np.ascontiguousarray(buf[sl])
    # circular: wrapped border contributions fold back onto the interior
    if dim == 1:
        core = buf[:, 1:-1].copy()
        core[:, -1] += buf[:, 0]
        core[:, 0] += buf[:, -1]
        return core
    core = buf[:, 1:-1, 1:-1].copy()
    core[:, -1, :] += buf[:, 0, 1:-1]
    core[:, 0, :] += buf[:, -1, 1:-1]
    core[:, :, -1] += buf[:, 1:-1, 0]
    core[:, :, 0] += buf[:, 1:-1, -1]
    core[:, -1, -1] += buf[:, 0, 0]
    core[:, -1, 0] += buf[:, 0, -1]
    core[:, 0, -1] += buf[:, -1, 0]
    core[:, 0, 0] += buf[:, -1, -1]
    return core


def conv_input_grad(g, kernel, in_extents):
    """Adjoint of conv with respect to its input (bias excluded).

    g carries c_out channels at the conv output extents; the result carries
    c_in channels at in_extents.
    """
    g = np.asarray(g)
    dim = kernel.dim
    if g.shape[-1] != kernel.c_out:
        raise TensorOpError(f"channel mismatch: got {g.shape[-1]}, kernel produces {kernel.c_out}")
    pad = 1 if kernel.size == 3 else 0
    expect = tuple(_out_extent(d, kernel.size, pad, kernel.stride) for d in in_extents)
    if tuple(g.shape[1:-1]) != expect:
        raise TensorOpError(f"cotangent extents {g.shape[1:-1]} incompatible with input extents {tuple(in_extents)}")
    wmat = _weight_matrix(np.asarray(kernel.weights), dim)
    flat = g.reshape(-1, kernel.c_out)
    cols_grad = flat @ wmat.T.astype(flat.dtype, copy=False)
    return _col2im(cols_grad, g.shape[0], tuple(in_extents), kernel.size, kernel.stride, dim, kernel.padding, g.dtype)


def conv_kernel_grad(x, g, kernel):
    """Adjoint of conv with respect to the kernel weights."""
    x = np.asarray(x)
    g = np.asarray(g)
    dim = kernel.dim
    k = kernel.size
    pad = 1 if k == 3 else 0
    xp = _pad_spatial(x, dim, pad, kernel.padding)
    cols, _ = _im2col(xp, k, kernel.stride, dim)
    gw = cols.T @ g.reshape(-1, kernel.c_out)
    c_in = kernel.c_in
    if dim == 1:
        return gw.reshape(c_in, k, kernel.c_out).transpose(1, 0, 2)
    return gw.reshape(c_in, k, k, kernel.c_out).transpose(1, 2, 0, 3)


def conv_transpose(x, kernel, target_extent):
    """Stride-2 transposed convolution: the exact adjoint of conv.

    target_extent gives the fine-grid extents (one per spatial axis); each
    must satisfy ceil(target/2) == input extent, i.e. target in {2d-1, 2d}.
    The input carries the kernel's c_out channels and the output its c_in.
    """
    x = np.asarray(x)
    if kernel.stride != 2:
        raise TensorOpError("conv_transpose requires a stride-2 kernel")
    target = tuple(int(t) for t in np.atleast_1d(target_extent))
    if len(target) != kernel.dim:
        raise TensorOpError(f"target_extent needs {kernel.dim} entries, got {len(target)}")
    for d_in, t in zip(x.shape[1:-1], target):
        if (t + 1) // 2 != d_in:
            raise TensorOpError(f"target extent {t} incompatible with input extent {d_in}")
    return conv_input_grad(x, kernel, target)


def spatial_axes(x):
    return tuple(range(1, x.ndim - 1))


def rfft(x):
    """Unnormalized forward real FFT per channel over the spatial axes.

    The last spatial axis is Hermitian-reduced to floor(d/2)+1 modes.
    """
    x = np.asarray(x)
    return sfft.rfftn(x, axes=spatial_axes(x))


def irfft(X, extent):
    """Inverse of rfft with 1/n normalization, returning a real tensor."""
    X = np.asarray(X)
    extent = tuple(int(e) for e in np.atleast_1d(extent))
    axes = spatial_axes(X)
    if len(extent) != len(axes):
        raise TensorOpError(f"extent needs {len(axes)} entries, got {len(extent)}")
    stored = tuple(X.shape[a] for a in axes)
    want = extent[:-1] + (extent[-1] // 2 + 1,)
    if stored != want:
        raise TensorOpError(f"stored modes {stored} do not match requested extent {extent}")
    return sfft.irfftn(X, s=extent, axes=axes)


def hermitian_weights(extent_last, dtype=np.float64):
    """Multiplicity of each Hermitian-reduced mode along the last spatial axis.

    Interior reduced modes represent a conjugate pair and count twice; mode 0
    and (for even extents) the Nyquist mode count once.
    """
    m = extent_last // 2 + 1
    w = np.full(m, 2.0, dtype=dtype)
    w[0] = 1.0
    if extent_last % 2 == 0:
        w[-1] = 1.0
    return w


def rfft_adjoint(G, extent):
    """Adjoint of rfft as a real-linear map: returns a real tensor of extent."""
    G = np.asarray(G)
    extent = tuple(int(e) for e in np.atleast_1d(extent))
    n = int(np.prod(extent))
    c = 1.0 / hermitian_weights(extent[-1], dtype=_real_dtype(G.dtype))
    return n * irfft(G * c[:, None], extent)


def irfft_adjoint(g, extent):
    """Adjoint of irfft as a real-linear map: returns Hermitian-layout modes."""
    g = np.asarray(g)
    extent = tuple(int(e) for e in np.atleast_1d(extent))
    n = int(np.prod(extent))
    w = hermitian_weights(extent[-1], dtype=g.dtype)
    return (w[:, None] / n) * rfft(g)


def _real_dtype(complex_dtype):
    return np.float32 if complex_dtype == np.complex64 else np.float64


def gelu(x):
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    x = np.asarray(x)
    return (x * ndtr(x)).astype(x.dtype, copy=False)


def gelu_grad(x):
    """Derivative Phi(x) + x * phi(x) of the exact GELU."""
    x = np.asarray(x)
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x.astype(np.float64) ** 2)
    return (ndtr(x) + x * phi).astype(x.dtype, copy=False)


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, 0)


def relu_grad(x):
    x = np.asarray(x)
    return (x > 0).astype(x.dtype)
