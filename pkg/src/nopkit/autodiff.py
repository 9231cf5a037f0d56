"""Reverse-mode tape over the dense tensor primitives.

A Tape records every primitive application in execution order together with
a closure computing the input cotangents; backward walks the entries in
reverse and accumulates gradients into the Param leaves.  One tape belongs
to one training step; recording and backward are single-threaded.

Complex values appear only as outputs of rfft (Hermitian-reduced layout);
their cotangents are carried as complex arrays whose real/imaginary parts
are the partials with respect to the stored real/imaginary components.
Self-conjugate modes (0 and Nyquist) count once in inner products and the
interior reduced modes twice, which is what the rfft/irfft adjoints in
tensor_ops encode.
"""

import numpy as np

from . import tensor_ops as T


class AutodiffError(ValueError):
    pass


class Var:
    """A value produced during a recorded forward pass."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = np.asarray(value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype


class Param(Var):
    """A named trainable leaf with a persistent gradient accumulator."""

    __slots__ = ("name", "grad")

    def __init__(self, name, value):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


class Tape:
    """Ordered record of primitive applications with their adjoints.

    With grad disabled the primitives still execute eagerly through the same
    code path but nothing is recorded and backward is unavailable.
    """

    def __init__(self, grad=True):
        self.grad = grad
        self.entries = []

    def _record(self, out_value, inputs, backward):
        out = Var(out_value)
        if self.grad:
            self.entries.append((out, inputs, backward))
        return out

    # -- elementwise / reduction primitives ---------------------------------

    def add(self, a, b):
        a, b = as_var(a), as_var(b)
        if a.shape != b.shape:
            raise AutodiffError(f"add shape mismatch: {a.shape} vs {b.shape}")
        return self._record(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a, b):
        a, b = as_var(a), as_var(b)
        if a.shape != b.shape:
            raise AutodiffError(f"subtract shape mismatch: {a.shape} vs {b.shape}")
        return self._record(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a, b):
        a, b = as_var(a), as_var(b)
        if a.shape != b.shape:
            raise AutodiffError(f"multiply shape mismatch: {a.shape} vs {b.shape}")
        av, bv = a.value, b.value
        return self._record(av * bv, (a, b), lambda g: (g * bv, g * av))

    def cmul(self, x, const):
        """Multiply by a constant array (no gradient through the constant)."""
        x = as_var(x)
        const = np.asarray(const)
        out = x.value * const
        if out.shape != x.shape:
            raise AutodiffError("cmul constant must broadcast without growing the input")
        return self._record(out, (x,), lambda g: (g * const,))

    def scale(self, x, alpha):
        return self.cmul(x, np.asarray(alpha, dtype=np.asarray(as_var(x).value).real.dtype))

    def sum_all(self, x):
        x = as_var(x)
        if np.iscomplexobj(x.value):
            raise AutodiffError("sum_all is defined for real tensors")
        shape, dtype = x.shape, x.dtype
        return self._record(
            np.sum(x.value), (x,), lambda g: (np.full(shape, g, dtype=dtype),)
        )

    # -- activations ---------------------------------------------------------

    def gelu(self, x):
        x = as_var(x)
        xv = x.value
        return self._record(T.gelu(xv), (x,), lambda g: (g * T.gelu_grad(xv),))

    def relu(self, x):
        x = as_var(x)
        xv = x.value
        return self._record(T.relu(xv), (x,), lambda g: (g * T.relu_grad(xv),))

    # -- convolution ---------------------------------------------------------

    def conv(self, x, weights, bias=None, stride=1, padding=T.CIRCULAR):
        x, weights = as_var(x), as_var(weights)
        bias = as_var(bias) if bias is not None else None
        kernel = T.ConvKernel(
            weights.value,
            bias.value if bias is not None else None,
            stride=stride,
            padding=padding,
        )
        out = T.conv(x.value, kernel)
        xv = x.value
        in_extents = xv.shape[1:-1]

        def backward(g):
            gx = T.conv_input_grad(g, kernel, in_extents)
            gw = T.conv_kernel_grad(xv, g, kernel)
            if bias is None:
                return (gx, gw)
            gb = g.sum(axis=tuple(range(g.ndim - 1)))
            return (gx, gw, gb)

        inputs = (x, weights) if bias is None else (x, weights, bias)
        return self._record(out, inputs, backward)

    def conv_transpose(self, x, weights, target_extent, padding=T.CIRCULAR):
        x, weights = as_var(x), as_var(weights)
        kernel = T.ConvKernel(weights.value, stride=2, padding=padding)
        out = T.conv_transpose(x.value, kernel, target_extent)
        xv = x.value

        def backward(g):
            gx = T.conv(g, T.ConvKernel(kernel.weights, stride=2, padding=padding))
            gw = T.conv_kernel_grad(g, xv, kernel)
            return (gx, gw)

        return self._record(out, (x, weights), backward)

    # -- Fourier primitives ---------------------------------------------------

    def rfft(self, x):
        x = as_var(x)
        extent = x.value.shape[1:-1]
        return self._record(T.rfft(x.value), (x,), lambda g: (T.rfft_adjoint(g, extent),))

    def irfft(self, X, extent):
        X = as_var(X)
        extent = tuple(int(e) for e in np.atleast_1d(extent))
        out = T.irfft(X.value, extent)
        return self._record(out, (X,), lambda g: (T.irfft_adjoint(g, extent),))

    def spectral_multiply(self, x, w_re, w_im, k_max):
        """Low-mode Fourier multiplier F^-1 (W . F x) with modes >= k_max zeroed.

        x is real with c channels; W = w_re + i w_im holds one dense c x c
        mixing matrix per retained mode: (k_max, c, c) in 1D and, in 2D,
        (2*k_max - 1, k_max, c, c) over the low-corner row/column block.
        """
        x, w_re, w_im = as_var(x), as_var(w_re), as_var(w_im)
        xv = x.value
        extent = xv.shape[1:-1]
        c = xv.shape[-1]
        if w_re.shape != w_im.shape:
            raise AutodiffError("spectral weight real/imag parts must share a shape")
        sel, block = _retained_block(extent, k_max)
        want = block + (c, c)
        if w_re.shape != want:
            raise AutodiffError(f"spectral weights shape {w_re.shape} != expected {want}")

        W = w_re.value + 1j * w_im.value
        X = T.rfft(xv)
        Xs = X[sel]
        Ys = np.einsum("...ij,n...j->n...i", W, Xs)
        Y = np.zeros_like(X)
        Y[sel] = Ys
        out = T.irfft(Y, extent)

        n = int(np.prod(extent))
        herm = T.hermitian_weights(extent[-1])[:, None]

        def backward(g):
            Gh = T.rfft(g)
            # input cotangent: mode weights cancel between the two adjoints
            Zs = np.einsum("...ji,n...j->n...i", np.conj(W), Gh[sel])
            Z = np.zeros_like(Gh)
            Z[sel] = Zs
            gx = T.irfft(Z, extent)
            # weight cotangent keeps the Hermitian multiplicity factor
            Gw = (herm / n) * Gh
            GW = np.einsum("n...i,n...j->...ij", Gw[sel], np.conj(Xs))
            return (gx, GW.real.astype(w_re.dtype, copy=False), GW.imag.astype(w_im.dtype, copy=False))

        return self._record(out, (x, w_re, w_im), backward)

    # -- dispatch and reverse pass --------------------------------------------

    def apply(self, primitive, *args, **kwargs):
        """Record a primitive by name; raises on unsupported names."""
        fns = {
            "add": self.add,
            "subtract": self.sub,
            "multiply": self.mul,
            "cmul": self.cmul,
            "scale": self.scale,
            "sum_all": self.sum_all,
            "gelu": self.gelu,
            "relu": self.relu,
            "conv": self.conv,
            "conv_transpose": self.conv_transpose,
            "rfft": self.rfft,
            "irfft": self.irfft,
            "spectral_multiply": self.spectral_multiply,
        }
        if primitive not in fns:
            raise AutodiffError(f"unsupported primitive {primitive!r}")
        return fns[primitive](*args, **kwargs)

    def backward(self, seed, root=None):
        """Accumulate d(seed . output)/d(param) into every reachable Param.grad."""
        if not self.grad:
            raise AutodiffError("tape was created with grad disabled")
        if not self.entries:
            raise AutodiffError("empty tape")
        if root is None:
            root = self.entries[-1][0]
        seed = np.asarray(seed)
        if seed.shape != root.value.shape:
            raise AutodiffError(f"seed shape {seed.shape} != output shape {root.value.shape}")
        cotangent = {id(root): seed}
        for out, inputs, backward in reversed(self.entries):
            g = cotangent.pop(id(out), None)
            if g is None:
                continue
            for v, gi in zip(inputs, backward(g)):
                if gi is None:
                    continue
                if isinstance(v, Param):
                    v.grad = v.grad + gi
                else:
                    key = id(v)
                    if key in cotangent:
                        cotangent[key] = cotangent[key] + gi
                    else:
                        cotangent[key] = gi


def _retained_block(extent, k_max):
    """Index selector and block shape for the retained low-mode set.

    1D: modes k in [0, k_max) of the Hermitian-reduced axis.  2D: rows
    k1 in [0, k_max) union (d1 - k_max, d1) and columns k2 in [0, k_max).
    """
    k_max = int(k_max)
    if k_max < 1:
        raise AutodiffError("k_max must be >= 1")
    if len(extent) == 1:
        m = extent[0] // 2 + 1
        if k_max > m:
            raise AutodiffError(f"k_max={k_max} out of range for extent {extent[0]} ({m} stored modes)")
        sel = (slice(None), slice(0, k_max))
        return sel, (k_max,)
    if len(extent) == 2:
        d1, d2 = extent
        m2 = d2 // 2 + 1
        if k_max > m2:
            raise AutodiffError(f"k_max={k_max} out of range for last extent {d2} ({m2} stored modes)")
        if 2 * k_max - 1 > d1:
            raise AutodiffError(f"k_max={k_max} out of range for first extent {d1}")
        rows = np.concatenate([np.arange(k_max), np.arange(d1 - k_max + 1, d1)])
        sel = (slice(None), rows[:, None], np.arange(k_max)[None, :])
        return sel, (2 * k_max - 1, k_max)
    raise AutodiffError("spectral_multiply supports 1 or 2 spatial axes")


def zero_grads(params):
    for p in params:
        p.zero_grad()
