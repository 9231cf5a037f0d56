"""Independent reference implementations used to pin expected test values.

Everything here is deliberately naive (loops, summation DFTs, closed-form
series) and never shares code with the library paths it checks.
"""

import numpy as np


def naive_conv1d(x, w, bias=None, stride=1, padding="circular"):
    """Triple-loop 1D cross-correlation. x: (n, d, ci), w: (k, ci, co)."""
    n, d, ci = x.shape
    k, _, co = w.shape
    pad = 1 if k == 3 else 0
    out_d = (d + 2 * pad - k) // stride + 1
    out = np.zeros((n, out_d, co), dtype=np.float64)
    for b in range(n):
        for j in range(out_d):
            for t in range(k):
                src = j * stride + t - pad
                if padding == "circular":
                    xv = x[b, src % d]
                elif 0 <= src < d:
                    xv = x[b, src]
                else:
                    continue
                for o in range(co):
                    out[b, j, o] += float(np.dot(xv, w[t, :, o]))
    if bias is not None:
        out += bias
    return out


def naive_conv2d(x, w, bias=None, stride=1, padding="circular"):
    """Loop 2D cross-correlation. x: (n, h, wd, ci), w: (k, k, ci, co)."""
    n, h, wd, ci = x.shape
    k, _, _, co = w.shape
    pad = 1 if k == 3 else 0
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, oh, ow, co), dtype=np.float64)
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                for t1 in range(k):
                    for t2 in range(k):
                        si = i * stride + t1 - pad
                        sj = j * stride + t2 - pad
                        if padding == "circular":
                            xv = x[b, si % h, sj % wd]
                        elif 0 <= si < h and 0 <= sj < wd:
                            xv = x[b, si, sj]
                        else:
                            continue
                        out[b, i, j] += xv @ w[t1, t2]
    if bias is not None:
        out += bias
    return out


def dft_matrix(d):
    """Full unnormalized DFT matrix by direct summation."""
    j = np.arange(d)
    return np.exp(-2j * np.pi * np.outer(j, j) / d)


def summation_rfft(x):
    """Hermitian-reduced DFT of a 1D signal by direct summation."""
    d = len(x)
    m = d // 2 + 1
    return dft_matrix(d)[:m] @ np.asarray(x, dtype=np.complex128)


def naive_spectral_multiply_1d(x, w_re, w_im, k_max):
    """Low-mode multiplier via full summation DFTs.

    x: (n, d, c); W: (k_max, c, c).  Retains modes k < k_max of the
    Hermitian-reduced spectrum.  Self-conjugate modes (0 and, for even d,
    the Nyquist mode when retained) keep only the real part of the product,
    matching what a complex-to-real inverse transform reads; the other
    retained modes are mirrored conjugately so the output is real.
    """
    n, d, c = x.shape
    F = dft_matrix(d)
    Finv = np.conj(F).T / d
    W = (w_re + 1j * w_im).astype(np.complex128)
    out = np.zeros_like(x, dtype=np.float64)
    for b in range(n):
        xh = F @ x[b].astype(np.complex128)
        yh = np.zeros_like(xh)
        for k in range(k_max):
            prod = W[k] @ xh[k]
            if k == 0 or 2 * k == d:
                yh[k] = prod.real
            else:
                yh[k] = prod
                yh[d - k] = np.conj(prod)
        out[b] = (Finv @ yh).real
    return out


def _hermitian_project_column(col):
    """Keep the part of a full-axis mode column that survives a C2R read."""
    flipped = np.conj(col[::-1])
    flipped = np.concatenate([flipped[-1:], flipped[:-1]])  # index k -> (d-k) % d
    return 0.5 * (col + flipped)


def naive_spectral_multiply_2d(x, w_re, w_im, k_max):
    """2D low-corner-block multiplier via full summation DFTs.

    Retained rows are k1 in [0, k_max) together with (d-k_max, d); columns
    are k2 in [0, k_max).  W has shape (2*k_max-1, k_max, c, c), rows laid
    out as [0..k_max-1, d-k_max+1..d-1].  Self-conjugate columns (0 and, if
    retained, the Nyquist column) are Hermitian-projected along the first
    axis, matching a complex-to-real inverse read of the stored layout.
    """
    n, d1, d2, c = x.shape
    F1, F2 = dft_matrix(d1), dft_matrix(d2)
    W = (w_re + 1j * w_im).astype(np.complex128)
    rows = list(range(k_max)) + list(range(d1 - k_max + 1, d1))
    edge_cols = [0]
    if d2 % 2 == 0 and k_max == d2 // 2 + 1:
        edge_cols.append(d2 // 2)
    out = np.zeros_like(x, dtype=np.float64)
    for b in range(n):
        xh = np.einsum("ka,lb,abc->klc", F1, F2, x[b].astype(np.complex128))
        yh = np.zeros_like(xh)
        for ri, k1 in enumerate(rows):
            for k2 in range(k_max):
                yh[k1, k2] = W[ri, k2] @ xh[k1, k2]
        for col in edge_cols:
            yh[:, col] = _hermitian_project_column(yh[:, col].copy())
        for ri, k1 in enumerate(rows):
            for k2 in range(1, k_max):
                if 2 * k2 == d2:
                    continue
                yh[(d1 - k1) % d1, d2 - k2] = np.conj(yh[k1, k2])
        inv1 = np.conj(F1).T / d1
        inv2 = np.conj(F2).T / d2
        out[b] = np.einsum("ka,lb,abc->klc", inv1, inv2, yh).real
    return out


def central_difference(f, theta, h):
    """Scalar central finite difference of f at theta with step h."""
    return (f(theta + h) - f(theta - h)) / (2.0 * h)


def cole_hopf_burgers(a_fn, antideriv_fn, nu, t, d):
    """Burgers solution at time t via the Cole-Hopf transform.

    a_fn evaluates the initial condition and antideriv_fn its exact
    antiderivative on [0, 1).  The transformed heat equation is propagated
    exactly mode-by-mode on a length-d grid, then u = -2 nu phi_x / phi.
    """
    x = np.arange(d) / d
    phi0 = np.exp(-antideriv_fn(x) / (2.0 * nu))
    ph = np.fft.fft(phi0)
    k = np.fft.fftfreq(d, 1.0 / d)
    decay = np.exp(-nu * (2.0 * np.pi * k) ** 2 * t)
    ph_t = ph * decay
    phi = np.fft.ifft(ph_t).real
    phix = np.fft.ifft(2j * np.pi * k * ph_t).real
    return -2.0 * nu * phix / phi


def darcy_unit_square_center(terms=400):
    """Center value of -lap(u) = 1 with zero Dirichlet data, by double series."""
    total = 0.0
    for m in range(1, 2 * terms, 2):
        for n in range(1, 2 * terms, 2):
            total += (
                16.0
                * np.sin(m * np.pi / 2)
                * np.sin(n * np.pi / 2)
                / (np.pi**4 * m * n * (m * m + n * n))
            )
    return total
