"""Benchmark data generation: Gaussian random fields, classical solvers,
subsampling, and dataset assembly.

Solvers run in float64 on the native grids (Burgers 8192, KdV 1024, Darcy
421x421, Navier-Stokes 64x64); datasets are stored in float32 after strided
subsampling.  Every sample draws from its own (seed, index) substream, so
regeneration is bitwise reproducible and independent of batching.

References for the stiff integrator:
  Kassam & Trefethen, Fourth-order time-stepping for stiff PDEs,
  SIAM J. Sci. Comput. 26 (2005); Cox & Matthews, JCP 176 (2002).
"""

from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class GenerationError(RuntimeError):
    """A solver blew up or failed to converge during data generation."""


_CHUNK = 16  # fixed batch for vectorized solves; constant so outputs never depend on it

EQUATIONS = ("burgers", "kdv", "darcy", "ns")

NATIVE_RESOLUTION = {"burgers": 8192, "kdv": 1024, "darcy": 421, "ns": 64}

DEFAULT_DT = {"burgers": 1e-4, "kdv": 2e-5, "ns": 1e-3}


@dataclass(frozen=True)
class GrfSpec:
    """Gaussian measure N(0, sigma0 (-Lap + tau I)^(-gamma)) on [0,1]^dim."""

    sigma0: float
    tau: float
    gamma: float
    boundary: str  # "periodic" | "neumann-zero"
    extent: tuple

    def __post_init__(self):
        object.__setattr__(self, "extent", tuple(int(e) for e in np.atleast_1d(self.extent)))
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.gamma <= len(self.extent) / 2:
            raise ValueError("gamma must exceed dim/2 for a trace-class covariance")
        if self.boundary not in ("periodic", "neumann-zero"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def dim(self):
        return len(self.extent)


GRF_SPECS = {
    "burgers": lambda d: GrfSpec(625.0, 25.0, 2.0, "periodic", (d,)),
    "kdv": lambda d: GrfSpec(7.0**4, 7.0**2, 2.5, "periodic", (d,)),
    "darcy": lambda d: GrfSpec(1.0, 9.0, 2.0, "neumann-zero", (d, d)),
    "ns": lambda d: GrfSpec(7.0**1.5, 49.0, 2.5, "periodic", (d, d)),
}


def sample_rng(seed, index):
    """Independent substream for sample `index` of a dataset seeded by `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def grf_sample(spec, rng):
    """One draw by spectral synthesis; returns float64 on the grid.

    Periodic fields use the Fourier eigenbasis with -Lap eigenvalue
    4 pi^2 |k|^2; zero-Neumann fields use the cosine eigenbasis on the
    endpoint-inclusive grid with eigenvalue pi^2 |k|^2.
    """
    if spec.boundary == "periodic":
        if spec.dim == 1:
            return _periodic_grf_1d(spec, rng)
        return _periodic_grf_2d(spec, rng)
    if spec.dim != 2:
        raise ValueError("neumann-zero sampling is implemented on 2D grids")
    return _neumann_grf_2d(spec, rng)


def _periodic_eigs(spec, ksq):
    return spec.sigma0 * (4.0 * np.pi**2 * ksq + spec.tau) ** (-spec.gamma)


def _periodic_grf_1d(spec, rng):
    d = spec.extent[0]
    m = d // 2 + 1
    lam = _periodic_eigs(spec, np.arange(m, dtype=np.float64) ** 2)
    z = rng.standard_normal((2, m))
    coeff = np.sqrt(lam / 2.0) * (z[0] + 1j * z[1])
    coeff[0] = np.sqrt(lam[0]) * z[0, 0]
    if d % 2 == 0:
        coeff[-1] = np.sqrt(lam[-1]) * z[0, -1]
    return d * sfft.irfft(coeff, d)


def _periodic_grf_2d(spec, rng):
    d = spec.extent[0]
    k = sfft.fftfreq(d, 1.0 / d)
    lam = _periodic_eigs(spec, k[:, None] ** 2 + k[None, :] ** 2)
    z = rng.standard_normal((2, d, d))
    g = (z[0] + 1j * z[1]) / np.sqrt(2.0)
    flipped = np.roll(np.conj(g[::-1, ::-1]), (1, 1), axis=(0, 1))
    herm = (g + flipped) / np.sqrt(2.0)
    return (d * d * sfft.ifft2(np.sqrt(lam) * herm)).real


def _neumann_grf_2d(spec, rng):
    s = spec.extent[0]
    k = np.arange(s, dtype=np.float64)
    lam = spec.sigma0 * (np.pi**2 * (k[:, None] ** 2 + k[None, :] ** 2) + spec.tau) ** (-spec.gamma)
    amp = np.sqrt(lam)
    amp[1:, :] *= np.sqrt(2.0)
    amp[:, 1:] *= np.sqrt(2.0)
    coeff = amp * rng.standard_normal((s, s))
    basis = np.cos(np.pi * np.outer(np.arange(s), k) / (s - 1))
    return basis @ coeff @ basis.T


def push_forward_darcy(g):
    """Pointwise map to the two-phase coefficient: positive -> 12, else 3."""
    return np.where(np.asarray(g) > 0, 12.0, 3.0)


# -- stiff spectral integrator ------------------------------------------------


class Etdrk4:
    """Exponential time differencing RK4 for v' = L v + N(v) in mode space.

    The phi-function coefficients are evaluated by averaging over a unit
    circle of contour points around each dt*L entry, which handles real and
    imaginary spectra alike.
    """

    def __init__(self, lin, nonlin, dt, n_contour=32):
        self.nonlin = nonlin
        self.dt = dt
        self.exp_full = np.exp(dt * lin)
        self.exp_half = np.exp(0.5 * dt * lin)
        r = np.exp(2j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
        lr = dt * lin[:, None] + r[None, :]
        elr = np.exp(lr)
        self.q = dt * np.mean((np.exp(lr / 2.0) - 1.0) / lr, axis=1)
        self.f1 = dt * np.mean((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr**2)) / lr**3, axis=1)
        self.f2 = dt * np.mean((2.0 + lr + elr * (lr - 2.0)) / lr**3, axis=1)
        self.f3 = dt * np.mean((-4.0 - 3.0 * lr - lr**2 + elr * (4.0 - lr)) / lr**3, axis=1)

    def step(self, v):
        n0 = self.nonlin(v)
        a = self.exp_half * v + self.q * n0
        na = self.nonlin(a)
        b = self.exp_half * v + self.q * na
        nb = self.nonlin(b)
        c = self.exp_half * a + self.q * (2.0 * nb - n0)
        nc = self.nonlin(c)
        return self.exp_full * v + self.f1 * n0 + 2.0 * self.f2 * (na + nb) + self.f3 * nc

    def run(self, v, n_steps):
        for _ in range(n_steps):
            v = self.step(v)
        return v


def _periodic_wavenumbers(d):
    """(k_lin, k_der): 2 pi k for even-order terms and for odd derivatives
    (Nyquist zeroed in the latter)."""
    k = 2.0 * np.pi * np.arange(d // 2 + 1, dtype=np.float64)
    k_der = k.copy()
    if d % 2 == 0:
        k_der[-1] = 0.0
    return k, k_der


def _n_steps(t_final, dt):
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"dt={dt} does not divide t_final={t_final}")
    return n


def _check_finite(u, what):
    if not np.all(np.isfinite(u)):
        raise GenerationError(f"{what} produced non-finite values (blowup)")


def solve_burgers(a, nu=0.1, t_final=1.0, dt=1e-4, workers=1):
    """Viscous Burgers u_t + (u^2/2)_x = nu u_xx on the periodic unit interval.

    a: (d,) or (n, d) initial values on the uniform grid; returns u(., t_final)
    with the same shape.  Fourier pseudospectral in space, ETDRK4 in time.
    """
    a = np.asarray(a, dtype=np.float64)
    squeeze = a.ndim == 1
    u = np.atleast_2d(a)
    d = u.shape[-1]
    k_lin, k_der = _periodic_wavenumbers(d)
    lin = -nu * k_lin**2

    def nonlin(vhat):
        w = sfft.irfft(vhat, d, axis=-1, workers=workers)
        return -0.5j * k_der * sfft.rfft(w * w, axis=-1, workers=workers)

    stepper = Etdrk4(lin, nonlin, dt)
    vhat = stepper.run(sfft.rfft(u, axis=-1, workers=workers).astype(np.complex128), _n_steps(t_final, dt))
    out = sfft.irfft(vhat, d, axis=-1, workers=workers)
    _check_finite(out, "burgers solve")
    return out[0] if squeeze else out


def solve_kdv(a, t_final=1.0, dt=2e-5, workers=1):
    """KdV u_t = -0.5 u u_x - u_xxx on the periodic unit interval.

    The dispersive term is handled exactly inside the exponential integrator;
    the quadratic term uses the conservative form -0.25 (u^2)_x, which keeps
    the zero mode (mass) constant to machine precision.
    """
    a = np.asarray(a, dtype=np.float64)
    squeeze = a.ndim == 1
    u = np.atleast_2d(a)
    d = u.shape[-1]
    _, k_der = _periodic_wavenumbers(d)
    lin = 1j * k_der**3

    def nonlin(vhat):
        w = sfft.irfft(vhat, d, axis=-1, workers=workers)
        return -0.25j * k_der * sfft.rfft(w * w, axis=-1, workers=workers)

    stepper = Etdrk4(lin, nonlin, dt)
    vhat = stepper.run(sfft.rfft(u, axis=-1, workers=workers).astype(np.complex128), _n_steps(t_final, dt))
    out = sfft.irfft(vhat, d, axis=-1, workers=workers)
    _check_finite(out, "kdv solve")
    return out[0] if squeeze else out


def _darcy_system(coef, forcing):
    """Assemble the 5-point flux system with harmonic face coefficients."""
    s = coef.shape[0]
    h = 1.0 / (s - 1)
    interior = coef[1:-1, 1:-1]

    def harmonic(a, b):
        return 2.0 * a * b / (a + b)

    a_e = harmonic(interior, coef[1:-1, 2:])
    a_w = harmonic(interior, coef[1:-1, :-2])
    a_s = harmonic(interior, coef[2:, 1:-1])
    a_n = harmonic(interior, coef[:-2, 1:-1])

    ni = s - 2
    n = ni * ni
    idx = np.arange(n).reshape(ni, ni)
    rows, cols, vals = [], [], []

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append((a_e + a_w + a_s + a_n).ravel())

    rows.append(idx[:, :-1].ravel())
    cols.append(idx[:, 1:].ravel())
    vals.append(-a_e[:, :-1].ravel())

    rows.append(idx[:, 1:].ravel())
    cols.append(idx[:, :-1].ravel())
    vals.append(-a_w[:, 1:].ravel())

    rows.append(idx[:-1, :].ravel())
    cols.append(idx[1:, :].ravel())
    vals.append(-a_s[:-1, :].ravel())

    rows.append(idx[1:, :].ravel())
    cols.append(idx[:-1, :].ravel())
    vals.append(-a_n[1:, :].ravel())

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    f = np.broadcast_to(np.asarray(forcing, dtype=np.float64), (s, s))
    b = (h * h) * f[1:-1, 1:-1].ravel()
    return A, b


def solve_darcy(coef, forcing=1.0, rtol=1e-10):
    """-div(a grad u) = f on the unit square, u = 0 on the boundary.

    Second-order 5-point flux scheme on the endpoint-inclusive grid with
    harmonic-mean face coefficients; conjugate gradients preconditioned by
    an algebraic-multigrid V-cycle, solved to the given relative residual.
    """
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim != 2 or coef.shape[0] != coef.shape[1]:
        raise ValueError("coefficient field must be square")
    if np.any(coef <= 0):
        raise ValueError("coefficient field must be positive")
    A, b = _darcy_system(coef, forcing)
    ml = pyamg.ruge_stuben_solver(A, max_coarse=64)
    M = ml.aspreconditioner(cycle="V")
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=2000, M=M)
    if info != 0:
        raise GenerationError(f"darcy CG failed to converge (info={info})")
    resid = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    if resid > 10 * rtol:
        raise GenerationError(f"darcy CG residual {resid:.2e} above tolerance")
    s = coef.shape[0]
    u = np.zeros((s, s), dtype=np.float64)
    u[1:-1, 1:-1] = x.reshape(s - 2, s - 2)
    return u


def _ns_wavenumbers(d):
    k1 = 2.0 * np.pi * sfft.fftfreq(d, 1.0 / d)[:, None]
    k2 = 2.0 * np.pi * np.arange(d // 2 + 1, dtype=np.float64)[None, :]
    return k1, k2


def ns_forcing(d):
    """0.1 (sin(2 pi (x1 + x2)) + cos(2 pi (x1 + x2))) on the periodic grid."""
    x = np.arange(d) / d
    phase = 2.0 * np.pi * (x[:, None] + x[None, :])
    return 0.1 * (np.sin(phase) + np.cos(phase))


def velocity_from_vorticity(w, workers=1):
    """Divergence-free velocity via the stream function psi, -Lap psi = -w...
    i.e. Lap psi = -w, u = (d psi/dx2, -d psi/dx1).  w: (..., d, d)."""
    w = np.asarray(w, dtype=np.float64)
    d = w.shape[-1]
    k1, k2 = _ns_wavenumbers(d)
    ksq = k1**2 + k2**2
    inv = np.zeros_like(ksq)
    nonzero = ksq > 0
    inv[nonzero] = 1.0 / ksq[nonzero]
    what = sfft.rfft2(w, axes=(-2, -1), workers=workers)
    psi_hat = what * inv
    u1 = sfft.irfft2(1j * k2 * psi_hat, s=(d, d), axes=(-2, -1), workers=workers)
    u2 = sfft.irfft2(-1j * k1 * psi_hat, s=(d, d), axes=(-2, -1), workers=workers)
    return u1, u2


def solve_ns_vorticity(w0, nu, t_final, dt=1e-3, record_every=1.0, forcing=None, workers=1):
    """2D incompressible Navier-Stokes in vorticity form on the periodic square.

    w_t + u . grad w = nu Lap w + f with u recovered from the stream function.
    Crank-Nicolson on the viscous term, explicit advection, 2/3-rule
    dealiasing.  Records w at t = record_every, 2*record_every, ..., t_final;
    returns (..., d, d, T) with T = t_final / record_every.
    """
    w0 = np.asarray(w0, dtype=np.float64)
    squeeze = w0.ndim == 2
    w = np.atleast_3d(w0) if squeeze else w0
    if squeeze:
        w = w0[None]
    d = w.shape[-1]
    if w.shape[-2] != d:
        raise ValueError("vorticity grid must be square")
    k1, k2 = _ns_wavenumbers(d)
    ksq = k1**2 + k2**2
    inv_ksq = np.zeros_like(ksq)
    inv_ksq[ksq > 0] = 1.0 / ksq[ksq > 0]
    f1 = sfft.fftfreq(d, 1.0 / d)[:, None]
    f2 = np.arange(d // 2 + 1)[None, :]
    dealias = (np.abs(f1) <= d / 3.0) & (f2 <= d / 3.0)

    if forcing is None:
        forcing = ns_forcing(d)
    fhat = sfft.rfft2(np.asarray(forcing, dtype=np.float64), workers=workers)

    n_record = _n_steps(t_final, record_every)
    n_sub = _n_steps(record_every, dt)
    cn_num = 1.0 - 0.5 * dt * nu * ksq
    cn_den = 1.0 / (1.0 + 0.5 * dt * nu * ksq)

    what = sfft.rfft2(w, axes=(-2, -1), workers=workers)
    frames = np.empty(w.shape[:-2] + (d, d, n_record), dtype=np.float64)
    for rec in range(n_record):
        for _ in range(n_sub):
            psi_hat = what * inv_ksq
            u1 = sfft.irfft2(1j * k2 * psi_hat, s=(d, d), axes=(-2, -1), workers=workers)
            u2 = sfft.irfft2(-1j * k1 * psi_hat, s=(d, d), axes=(-2, -1), workers=workers)
            w1 = sfft.irfft2(1j * k1 * what, s=(d, d), axes=(-2, -1), workers=workers)
            w2 = sfft.irfft2(1j * k2 * what, s=(d, d), axes=(-2, -1), workers=workers)
            adv_hat = sfft.rfft2(u1 * w2 + u2 * w1, axes=(-2, -1), workers=workers)
            what = (what * cn_num + dt * (fhat - adv_hat * dealias)) * cn_den
        frame = sfft.irfft2(what, s=(d, d), axes=(-2, -1), workers=workers)
        _check_finite(frame, f"navier-stokes solve at t={(rec + 1) * record_every}")
        frames[..., rec] = frame
    return frames[0] if squeeze else frames


def subsample(fld, factor, axes=None):
    """Strided point sampling keeping index 0; no filtering.

    Valid per axis when factor divides the extent (periodic grids) or the
    extent minus one (endpoint-inclusive grids).  Default: all axes.
    """
    fld = np.asarray(fld)
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if axes is None:
        axes = tuple(range(fld.ndim))
    if factor == 1:
        return fld
    sl = [slice(None)] * fld.ndim
    for ax in axes:
        d = fld.shape[ax]
        if d % factor != 0 and (d - 1) % factor != 0:
            raise ValueError(f"factor {factor} incompatible with extent {d} on axis {ax}")
        sl[ax] = slice(None, None, factor)
    return fld[tuple(sl)]


def _subsample_factor(native, resolution):
    if native % resolution == 0:
        return native // resolution
    if (native - 1) % (resolution - 1) == 0:
        factor = (native - 1) // (resolution - 1)
        if (native - 1) % factor == 0:
            return factor
    raise ValueError(f"resolution {resolution} not reachable from native grid {native}")


# -- datasets -----------------------------------------------------------------


@dataclass
class SamplePair:
    a: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if self.a.shape[:-1] != self.u.shape[:-1]:
            raise ValueError("input and output spatial extents must agree")


@dataclass
class Dataset:
    """Stacked (a_i, u_i) pairs sharing one equation tag and resolution."""

    equation: str
    resolution: int
    a: np.ndarray  # (n, spatial..., c_in) float32
    u: np.ndarray  # (n, spatial..., c_out) float32
    seed: int
    norm_mean: np.ndarray = None  # pointwise over (spatial..., c_in)
    norm_std: np.ndarray = None

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.a.shape[0] != self.u.shape[0]:
            raise ValueError("input/output sample counts differ")

    @property
    def n(self):
        return self.a.shape[0]

    def pairs(self):
        return [SamplePair(self.a[i], self.u[i]) for i in range(self.n)]

    @property
    def dim(self):
        return self.a.ndim - 2


def _generate_burgers(indices, seed, resolution, nu, t_final, dt, workers):
    native = NATIVE_RESOLUTION["burgers"]
    factor = _subsample_factor(native, resolution)
    spec = GRF_SPECS["burgers"](native)
    a_out, u_out = [], []
    for start in range(0, len(indices), _CHUNK):
        chunk = indices[start : start + _CHUNK]
        a0 = np.stack([grf_sample(spec, sample_rng(seed, i)) for i in chunk])
        u1 = solve_burgers(a0, nu=nu, t_final=t_final, dt=dt, workers=workers)
        a_out.append(a0[:, ::factor])
        u_out.append(u1[:, ::factor])
    a = np.concatenate(a_out)[..., None]
    u = np.concatenate(u_out)[..., None]
    return a, u


def _generate_kdv(indices, seed, resolution, t_final, dt, workers):
    native = NATIVE_RESOLUTION["kdv"]
    factor = _subsample_factor(native, resolution)
    spec = GRF_SPECS["kdv"](native)
    a_out, u_out = [], []
    for start in range(0, len(indices), _CHUNK):
        chunk = indices[start : start + _CHUNK]
        a0 = np.stack([grf_sample(spec, sample_rng(seed, i)) for i in chunk])
        u1 = solve_kdv(a0, t_final=t_final, dt=dt, workers=workers)
        a_out.append(a0[:, ::factor])
        u_out.append(u1[:, ::factor])
    return np.concatenate(a_out)[..., None], np.concatenate(u_out)[..., None]


def _generate_darcy(indices, seed, resolution):
    native = NATIVE_RESOLUTION["darcy"]
    factor = _subsample_factor(native, resolution)
    spec = GRF_SPECS["darcy"](native)
    a_out, u_out = [], []
    for i in indices:
        g = grf_sample(spec, sample_rng(seed, i))
        coef = push_forward_darcy(g)
        u = solve_darcy(coef)
        a_out.append(coef[::factor, ::factor])
        u_out.append(u[::factor, ::factor])
    return np.stack(a_out)[..., None], np.stack(u_out)[..., None]


def _generate_ns(indices, seed, resolution, nu, t_final, dt, workers):
    native = NATIVE_RESOLUTION["ns"]
    factor = _subsample_factor(native, resolution)
    if t_final <= 10:
        raise ValueError("navier-stokes datasets need t_final > 10 recorded steps")
    spec = GRF_SPECS["ns"](native)
    a_out, u_out = [], []
    for start in range(0, len(indices), _CHUNK):
        chunk = indices[start : start + _CHUNK]
        w0 = np.stack([grf_sample(spec, sample_rng(seed, i)) for i in chunk])
        frames = solve_ns_vorticity(w0, nu=nu, t_final=t_final, dt=dt, workers=workers)
        frames = frames[:, ::factor, ::factor, :]
        a_out.append(frames[..., :10])
        u_out.append(frames[..., 10:])
    return np.concatenate(a_out), np.concatenate(u_out)


def build_dataset(equation, resolution, n_train=1000, n_test=200, seed=0,
                  nu=None, t_final=None, dt=None, workers=1):
    """Generate (train, test) datasets for one equation.

    Samples 0..n_train-1 form the training split and the next n_test the test
    split; each sample's randomness comes only from (seed, index).  Pointwise
    input normalization statistics are computed on the training split and
    attached to both datasets.
    """
    if equation not in EQUATIONS:
        raise ValueError(f"unknown equation {equation!r}")
    resolution = int(resolution)
    indices = list(range(n_train + n_test))
    if equation == "burgers":
        nu = 0.1 if nu is None else nu
        a, u = _generate_burgers(indices, seed, resolution, nu, t_final or 1.0,
                                 dt or DEFAULT_DT["burgers"], workers)
    elif equation == "kdv":
        a, u = _generate_kdv(indices, seed, resolution, t_final or 1.0,
                             dt or DEFAULT_DT["kdv"], workers)
    elif equation == "darcy":
        a, u = _generate_darcy(indices, seed, resolution)
    else:
        nu = 1e-3 if nu is None else nu
        a, u = _generate_ns(indices, seed, resolution, nu,
                            int(t_final) if t_final else 50,
                            dt or DEFAULT_DT["ns"], workers)
    a = a.astype(np.float32)
    u = u.astype(np.float32)
    a_train, u_train = a[:n_train], u[:n_train]
    a_test, u_test = a[n_train:], u[n_train:]
    mean = a_train.mean(axis=0)
    std = a_train.std(axis=0)
    std = np.maximum(std, 1e-8).astype(np.float32)
    train = Dataset(equation, resolution, a_train, u_train, seed, mean, std)
    test = Dataset(equation, resolution, a_test, u_test, seed, mean, std)
    return train, test
