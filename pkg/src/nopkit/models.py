"""The three operator architectures built from the recorded primitives.

All three map a batch (n, spatial..., c_in) to (n, spatial..., c_out):

* the V-cycle network descends through stride-2 restrictions, smooths at
  every grid with learned residual-correction convolutions, and ascends
  through transposed-convolution prolongations;
* the spectral-layer network keeps one resolution and mixes a pointwise
  channel map with a truncated Fourier multiplier per layer;
* the enhanced V-cycle network adds a trainable low-mode Fourier correction
  of the residual to every smoothing step, with the retained mode count
  shrinking on coarser grids.

Parameter shapes depend only on the configuration, never on the input
extents, so a model trained at one resolution evaluates at any other.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .autodiff import Param, Tape, Var, as_var


class ModelError(ValueError):
    pass


def _default_channels(dim):
    return 32 if dim == 1 else 24


def _default_kmax_levels(dim):
    return (16, 12, 8, 4) if dim == 1 else (12, 8, 4, 4)


@dataclass(frozen=True)
class MgNetConfig:
    dim: int
    c_in: int = 1
    c_out: int = 1
    J: int = 4
    nu: tuple = None
    c: int = None
    C: int = 128
    padding: str = T.CIRCULAR
    activation: str = "gelu"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ModelError("dim must be 1 or 2")
        if self.J < 1:
            raise ModelError("J must be >= 1")
        if self.nu is None:
            object.__setattr__(self, "nu", (2,) * self.J)
        object.__setattr__(self, "nu", tuple(int(v) for v in self.nu))
        if len(self.nu) != self.J or any(v < 1 for v in self.nu):
            raise ModelError("nu needs one entry >= 1 per grid")
        if self.c is None:
            object.__setattr__(self, "c", _default_channels(self.dim))
        if self.padding not in (T.CIRCULAR, T.ZERO):
            raise ModelError(f"unknown padding {self.padding!r}")
        if self.activation not in ("gelu", "relu"):
            raise ModelError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class EvMgNetConfig(MgNetConfig):
    k_max: tuple = None

    def __post_init__(self):
        super().__post_init__()
        if self.k_max is None:
            base = _default_kmax_levels(self.dim)
            object.__setattr__(self, "k_max", tuple(base[min(l, len(base) - 1)] for l in range(self.J)))
        object.__setattr__(self, "k_max", tuple(int(v) for v in self.k_max))
        if len(self.k_max) != self.J:
            raise ModelError("k_max needs one entry per grid")
        if any(v < 1 for v in self.k_max):
            raise ModelError("k_max entries must be >= 1")
        if any(a < b for a, b in zip(self.k_max, self.k_max[1:])):
            raise ModelError("k_max must be nonincreasing across grids")


@dataclass(frozen=True)
class FnoConfig:
    dim: int
    c_in: int = 1
    c_out: int = 1
    L: int = 4
    k_max: int = None
    c: int = None
    C: int = 128
    activation: str = "gelu"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ModelError("dim must be 1 or 2")
        if self.L < 1:
            raise ModelError("L must be >= 1")
        if self.k_max is None:
            object.__setattr__(self, "k_max", 16 if self.dim == 1 else 12)
        if self.k_max < 1:
            raise ModelError("k_max must be >= 1")
        if self.c is None:
            object.__setattr__(self, "c", _default_channels(self.dim))
        if self.activation not in ("gelu", "relu"):
            raise ModelError(f"unknown activation {self.activation!r}")


@dataclass
class Model:
    kind: str
    config: object
    params: dict
    seed: int
    normalizer: object = None

    def param_list(self):
        return list(self.params.values())

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()


V_MGNET = "v-mgnet"
FNO = "fno"
EV_MGNET = "ev-mgnet"
KINDS = (V_MGNET, FNO, EV_MGNET)


def _spectral_block_shape(dim, k_max, c):
    if dim == 1:
        return (k_max, c, c)
    return (2 * k_max - 1, k_max, c, c)


def param_spec(kind, config):
    """Ordered (name, shape, init) triples; init is ('conv', fan_in),
    ('bias',) or ('spectral', c)."""
    d = config.dim
    spec = []

    def conv_entry(name, k, ci, co, bias):
        spec.append((f"{name}.w", (k,) * d + (ci, co), ("conv", k**d * ci)))
        if bias:
            spec.append((f"{name}.b", (co,), ("bias",)))

    if kind in (V_MGNET, EV_MGNET):
        conv_entry("K0", 1, config.c_in, config.c, bias=True)
        for level in range(1, config.J + 1):
            conv_entry(f"A{level}", 3, config.c, config.c, bias=False)
            for i in range(1, config.nu[level - 1] + 1):
                conv_entry(f"B{level}.{i}", 3, config.c, config.c, bias=False)
                if kind == EV_MGNET:
                    shape = _spectral_block_shape(d, config.k_max[level - 1], config.c)
                    spec.append((f"W{level}.{i}.re", shape, ("spectral", config.c)))
                    spec.append((f"W{level}.{i}.im", shape, ("spectral", config.c)))
            if level < config.J:
                conv_entry(f"Pi{level}", 3, config.c, config.c, bias=False)
                conv_entry(f"R{level}", 3, config.c, config.c, bias=False)
                conv_entry(f"P{level}", 3, config.c, config.c, bias=False)
        conv_entry("K1", 1, config.c, config.C, bias=True)
        conv_entry("K2", 1, config.C, config.c_out, bias=True)
    elif kind == FNO:
        conv_entry("K0", 1, config.c_in, config.c, bias=True)
        for level in range(1, config.L + 1):
            conv_entry(f"K{level}", 1, config.c, config.c, bias=True)
            shape = _spectral_block_shape(d, config.k_max, config.c)
            spec.append((f"W{level}.re", shape, ("spectral", config.c)))
            spec.append((f"W{level}.im", shape, ("spectral", config.c)))
        conv_entry(f"K{config.L + 1}", 1, config.c, config.C, bias=True)
        conv_entry(f"K{config.L + 2}", 1, config.C, config.c_out, bias=True)
    else:
        raise ModelError(f"unknown model kind {kind!r}")
    return spec


def _param_rng(seed, name):
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def init_model(kind, config, seed=0, dtype=np.float32):
    """Draw fresh parameters; each tensor uses its own (seed, name) stream.

    Convolution kernels are uniform(-s, s) with s = 1/sqrt(fan_in), biases
    start at zero, spectral weights are uniform(-1/c, 1/c) on both parts.
    """
    params = {}
    for name, shape, init in param_spec(kind, config):
        rng = _param_rng(seed, name)
        if init[0] == "conv":
            s = 1.0 / np.sqrt(init[1])
            value = rng.uniform(-s, s, size=shape)
        elif init[0] == "bias":
            value = np.zeros(shape)
        else:
            bound = 1.0 / init[1]
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = Param(name, value.astype(dtype))
    return Model(kind=kind, config=config, params=params, seed=int(seed))


def param_count(model):
    return sum(p.value.size for p in model.params.values())


def zero_spectral_weights(model):
    """Zero every low-mode multiplier in place (debug degeneracy switch)."""
    for name, p in model.params.items():
        if name.startswith("W"):
            p.value = np.zeros_like(p.value)
    return model


def spectral_correction(tape, r, w_re, w_im, k_max):
    """Low-mode correction F^-1(W . F r); modes outside the block map to zero."""
    return tape.spectral_multiply(r, w_re, w_im, k_max)


def mg_smooth(tape, u, f, a_w, b_w, padding, activation="gelu"):
    """One smoothing step u + s(B * s(f - A*u)) with s the activation."""
    act = tape.gelu if activation == "gelu" else tape.relu
    r = tape.sub(f, tape.conv(u, a_w, stride=1, padding=padding))
    return tape.add(u, act(tape.conv(act(r), b_w, stride=1, padding=padding)))


def ev_smooth(tape, u, f, a_w, b_w, w_re, w_im, k_max, padding, activation="gelu"):
    """Smoothing with an extra low-mode residual term; the residual is
    computed once and feeds both corrections."""
    act = tape.gelu if activation == "gelu" else tape.relu
    r = tape.sub(f, tape.conv(u, a_w, stride=1, padding=padding))
    smooth = act(tape.conv(act(r), b_w, stride=1, padding=padding))
    low = act(spectral_correction(tape, r, w_re, w_im, k_max))
    return tape.add(tape.add(u, smooth), low)


def _level_extents(extents, J):
    levels = [tuple(extents)]
    for _ in range(J - 1):
        levels.append(tuple((e + 1) // 2 for e in levels[-1]))
    if any(e < 4 for e in levels[-1]):
        raise ModelError(f"extent {tuple(extents)} is not coarsenable {J - 1} times (coarsest {levels[-1]})")
    return levels


def _check_input(a, config):
    a = np.asarray(a)
    if a.ndim != config.dim + 2:
        raise ModelError(f"expected (batch, spatial..., channels) with dim={config.dim}, got shape {a.shape}")
    if a.shape[-1] != config.c_in:
        raise ModelError(f"input has {a.shape[-1]} channels, config expects {config.c_in}")
    return a


def _mgnet_core(a, params, config, tape, smoother):
    """Shared V-cycle control flow; smoother(tape, u, f, level, i) does one step."""
    act = tape.gelu if config.activation == "gelu" else tape.relu
    pad = config.padding
    J = config.J
    a = as_var(a)
    levels = _level_extents(a.value.shape[1:-1], J)

    f = act(tape.conv(a, params["K0.w"], params["K0.b"], stride=1, padding=T.ZERO))
    u = Var(np.zeros_like(f.value))

    f_at, u_at, u_init = {}, {}, {}
    for level in range(1, J + 1):
        for i in range(1, config.nu[level - 1] + 1):
            u = smoother(tape, u, f, level, i)
        f_at[level], u_at[level] = f, u
        if level < J:
            u0 = tape.conv(u, params[f"Pi{level}.w"], stride=2, padding=pad)
            residual = tape.sub(f, tape.conv(u, params[f"A{level}.w"], stride=1, padding=pad))
            f = tape.add(
                tape.conv(residual, params[f"R{level}.w"], stride=2, padding=pad),
                tape.conv(u0, params[f"A{level + 1}.w"], stride=1, padding=pad),
            )
            u_init[level + 1] = u0
            u = u0

    for level in range(J - 1, 0, -1):
        diff = tape.sub(u, u_init[level + 1])
        lift = tape.conv_transpose(diff, params[f"P{level}.w"], levels[level - 1], padding=pad)
        u = tape.add(u_at[level], lift)
        for i in range(1, config.nu[level - 1] + 1):
            u = smoother(tape, u, f_at[level], level, i)

    hidden = act(tape.conv(u, params["K1.w"], params["K1.b"], stride=1, padding=T.ZERO))
    return tape.conv(hidden, params["K2.w"], params["K2.b"], stride=1, padding=T.ZERO)


def v_mgnet_forward(a, params, config, tape):
    def smoother(tp, u, f, level, i):
        return mg_smooth(tp, u, f, params[f"A{level}.w"], params[f"B{level}.{i}.w"],
                         config.padding, config.activation)

    return _mgnet_core(a, params, config, tape, smoother)


def ev_mgnet_forward(a, params, config, tape):
    def smoother(tp, u, f, level, i):
        return ev_smooth(
            tp, u, f,
            params[f"A{level}.w"], params[f"B{level}.{i}.w"],
            params[f"W{level}.{i}.re"], params[f"W{level}.{i}.im"],
            config.k_max[level - 1], config.padding, config.activation,
        )

    return _mgnet_core(a, params, config, tape, smoother)


def fno_forward(a, params, config, tape):
    act = tape.gelu if config.activation == "gelu" else tape.relu
    u = tape.conv(as_var(a), params["K0.w"], params["K0.b"], stride=1, padding=T.ZERO)
    for level in range(1, config.L + 1):
        local = tape.conv(u, params[f"K{level}.w"], params[f"K{level}.b"], stride=1, padding=T.ZERO)
        spectral = tape.spectral_multiply(u, params[f"W{level}.re"], params[f"W{level}.im"], config.k_max)
        u = act(tape.add(local, spectral))
    hidden = act(tape.conv(u, params[f"K{config.L + 1}.w"], params[f"K{config.L + 1}.b"], stride=1, padding=T.ZERO))
    return tape.conv(hidden, params[f"K{config.L + 2}.w"], params[f"K{config.L + 2}.b"], stride=1, padding=T.ZERO)


_FORWARDS = {V_MGNET: v_mgnet_forward, EV_MGNET: ev_mgnet_forward, FNO: fno_forward}


def model_forward(model, a, tape=None):
    """Run the model; returns a Var when recording on a tape, else an array."""
    a = _check_input(a, model.config)
    dtype = next(iter(model.params.values())).value.dtype
    if a.dtype != dtype:
        a = a.astype(dtype)
    recording = tape is not None
    if tape is None:
        tape = Tape(grad=False)
    out = _FORWARDS[model.kind](a, model.params, model.config, tape)
    return out if recording else out.value
