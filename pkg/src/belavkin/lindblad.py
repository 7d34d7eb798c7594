"""Physical models: Lindblad generators, unraveling splits and the master-equation oracle.

All generators are returned in the Schroedinger (predual) picture,

    L(rho) = -i[H~, rho] + sum_j V~_j rho V~_j* - 1/2 {V~_j* V~_j, rho},

with the laser entering through a Weyl displacement of the forward channel,
``V~_f = V_f + h(t)`` and ``H~ = H + (i/2)(conj(h) V_f - h V_f*)``. Use
:meth:`~belavkin.algebra.Superoperator.dual` for the Heisenberg form.

Two-level conventions: basis index 0 is the excited state, index 1 the ground
state, ``V = [[0, 0], [1, 0]]`` lowers, ``sigma_z = diag(1, -1)``.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .algebra import (
    Superoperator,
    apply_super,
    check_density,
    dag,
    dissipator,
    expm,
    hamiltonian_super,
    identity_super,
    sprepost,
)
from .errors import InvalidInputError, InvalidModelError

__all__ = [
    "LOWERING",
    "SIGMA_Z",
    "ConstantAmplitude",
    "RotatingAmplitude",
    "Displacement",
    "LindbladModel",
    "SideCounting",
    "HomodyneSpec",
    "UnravelingSplit",
    "Unraveling",
    "effective_operators",
    "build_liouvillian",
    "split_unraveling",
    "apply_laser_displacement",
    "spontaneous_decay",
    "resonance_fluorescence",
    "resonance_fluorescence_generator",
    "rotating_laser_generator",
    "make_model",
    "PRESETS",
    "propagate_master",
    "master_path",
]

LOWERING = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
EXCITED = 0
GROUND = 1


@dataclass(frozen=True)
class ConstantAmplitude:
    value: complex

    def __call__(self, t: float) -> complex:
        return complex(self.value)


@dataclass(frozen=True)
class RotatingAmplitude:
    """``t -> value * exp(i * freq * t)``."""

    value: complex
    freq: float

    def __call__(self, t: float) -> complex:
        return complex(self.value) * cmath.exp(1j * self.freq * t)


@dataclass(frozen=True)
class Displacement:
    channel: str
    amplitude: Callable[[float], complex]
    time_dependent: bool


def _frozen_matrix(m, name):
    a = np.array(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidModelError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(a)):
        raise InvalidModelError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian, named collapse channels and laser displacements.

    The two-level presets also fill in the physical parameters (``omega0``,
    ``rabi``, ``laser_freq``, ``kappa_f``, ``kappa_s``, ``gamma``); they are
    metadata only, the generator is built from ``H``, ``collapse_ops`` and
    ``displacements``.
    """

    H: np.ndarray
    collapse_ops: tuple
    channels: tuple
    side: str = "s"
    displacements: tuple = ()
    omega0: Optional[float] = None
    rabi: Optional[float] = None
    laser_freq: Optional[float] = None
    kappa_f: Optional[complex] = None
    kappa_s: Optional[complex] = None
    gamma: float = 1.0
    preset: Optional[str] = None

    def __post_init__(self):
        h = _frozen_matrix(self.H, "H")
        if np.max(np.abs(h - dag(h))) > 1e-12:
            raise InvalidModelError("H is not Hermitian")
        ops = tuple(_frozen_matrix(v, f"V[{k}]") for k, v in enumerate(self.collapse_ops))
        for v in ops:
            if v.shape != h.shape:
                raise InvalidModelError("collapse operator and H dimensions differ")
        channels = tuple(self.channels)
        if len(channels) != len(ops) or len(set(channels)) != len(channels):
            raise InvalidModelError("need one unique channel name per collapse operator")
        if self.side not in channels:
            raise InvalidModelError(f"side channel {self.side!r} not among {channels}")
        for d in self.displacements:
            if d.channel not in channels:
                raise InvalidModelError(f"displacement on unknown channel {d.channel!r}")
        if not self.gamma > 0:
            raise InvalidModelError("gamma must be positive")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "collapse_ops", ops)
        object.__setattr__(self, "channels", channels)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def time_dependent(self) -> bool:
        return any(d.time_dependent for d in self.displacements)

    def op(self, channel: str) -> np.ndarray:
        return self.collapse_ops[self.channels.index(channel)]


def effective_operators(model: LindbladModel, t: float = 0.0):
    """Return ``(H~, [V~_j])`` at time ``t`` after applying every displacement in order."""
    h_eff = np.array(model.H)
    ops = [np.array(v) for v in model.collapse_ops]
    eye = np.eye(model.dim, dtype=complex)
    for d in model.displacements:
        k = model.channels.index(d.channel)
        amp = complex(d.amplitude(t))
        if not cmath.isfinite(amp):
            raise InvalidModelError(f"laser amplitude is not finite at t={t}")
        vf = ops[k]
        h_eff = h_eff + 0.5j * (np.conj(amp) * vf - amp * dag(vf))
        ops[k] = vf + amp * eye
    return h_eff, ops


def build_liouvillian(model: LindbladModel, t: float = 0.0) -> Superoperator:
    """Schroedinger-picture generator at time ``t``."""
    h_eff, ops = effective_operators(model, t)
    gen = hamiltonian_super(h_eff).matrix.copy()
    for v in ops:
        gen += dissipator(v).matrix
    return Superoperator(gen)


@dataclass(frozen=True)
class SideCounting:
    """Direct photon counting on the side channel: ``J(rho) = V_s rho V_s*``."""

    def jump_operator(self, model, t, ops):
        return ops[model.channels.index(model.side)]

    @property
    def time_dependent(self) -> bool:
        return False


@dataclass(frozen=True)
class HomodyneSpec:
    """Local-oscillator settings; ``epsilon`` is the inverse oscillator amplitude.

    The oscillator phase is ``phi_t = phi0 + omega_lo t`` and ``w_t = exp(i phi_t)``.
    ``epsilon = 0`` denotes the diffusive limit and cannot be used for a jump split.
    """

    epsilon: float
    phi0: float = 0.0
    omega_lo: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidInputError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not (np.isfinite(self.phi0) and np.isfinite(self.omega_lo)):
            raise InvalidInputError("phi0 and omega_lo must be finite")

    def phase(self, t: float) -> float:
        return self.phi0 + self.omega_lo * t

    def w(self, t: float) -> complex:
        return cmath.exp(1j * self.phase(t))

    def jump_operator(self, model, t, ops):
        if not self.epsilon > 0:
            raise InvalidInputError("homodyne-mixed split needs epsilon > 0")
        vs = ops[model.channels.index(model.side)]
        return vs + (self.w(t) / self.epsilon) * np.eye(model.dim)

    @property
    def time_dependent(self) -> bool:
        return self.omega_lo != 0.0


@dataclass(frozen=True, eq=False)
class UnravelingSplit:
    """``L = smooth + jump`` with ``jump(rho) = A rho A*``."""

    smooth: Superoperator
    jump: Superoperator
    jump_op: np.ndarray

    @property
    def generator(self) -> Superoperator:
        return self.smooth + self.jump

    @property
    def dim(self) -> int:
        return self.smooth.dim


def split_unraveling(model: LindbladModel, t: float = 0.0, channel=SideCounting()) -> UnravelingSplit:
    """Split the generator at time ``t`` into smooth and jump parts for ``channel``."""
    _, ops = effective_operators(model, t)
    a = channel.jump_operator(model, t, ops)
    jump = sprepost(a, dag(a))
    full = build_liouvillian(model, t)
    return UnravelingSplit(smooth=full - jump, jump=jump, jump_op=a)


@dataclass(frozen=True, eq=False)
class Unraveling:
    """A model together with a measurement channel; yields splits on demand."""

    model: LindbladModel
    channel: object = field(default_factory=SideCounting)

    @property
    def time_dependent(self) -> bool:
        return self.model.time_dependent or self.channel.time_dependent

    @property
    def dim(self) -> int:
        return self.model.dim

    def at(self, t: float) -> UnravelingSplit:
        return split_unraveling(self.model, t, self.channel)


def apply_laser_displacement(model: LindbladModel, h, channel: str = "f", time_dependent=None) -> LindbladModel:
    """Displace ``channel`` by the coherent amplitude ``h`` (a number or a function of t).

    A constant ``h == 0`` returns the model unchanged.
    """
    if callable(h):
        amp = h
        if time_dependent is None:
            time_dependent = not isinstance(h, ConstantAmplitude)
    else:
        value = complex(h)
        if not cmath.isfinite(value):
            raise InvalidModelError("laser amplitude must be finite")
        if value == 0:
            return model
        amp = ConstantAmplitude(value)
        time_dependent = False
    return replace(model, displacements=model.displacements + (Displacement(channel, amp, bool(time_dependent)),))


def _couplings(kappa_s, kappa_f):
    kappa_s = complex(kappa_s)
    if kappa_f is None:
        rest = 1.0 - abs(kappa_s) ** 2
        if rest < -1e-12:
            raise InvalidModelError("|kappa_s|^2 exceeds the total decay rate 1")
        kappa_f = np.sqrt(max(rest, 0.0))
    kappa_f = complex(kappa_f)
    if abs(abs(kappa_f) ** 2 + abs(kappa_s) ** 2 - 1.0) > 1e-12:
        raise InvalidModelError("couplings must satisfy |kappa_f|^2 + |kappa_s|^2 = 1")
    return kappa_f, kappa_s


def spontaneous_decay(omega0=0.0, kappa_s=1.0, kappa_f=None, gamma=1.0) -> LindbladModel:
    """Laser-off two-level atom decaying into a forward and a side channel.

    ``gamma`` is the total decay rate; the channel operators are
    ``V_sigma = sqrt(gamma) kappa_sigma V``.
    """
    kappa_f, kappa_s = _couplings(kappa_s, kappa_f)
    if not gamma > 0:
        raise InvalidModelError("gamma must be positive")
    root = np.sqrt(gamma)
    return LindbladModel(
        H=0.5 * omega0 * SIGMA_Z,
        collapse_ops=(root * kappa_f * LOWERING, root * kappa_s * LOWERING),
        channels=("f", "s"),
        side="s",
        omega0=float(omega0),
        rabi=0.0,
        kappa_f=kappa_f,
        kappa_s=kappa_s,
        gamma=float(gamma),
        preset="spontaneous-decay",
    )


def resonance_fluorescence(rabi=1.0, omega0=0.0, kappa_s=np.sqrt(0.5), kappa_f=None, laser_freq=None, gamma=1.0):
    """Two-level atom driven by a laser on the forward channel.

    The forward channel is displaced by ``h(t) = -i rabi e^{i laser_freq t} / (2 sqrt(gamma) conj(kappa_f))``,
    which gives the drive term ``+i(rabi/2)[V + V*, rho]`` of the standard
    resonance-fluorescence master equation. ``laser_freq=None`` suppresses the
    laser oscillation (constant ``h``).
    """
    if not (np.isfinite(rabi) and rabi >= 0):
        raise InvalidModelError("the Rabi frequency must be real and nonnegative")
    base = spontaneous_decay(omega0=omega0, kappa_s=kappa_s, kappa_f=kappa_f, gamma=gamma)
    base = replace(base, rabi=float(rabi), laser_freq=laser_freq, preset="resonance-fluorescence")
    if rabi == 0:
        return base
    if abs(base.kappa_f) == 0:
        raise InvalidModelError("a laser drive needs a forward channel (kappa_f != 0)")
    value = -1j * rabi / (2.0 * np.sqrt(gamma) * np.conj(base.kappa_f))
    if laser_freq is None:
        return apply_laser_displacement(base, value, "f")
    return apply_laser_displacement(base, RotatingAmplitude(value, float(laser_freq)), "f", time_dependent=True)


def resonance_fluorescence_generator(omega0=0.0, rabi=1.0, gamma=1.0) -> Superoperator:
    """The resonance-fluorescence Liouvillian written out term by term.

    ``L(rho) = -i[H, rho] + i(rabi/2)[V + V*, rho] - gamma/2 {V*V, rho} + gamma V rho V*``
    with ``H = omega0/2 sigma_z``. Independent of the displacement machinery;
    used as an oracle.
    """
    v = LOWERING
    h = 0.5 * omega0 * SIGMA_Z
    k = v + dag(v)
    m = hamiltonian_super(h).matrix - 0.5 * rabi * hamiltonian_super(k).matrix
    m = m + gamma * dissipator(v).matrix
    return Superoperator(m)


def rotating_laser_generator(omega0, rabi, laser_freq, t, gamma=1.0) -> Superoperator:
    """Schroedinger form of the rotating-laser generator at time ``t``.

    Dual of ``L(X) = i[H,X] - i(rabi/2)[e^{-i w t} V + e^{i w t} V*, X] + gamma D*(X)``.
    """
    v = LOWERING
    h = 0.5 * omega0 * SIGMA_Z
    k = np.exp(-1j * laser_freq * t) * v + np.exp(1j * laser_freq * t) * dag(v)
    m = hamiltonian_super(h).matrix - 0.5 * rabi * hamiltonian_super(k).matrix
    return Superoperator(m + gamma * dissipator(v).matrix)


PRESETS = {
    "spontaneous-decay": spontaneous_decay,
    "resonance-fluorescence": resonance_fluorescence,
}


def make_model(name: str, **params) -> LindbladModel:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise InvalidModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


def _segment_propagator(model, t0, t1, dt):
    """Midpoint product propagator from t0 to t1 with steps no longer than dt."""
    n = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    prop = identity_super(model.dim)
    for k in range(n):
        prop = expm(build_liouvillian(model, t0 + (k + 0.5) * h), h) @ prop
    return prop


def master_path(model: LindbladModel, rho0, times: Sequence[float], dt: float = 1e-3) -> np.ndarray:
    """States of the master equation at the (nondecreasing, nonnegative) ``times``.

    Time-independent generators are propagated exactly with ``exp(t L)``;
    otherwise midpoint product integration with step at most ``dt`` is used.
    """
    rho0 = check_density(rho0)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise InvalidInputError("times must be nonnegative and nondecreasing")
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    out = np.empty((len(times), model.dim, model.dim), dtype=complex)
    if not model.time_dependent:
        gen = build_liouvillian(model, 0.0)
        for k, t in enumerate(times):
            out[k] = apply_super(expm(gen, t), rho0)
        return out
    rho, t_prev = rho0, 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            rho = apply_super(_segment_propagator(model, t_prev, t, dt), rho)
            t_prev = t
        out[k] = rho
    return out


def propagate_master(model: LindbladModel, rho0, t: float, dt: float = 1e-3) -> np.ndarray:
    """Master-equation state at time ``t``."""
    if not t >= 0:
        raise InvalidInputError("t must be nonnegative")
    return master_path(model, rho0, [t], dt)[0]
