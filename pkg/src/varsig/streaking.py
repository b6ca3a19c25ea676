"""Attosecond streak-trace forward model.

A streak trace is the photoelectron spectrogram produced when an attosecond
XUV pulse ionizes atoms in the presence of a femtosecond IR dressing field:

    I(K, tau) = | integral E_xuv(t - tau) * d * exp(i*phi_G(K, t))
                             * exp(-i*(K + Ip) * t) dt |^2

with the IR-induced phase gate

    phi_G(K, t) = - integral_t^inf [ v * A(t') + A(t')^2 / 2 ] dt',   v = sqrt(2K).

All internal arithmetic is in Hartree atomic units (hbar = 1); energies cross
the boundary in eV and delays in femtoseconds.

The signal vector packs the XUV and IR complex spectra sampled on fixed
frequency grids:

    f = [Re(E_xuv), Im(E_xuv), Re(E_ir), Im(E_ir)]  in R^440 by default.

Time-domain fields come from direct discrete Fourier summation,
E(t) = sum_j E_j exp(+i w_j t) dw, so a uniform spectral grid makes the field
periodic with period 2*pi/dw (about 3.2 fs for the default XUV grid). The
trace is therefore a self-consistent function of the sampled spectra rather
than of an isolated single pulse; widen the spectral grid density if single-
pulse semantics are needed.

Vector-potential convention: some references state A(t) = -dE_ir/dt, which
inverts the standard field/potential relation E = -dA/dt. The default here is
the standard A(t) = -integral_t^inf E_ir dt'; set
``vector_potential_mode="derivative"`` to reproduce the literal derivative
form. The two give visibly different traces — see README.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import accel
from .core import ForwardModel, MeasurementVec, SignalVec, SystemId
from .errors import AlignmentUndefinedError, ConfigError, DomainError, ShapeMismatchError
from .tensorfile import tensor_write

HARTREE_EV = 27.211386245988
AU_TIME_AS = 24.188843265857  # attoseconds per atomic unit of time
FS_TO_AU = 1000.0 / AU_TIME_AS
IR_CENTER_EV = 1.5498  # 800 nm carrier

_TIME_CHUNK = 8192


def _gaussian(grid: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    return np.exp(-4.0 * np.log(2.0) * ((grid - center) / fwhm) ** 2)


@dataclass(frozen=True)
class PulsePhase:
    """Spectral phase polynomial phi(w) = sum_i k_i * w**i, orders 0..5."""

    k: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.float64)
        if k.shape != (6,):
            raise ShapeMismatchError(f"expected 6 phase coefficients, got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise DomainError("phase coefficients must be finite")
        object.__setattr__(self, "k", k)

    def __call__(self, grid: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(grid, self.k)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Complex field samples on a frequency grid, stored as re/im pairs."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.float64)
        im = np.asarray(self.im, dtype=np.float64)
        if re.shape != im.shape:
            raise ShapeMismatchError("re and im must have identical shape")
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise DomainError("spectrum must be finite")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @property
    def values(self) -> np.ndarray:
        return self.re + 1j * self.im


def build_spectrum(amp, phase: PulsePhase, grid) -> ComplexSpectrum:
    """Impose a phase polynomial on a power spectrum: E(w) = sqrt(S) exp(i phi)."""
    amp = np.asarray(amp, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if amp.shape != grid.shape:
        raise ShapeMismatchError("amplitude and grid must have identical shape")
    if amp.size and amp.min() < 0:
        raise DomainError("power spectrum must be nonnegative")
    values = np.sqrt(amp) * np.exp(1j * phase(grid))
    return ComplexSpectrum(values.real, values.imag)


@dataclass(frozen=True)
class StreakingConfig:
    """Grids and constants of the streaking measurement.

    Energies are photoelectron kinetic energies in eV, delays in fs. The XUV
    spectral grid spans photon energies (energy_min + Ip) .. (energy_max + Ip)
    so every detector energy is reachable; the IR grid covers a narrow band
    around the 800 nm carrier. The default time grid is intentionally light —
    fine enough for self-consistent training data, while quantitative
    spectroscopy should raise ``n_time``.
    """

    energy_min_ev: float = 50.0
    energy_max_ev: float = 305.0
    n_energy: int = 256
    delay_min_fs: float = -8.0
    delay_max_fs: float = 8.0
    n_delay: int = 35
    n_xuv: int = 200
    n_ir: int = 20
    ionization_potential_ev: float = 21.55
    dipole: float = 1.0
    time_span_fs: float = 20.0  # grid covers [-span, +span]
    n_time: int = 2048
    ir_band_halfwidth_ev: float = 0.075
    xuv_power_spectrum: np.ndarray | None = None
    ir_power_spectrum: np.ndarray | None = None
    vector_potential_mode: str = "integral"

    def __post_init__(self):
        if self.n_energy < 2 or self.n_delay < 1 or self.n_time < 4:
            raise ConfigError("grids must have at least 2/1/4 points")
        if self.energy_max_ev <= self.energy_min_ev:
            raise ConfigError("energy grid must be increasing")
        if self.delay_max_fs < self.delay_min_fs:
            raise ConfigError("delay grid must be nondecreasing")
        if self.energy_min_ev <= 0:
            raise ConfigError("kinetic energies must be positive")
        if self.vector_potential_mode not in ("integral", "derivative"):
            raise ConfigError(
                f"unknown vector_potential_mode {self.vector_potential_mode!r}"
            )
        for name in ("xuv_power_spectrum", "ir_power_spectrum"):
            spec = getattr(self, name)
            if spec is not None:
                spec = np.asarray(spec, dtype=np.float64)
                n = self.n_xuv if name.startswith("xuv") else self.n_ir
                if spec.shape != (n,):
                    raise ShapeMismatchError(f"{name} must have shape ({n},)")
                if spec.min() < 0:
                    raise DomainError(f"{name} must be nonnegative")
                object.__setattr__(self, name, spec)

    # --- derived grids (all cached as plain arrays) ---

    @property
    def energy_grid_ev(self) -> np.ndarray:
        return np.linspace(self.energy_min_ev, self.energy_max_ev, self.n_energy)

    @property
    def delay_grid_fs(self) -> np.ndarray:
        return np.linspace(self.delay_min_fs, self.delay_max_fs, self.n_delay)

    @property
    def time_grid_au(self) -> np.ndarray:
        span = self.time_span_fs * FS_TO_AU
        return np.linspace(-span, span, self.n_time)

    @property
    def xuv_freq_grid_au(self) -> np.ndarray:
        ip = self.ionization_potential_ev
        lo = (self.energy_min_ev + ip) / HARTREE_EV
        hi = (self.energy_max_ev + ip) / HARTREE_EV
        return np.linspace(lo, hi, self.n_xuv)

    @property
    def ir_freq_grid_au(self) -> np.ndarray:
        lo = (IR_CENTER_EV - self.ir_band_halfwidth_ev) / HARTREE_EV
        hi = (IR_CENTER_EV + self.ir_band_halfwidth_ev) / HARTREE_EV
        return np.linspace(lo, hi, self.n_ir)

    @property
    def signal_len(self) -> int:
        return 2 * (self.n_xuv + self.n_ir)

    def xuv_power(self) -> np.ndarray:
        if self.xuv_power_spectrum is not None:
            return self.xuv_power_spectrum
        g = self.xuv_freq_grid_au
        center = 0.5 * (g[0] + g[-1])
        return _gaussian(g, center, 0.5 * (g[-1] - g[0]))

    def ir_power(self) -> np.ndarray:
        g = self.ir_freq_grid_au
        if self.ir_power_spectrum is not None:
            return self.ir_power_spectrum
        return _gaussian(g, IR_CENTER_EV / HARTREE_EV, 0.050 / HARTREE_EV)

    # --- serialization ---

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        for key, val in d.items():
            if isinstance(val, np.ndarray):
                d[key] = val.tolist()
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StreakingConfig":
        d = json.loads(text)
        for key in ("xuv_power_spectrum", "ir_power_spectrum"):
            if d.get(key) is not None:
                d[key] = np.asarray(d[key], dtype=np.float64)
        return cls(**d)

    def export_grids(self, directory) -> None:
        """Dump every grid as a tensor file for external inspection."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tensor_write(directory / "energy_grid_ev.tns", self.energy_grid_ev)
        tensor_write(directory / "delay_grid_fs.tns", self.delay_grid_fs)
        tensor_write(directory / "time_grid_au.tns", self.time_grid_au)
        tensor_write(directory / "xuv_freq_grid_au.tns", self.xuv_freq_grid_au)
        tensor_write(directory / "ir_freq_grid_au.tns", self.ir_freq_grid_au)


def pack_signal(xuv: ComplexSpectrum, ir: ComplexSpectrum, cfg: StreakingConfig) -> SignalVec:
    """Concatenate [Re(E_xuv), Im(E_xuv), Re(E_ir), Im(E_ir)] into a SignalVec."""
    if xuv.re.shape != (cfg.n_xuv,) or ir.re.shape != (cfg.n_ir,):
        raise ShapeMismatchError(
            f"expected XUV {cfg.n_xuv} and IR {cfg.n_ir} samples, "
            f"got {xuv.re.shape} and {ir.re.shape}"
        )
    vec = np.concatenate([xuv.re, xuv.im, ir.re, ir.im])
    return SignalVec(SystemId.STREAKING, vec)


def unpack_signal(f: SignalVec, cfg: StreakingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Recover the complex (xuv, ir) spectra from a packed signal vector."""
    vec = f.flat()
    if vec.shape != (cfg.signal_len,):
        raise ShapeMismatchError(
            f"expected packed length {cfg.signal_len}, got {vec.shape}"
        )
    nx, ni = cfg.n_xuv, cfg.n_ir
    xuv = vec[:nx] + 1j * vec[nx : 2 * nx]
    ir = vec[2 * nx : 2 * nx + ni] + 1j * vec[2 * nx + ni :]
    return xuv, ir


def time_field(spectrum: np.ndarray, freq_grid: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Direct Fourier synthesis E(t) = sum_j E_j exp(+i w_j t) dw."""
    dw = freq_grid[1] - freq_grid[0] if freq_grid.size > 1 else 1.0
    return np.exp(1j * np.outer(times, freq_grid)) @ (spectrum * dw)


def vector_potential(ir_time_field: np.ndarray, times: np.ndarray, mode: str = "integral") -> np.ndarray:
    """A(t) for the dressing field.

    "integral" (default): A(t) = -integral_t^tmax Re(E_ir) dt', the standard
    relation E = -dA/dt with A vanishing after the pulse. "derivative":
    A(t) = -d Re(E_ir)/dt, the inverted form some references state; see the
    module docstring.
    """
    e_re = np.real(ir_time_field)
    if mode == "derivative":
        return -np.gradient(e_re, times)
    if mode != "integral":
        raise ConfigError(f"unknown vector_potential_mode {mode!r}")
    cum = cumulative_trapezoid(e_re, times, initial=0.0)
    return cum - cum[-1]


def _gate_integrals(a: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Suffix integrals I1(t) = int_t^tmax A, I2(t) = 0.5 * int_t^tmax A^2."""
    c1 = cumulative_trapezoid(a, times, initial=0.0)
    c2 = cumulative_trapezoid(a * a, times, initial=0.0)
    return c1[-1] - c1, 0.5 * (c2[-1] - c2)


def phase_gate(a: np.ndarray, times: np.ndarray, kinetic_energy_au: float) -> np.ndarray:
    """phi_G(K, t) = -(v * I1(t) + I2(t)) with v = sqrt(2K); zero at t_max."""
    if kinetic_energy_au <= 0:
        raise DomainError(f"kinetic energy must be positive, got {kinetic_energy_au}")
    i1, i2 = _gate_integrals(np.asarray(a, dtype=np.float64), times)
    v = np.sqrt(2.0 * kinetic_energy_au)
    return -(v * i1 + i2)


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.full(times.shape, times[1] - times[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class StreakTraceModel(ForwardModel):
    """Forward model A: packed pulse spectra -> streak trace I(K, tau)."""

    system_id = SystemId.STREAKING
    is_linear = False

    def __init__(self, config: StreakingConfig | None = None):
        self._config = config or StreakingConfig()

    @property
    def config(self) -> StreakingConfig:
        return self._config

    def signal_shape(self) -> tuple[int, ...]:
        return (self._config.signal_len,)

    def measurement_shape(self) -> tuple[int, ...]:
        return (self._config.n_energy, self._config.n_delay)

    def _apply(self, data: np.ndarray) -> np.ndarray:
        return streak_trace(SignalVec(SystemId.STREAKING, data), self._config)

    def apply_torch(self, f_tensor):
        from .torch_forward import streak_trace_torch

        return streak_trace_torch(f_tensor, self._config)


def streak_trace(f: SignalVec, cfg: StreakingConfig) -> np.ndarray:
    """Evaluate I(K, tau) on the config grids. Returns (n_energy, n_delay)."""
    xuv, ir = unpack_signal(f, cfg)
    times = cfg.time_grid_au

    e_ir = time_field(ir, cfg.ir_freq_grid_au, times)
    a = vector_potential(e_ir, times, cfg.vector_potential_mode)
    i1, i2 = _gate_integrals(a, times)

    energies = cfg.energy_grid_ev / HARTREE_EV
    v = np.sqrt(2.0 * energies)
    kip = energies + cfg.ionization_potential_ev / HARTREE_EV

    delays = cfg.delay_grid_fs * FS_TO_AU
    wx = cfg.xuv_freq_grid_au
    dwx = wx[1] - wx[0] if wx.size > 1 else 1.0
    # delayed-source matrix P[j, d] = E_j * exp(-i w_j tau_d) * dw
    p = xuv[:, None] * np.exp(-1j * np.outer(wx, delays)) * dwx

    w = _trapezoid_weights(times) * cfg.dipole
    amp = np.zeros((cfg.n_energy, cfg.n_delay), dtype=np.complex128)
    for lo in range(0, times.size, _TIME_CHUNK):
        hi = min(lo + _TIME_CHUNK, times.size)
        es = np.exp(1j * np.outer(times[lo:hi], wx)) @ p
        accel.streak_accumulate(
            times[lo:hi], i1[lo:hi], i2[lo:hi], v, kip, w[lo:hi], es, amp
        )
    return (amp.real**2 + amp.imag**2).astype(np.float64)


def cep_align(
    candidate: SignalVec,
    reference: SignalVec,
    cfg: StreakingConfig,
    window_ev: tuple[float, float] = (100.0, 300.0),
    min_amplitude: float = 1e-8,
) -> tuple[SignalVec, float]:
    """Rotate the candidate XUV phase onto the reference's CEP branch.

    The shift is the unwrapped mean of arg(E_ref) - arg(E_cand) over photon
    energies inside `window_ev` where both amplitudes exceed `min_amplitude`.
    Returns (aligned candidate, shift in radians, wrapped to (-pi, pi]).
    """
    xuv_c, ir_c = unpack_signal(candidate, cfg)
    xuv_r, _ = unpack_signal(reference, cfg)
    photon_ev = cfg.xuv_freq_grid_au * HARTREE_EV
    valid = (
        (photon_ev >= window_ev[0])
        & (photon_ev <= window_ev[1])
        & (np.abs(xuv_c) > min_amplitude)
        & (np.abs(xuv_r) > min_amplitude)
    )
    if not np.any(valid):
        raise AlignmentUndefinedError(
            "no spectral samples with usable amplitude in the alignment window"
        )
    diff = np.unwrap(np.angle(xuv_r[valid] * np.conj(xuv_c[valid])))
    shift = float(np.mean(diff))
    shift = (shift + np.pi) % (2.0 * np.pi) - np.pi
    aligned_xuv = xuv_c * np.exp(1j * shift)
    aligned = pack_signal(
        ComplexSpectrum(aligned_xuv.real, aligned_xuv.imag),
        ComplexSpectrum(ir_c.real, ir_c.imag),
        cfg,
    )
    return aligned, shift


# --- random pulse synthesis -------------------------------------------------

# Phase-range budgets, expressed as the magnitude each polynomial order may
# contribute at the band edge (radians), except order 1 which is a group
# delay in fs. Orders are 0..5.
XUV_PHASE_BUDGET = (np.pi, 2.0, 20.0, 10.0, 5.0, 2.5)
IR_PHASE_BUDGET = (np.pi, 1.0, 2.0, 1.0, 0.5, 0.25)


def _sample_phase(rng: np.random.Generator, grid: np.ndarray, budget) -> PulsePhase:
    half = 0.5 * (grid[-1] - grid[0])
    k = np.empty(6)
    k[0] = rng.uniform(-budget[0], budget[0])
    k[1] = rng.uniform(-1.0, 1.0) * budget[1] * FS_TO_AU
    for i in range(2, 6):
        k[i] = rng.uniform(-1.0, 1.0) * budget[i] / half**i
    return PulsePhase(k)


def random_pulse(
    cfg: StreakingConfig,
    rng: np.random.Generator,
    xuv_budget=XUV_PHASE_BUDGET,
    ir_budget=IR_PHASE_BUDGET,
) -> SignalVec:
    """Draw a random pulse pair: random phase polynomials on the default spectra.

    The polynomials are evaluated in frequency offset from each band's center,
    which keeps coefficient ranges O(1) and makes k1 exactly a group delay.
    """
    wx = cfg.xuv_freq_grid_au
    wi = cfg.ir_freq_grid_au
    ux = wx - 0.5 * (wx[0] + wx[-1])
    ui = wi - 0.5 * (wi[0] + wi[-1])
    xuv = build_spectrum(cfg.xuv_power(), _sample_phase(rng, ux, xuv_budget), ux)
    ir = build_spectrum(cfg.ir_power(), _sample_phase(rng, ui, ir_budget), ui)
    return pack_signal(xuv, ir, cfg)


def shift_cep(f: SignalVec, cfg: StreakingConfig, delta_rad: float) -> SignalVec:
    """Add a constant to the XUV spectral phase (the k0 / CEP ambiguity)."""
    xuv, ir = unpack_signal(f, cfg)
    xuv = xuv * np.exp(1j * delta_rad)
    return pack_signal(
        ComplexSpectrum(xuv.real, xuv.imag),
        ComplexSpectrum(ir.real, ir.imag),
        cfg,
    )
