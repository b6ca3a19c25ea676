"""Differentiable torch twins of the three measurement forward models.

Each function mirrors its numpy counterpart step by step (same grids, same
trapezoid/cumulative-sum arithmetic, same FFT padding), so float64 outputs
agree with the numpy path to roundoff and gradients flow to the packed signal
through every physics stage. Inputs may carry arbitrary leading batch
dimensions; the native signal shape occupies the trailing axes.

Real float32 inputs use complex64 internals, float64 uses complex128.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import ConfigError, ShapeMismatchError
from .fresnel import FresnelConfig
from .streaking import FS_TO_AU, HARTREE_EV, StreakingConfig, _TIME_CHUNK


def _complex_dtype(real_dtype: torch.dtype) -> torch.dtype:
    if real_dtype == torch.float64:
        return torch.complex128
    if real_dtype == torch.float32:
        return torch.complex64
    raise ConfigError(f"unsupported real dtype {real_dtype}")


def _const(arr: np.ndarray, like: torch.Tensor) -> torch.Tensor:
    dtype = _complex_dtype(like.dtype) if np.iscomplexobj(arr) else like.dtype
    return torch.as_tensor(arr, dtype=dtype, device=like.device)


def _cumtrapz(y: torch.Tensor, dt: torch.Tensor) -> torch.Tensor:
    """Cumulative trapezoid along the last axis with per-interval spacing,
    matching scipy's cumulative_trapezoid(..., initial=0.0) arithmetic."""
    inc = 0.5 * (y[..., 1:] + y[..., :-1]) * dt
    zero = torch.zeros_like(y[..., :1])
    return torch.cat([zero, torch.cumsum(inc, dim=-1)], dim=-1)


def streak_trace_torch(f: torch.Tensor, cfg: StreakingConfig) -> torch.Tensor:
    """I(K, tau) for packed pulse batches: (..., 2*(n_xuv+n_ir)) ->
    (..., n_energy, n_delay)."""
    if f.shape[-1] != cfg.signal_len:
        raise ShapeMismatchError(
            f"packed length {f.shape[-1]} != config length {cfg.signal_len}"
        )
    lead = f.shape[:-1]
    fb = f.reshape(-1, cfg.signal_len)

    nx, ni = cfg.n_xuv, cfg.n_ir
    xuv = torch.complex(fb[:, :nx], fb[:, nx : 2 * nx])
    ir = torch.complex(fb[:, 2 * nx : 2 * nx + ni], fb[:, 2 * nx + ni :])

    times = _const(cfg.time_grid_au, fb)
    dt = times[1:] - times[:-1]
    wi = _const(cfg.ir_freq_grid_au, fb)
    dwi = float(cfg.ir_freq_grid_au[1] - cfg.ir_freq_grid_au[0]) if ni > 1 else 1.0

    # IR field and vector potential
    exp_ti = torch.polar(torch.ones(times.shape[0], ni, dtype=fb.dtype, device=fb.device),
                         torch.outer(times, wi))
    e_ir = (exp_ti @ (ir * dwi).transpose(0, 1)).transpose(0, 1)  # (B, nt)
    e_re = e_ir.real
    if cfg.vector_potential_mode == "derivative":
        a = -torch.gradient(e_re, spacing=(times,), dim=-1)[0]
    else:
        cum = _cumtrapz(e_re, dt)
        a = cum - cum[..., -1:]

    c1 = _cumtrapz(a, dt)
    c2 = _cumtrapz(a * a, dt)
    i1 = c1[..., -1:] - c1
    i2 = 0.5 * (c2[..., -1:] - c2)

    energies = cfg.energy_grid_ev / HARTREE_EV
    v = _const(np.sqrt(2.0 * energies), fb)
    kip = _const(energies + cfg.ionization_potential_ev / HARTREE_EV, fb)

    wx_np = cfg.xuv_freq_grid_au
    dwx = float(wx_np[1] - wx_np[0]) if nx > 1 else 1.0
    wx = _const(wx_np, fb)
    delays = _const(cfg.delay_grid_fs * FS_TO_AU, fb)
    # delayed-source matrix P[b, j, d] = E_j * exp(-i w_j tau_d) * dw
    shift = torch.polar(
        torch.ones(nx, delays.shape[0], dtype=fb.dtype, device=fb.device),
        -torch.outer(wx, delays),
    )
    p = xuv[:, :, None] * shift[None] * dwx

    w_np = np.full(cfg.n_time, cfg.time_grid_au[1] - cfg.time_grid_au[0])
    w_np[0] *= 0.5
    w_np[-1] *= 0.5
    w = _const(w_np * cfg.dipole, fb)

    amp = torch.zeros(
        fb.shape[0], cfg.n_energy, cfg.n_delay,
        dtype=_complex_dtype(fb.dtype), device=fb.device,
    )
    for lo in range(0, cfg.n_time, _TIME_CHUNK):
        hi = min(lo + _TIME_CHUNK, cfg.n_time)
        tc = times[lo:hi]
        exp_tx = torch.polar(
            torch.ones(hi - lo, nx, dtype=fb.dtype, device=fb.device),
            torch.outer(tc, wx),
        )
        es = torch.einsum("tj,bjd->btd", exp_tx, p)
        phase = (
            -(v[None, :, None] * i1[:, None, lo:hi] + i2[:, None, lo:hi])
            - (kip[:, None] * tc[None, :])[None]
        )
        gate = torch.polar(torch.ones_like(phase), phase) * w[lo:hi]
        amp = amp + torch.einsum("bkt,btd->bkd", gate.to(amp.dtype), es)
    trace = amp.real**2 + amp.imag**2
    return trace.reshape(*lead, cfg.n_energy, cfg.n_delay)


def video_compress_torch(f: torch.Tensor, masks_yxt: np.ndarray) -> torch.Tensor:
    """Coded-aperture temporal sum: (..., n, n, C, k) -> (..., n, n, C)."""
    n, _, k = masks_yxt.shape
    if f.ndim < 4 or f.shape[-4:-2] != (n, n) or f.shape[-1] != k:
        raise ShapeMismatchError(
            f"frames shape {tuple(f.shape)} incompatible with masks ({n}, {n}, {k})"
        )
    m = torch.as_tensor(masks_yxt, dtype=f.dtype, device=f.device)
    return torch.einsum("...yxct,yxt->...yxc", f, m)


def hologram_torch(obj: torch.Tensor, cfg: FresnelConfig) -> torch.Tensor:
    """In-line hologram intensity: (..., n, n) real -> (..., n, n)."""
    n = cfg.n
    if obj.shape[-2:] != (n, n):
        raise ShapeMismatchError(f"object shape {tuple(obj.shape)} != (..., {n}, {n})")
    field = torch.complex(obj, torch.zeros_like(obj))
    kernel = _const(cfg.kernel(), obj)
    pad = 2 * n
    full = torch.fft.ifft2(
        torch.fft.fft2(field, s=(pad, pad)) * torch.fft.fft2(kernel, s=(pad, pad))
    )
    half = n // 2
    e_d = full[..., half : half + n, half : half + n]
    total_re = cfg.a_ref + e_d.real
    return total_re**2 + e_d.imag**2
