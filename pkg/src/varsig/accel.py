"""Hot-loop kernels: numba-compiled with a pure-numpy fallback.

Backend selection is controlled by the environment variable ``VARSIG_NUMBA``:

    "auto" (default)  use numba when it is importable
    "1"               require numba; raise ConfigError if unavailable
    "0"               force the numpy path

``VARSIG_THREADS`` (integer) caps the numba thread pool. Both flags are read
at call time, so tests and benchmarks can flip them without reimporting.

The three kernel families here are the measured hot spots:

* fused phase-gate construction + time integration for streak traces,
* the dual inner loop of the anisotropic total-variation proximal map,
* the coded-aperture video compression operator and its adjoint.

Each has one loop-level implementation (compiled by numba when available)
and one vectorized numpy implementation; both compute identical math and are
cross-checked in the test suite and timed in ``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ConfigError

try:  # pragma: no cover - exercised indirectly via backend()


    import numba
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # noqa: D103 - fallback decorator, never hot
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range

_threads_applied = False


def backend() -> str:
    """Resolve the active backend name ("numba" or "numpy") from the env."""
    flag = os.environ.get("VARSIG_NUMBA", "auto").strip().lower()
    if flag in ("0", "off", "false", "numpy"):
        return "numpy"
    if flag in ("1", "on", "true", "numba"):
        if not _HAVE_NUMBA:
            raise ConfigError("VARSIG_NUMBA=1 but numba is not importable")
        _apply_thread_cap()
        return "numba"
    if flag != "auto":
        raise ConfigError(f"unrecognized VARSIG_NUMBA value {flag!r}")
    if _HAVE_NUMBA:
        _apply_thread_cap()
        return "numba"
    return "numpy"


def _apply_thread_cap() -> None:
    global _threads_applied
    if _threads_applied or not _HAVE_NUMBA:
        return
    raw = os.environ.get("VARSIG_THREADS")
    if raw:
        try:
            want = max(1, int(raw))
        except ValueError as err:
            raise ConfigError(f"VARSIG_THREADS must be an integer, got {raw!r}") from err
        numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))
    _threads_applied = True


# ---------------------------------------------------------------------------
# Streak-trace gate + integration
#
# amp[k, d] += sum_t w[t] * exp(i*(-(v[k]*ia1[t] + ia2[t]) - kip[k]*t)) * es[t, d]
#
# where ia1(t) = integral_t^tmax A dt', ia2(t) = 0.5 * integral_t^tmax A^2 dt',
# v[k] = sqrt(2K), kip[k] = K + Ip, es[t, d] the delayed source field and w the
# quadrature weights. Called once per time chunk; `amp` accumulates in place.
# ---------------------------------------------------------------------------


def _streak_accumulate_numpy(ts, ia1, ia2, v, kip, w, es, amp):
    phase = -(np.outer(v, ia1) + ia2[None, :]) - np.outer(kip, ts)
    gate = np.exp(1j * phase)
    gate *= w[None, :]
    amp += gate @ es


@njit(parallel=True, cache=True)
def _streak_accumulate_numba(ts, ia1, ia2, v, kip, w, es, amp):  # pragma: no cover
    n_k = v.shape[0]
    n_t = ts.shape[0]
    n_d = es.shape[1]
    for k in prange(n_k):
        for it in range(n_t):
            ph = -(v[k] * ia1[it] + ia2[it]) - kip[k] * ts[it]
            c = math.cos(ph) * w[it]
            s = math.sin(ph) * w[it]
            for d in range(n_d):
                e = es[it, d]
                amp[k, d] += complex(
                    c * e.real - s * e.imag, c * e.imag + s * e.real
                )


def streak_accumulate(ts, ia1, ia2, v, kip, w, es, amp) -> None:
    """Accumulate one time chunk of the streak amplitude into `amp` in place."""
    if backend() == "numba":
        _streak_accumulate_numba(ts, ia1, ia2, v, kip, w, es, amp)
    else:
        _streak_accumulate_numpy(ts, ia1, ia2, v, kip, w, es, amp)


# ---------------------------------------------------------------------------
# Anisotropic TV proximal map (2D), dual projected-gradient inner loop:
#
#   prox_{alpha * ||D u||_1}(x) = x - D^T p*,
#   p <- clip(p + sigma * D(x - D^T p), [-alpha, alpha]),  sigma <= 1/8.
#
# D is the forward-difference gradient with Neumann boundaries.
# ---------------------------------------------------------------------------


def _tv_prox_2d_numpy(x, alpha, n_iters, sigma):
    px = np.zeros_like(x)
    py = np.zeros_like(x)
    for _ in range(n_iters):
        u = x - _tv_div_adjoint_numpy(px, py)
        gx = np.zeros_like(x)
        gx[:-1, :] = u[1:, :] - u[:-1, :]
        gy = np.zeros_like(x)
        gy[:, :-1] = u[:, 1:] - u[:, :-1]
        px = np.clip(px + sigma * gx, -alpha, alpha)
        py = np.clip(py + sigma * gy, -alpha, alpha)
    return x - _tv_div_adjoint_numpy(px, py)


def _tv_div_adjoint_numpy(px, py):
    out = np.zeros_like(px)
    out[0, :] += -px[0, :]
    out[1:-1, :] += px[:-2, :] - px[1:-1, :]
    out[-1, :] += px[-2, :]
    out[:, 0] += -py[:, 0]
    out[:, 1:-1] += py[:, :-2] - py[:, 1:-1]
    out[:, -1] += py[:, -2]
    return out


@njit(cache=True)
def _tv_prox_2d_numba(x, alpha, n_iters, sigma):  # pragma: no cover
    h, w = x.shape
    px = np.zeros((h, w))
    py = np.zeros((h, w))
    u = np.empty((h, w))
    for step in range(n_iters + 1):
        for i in range(h):
            for j in range(w):
                div = 0.0
                if i == 0:
                    div -= px[0, j]
                elif i == h - 1:
                    div += px[h - 2, j]
                else:
                    div += px[i - 1, j] - px[i, j]
                if j == 0:
                    div -= py[i, 0]
                elif j == w - 1:
                    div += py[i, w - 2]
                else:
                    div += py[i, j - 1] - py[i, j]
                u[i, j] = x[i, j] - div
        if step == n_iters:
            break
        for i in range(h):
            for j in range(w):
                if i < h - 1:
                    g = px[i, j] + sigma * (u[i + 1, j] - u[i, j])
                    px[i, j] = min(alpha, max(-alpha, g))
                if j < w - 1:
                    g = py[i, j] + sigma * (u[i, j + 1] - u[i, j])
                    py[i, j] = min(alpha, max(-alpha, g))
    return u


def tv_prox_2d(x, alpha, n_iters: int = 10, sigma: float = 0.125):
    """Approximate prox of ``alpha * TV_aniso`` at `x` (2D array)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if alpha <= 0:
        return x.copy()
    if backend() == "numba":
        return _tv_prox_2d_numba(x, float(alpha), int(n_iters), float(sigma))
    return _tv_prox_2d_numpy(x, float(alpha), int(n_iters), float(sigma))


# ---------------------------------------------------------------------------
# Coded-aperture video compression: g[y,x,c] = sum_t m[y,x,t] * f[y,x,c,t]
# and its adjoint f*[y,x,c,t] = m[y,x,t] * g[y,x,c].
# ---------------------------------------------------------------------------


def _video_compress_numpy(frames, masks):
    return np.einsum("yxct,yxt->yxc", frames, masks)


@njit(parallel=True, cache=True)
def _video_compress_numba(frames, masks):  # pragma: no cover
    ny, nx, nc, nt = frames.shape
    out = np.zeros((ny, nx, nc))
    for y in prange(ny):
        for x in range(nx):
            for c in range(nc):
                acc = 0.0
                for t in range(nt):
                    acc += masks[y, x, t] * frames[y, x, c, t]
                out[y, x, c] = acc
    return out


def video_compress(frames, masks):
    """Collapse frames (Y,X,C,T) through per-frame masks (Y,X,T) to (Y,X,C)."""
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    masks = np.ascontiguousarray(masks, dtype=np.float64)
    if backend() == "numba":
        return _video_compress_numba(frames, masks)
    return _video_compress_numpy(frames, masks)


def _video_adjoint_numpy(g, masks):
    return np.einsum("yxc,yxt->yxct", g, masks)


@njit(parallel=True, cache=True)
def _video_adjoint_numba(g, masks):  # pragma: no cover
    ny, nx, nc = g.shape
    nt = masks.shape[2]
    out = np.empty((ny, nx, nc, nt))
    for y in prange(ny):
        for x in range(nx):
            for c in range(nc):
                for t in range(nt):
                    out[y, x, c, t] = masks[y, x, t] * g[y, x, c]
    return out


def video_adjoint(g, masks):
    """Adjoint of :func:`video_compress` (spread a measurement across frames)."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    masks = np.ascontiguousarray(masks, dtype=np.float64)
    if backend() == "numba":
        return _video_adjoint_numba(g, masks)
    return _video_adjoint_numpy(g, masks)
