"""Independent reference implementations used to cross-check the package.

Everything here is written directly from the measurement definitions using
different numerics than the library (midpoint-rectangle quadrature, explicit
matrices, O(N^4) double sums) and deliberately avoids calling library
internals beyond reading plain config fields.
"""

import numpy as np

HARTREE_EV = 27.211386245988
FS_TO_AU = 1000.0 / 24.188843265857


def _suffix_midpoint(values: np.ndarray, h: float) -> np.ndarray:
    """S_k = integral from midpoint k to the window end, midpoint rectangles.

    S_k = h * sum_{m>k} values_m + (h/2) * values_k, all nodes at midpoints.
    """
    rev = np.cumsum(values[::-1])[::-1]
    return h * (rev - values) + 0.5 * h * values


def streak_trace_midpoint(f_vec: np.ndarray, cfg, n_mid: int) -> np.ndarray:
    """Direct midpoint-rectangle evaluation of the streak trace integral."""
    nx, ni = cfg.n_xuv, cfg.n_ir
    xuv = f_vec[:nx] + 1j * f_vec[nx : 2 * nx]
    ir = f_vec[2 * nx : 2 * nx + ni] + 1j * f_vec[2 * nx + ni :]

    ip_au = cfg.ionization_potential_ev / HARTREE_EV
    w_xuv = np.linspace(
        (cfg.energy_min_ev + cfg.ionization_potential_ev) / HARTREE_EV,
        (cfg.energy_max_ev + cfg.ionization_potential_ev) / HARTREE_EV,
        nx,
    )
    w_ir = np.linspace(
        (1.5498 - cfg.ir_band_halfwidth_ev) / HARTREE_EV,
        (1.5498 + cfg.ir_band_halfwidth_ev) / HARTREE_EV,
        ni,
    )
    d_xuv = w_xuv[1] - w_xuv[0]
    d_ir = w_ir[1] - w_ir[0]

    span = cfg.time_span_fs * FS_TO_AU
    h = 2.0 * span / n_mid
    t_mid = -span + (np.arange(n_mid) + 0.5) * h

    e_ir = np.zeros(n_mid)
    for j in range(ni):
        e_ir += (ir[j] * np.exp(1j * w_ir[j] * t_mid)).real * d_ir

    a = -_suffix_midpoint(e_ir, h)
    i1 = _suffix_midpoint(a, h)
    i2 = 0.5 * _suffix_midpoint(a * a, h)

    energies = np.linspace(cfg.energy_min_ev, cfg.energy_max_ev, cfg.n_energy)
    delays = np.linspace(cfg.delay_min_fs, cfg.delay_max_fs, cfg.n_delay) * FS_TO_AU

    chunk = 16384
    e_x = np.empty((cfg.n_delay, n_mid), dtype=np.complex128)
    for idl, tau in enumerate(delays):
        for lo in range(0, n_mid, chunk):
            hi = min(lo + chunk, n_mid)
            e_x[idl, lo:hi] = np.exp(
                1j * np.outer(t_mid[lo:hi] - tau, w_xuv)
            ) @ (xuv * d_xuv)

    out = np.zeros((cfg.n_energy, cfg.n_delay))
    for ik, k_ev in enumerate(energies):
        k_au = k_ev / HARTREE_EV
        v = np.sqrt(2.0 * k_au)
        gate = np.exp(1j * (-(v * i1 + i2) - (k_au + ip_au) * t_mid))
        amp = cfg.dipole * h * (e_x @ gate)
        out[ik, :] = np.abs(amp) ** 2
    return out


def video_matrix_oracle(masks_knn: np.ndarray, channels: int) -> np.ndarray:
    """Dense {0,1} matrix built entry-by-entry from the measurement definition.

    Row index runs row-major over (y, x, c); column index row-major over
    (y, x, c, t). Entry is masks[t, y, x] wherever the (y, x, c) parts agree.
    """
    k, n, _ = masks_knn.shape
    n_meas = n * n * channels
    mat = np.zeros((n_meas, n_meas * k))
    for y in range(n):
        for x in range(n):
            for c in range(channels):
                row = (y * n + x) * channels + c
                for t in range(k):
                    col = ((y * n + x) * channels + c) * k + t
                    mat[row, col] = masks_knn[t, y, x]
    return mat


def fresnel_double_sum(e_o: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """O(N^4) direct evaluation of the aligned discrete convolution.

    E_d[n] = sum_m E_o[m] * K[n - m + n//2], zero outside the kernel array.
    """
    n = e_o.shape[0]
    half = n // 2
    # pad[j1, j2] = K[q + half] at offset q = j - (n - 1), zero elsewhere
    pad = np.zeros((2 * n - 1, 2 * n - 1), dtype=np.complex128)
    lo = n - 1 - half
    pad[lo : lo + n, lo : lo + n] = kernel
    idx = np.arange(n)
    out = np.empty((n, n), dtype=np.complex128)
    for n1 in range(n):
        rows = n1 - idx + (n - 1)  # offset n1 - m1, shifted into pad indexing
        slab = pad[rows, :]  # (m1, j2)
        cols = idx[:, None] - idx[None, :] + (n - 1)  # (n2, m2)
        gathered = slab[:, cols]  # (m1, n2, m2)
        out[n1] = np.einsum("ab,anb->n", e_o, gathered)
    return out


def tv_brute_force_2x2(g, mask, lam, step=0.01, lo=0.0, hi=1.0):
    """Exhaustive grid search for min ||g - m*f||^2 + lam*TV(f) on a 2x2 image.

    Single frame, single channel: the operator is elementwise masking.
    f = [[a, b], [c, d]]; anisotropic TV = |c-a| + |d-b| + |b-a| + |d-c|.
    """
    vals = np.arange(lo, hi + step / 2, step)
    bb, cc, dd = np.meshgrid(vals, vals, vals, indexing="ij")
    best_obj = np.inf
    best = None
    for a in vals:
        resid = (
            (g[0, 0] - mask[0, 0] * a) ** 2
            + (g[0, 1] - mask[0, 1] * bb) ** 2
            + (g[1, 0] - mask[1, 0] * cc) ** 2
            + (g[1, 1] - mask[1, 1] * dd) ** 2
        )
        tv = np.abs(cc - a) + np.abs(dd - bb) + np.abs(bb - a) + np.abs(dd - cc)
        obj = resid + lam * tv
        idx = np.unravel_index(np.argmin(obj), obj.shape)
        if obj[idx] < best_obj:
            best_obj = float(obj[idx])
            best = np.array([[a, bb[idx]], [cc[idx], dd[idx]]])
    return best, best_obj
