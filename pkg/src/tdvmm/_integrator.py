"""Compiled column-discharge integrator.

Each column's total sink current is a Chebyshev series in the capacitor
voltage, piecewise constant in time between input falling edges. The kernel
runs fixed-step RK4 aligned to a global grid, splits steps at the edges,
applies charge-injection jumps at the edges and locates the phase-II
threshold crossing by bisection on the sub-step length.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _current(coef, v, v_lo, v_hi):
    x = (2.0 * v - v_lo - v_hi) / (v_hi - v_lo)
    if x < -1.0:
        x = -1.0
    elif x > 1.0:
        x = 1.0
    b1 = 0.0
    b2 = 0.0
    for k in range(coef.shape[0] - 1, 0, -1):
        b0 = 2.0 * x * b1 - b2 + coef[k]
        b2 = b1
        b1 = b0
    i = x * b1 - b2 + coef[0]
    return i if i > 0.0 else 0.0


@njit(cache=True)
def _rk4(coef, v, h, inv_c, v_lo, v_hi):
    k1 = -inv_c * _current(coef, v, v_lo, v_hi)
    k2 = -inv_c * _current(coef, v + 0.5 * h * k1, v_lo, v_hi)
    k3 = -inv_c * _current(coef, v + 0.5 * h * k2, v_lo, v_hi)
    k4 = -inv_c * _current(coef, v + h * k3, v_lo, v_hi)
    return v + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


@njit(cache=True)
def integrate_bank(edges, seg_coef, edge_drop, rep_coef, cap, v_reset, v_th, t_window, n_steps,
                   v_lo, v_hi, cross_tol, v_tol, record, out_t, out_v):
    """Integrate all columns of a bank through both phases.

    edges      (nseg+1,) phase-I breakpoints, edges[0] = 0, edges[-1] = T
    seg_coef   (ncols, nseg, D+1) summed Chebyshev coefficients per segment
    edge_drop  (nseg+1,) voltage jump applied at each breakpoint
    rep_coef   (ncols, D+1) phase-II replica coefficients
    v_th       (ncols,) comparator threshold per column

    Returns (v_phase1_end, t_cross, v_final, n_recorded); t_cross is NaN
    when the comparator never fires.
    """
    ncols = seg_coef.shape[0]
    nseg = seg_coef.shape[1]
    h_grid = t_window / n_steps
    inv_c = 1.0 / cap
    v_end1 = np.empty(ncols)
    t_cross = np.full(ncols, np.nan)
    v_final = np.empty(ncols)
    n_rec = 0
    for j in range(ncols):
        v = v_reset
        idx = 0
        if record:
            out_t[idx] = 0.0
            out_v[j, idx] = v
            idx += 1
        for k in range(nseg):
            if k > 0:
                v += edge_drop[k]
            t = edges[k]
            t_end = edges[k + 1]
            while t_end - t > 1e-12 * h_grid:
                g = np.floor(t / h_grid * (1.0 + 1e-13)) + 1.0
                t_next = g * h_grid
                if t_next > t_end or t_end - t_next < 1e-9 * h_grid:
                    t_next = t_end
                v = _rk4(seg_coef[j, k], v, t_next - t, inv_c, v_lo, v_hi)
                t = t_next
                if record:
                    out_t[idx] = t
                    out_v[j, idx] = v
                    idx += 1
        v += edge_drop[nseg]
        v_end1[j] = v
        if record:
            out_t[idx] = t_window
            out_v[j, idx] = v
            idx += 1
        crossed = False
        if v <= v_th[j] + v_tol:
            t_cross[j] = t_window
            crossed = True
        coef = rep_coef[j]
        for s in range(n_steps):
            t0 = t_window + s * h_grid
            v_new = _rk4(coef, v, h_grid, inv_c, v_lo, v_hi)
            if not crossed and v_new <= v_th[j]:
                lo = 0.0
                hi = h_grid
                while hi - lo > cross_tol * t_window:
                    mid = 0.5 * (lo + hi)
                    if _rk4(coef, v, mid, inv_c, v_lo, v_hi) > v_th[j]:
                        lo = mid
                    else:
                        hi = mid
                t_cross[j] = t0 + 0.5 * (lo + hi)
                crossed = True
            v = v_new
            if record:
                out_t[idx] = t_window + (s + 1) * h_grid
                out_v[j, idx] = v
                idx += 1
        if not crossed and v <= v_th[j] + v_tol:
            t_cross[j] = 2.0 * t_window
        v_final[j] = v
        n_rec = idx
    return v_end1, t_cross, v_final, n_rec
