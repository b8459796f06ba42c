"""Behavioral MOSFET and RRAM models and the series 1T-1R cell solver.

The transistor is a smooth all-region model (EKV-style interpolation) with
channel-length modulation, DIBL and subthreshold conduction; the resistive
element follows a sinh I-V law. A cell places the RRAM either between the
transistor source and ground (``SOURCE_CONNECTED``) or between the column
node and the drain (``DRAIN_CONNECTED``).

All solvers are vectorized over numpy arrays; the scalar public functions
are thin wrappers around the array kernels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, ContractViolation, SolverError, UndefinedRatioError

#: Specific current giving 136.9 nA through (v_gate=0.3 V, r0=2.5 kOhm,
#: v_node=0.8 V, l_gate=120 nm); see :func:`calibrate_i_spec`.
I_SPEC_DEFAULT = 3.8203149255663e-07

MAX_ITER = 200
# residual target on ln(I_mos / I_rram), i.e. relative current mismatch
_LOG_RESIDUAL_TOL = 1e-11
_V_LIMIT = 1.0


@dataclass(frozen=True)
class MosfetParams:
    v_t0: float = 0.35
    n_slope: float = 1.3
    i_spec: float = I_SPEC_DEFAULT
    w_over_l: float = 1.0
    lambda_clm: float = 0.3
    eta_dibl: float = 0.08
    l_gate: float = 120e-9
    l_ref: float = 60e-9
    thermal_voltage: float = 0.0258

    def __post_init__(self):
        for name in ("v_t0", "n_slope", "i_spec", "w_over_l", "l_gate", "l_ref", "thermal_voltage"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"MosfetParams.{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("lambda_clm", "eta_dibl"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"MosfetParams.{name} must be >= 0, got {getattr(self, name)!r}")

    @property
    def lambda_eff(self) -> float:
        return self.lambda_clm * self.l_ref / self.l_gate

    @property
    def eta_eff(self) -> float:
        return self.eta_dibl * self.l_ref / self.l_gate


@dataclass(frozen=True)
class RramParams:
    r0: float
    beta: float = 4.0
    r_on: float = 2.5e3
    r_off: float = 2.5e6

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError(f"RRAM beta must be > 0, got {self.beta!r}")
        if not 0 < self.r_on <= self.r_off:
            raise ConfigurationError(f"RRAM window needs 0 < r_on <= r_off, got [{self.r_on}, {self.r_off}]")
        # programmed states may land a few ulps outside the window
        slack = 1e-9
        if not self.r_on * (1 - slack) <= self.r0 <= self.r_off * (1 + slack):
            raise ConfigurationError(f"r0={self.r0!r} outside [{self.r_on}, {self.r_off}]")


class CellTopology(enum.Enum):
    SOURCE_CONNECTED = "source-connected"
    DRAIN_CONNECTED = "drain-connected"


@dataclass(frozen=True)
class CellState:
    mosfet: MosfetParams = field(default_factory=MosfetParams)
    rram: RramParams = field(default_factory=lambda: RramParams(r0=2.5e3))
    topology: CellTopology = CellTopology.SOURCE_CONNECTED

    def with_r0(self, r0: float) -> "CellState":
        return replace(self, rram=replace(self.rram, r0=float(r0)))


@dataclass(frozen=True)
class IdealSink:
    """Voltage-independent current sink with a programmable window.

    Stands in for a 1T-1R cell wherever the protocol has to be checked
    without device non-idealities.
    """

    i_min: float
    i_max: float

    def __post_init__(self):
        if not 0 <= self.i_min <= self.i_max:
            raise ConfigurationError(f"IdealSink needs 0 <= i_min <= i_max, got {self.i_min}, {self.i_max}")


@dataclass(frozen=True)
class ConstantCurrentSink:
    """Programmed test double whose current ignores every bias."""

    current: float

    def __post_init__(self):
        if not self.current >= 0:
            raise ConfigurationError(f"sink current must be >= 0, got {self.current!r}")

    def current_at(self, v_gate, v_node):
        return self.current


# --------------------------------------------------------------------------
# elementary I-V laws


def mosfet_current(p: MosfetParams, v_gs, v_ds, v_t0=None):
    """Drain current of the behavioral transistor.

    ``I = i_spec * W/L * F(u)**2 * (1 - exp(-v_ds/V_T)) * (1 + lambda_eff*v_ds)``
    with ``u = (v_gs - v_t0 + eta_eff*v_ds) / (n*V_T)`` and
    ``F(u) = ln(1 + exp(u/2))``. Accepts scalars or arrays; ``v_t0``
    optionally overrides the nominal threshold (per-device mismatch).
    """
    v_gs = np.asarray(v_gs, dtype=float)
    v_ds = np.asarray(v_ds, dtype=float)
    if np.any(v_ds < 0):
        raise ContractViolation("mosfet_current requires v_ds >= 0")
    vt0 = p.v_t0 if v_t0 is None else np.asarray(v_t0, dtype=float)
    vt = p.thermal_voltage
    u = (v_gs - vt0 + p.eta_eff * v_ds) / (p.n_slope * vt)
    f = np.logaddexp(0.0, 0.5 * u)
    sat = -np.expm1(-v_ds / vt)
    out = p.i_spec * p.w_over_l * f * f * sat * (1.0 + p.lambda_eff * v_ds)
    return out[()] if out.ndim == 0 else out


def rram_current(r: RramParams, v):
    """RRAM current ``sinh(beta*v) / (beta*r0)``; odd in ``v``."""
    v = np.asarray(v, dtype=float)
    out = np.sinh(r.beta * v) / (r.beta * r.r0)
    return out[()] if out.ndim == 0 else out


def _ln_mos(p: MosfetParams, vt0, v_gs, v_ds):
    """ln(I_mos) and its partials w.r.t. v_gs and v_ds (arrays, v_ds > 0)."""
    vt = p.thermal_voltage
    nvt = p.n_slope * vt
    half_u = 0.5 * (v_gs - vt0 + p.eta_eff * v_ds) / nvt
    f = np.logaddexp(0.0, half_u)
    # d ln F / d(half_u) = sigmoid(half_u) / F
    dlnf = np.exp(half_u - np.logaddexp(0.0, half_u)) / f
    e = np.exp(-v_ds / vt)
    ln_i = (np.log(p.i_spec * p.w_over_l) + 2.0 * np.log(f) + np.log(-np.expm1(-v_ds / vt))
            + np.log1p(p.lambda_eff * v_ds))
    d_gs = dlnf / nvt
    d_ds = dlnf * p.eta_eff / nvt + e / (vt * -np.expm1(-v_ds / vt)) + p.lambda_eff / (1.0 + p.lambda_eff * v_ds)
    return ln_i, d_gs, d_ds


def _ln_rram(beta, r0, v):
    """ln(I_rram) and its derivative for v > 0."""
    bv = beta * v
    # ln sinh(x) = x + log1p(-exp(-2x)) - ln 2, stable for large x
    ln_i = bv + np.log(-np.expm1(-2.0 * bv)) - np.log(2.0) - np.log(beta * r0)
    d = beta / np.tanh(bv)
    return ln_i, d


# --------------------------------------------------------------------------
# series cell solver


def solve_series(p: MosfetParams, topology: CellTopology, beta, r0, v_gate, v_node, v_t0=None):
    """Vectorized operating point of 1T-1R cells.

    Returns ``(i_cell, v_internal)`` arrays broadcast over all inputs, where
    ``v_internal`` is the source potential (source-connected) or the drain
    potential (drain-connected). The unknown node is bracketed in
    ``[0, v_node]``; Newton steps on the log-residual are taken when they stay
    inside the bracket, bisection otherwise.
    """
    vt0 = p.v_t0 if v_t0 is None else v_t0
    beta, r0, v_gate, v_node, vt0 = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (beta, r0, v_gate, v_node, vt0)))
    shape = v_node.shape
    beta, r0, v_gate, v_node, vt0 = (a.ravel() for a in (beta, r0, v_gate, v_node, vt0))
    if np.any(v_node < 0):
        raise ContractViolation("v_node must be >= 0")
    current = np.zeros(v_node.shape)
    v_int = np.zeros(v_node.shape)
    live = v_node > 0
    if np.any(live):
        i, x = _solve_live(p, topology, beta[live], r0[live], v_gate[live], v_node[live], vt0[live])
        current[live] = i
        v_int[live] = x
    return current.reshape(shape), v_int.reshape(shape)


def _mos_vs_drop(p, vt0, vg, vn, x, source):
    """ln(I_mos) and d/dx when the RRAM drops ``x`` volts."""
    if source:
        lm, dgs, dds = _ln_mos(p, vt0, vg - x, vn - x)
        return lm, -dgs - dds
    lm, _, dds = _ln_mos(p, vt0, vg, vn - x)
    return lm, -dds


def _solve_live(p, topology, beta, r0, vg, vn, vt0):
    # unknown: the voltage across the RRAM, in [0, v_node]; solving for the
    # drop itself keeps full relative precision when it is tiny
    source = topology is CellTopology.SOURCE_CONNECTED
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        i_free = mosfet_current(p, vg, vn, v_t0=vt0)
        lo = np.zeros_like(vn)
        hi = vn.copy()
        # the drop if the transistor current were unaffected bounds the root
        x = np.clip(np.arcsinh(beta * r0 * i_free) / beta, 1e-6 * hi, (1 - 1e-6) * hi)
        done = np.zeros(vn.shape, dtype=bool)
        for _ in range(MAX_ITER):
            lm, dm = _mos_vs_drop(p, vt0, vg, vn, x, source)
            lr, dr = _ln_rram(beta, r0, x)
            h, dh = lm - lr, dm - dr
            pos = h > 0
            lo = np.where(pos & ~done, x, lo)
            hi = np.where(~pos & ~done, x, hi)
            done |= (np.abs(h) <= _LOG_RESIDUAL_TOL) | (hi - lo <= 4 * np.finfo(float).eps * hi)
            if done.all():
                break
            step = x - h / dh
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            step = np.where(bad, 0.5 * (lo + hi), step)
            x = np.where(done, x, step)
        else:
            worst = int(np.argmax(np.where(done, 0.0, np.abs(np.nan_to_num(h, nan=np.inf)))))
            raise SolverError("series cell solver did not converge", v_gate=float(vg[worst]),
                              v_node=float(vn[worst]), r0=float(r0[worst]), residual=float(h[worst]))
        i = np.sinh(beta * x) / (beta * r0)
    return i, (x if source else vn - x)


def _check_bias(v_gate, v_node):
    if not (0.0 <= v_gate <= _V_LIMIT and 0.0 <= v_node <= _V_LIMIT):
        raise ContractViolation(f"bias outside [0, 1] V: v_gate={v_gate!r}, v_node={v_node!r}")


def solve_cell(cell: CellState, v_gate: float, v_node: float) -> tuple[float, float]:
    """Current through one cell and its internal node voltage."""
    _check_bias(v_gate, v_node)
    i, x = solve_series(cell.mosfet, cell.topology, cell.rram.beta, cell.rram.r0, v_gate, v_node)
    return float(i), float(x)


def cell_current_range(cell: CellState, v_gate: float, v_cal: float) -> tuple[float, float]:
    """Programmable current window ``(i_min, i_max)`` at the calibration node voltage."""
    if isinstance(cell, IdealSink):
        return cell.i_min, cell.i_max
    _check_bias(v_gate, v_cal)
    r = cell.rram
    i, _ = solve_series(cell.mosfet, cell.topology, r.beta, np.array([r.r_off, r.r_on]), v_gate, v_cal)
    i_min, i_max = float(i[0]), float(i[1])
    if not i_min < i_max:
        raise ConfigurationError(
            f"degenerate current window: i_min={i_min:.4g} A >= i_max={i_max:.4g} A (r_on={r.r_on}, r_off={r.r_off})")
    return i_min, i_max


def dynamic_range(cell: CellState, v_gate: float, v_cal: float) -> float:
    i_min, i_max = cell_current_range(cell, v_gate, v_cal)
    return i_max - i_min


# --------------------------------------------------------------------------
# weight programming


def resistance_for_current(cell: CellState, target, v_gate, v_cal, v_t0=None):
    """RRAM state(s) ``r0`` that make the cell sink ``target`` amperes at ``v_cal``.

    The series equation is inverted through the internal node: the transistor
    alone fixes the internal voltage that carries ``target``, and the RRAM
    must then drop exactly that voltage. Results are clipped to the window.
    """
    p, r = cell.mosfet, cell.rram
    target, v_gate, vt0 = np.broadcast_arrays(
        np.asarray(target, float), np.asarray(v_gate, float), np.asarray(p.v_t0 if v_t0 is None else v_t0, float))
    shape = target.shape
    target, v_gate, vt0 = target.ravel(), v_gate.ravel(), vt0.ravel()
    if np.any(target <= 0):
        raise ContractViolation("target current must be > 0")
    source = cell.topology is CellTopology.SOURCE_CONNECTED
    ln_t = np.log(target)
    i_free = mosfet_current(p, v_gate, v_cal, v_t0=vt0)
    reachable = target < i_free
    x_sol = np.zeros(target.shape)
    if np.any(reachable):
        t, vg, v0 = ln_t[reachable], v_gate[reachable], vt0[reachable]
        vc = np.full(t.shape, float(v_cal))
        lo = np.zeros(t.shape)
        hi = vc.copy()
        x = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for _ in range(MAX_ITER):
                lm, dm = _mos_vs_drop(p, v0, vg, vc, x, source)
                h = lm - t
                pos = h > 0
                lo = np.where(pos, x, lo)
                hi = np.where(pos, hi, x)
                if np.all((np.abs(h) <= _LOG_RESIDUAL_TOL) | (hi - lo <= 4 * np.finfo(float).eps * hi)):
                    break
                step = x - h / dm
                bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
                x = np.where(bad, 0.5 * (lo + hi), step)
            else:
                raise SolverError("weight programming inversion did not converge")
        x_sol[reachable] = x
    drop = x_sol
    with np.errstate(divide="ignore", invalid="ignore"):
        r0 = np.where(drop > 0, np.sinh(r.beta * drop) / (r.beta * target), 0.0)
    r0 = np.clip(r0, r.r_on, r.r_off)
    return r0.reshape(shape)


def program_weight(w: float, cell: CellState, v_gate: float, v_cal: float, *,
                   error_bits: int | None = None, rng: np.random.Generator | None = None) -> RramParams:
    """Map a weight in [0, 1] onto an RRAM state.

    The target current is ``i_min + w*(i_max - i_min)`` at ``(v_gate, v_cal)``.
    With ``error_bits`` set, the achieved weight is perturbed uniformly by up
    to half an LSB of that precision (requires ``rng``).
    """
    if not 0.0 <= w <= 1.0:
        raise ContractViolation(f"weight must lie in [0, 1], got {w!r}")
    if error_bits is not None:
        if rng is None:
            raise ContractViolation("programming error requires an rng")
        w = programming_error(np.asarray(w), error_bits, rng)[()]
    r = cell.rram
    if w == 1.0:
        return replace(r, r0=r.r_on)
    if w == 0.0:
        return replace(r, r0=r.r_off)
    i_min, i_max = cell_current_range(cell, v_gate, v_cal)
    r0 = resistance_for_current(cell, i_min + w * (i_max - i_min), v_gate, v_cal)
    return replace(r, r0=float(r0))


def programming_error(w, bits: int, rng: np.random.Generator):
    """Uniform +-0.5 LSB perturbation of weights at ``bits`` precision, clipped to [0, 1]."""
    lsb = 1.0 / (2 ** bits - 1)
    return np.clip(w + rng.uniform(-0.5, 0.5, size=np.shape(w)) * lsb, 0.0, 1.0)


# --------------------------------------------------------------------------
# CLM / DIBL local error


def clm_dibl_error(cell, v_gate: float, v_node: float, delta_v: float = 1e-3) -> float:
    """Relative current loss ``1 - I(v_node - delta_v) / I(v_node)``.

    ``cell`` may be anything accepted by :func:`cell_current_at`, including
    objects exposing ``current_at(v_gate, v_node)``.
    """
    if v_node - delta_v < 0:
        raise ContractViolation("v_node - delta_v must be >= 0")
    i_hi = cell_current_at(cell, v_gate, v_node)
    if i_hi < 1e-15:
        raise UndefinedRatioError(f"cell current {i_hi:.3g} A below 1 fA at v_node={v_node}")
    return 1.0 - cell_current_at(cell, v_gate, v_node - delta_v) / i_hi


def cell_current_at(cell, v_gate: float, v_node: float) -> float:
    if isinstance(cell, CellState):
        return solve_cell(cell, v_gate, v_node)[0]
    if isinstance(cell, IdealSink):
        return cell.i_max
    return float(cell.current_at(v_gate, v_node))


def error_contour(cell: CellState, v_gate: float, v_nodes, weights, v_cal: float, delta_v: float = 1e-3):
    """CLM/DIBL error over a (v_node x weight) grid; NaN where undefined.

    Weights are programmed at ``(v_gate, v_cal)``; returns an array of shape
    ``(len(v_nodes), len(weights))``.
    """
    v_nodes = np.asarray(v_nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any((weights < 0) | (weights > 1)):
        raise ContractViolation("weights must lie in [0, 1]")
    i_min, i_max = cell_current_range(cell, v_gate, v_cal)
    r0 = resistance_for_current(cell, i_min + weights * (i_max - i_min), v_gate, v_cal)
    r0 = np.where(weights == 1.0, cell.rram.r_on, np.where(weights == 0.0, cell.rram.r_off, r0))
    vn = v_nodes[:, None]
    p, beta = cell.mosfet, cell.rram.beta
    i_hi, _ = solve_series(p, cell.topology, beta, r0[None, :], v_gate, np.clip(vn, 0, None))
    i_lo, _ = solve_series(p, cell.topology, beta, r0[None, :], v_gate, np.clip(vn - delta_v, 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        err = 1.0 - i_lo / i_hi
    return np.where((i_hi >= 1e-15) & (vn - delta_v >= 0), err, np.nan)


# --------------------------------------------------------------------------
# calibration


def calibrate_i_spec(target: float = 136.9e-9, v_gate: float = 0.3, v_node: float = 0.8,
                     r0: float = 2.5e3, beta: float = 4.0, **mosfet_overrides) -> float:
    """Specific current that puts the series cell current at ``target``."""
    base = MosfetParams(**mosfet_overrides)

    def mismatch(log_is):
        p = replace(base, i_spec=float(np.exp(log_is)))
        i, _ = solve_series(p, CellTopology.SOURCE_CONNECTED, beta, r0, v_gate, v_node)
        return np.log(float(i)) - np.log(target)

    return float(np.exp(brentq(mismatch, np.log(1e-12), np.log(1e-2), xtol=1e-14)))
