"""Two-phase time-domain VMM protocol.

Phase I (``0 <= t < T``): every input row sinks its programmed cell current
from the column capacitor while its pulse is high. Phase II
(``T <= t < 2T``): a replica column of ``M`` cells programmed to ``r_on``
discharges the capacitor; the neuron fires when the capacitor voltage
reaches its threshold and the output pulse lasts ``T - (t_r - T)``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from ._integrator import integrate_bank
from .devices import (CellState, CellTopology, ConstantCurrentSink, IdealSink, MosfetParams, RramParams,
                      cell_current_range, programming_error, resistance_for_current, solve_series)
from .errors import ConfigurationError, ContractViolation

CROSSING_TOL = 1e-10  # bisection tolerance on the crossing instant, in units of T
_CHUNK = 2_000_000


@dataclass(frozen=True)
class DesignPoint:
    """One complete VMM configuration.

    ``max_current_scale`` sizes the load capacitor (and the phase-II replica
    current) for ``K*M*I_max`` instead of ``M*I_max``. ``v_cal`` is the node
    voltage at which weights are programmed; ``None`` means mid-swing.
    """

    m_rows: int
    n_cols: int
    v_gate_on: float
    t_window: float
    cell: CellState | IdealSink = field(default_factory=CellState)
    v_reset: float = 0.9
    v_th_neuron: float = 0.7
    output_bits: int = 4
    max_current_scale: float = 1.0
    c_gd_coupling: float = 0.0
    gate_line_attenuation: float = 0.0
    mismatch_sigma_vt: float = 0.0
    neuron_offset_sigma: float = 0.0
    programming_error_bits: int | None = None
    v_cal: float | None = None
    steps_per_window: int = 1024
    cheb_degree: int = 64

    def __post_init__(self):
        if self.m_rows < 1 or self.n_cols < 1:
            raise ConfigurationError("m_rows and n_cols must be >= 1")
        if not 0 < self.v_th_neuron < self.v_reset <= 1.0:
            raise ConfigurationError(
                f"need 0 < v_th_neuron < v_reset <= 1 V, got v_th={self.v_th_neuron}, v_reset={self.v_reset}")
        if not self.t_window > 0:
            raise ConfigurationError("t_window must be > 0")
        if self.output_bits < 1:
            raise ConfigurationError("output_bits must be >= 1")
        if not 0 < self.max_current_scale <= 1:
            raise ConfigurationError("max_current_scale must lie in (0, 1]")
        if not 0 <= self.v_gate_on <= 1.0:
            raise ConfigurationError("v_gate_on must lie in [0, 1] V")
        for name in ("c_gd_coupling", "gate_line_attenuation", "mismatch_sigma_vt", "neuron_offset_sigma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.v_cal is not None and not self.v_th_neuron <= self.v_cal <= self.v_reset:
            raise ConfigurationError("v_cal must lie within the output swing")
        if self.steps_per_window < 1 or self.cheb_degree < 0:
            raise ConfigurationError("steps_per_window must be >= 1 and cheb_degree >= 0")

    @property
    def swing(self) -> float:
        return self.v_reset - self.v_th_neuron

    @property
    def calibration_voltage(self) -> float:
        return 0.5 * (self.v_reset + self.v_th_neuron) if self.v_cal is None else self.v_cal

    @functools.cached_property
    def current_window(self) -> tuple[float, float]:
        return cell_current_range(self.cell, self.v_gate_on, self.calibration_voltage)

    @property
    def a_coefficient(self) -> float:
        i_min, i_max = self.current_window
        return (i_max - i_min) / i_max


@dataclass(frozen=True)
class EncodedInput:
    durations: np.ndarray
    t_window: float


@dataclass
class ColumnTrace:
    times: np.ndarray
    v_cap: np.ndarray
    crossing_time: float | None
    t_out: float
    phase_boundaries: tuple[float, float, float]
    v_phase1_end: float
    v_final: float
    overflow: bool = False
    underflow: bool = False


@dataclass
class BankResult:
    """Outcome of simulating several columns that share input rows."""

    t_out: np.ndarray
    t_cross: np.ndarray
    v_phase1_end: np.ndarray
    v_final: np.ndarray
    overflow: np.ndarray
    underflow: np.ndarray
    capacitance: float
    v_threshold: np.ndarray
    times: np.ndarray | None = None
    v_trace: np.ndarray | None = None


@dataclass
class VmmResult:
    t_out_sim: np.ndarray
    t_out_ideal: np.ndarray
    digital_codes: np.ndarray
    capacitor_energy: np.ndarray
    overflow: np.ndarray
    underflow: np.ndarray


@dataclass(frozen=True)
class ProgrammedArray:
    """Devices of ``ncols`` columns sharing ``M`` input rows.

    ``level`` holds ``r0`` per device for 1T-1R templates and the sink
    current for ideal templates; ``v_t0`` carries per-device thresholds when
    mismatch is enabled. ``weights`` records the programmed weights of
    nominal devices, which lets the simulator use a per-design surrogate.
    """

    template: CellState | IdealSink
    level: np.ndarray
    v_t0: np.ndarray | None = None
    weights: np.ndarray | None = None

    @property
    def shape(self):
        return self.level.shape


# --------------------------------------------------------------------------
# encoding and sizing


def encode_inputs(x, t_window: float) -> EncodedInput:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ContractViolation("inputs must be a vector")
    if np.any(~np.isfinite(x) | (x < 0) | (x > 1)):
        raise ContractViolation("every input must lie in [0, 1]")
    return EncodedInput(durations=x * t_window, t_window=t_window)


def size_capacitor(dp: DesignPoint, i_max: float) -> float:
    swing = dp.v_reset - dp.v_th_neuron
    if swing <= 0:
        raise ConfigurationError("zero output swing")
    return dp.max_current_scale * dp.m_rows * i_max * dp.t_window / swing


def row_gate_voltages(dp: DesignPoint) -> np.ndarray:
    """Per-row gate level after deterministic line attenuation (row 0 nearest the driver)."""
    rows = np.arange(dp.m_rows)
    return np.clip(dp.v_gate_on * (1.0 - dp.gate_line_attenuation * rows), 0.0, None)


# --------------------------------------------------------------------------
# programming


def _threshold_draw(dp: DesignPoint, shape, rng):
    if dp.mismatch_sigma_vt == 0 or not isinstance(dp.cell, CellState):
        return None
    if rng is None:
        raise ContractViolation("threshold mismatch requires an rng")
    return dp.cell.mosfet.v_t0 + dp.mismatch_sigma_vt * rng.standard_normal(shape)


def program_array(dp: DesignPoint, w, rng: np.random.Generator | None = None) -> ProgrammedArray:
    """Program a (M, ncols) weight matrix in [0, 1] onto the design's cell template.

    Targets are ``i_min + w*(i_max - i_min)`` at the calibration voltage,
    reached on each (possibly mismatched) device by tuning its RRAM state.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.shape[0] != dp.m_rows:
        raise ContractViolation(f"weight matrix has {w.shape[0]} rows, design has {dp.m_rows}")
    if np.any((w < 0) | (w > 1)):
        raise ContractViolation("weights must lie in [0, 1]")
    if dp.programming_error_bits is not None:
        if rng is None:
            raise ContractViolation("programming error requires an rng")
        w = programming_error(w, dp.programming_error_bits, rng)
    i_min, i_max = dp.current_window
    target = i_min + w * (i_max - i_min)
    if isinstance(dp.cell, IdealSink):
        return ProgrammedArray(dp.cell, target)
    vt0 = _threshold_draw(dp, w.shape, rng)
    r = dp.cell.rram
    r0 = resistance_for_current(dp.cell, target, dp.v_gate_on, dp.calibration_voltage, v_t0=vt0)
    if vt0 is None:
        r0 = np.where(w == 1.0, r.r_on, np.where(w == 0.0, r.r_off, r0))
        return ProgrammedArray(dp.cell, r0, None, w)
    return ProgrammedArray(dp.cell, r0, vt0)


def replica_array(dp: DesignPoint, ncols: int, rng: np.random.Generator | None = None) -> ProgrammedArray:
    """Phase-II current source: M cells per column, all at the top of the window (r_on)."""
    shape = (dp.m_rows, ncols)
    if isinstance(dp.cell, IdealSink):
        return ProgrammedArray(dp.cell, np.full(shape, dp.cell.i_max))
    vt0 = _threshold_draw(dp, shape, rng)
    if vt0 is None:
        return ProgrammedArray(dp.cell, np.full(shape, dp.cell.rram.r_on), None, np.ones(shape))
    # mismatched replica cells are tuned toward I_max like any w = 1 weight
    r0 = resistance_for_current(dp.cell, np.full(shape, dp.current_window[1]), dp.v_gate_on,
                                dp.calibration_voltage, v_t0=vt0)
    return ProgrammedArray(dp.cell, r0, vt0)


def array_from_cells(cells) -> ProgrammedArray:
    """Single-column array from a list of cells or constant sinks."""
    cells = list(cells)
    if all(isinstance(c, ConstantCurrentSink) for c in cells):
        return ProgrammedArray(IdealSink(0.0, max(c.current for c in cells)),
                               np.array([[c.current] for c in cells]))
    if not all(isinstance(c, CellState) for c in cells):
        raise ContractViolation("cells must be all CellState or all ConstantCurrentSink")
    t = cells[0]
    for c in cells:
        if c.mosfet != t.mosfet and c.mosfet.__class__(**{**c.mosfet.__dict__, "v_t0": t.mosfet.v_t0}) != t.mosfet:
            raise ContractViolation("cells in one column may differ only in r0 and v_t0")
        if (c.rram.beta, c.topology) != (t.rram.beta, t.topology):
            raise ContractViolation("cells in one column must share beta and topology")
    vt0 = np.array([[c.mosfet.v_t0] for c in cells])
    level = np.array([[c.rram.r0] for c in cells])
    return ProgrammedArray(t, level, None if np.all(vt0 == t.mosfet.v_t0) else vt0)


# --------------------------------------------------------------------------
# current surrogates


@functools.lru_cache(maxsize=8)
def _cheb_basis(deg: int):
    k = np.arange(deg + 1)
    nodes = np.cos(np.pi * (k + 0.5) / (deg + 1))
    return nodes, np.linalg.inv(np.polynomial.chebyshev.chebvander(nodes, deg))


def current_coefficients(arr: ProgrammedArray, v_gate_rows, v_lo: float, v_hi: float, deg: int) -> np.ndarray:
    """Chebyshev coefficients (M, ncols, deg+1) of each device's I(v_node) on [v_lo, v_hi]."""
    m, ncols = arr.shape
    if isinstance(arr.template, IdealSink):
        coef = np.zeros((m, ncols, deg + 1))
        coef[..., 0] = arr.level
        return coef
    nodes, inv_vander = _cheb_basis(deg)
    v_nodes = v_lo + 0.5 * (nodes + 1.0) * (v_hi - v_lo)
    cell = arr.template
    vg = np.asarray(v_gate_rows, dtype=float)[:, None, None]
    out = np.empty((m, ncols, deg + 1))
    step = max(1, _CHUNK // (m * (deg + 1)))
    for c0 in range(0, ncols, step):
        sl = slice(c0, c0 + step)
        vt0 = None if arr.v_t0 is None else arr.v_t0[:, sl, None]
        values, _ = solve_series(cell.mosfet, cell.topology, cell.rram.beta, arr.level[:, sl, None], vg,
                                 v_nodes[None, None, :], v_t0=vt0)
        out[:, sl, :] = values @ inv_vander.T
    return out


WEIGHT_DEGREE = 32


@functools.lru_cache(maxsize=32)
def _weight_table(cell: CellState, v_gate: float, v_cal: float, v_lo: float, v_hi: float, deg: int):
    """Chebyshev-in-weight expansion of the Chebyshev-in-voltage coefficients of a nominal cell."""
    i_min, i_max = cell_current_range(cell, v_gate, v_cal)
    w_nodes, inv_w = _cheb_basis(WEIGHT_DEGREE)
    w = 0.5 * (w_nodes + 1.0)
    r0 = resistance_for_current(cell, i_min + w * (i_max - i_min), v_gate, v_cal)
    nodes, inv_v = _cheb_basis(deg)
    v_nodes = v_lo + 0.5 * (nodes + 1.0) * (v_hi - v_lo)
    values, _ = solve_series(cell.mosfet, cell.topology, cell.rram.beta, r0[:, None], v_gate, v_nodes[None, :])
    return inv_w @ (values @ inv_v.T)


def bank_coefficients(arr: ProgrammedArray, dp: DesignPoint, v_gate_rows) -> np.ndarray:
    """Per-device current surrogates for a bank, using the weight table when devices are nominal."""
    v_lo, v_hi, deg = 0.0, dp.v_reset, dp.cheb_degree
    uniform_gate = np.all(np.asarray(v_gate_rows) == dp.v_gate_on)
    if arr.weights is not None and arr.v_t0 is None and uniform_gate and isinstance(arr.template, CellState):
        table = _weight_table(arr.template, float(dp.v_gate_on), float(dp.calibration_voltage), v_lo, v_hi, deg)
        basis = np.polynomial.chebyshev.chebvander(2.0 * arr.weights - 1.0, WEIGHT_DEGREE)
        return basis @ table
    return current_coefficients(arr, v_gate_rows, v_lo, v_hi, deg)


# --------------------------------------------------------------------------
# simulation


def simulate_bank(arr: ProgrammedArray, enc: EncodedInput, dp: DesignPoint, cap: float,
                  replica: ProgrammedArray | None = None, v_threshold=None, record: bool = False) -> BankResult:
    """Simulate every column of ``arr`` through both phases."""
    m, ncols = arr.shape
    d = np.asarray(enc.durations, dtype=float)
    t_win = dp.t_window
    if d.shape != (m,):
        raise ContractViolation(f"expected {m} input durations, got {d.shape}")
    if enc.t_window != t_win:
        raise ContractViolation("encoded window differs from the design point's")
    if np.any((d < 0) | (d > t_win)):
        raise ContractViolation("durations must lie in [0, T]")
    if replica is None:
        replica = replica_array(dp, ncols)
    v_lo, v_hi, deg = 0.0, dp.v_reset, dp.cheb_degree
    gates = row_gate_voltages(dp)
    coef = bank_coefficients(arr, dp, gates)
    rep = dp.max_current_scale * bank_coefficients(replica, dp, gates).sum(axis=0)

    edges = np.unique(np.concatenate(([0.0], d[(d > 0) & (d < t_win)], [t_win])))
    nseg = len(edges) - 1
    order = np.argsort(-d, kind="stable")
    prefix = np.cumsum(coef[order], axis=0)
    n_active = (d[None, :] > edges[:-1, None]).sum(axis=1)
    seg = np.zeros((nseg, ncols, deg + 1))
    on = n_active > 0
    seg[on] = prefix[n_active[on] - 1]
    seg = np.ascontiguousarray(seg.transpose(1, 0, 2))

    drop = np.zeros(nseg + 1)
    if dp.c_gd_coupling > 0:
        falling = d > 0
        where = np.searchsorted(edges, d[falling])
        np.add.at(drop, where, -dp.c_gd_coupling * gates[falling] / cap)

    if v_threshold is None:
        v_threshold = np.full(ncols, dp.v_th_neuron)
    v_threshold = np.ascontiguousarray(v_threshold, dtype=float)
    n_rec = 2 * dp.steps_per_window + 2 * nseg + 4
    out_t = np.zeros(n_rec if record else 1)
    out_v = np.zeros((ncols, n_rec) if record else (1, 1))
    v_tol = 1e-9 * dp.swing
    v1, t_cross, v_final, n = integrate_bank(
        edges, seg, drop, np.ascontiguousarray(rep), float(cap), float(dp.v_reset), v_threshold, float(t_win),
        int(dp.steps_per_window), v_lo, v_hi, CROSSING_TOL, v_tol, record, out_t, out_v)
    underflow = np.isnan(t_cross)
    overflow = v1 < v_threshold - v_tol
    t_out = np.where(underflow, 0.0, 2.0 * t_win - np.nan_to_num(t_cross, nan=2.0 * t_win))
    t_out = np.clip(t_out, 0.0, t_win)
    return BankResult(t_out=t_out, t_cross=t_cross, v_phase1_end=v1, v_final=v_final, overflow=overflow,
                      underflow=underflow, capacitance=cap, v_threshold=v_threshold,
                      times=out_t[:n].copy() if record else None, v_trace=out_v[:, :n].copy() if record else None)


def simulate_column(cells, enc: EncodedInput, dp: DesignPoint, cap: float, replica=None,
                    v_threshold: float | None = None) -> ColumnTrace:
    """Simulate one column of programmed cells (or constant sinks)."""
    arr = array_from_cells(cells)
    if replica is not None and not isinstance(replica, ProgrammedArray):
        replica = array_from_cells(replica)
    if replica is None and isinstance(arr.template, IdealSink):
        raise ContractViolation("constant-sink columns need an explicit replica")
    vth = None if v_threshold is None else np.array([v_threshold])
    res = simulate_bank(arr, enc, dp, cap, replica=replica, v_threshold=vth, record=True)
    t_cross = res.t_cross[0]
    t = dp.t_window
    return ColumnTrace(times=res.times, v_cap=res.v_trace[0], crossing_time=None if np.isnan(t_cross) else float(t_cross),
                       t_out=float(res.t_out[0]), phase_boundaries=(0.0, t, 2 * t),
                       v_phase1_end=float(res.v_phase1_end[0]), v_final=float(res.v_final[0]),
                       overflow=bool(res.overflow[0]), underflow=bool(res.underflow[0]))


# --------------------------------------------------------------------------
# closed-form reference and outputs


def output_coefficients(x, i_min: float, i_max: float, m: int):
    """Multiplicative ``a`` and (dimensionless) additive ``b`` output coefficients."""
    a = (i_max - i_min) / i_max
    b = i_min / (m * i_max) * np.sum(np.asarray(x, dtype=float), axis=0)
    return a, b


def ideal_output(w, x, i_min: float, i_max: float, m: int, t_window: float, current_scale: float = 1.0):
    """Closed-form output pulse width ``T*(a*y + b)`` (divided by ``current_scale``).

    ``w`` may be a vector (one column) or an (M, N) matrix.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    a, b = output_coefficients(x, i_min, i_max, m)
    y = (x @ w) / m
    return t_window * (a * y + b) / current_scale


def ideal_differential(w_pos, w_neg, x, i_min: float, i_max: float, m: int, t_window: float,
                       current_scale: float = 1.0):
    """Differential reference ``a*T*(1/M)*sum((w+ - w-)*x)``; the ``b`` term cancels."""
    a = (i_max - i_min) / i_max
    dw = np.asarray(w_pos, dtype=float) - np.asarray(w_neg, dtype=float)
    return a * t_window * (np.asarray(x, dtype=float) @ dw) / m / current_scale


@dataclass
class DifferentialOutput:
    signed: np.ndarray
    relu: np.ndarray
    bank: BankResult

    @property
    def overflow(self):
        return self.bank.overflow.reshape(-1, 2).any(axis=1)

    @property
    def underflow(self):
        return self.bank.underflow.reshape(-1, 2).any(axis=1)


def interleave(w_pos, w_neg) -> np.ndarray:
    """(M, N) positive/negative sub-weights -> (M, 2N) with pairs in adjacent columns."""
    w_pos = np.atleast_2d(np.asarray(w_pos, dtype=float).T).T
    w_neg = np.atleast_2d(np.asarray(w_neg, dtype=float).T).T
    if w_pos.shape != w_neg.shape:
        raise ContractViolation("sub-weight matrices differ in shape")
    out = np.empty((w_pos.shape[0], 2 * w_pos.shape[1]))
    out[:, 0::2] = w_pos
    out[:, 1::2] = w_neg
    return out


def differential_vmm(w_pos, w_neg, x, dp: DesignPoint, rng: np.random.Generator | None = None,
                     record: bool = False) -> DifferentialOutput:
    """Signed output ``t_out+ - t_out-`` of adjacent column pairs, plus its ReLU-gated form."""
    w = interleave(w_pos, w_neg)
    arr = program_array(dp, w, rng)
    replica = replica_array(dp, w.shape[1], rng)
    cap = size_capacitor(dp, dp.current_window[1])
    v_th = None
    if dp.neuron_offset_sigma > 0:
        if rng is None:
            raise ContractViolation("neuron offset mismatch requires an rng")
        v_th = dp.v_th_neuron + dp.neuron_offset_sigma * rng.standard_normal(w.shape[1])
    bank = simulate_bank(arr, encode_inputs(x, dp.t_window), dp, cap, replica=replica, v_threshold=v_th,
                         record=record)
    signed = bank.t_out[0::2] - bank.t_out[1::2]
    return DifferentialOutput(signed=signed, relu=np.maximum(signed, 0.0), bank=bank)


def quantize_output(t_out, dp: DesignPoint, a: float | None = None):
    """TDC code with the counter clock scaled by ``1/a`` to span the full code range."""
    if a is None:
        a = dp.a_coefficient
    levels = 2 ** dp.output_bits
    codes = np.floor(np.asarray(t_out, dtype=float) / (a * dp.t_window) * levels)
    out = np.clip(codes, 0, levels - 1).astype(np.int64)
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# flat parameter mapping (shared by configs, sweeps and reports)

_DESIGN_KEYS = {
    "m_rows": int, "n_cols": int, "v_gate_on": float, "t_window": float, "v_reset": float,
    "v_th_neuron": float, "output_bits": int, "max_current_scale": float, "c_gd_coupling": float,
    "gate_line_attenuation": float, "mismatch_sigma_vt": float, "neuron_offset_sigma": float,
    "programming_error_bits": int, "v_cal": float, "steps_per_window": int, "cheb_degree": int,
}
_MOSFET_KEYS = ("v_t0", "n_slope", "i_spec", "w_over_l", "lambda_clm", "eta_dibl", "l_gate", "l_ref",
                "thermal_voltage")
_RRAM_KEYS = ("beta", "r_on", "r_off")
_EXTRA_KEYS = ("swing", "current_exponent", "topology", "cell_model", "ideal_i_min", "ideal_i_max")
PARAM_KEYS = frozenset(_DESIGN_KEYS) | frozenset(_MOSFET_KEYS) | frozenset(_RRAM_KEYS) | frozenset(_EXTRA_KEYS)


def design_point_from_params(params) -> DesignPoint:
    """Build a DesignPoint from a flat mapping of parameter names to values.

    Besides the DesignPoint fields, accepts MOSFET and RRAM parameters,
    ``topology``, ``swing`` (sets ``v_th_neuron = v_reset - swing``),
    ``current_exponent`` p (sets ``max_current_scale = M**(p - 1)``) and
    ``cell_model = ideal`` with ``ideal_i_min``/``ideal_i_max`` for
    voltage-independent sinks.
    """
    unknown = set(params) - PARAM_KEYS
    if unknown:
        raise ConfigurationError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    p = {k: v for k, v in params.items() if v is not None}
    for key in ("m_rows", "v_gate_on", "t_window"):
        if key not in p:
            raise ConfigurationError(f"missing required parameter {key!r}")
    kw = {}
    for key, cast in _DESIGN_KEYS.items():
        if key in p:
            value = p[key]
            if cast is int and float(value) != int(float(value)):
                raise ConfigurationError(f"{key} must be an integer, got {value!r}")
            kw[key] = cast(float(value)) if cast is int else cast(value)
    kw.setdefault("n_cols", kw["m_rows"])
    if "swing" in p:
        if "v_th_neuron" in p:
            raise ConfigurationError("give either swing or v_th_neuron, not both")
        kw["v_th_neuron"] = kw.get("v_reset", 0.9) - float(p["swing"])
    if "current_exponent" in p:
        if "max_current_scale" in p:
            raise ConfigurationError("give either current_exponent or max_current_scale, not both")
        kw["max_current_scale"] = float(kw["m_rows"]) ** (float(p["current_exponent"]) - 1.0)

    model = str(p.get("cell_model", "1t1r")).lower()
    if model == "ideal":
        stray = [k for k in (*_MOSFET_KEYS, *_RRAM_KEYS, "topology") if k in p]
        if stray:
            raise ConfigurationError(f"ideal cells take no device parameters: {', '.join(stray)}")
        try:
            kw["cell"] = IdealSink(float(p["ideal_i_min"]), float(p["ideal_i_max"]))
        except KeyError as exc:
            raise ConfigurationError(f"ideal cells need {exc.args[0]}") from None
    elif model == "1t1r":
        if "ideal_i_min" in p or "ideal_i_max" in p:
            raise ConfigurationError("ideal_i_min/ideal_i_max apply only to cell_model = ideal")
        mos = MosfetParams(**{k: float(p[k]) for k in _MOSFET_KEYS if k in p})
        rr = {k: float(p[k]) for k in _RRAM_KEYS if k in p}
        rr.setdefault("r_on", 2.5e3)
        try:
            topo = CellTopology(str(p.get("topology", "source-connected")).lower())
        except ValueError:
            raise ConfigurationError(f"unknown topology {p['topology']!r}") from None
        kw["cell"] = CellState(mosfet=mos, rram=RramParams(r0=rr["r_on"], **rr), topology=topo)
    else:
        raise ConfigurationError(f"unknown cell_model {model!r}")
    return DesignPoint(**kw)


def design_point_params(dp: DesignPoint) -> dict:
    """Flat description of a design point (inverse of ``design_point_from_params``)."""
    out = {k: getattr(dp, k) for k in _DESIGN_KEYS}
    if isinstance(dp.cell, IdealSink):
        out.update(cell_model="ideal", ideal_i_min=dp.cell.i_min, ideal_i_max=dp.cell.i_max)
    else:
        out.update(cell_model="1t1r", topology=dp.cell.topology.value)
        out.update({k: getattr(dp.cell.mosfet, k) for k in _MOSFET_KEYS})
        out.update({k: getattr(dp.cell.rram, k) for k in _RRAM_KEYS})
    return out
