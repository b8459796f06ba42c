"""Error, precision and energy metrics; Monte Carlo design-point evaluation and sweeps."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .engine import (ColumnTrace, DesignPoint, design_point_from_params, design_point_params, differential_vmm,
                     ideal_differential, quantize_output, size_capacitor)
from .errors import ConfigurationError, ContractViolation, TdvmmError

DEFAULT_PRECISION_CAP = 32


# --------------------------------------------------------------------------
# trial sampling


@dataclass(frozen=True)
class ContinuousUniform:
    def draw(self, rng: np.random.Generator, size):
        return rng.random(size)

    def __str__(self):
        return "continuous"


@dataclass(frozen=True)
class GridQuantized:
    """Values ``k/(2**bits - 1)`` for integer ``k``, uniformly."""

    bits: int

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigurationError("grid sampler needs bits >= 1")

    def draw(self, rng: np.random.Generator, size):
        levels = 2 ** self.bits - 1
        return rng.integers(0, levels + 1, size=size) / levels

    def __str__(self):
        return f"grid{self.bits}"


def parse_sampler(text: str):
    text = str(text).strip().lower()
    if text == "continuous":
        return ContinuousUniform()
    if text.startswith("grid"):
        try:
            return GridQuantized(int(text[4:].strip(":() ")))
        except ValueError:
            pass
    raise ConfigurationError(f"unknown sampler {text!r}; use 'continuous' or 'gridB' (e.g. grid4)")


@dataclass(frozen=True)
class TrialBatch:
    seed: int = 0
    n_trials: int = 200
    sampler: ContinuousUniform | GridQuantized = field(default_factory=ContinuousUniform)

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")

    def rng(self, trial: int) -> np.random.Generator:
        # one independent stream per trial, so results do not depend on scheduling
        return np.random.default_rng([self.seed, trial])


def draw_trial(dp: DesignPoint, batch: TrialBatch, rng: np.random.Generator):
    """Random input vector and differential sub-weight pair for one trial.

    With a reduced current budget (K < 1) the sub-weights are scaled to
    [0, K] so that the expected dot-product range matches the smaller capacitor.
    """
    x = batch.sampler.draw(rng, dp.m_rows)
    w_pos = batch.sampler.draw(rng, (dp.m_rows, dp.n_cols)) * dp.max_current_scale
    w_neg = batch.sampler.draw(rng, (dp.m_rows, dp.n_cols)) * dp.max_current_scale
    return x, w_pos, w_neg


# --------------------------------------------------------------------------
# error and precision


def compute_error(t_sim, t_cal, t_window: float):
    """Per-trial timing error ``|t_cal - t_sim| / T``.

    Signed (differential) outputs in [-T, T] are accepted as well.
    """
    return np.abs(np.asarray(t_cal, dtype=float) - np.asarray(t_sim, dtype=float)) / t_window


def aggregate_error(errors) -> tuple[float, float]:
    """(max, 99th percentile) of a batch of errors."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ContractViolation("cannot aggregate an empty batch")
    return float(e.max()), float(np.percentile(e, 99))


def precision(e_out: float, cap: int = DEFAULT_PRECISION_CAP) -> int:
    """Effective precision ``floor(-log2(e) - 1)`` in bits, clamped to [0, cap]."""
    e_out = float(e_out)
    if math.isnan(e_out) or e_out < 0:
        raise ContractViolation(f"error must be a non-negative number, got {e_out!r}")
    if e_out == 0:
        return int(cap)
    return int(min(cap, max(0, math.floor(-math.log2(e_out) - 1))))


def capacitor_energy(traces, cap: float, v_reset: float) -> tuple[float, np.ndarray]:
    """Supply energy to restore each column, ``C*v_reset*dV_total``; returns (total, per column).

    ``traces`` are ColumnTrace objects or plain final capacitor voltages.
    Every current only sinks charge, so the summed downward excursion over
    both phases equals ``v_reset - V_final``.
    """
    v_final = np.array([t.v_final if isinstance(t, ColumnTrace) else t for t in traces], dtype=float)
    per_col = cap * v_reset * np.maximum(v_reset - v_final, 0.0)
    return float(per_col.sum()), per_col


def throughput(m_rows: int, n_cols: int, t_window: float, overhead: float = 0.0) -> float:
    """Operations per second: 2*M*N multiply-accumulates per two-phase cycle."""
    return 2.0 * m_rows * n_cols / (2.0 * t_window + overhead)


# --------------------------------------------------------------------------
# peripheral cost model


@dataclass(frozen=True)
class PerfModel:
    """Peripheral energy/area constants for a given I/O precision.

    Defaults are calibrated rather than derived: a shared-counter DTC with
    comparator and latch per input, an adder+register TDC and a latch per
    neuron in 55-nm logic at ``reference_bits``. Per-conversion energies
    and areas scale linearly with ``bits / reference_bits``.
    """

    e_dtc: float = 20e-15
    e_tdc: float = 20e-15
    e_neuron: float = 5e-15
    a_dtc: float = 20e-12
    a_tdc: float = 25e-12
    a_neuron: float = 5e-12
    cap_density: float = 10e-3
    conversion_overhead: float = 0.0
    reference_bits: int = 4

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) >= 0:
                raise ConfigurationError(f"PerfModel.{f.name} must be >= 0")
        if self.cap_density == 0 or self.reference_bits < 1:
            raise ConfigurationError("PerfModel.cap_density must be > 0 and reference_bits >= 1")

    def scaled(self, bits: int) -> "PerfModel":
        s = bits / self.reference_bits
        return replace(self, e_dtc=self.e_dtc * s, e_tdc=self.e_tdc * s, e_neuron=self.e_neuron * s,
                       a_dtc=self.a_dtc * s, a_tdc=self.a_tdc * s, a_neuron=self.a_neuron * s,
                       reference_bits=bits)

    def io_energy(self, m_rows: int, n_cols: int) -> float:
        return m_rows * self.e_dtc + n_cols * (self.e_tdc + self.e_neuron)


ZERO_IO = PerfModel(e_dtc=0, e_tdc=0, e_neuron=0, a_dtc=0, a_tdc=0, a_neuron=0)


# --------------------------------------------------------------------------
# design-point evaluation


@dataclass
class TrialOutcome:
    errors: np.ndarray
    single_ended_errors: np.ndarray
    t_out_sim: np.ndarray
    t_out_ideal: np.ndarray
    codes: np.ndarray
    column_energy: np.ndarray
    overflow: int
    underflow: int
    times: np.ndarray | None = None
    v_trace: np.ndarray | None = None


def run_trial(dp: DesignPoint, batch: TrialBatch, trial: int, record: bool = False) -> TrialOutcome:
    rng = batch.rng(trial)
    x, w_pos, w_neg = draw_trial(dp, batch, rng)
    i_min, i_max = dp.current_window
    k = dp.max_current_scale
    out = differential_vmm(w_pos, w_neg, x, dp, rng=rng, record=record)
    t_cal = ideal_differential(w_pos, w_neg, x, i_min, i_max, dp.m_rows, dp.t_window, k)
    # single-ended reading of the positive column, additive term left in
    t_pos_ref = dp.a_coefficient * dp.t_window * (x @ w_pos) / dp.m_rows / k
    bank = out.bank
    _, e_col = capacitor_energy(bank.v_final, bank.capacitance, dp.v_reset)
    return TrialOutcome(
        errors=compute_error(out.signed, t_cal, dp.t_window),
        single_ended_errors=compute_error(bank.t_out[0::2], t_pos_ref, dp.t_window),
        t_out_sim=out.signed, t_out_ideal=t_cal, codes=quantize_output(out.relu, dp),
        column_energy=e_col, overflow=int(bank.overflow.sum()), underflow=int(bank.underflow.sum()),
        times=bank.times, v_trace=bank.v_trace)


def _run_trials(args):
    dp, batch, trials = args
    return [run_trial(dp, batch, t) for t in trials]


def simulate_trials(dp: DesignPoint, batch: TrialBatch, jobs: int = 1) -> list[TrialOutcome]:
    """All trials of a batch, optionally spread over worker processes (order preserved)."""
    trials = list(range(batch.n_trials))
    if jobs <= 1 or len(trials) < 2:
        return _run_trials((dp, batch, trials))
    chunks = [trials[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_trials, [(dp, batch, c) for c in chunks if c]))
    out = [None] * len(trials)
    for chunk, res in zip([c for c in chunks if c], parts):
        for t, r in zip(chunk, res):
            out[t] = r
    return out


@dataclass
class SweepReport:
    params: dict
    e_out_max: float = math.nan
    e_out_p99: float = math.nan
    p_out: int = 0
    e_single_ended_max: float = math.nan
    i_min: float = math.nan
    i_max: float = math.nan
    dynamic_range: float = math.nan
    capacitance: float = math.nan
    e_cl_total: float = math.nan
    throughput: float = math.nan
    energy_efficiency: float = math.nan
    n_trials: int = 0
    overflow_count: int = 0
    underflow_count: int = 0
    status: str = "ok"

    METRICS = ("e_out_max", "e_out_p99", "p_out", "e_single_ended_max", "i_min", "i_max", "dynamic_range",
               "capacitance", "e_cl_total", "throughput", "energy_efficiency", "n_trials", "overflow_count",
               "underflow_count")

    def row(self) -> dict:
        out = dict(self.params)
        out.update({k: getattr(self, k) for k in self.METRICS})
        out["status"] = self.status
        return out

    @property
    def flagged(self) -> bool:
        return self.overflow_count > 0 or self.underflow_count > 0


def summarize(dp: DesignPoint, outcomes: list[TrialOutcome], perf: PerfModel | None = None) -> SweepReport:
    perf = PerfModel() if perf is None else perf
    e_max, e_p99 = aggregate_error(np.concatenate([o.errors for o in outcomes]))
    e_se = float(np.max(np.concatenate([o.single_ended_errors for o in outcomes])))
    i_min, i_max = dp.current_window
    e_cl = float(np.mean([o.column_energy.sum() for o in outcomes]))
    ops = 2.0 * dp.m_rows * dp.n_cols
    io = perf.scaled(dp.output_bits).io_energy(dp.m_rows, dp.n_cols)
    return SweepReport(
        params=design_point_params(dp), e_out_max=e_max, e_out_p99=e_p99,
        p_out=precision(e_max, cap=DEFAULT_PRECISION_CAP), e_single_ended_max=e_se,
        i_min=i_min, i_max=i_max, dynamic_range=i_max - i_min,
        capacitance=size_capacitor(dp, i_max), e_cl_total=e_cl,
        throughput=throughput(dp.m_rows, dp.n_cols, dp.t_window, perf.conversion_overhead),
        energy_efficiency=ops / (e_cl + io), n_trials=len(outcomes),
        overflow_count=sum(o.overflow for o in outcomes), underflow_count=sum(o.underflow for o in outcomes))


def run_design_point(dp: DesignPoint, batch: TrialBatch, perf: PerfModel | None = None,
                     jobs: int = 1) -> SweepReport:
    """Monte Carlo evaluation of one design point over random differential (W, x) trials."""
    return summarize(dp, simulate_trials(dp, batch, jobs), perf)


# --------------------------------------------------------------------------
# sweeps


def expand_grid(grid: dict, zipped: list[list[str]] | None = None) -> list[dict]:
    """Cartesian product of grid axes; axes named together in ``zipped`` advance in lockstep."""
    zipped = [list(g) for g in (zipped or [])]
    seen = set()
    for group in zipped:
        for name in group:
            if name not in grid:
                raise ConfigurationError(f"zipped axis {name!r} is not in the grid")
            if name in seen:
                raise ConfigurationError(f"axis {name!r} appears in two zip groups")
            seen.add(name)
        lengths = {len(grid[n]) for n in group}
        if len(lengths) != 1:
            raise ConfigurationError(f"zipped axes {group} have different lengths")
    group_of = {name: tuple(g) for g in zipped for name in g}
    axes, emitted = [], set()
    for name, values in grid.items():
        group = group_of.get(name)
        if group is None:
            axes.append([{name: v} for v in values])
        elif group not in emitted:
            emitted.add(group)
            axes.append([dict(zip(group, combo)) for combo in zip(*(grid[n] for n in group))])
    if not axes or any(len(a) == 0 for a in axes):
        return []
    points = []
    for combo in itertools.product(*axes):
        point = {}
        for part in combo:
            point.update(part)
        points.append(point)
    return points


def _evaluate_point(args):
    base, point, batch, perf = args
    params = {**base, **point}
    try:
        dp = design_point_from_params(params)
        report = run_design_point(dp, batch, perf)
        report.params = {**report.params, **point}
        if report.flagged:
            report.status = f"flagged: overflow={report.overflow_count} underflow={report.underflow_count}"
        return report
    except (TdvmmError, ValueError, ArithmeticError) as exc:
        return SweepReport(params=params, status=f"error: {type(exc).__name__}: {exc}")


def sweep(base: dict, points: list[dict], batch: TrialBatch, perf: PerfModel | None = None,
          jobs: int = 1) -> list[SweepReport]:
    """Evaluate every grid point on top of ``base``; failures are reported per point, not raised."""
    if not points:
        raise ConfigurationError("empty sweep grid")
    tasks = [(base, p, batch, perf) for p in points]
    if jobs <= 1:
        return [_evaluate_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_evaluate_point, tasks))


def plot_rows(reports: list[SweepReport], sweep_vars: list[str], metrics=("e_out_max", "p_out", "e_cl_total")):
    """Long-form plot data: one (sweep_var, value, metric, metric_value) row per report and metric."""
    rows = []
    name = ";".join(sweep_vars)
    for r in reports:
        value = ";".join(str(r.params.get(v)) for v in sweep_vars)
        for m in metrics:
            rows.append({"sweep_var": name, "value": value, "metric": m, "metric_value": getattr(r, m)})
    return rows


# --------------------------------------------------------------------------
# peripheral-inclusive estimate


def performance_estimate(dp: DesignPoint, perf: PerfModel, sim: SweepReport) -> dict:
    """Area, energy, efficiency and throughput with a per-component breakdown.

    The capacitor count is the number of physical columns (two per
    differential output).
    """
    p = perf.scaled(dp.output_bits)
    n_phys = 2 * dp.n_cols
    cap = size_capacitor(dp, dp.current_window[1])
    area = {
        "capacitor": n_phys * cap / p.cap_density,
        "dtc": dp.m_rows * p.a_dtc,
        "tdc": dp.n_cols * p.a_tdc,
        "neuron": n_phys * p.a_neuron,
    }
    energy = {
        "capacitor": sim.e_cl_total,
        "dtc": dp.m_rows * p.e_dtc,
        "tdc": dp.n_cols * p.e_tdc,
        "neuron": dp.n_cols * p.e_neuron,
    }
    total_e = sum(energy.values())
    total_a = sum(area.values())
    ops = 2.0 * dp.m_rows * dp.n_cols
    return {
        "area": total_a,
        "energy": total_e,
        "energy_efficiency": ops / total_e if total_e > 0 else math.inf,
        "throughput": throughput(dp.m_rows, dp.n_cols, dp.t_window, p.conversion_overhead),
        "area_breakdown": area,
        "energy_breakdown": energy,
        "dominant_area": max(area, key=area.get),
        "dominant_energy": max(energy, key=energy.get),
    }
