"""Evaluation and benchmarking.

Relative-L2 task metrics on the test split, the zero-shot super-resolution
protocol over nested subsamplings of one fine dataset, and wall-time scaling
of the polynomial decomposition against an iterative radix-2 FFT baseline.
Benchmarks pin to a single thread AND a single CPU (scheduler migrations
across cores flush the per-core cache mid-measurement and skew small-size
medians by ~50%) and exclude warm-up runs; acceptance reads medians only,
with p10/p90 reported for dispersion.
"""
from __future__ import annotations

import contextlib
import os
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .datagen import TaskDataset, restrict_resolution
from .errors import ClockTooCoarse, EmptySplit, LengthNotPow2
from .model import SNOModel, forward_at_resolution, interp_matrix
from .polycore import Grid, SampledSignal, compute_fit_operator, fit_operator, fit_poly
from .trainer import per_sample_rel_l2, predict


# -- task evaluation -------------------------------------------------------------

@dataclass
class EvalReport:
    task: str
    mean: float
    median: float
    max: float
    per_sample: np.ndarray
    worst_index: int
    median_index: int
    worst_error_field: np.ndarray    # |pred - truth| for the worst sample
    median_error_field: np.ndarray


def _normalized_inputs(model: SNOModel, ds: TaskDataset, idx) -> np.ndarray:
    x = ds.inputs[idx]
    if ds.normalized:
        return x
    mean = model.input_mean if model.input_mean is not None else ds.in_mean
    std = model.input_std if model.input_std is not None else ds.in_std
    return (x - mean[None, :, None]) / std[None, :, None]


def evaluate(model: SNOModel, ds: TaskDataset) -> EvalReport:
    """Per-sample relative L2 on the test split, in physical output units."""
    if ds.test_idx.size == 0:
        raise EmptySplit("dataset has no test samples")
    x = _normalized_inputs(model, ds, ds.test_idx)
    truth = ds.outputs[ds.test_idx]
    pred = predict(model, x, ds.grid)
    errs = per_sample_rel_l2(pred, truth)
    order = np.argsort(errs)
    worst = int(order[-1])
    med = int(order[order.shape[0] // 2])
    return EvalReport(task=ds.spec.task, mean=float(errs.mean()),
                      median=float(np.median(errs)), max=float(errs.max()),
                      per_sample=errs, worst_index=worst, median_index=med,
                      worst_error_field=np.abs(pred[worst] - truth[worst]),
                      median_error_field=np.abs(pred[med] - truth[med]))


@dataclass
class SuperResReport:
    task: str
    base_n: int
    eval_ns: list
    model_rel_l2: list
    interp_rel_l2: list       # linear interpolation of the base prediction


def superres_eval(model: SNOModel, fine_ds: TaskDataset, base_n: int,
                  eval_ns: list) -> SuperResReport:
    """Zero-shot resolution sweep against one fine-resolution dataset.

    Base inputs are the fine inputs subsampled to base_n; each requested
    resolution must be a divisor-compatible subsampling of the fine grid.
    The naive baseline linearly interpolates the base-resolution prediction.
    """
    base_ds = restrict_resolution(fine_ds, base_n)
    x_base = _normalized_inputs(model, base_ds, base_ds.test_idx)
    base_grid = base_ds.grid
    model_errs, interp_errs = [], []
    base_pred = None
    for n_eval in eval_ns:
        eval_ds = restrict_resolution(fine_ds, n_eval)
        truth = eval_ds.outputs[eval_ds.test_idx]
        pred = np.concatenate(
            [forward_at_resolution(model, x_base[i : i + 50], base_grid, eval_ds.grid).data
             for i in range(0, x_base.shape[0], 50)], axis=0)
        model_errs.append(float(per_sample_rel_l2(pred, truth).mean()))
        if base_pred is None:
            base_pred = predict(model, x_base, base_grid)
        M = interp_matrix(base_grid.points, eval_ds.grid.points)
        interp_pred = base_pred @ M.T
        interp_errs.append(float(per_sample_rel_l2(interp_pred, truth).mean()))
    return SuperResReport(task=fine_ds.spec.task, base_n=base_n,
                          eval_ns=list(eval_ns), model_rel_l2=model_errs,
                          interp_rel_l2=interp_errs)


# -- radix-2 FFT baseline ----------------------------------------------------------

_FFT_PLANS: dict[int, tuple[np.ndarray, list]] = {}


def _fft_plan(n: int):
    plan = _FFT_PLANS.get(n)
    if plan is None:
        levels = n.bit_length() - 1
        rev = np.zeros(n, dtype=np.intp)
        for i in range(n):
            b = 0
            x = i
            for _ in range(levels):
                b = (b << 1) | (x & 1)
                x >>= 1
            rev[i] = b
        twiddles = [np.exp(-2j * np.pi * np.arange(1 << (s - 1)) / (1 << s))
                    for s in range(1, levels + 1)]
        plan = (rev, twiddles)
        _FFT_PLANS[n] = plan
    return plan


def fft_radix2(signal) -> np.ndarray:
    """Iterative decimation-in-time radix-2 transform with precomputed twiddles."""
    x = np.asarray(signal)
    n = x.shape[0]
    if n < 1 or (n & (n - 1)) != 0:
        raise LengthNotPow2(f"length {n} is not a power of two")
    rev, twiddles = _fft_plan(n)
    a = x[rev].astype(np.complex128)
    m = 2
    for tw in twiddles:
        half = m // 2
        view = a.reshape(-1, m)
        t = view[:, half:] * tw
        u = view[:, :half].copy()
        view[:, :half] = u + t
        view[:, half:] = u - t
        m *= 2
    return a


def ifft_radix2(spectrum) -> np.ndarray:
    X = np.asarray(spectrum, dtype=np.complex128)
    return np.conj(fft_radix2(np.conj(X))) / X.shape[0]


# -- runtime scaling ------------------------------------------------------------------

BENCH_METHODS = ("poly-fit", "poly-fit-cold", "fft")


@dataclass
class MethodTiming:
    method: str
    sizes: list
    median: list
    p10: list
    p90: list
    slope: float


@dataclass
class RuntimeReport:
    degree: int
    reps: int
    methods: dict = field(default_factory=dict)  # name -> MethodTiming


@contextlib.contextmanager
def _pin_to_one_cpu():
    try:
        previous = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(previous)})
    except (AttributeError, OSError):
        previous = None
    try:
        yield
    finally:
        if previous is not None:
            os.sched_setaffinity(0, previous)


def _timer_resolution() -> float:
    res = np.inf
    for _ in range(200):
        a = time.perf_counter()
        b = time.perf_counter()
        while b == a:
            b = time.perf_counter()
        res = min(res, b - a)
    return res


def _time_callable(fn, reps: int, target_block: float = 5e-3) -> np.ndarray:
    """Per-call wall times over `reps` measured blocks, warm-up excluded."""
    for _ in range(5):
        fn()
    t0 = time.perf_counter()
    fn()
    once = max(time.perf_counter() - t0, 1e-9)
    inner = max(1, int(target_block / once))
    samples = np.empty(reps)
    for r in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples[r] = (time.perf_counter() - t0) / inner
    res = _timer_resolution()
    if np.median(samples) * inner < 100.0 * res:
        raise ClockTooCoarse(
            f"median block {np.median(samples) * inner:.3e}s under 100x resolution {res:.3e}s")
    return samples


def runtime_bench(methods, sizes, degree: int = 16, reps: int = 20,
                  seed: int = 0) -> RuntimeReport:
    """Median/p10/p90 per-call times of the decomposition step, per size.

    poly-fit times fit_poly against a precomputed fit operator; poly-fit-cold
    includes building the operator; fft times the radix-2 transform with a
    warm plan.  The log-log slope is fitted by least squares over the sizes.
    """
    sizes = [int(n) for n in sizes]
    for n in sizes:
        if n < 1024 or (n & (n - 1)) != 0:
            raise ValueError(f"sizes must be powers of two >= 1024, got {n}")
    if reps < 20:
        raise ValueError(f"need at least 20 repetitions, got {reps}")
    for m in methods:
        if m not in BENCH_METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {BENCH_METHODS}")
    rng = np.random.default_rng(seed)
    report = RuntimeReport(degree=degree, reps=reps)
    with _pin_to_one_cpu(), threadpool_limits(limits=1):
        for method in methods:
            med, p10, p90 = [], [], []
            for n in sizes:
                grid = Grid(np.linspace(-1.0, 1.0, n))
                y = rng.standard_normal(n)
                if method == "poly-fit":
                    fitop = fit_operator(grid, degree)
                    sig = SampledSignal(grid, y)
                    fn = lambda: fit_poly(sig, fitop)
                elif method == "poly-fit-cold":
                    fitop = fit_operator(grid, degree)  # for the cached V
                    V = fitop.vandermonde
                    sig = SampledSignal(grid, y)
                    fn = lambda: fit_poly(sig, compute_fit_operator(V))
                else:
                    _fft_plan(n)
                    fn = lambda: fft_radix2(y)
                samples = _time_callable(fn, reps)
                med.append(float(np.median(samples)))
                p10.append(float(np.percentile(samples, 10)))
                p90.append(float(np.percentile(samples, 90)))
            slope = float(np.polyfit(np.log2(sizes), np.log2(med), 1)[0])
            report.methods[method] = MethodTiming(method=method, sizes=list(sizes),
                                                  median=med, p10=p10, p90=p90,
                                                  slope=slope)
    return report
