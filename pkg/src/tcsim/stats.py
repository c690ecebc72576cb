"""Leakage measurement: KDE, mutual information, and the zero-leakage bound.

A channel dataset pairs discrete input symbols with continuous timing
outputs. The output distribution of each symbol is estimated with a Gaussian
kernel (Silverman bandwidth), mutual information against a uniform input
prior is integrated with the rectangle method on a shared grid, and the
measured value is compared with a bound obtained by shuffling outputs to
random inputs 100 times: a leak is declared iff M > M0, strictly.

Densities are evaluated by linear binning plus discrete convolution with the
kernel, which is numerically indistinguishable from direct summation here
(the grid step is far below any bandwidth) and fast enough to pay for the 100
shuffle re-estimates. ``DensityEntry.pdf`` keeps the direct form for point
evaluation; the two are cross-checked in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Z_95 = 1.645  # one-sided upper 95% quantile of the standard normal


class TooFewSamples(ValueError):
    """Fewer than two samples for a symbol (or overall)."""


class DegenerateAlphabet(ValueError):
    """Fewer than two distinct input symbols in the dataset."""


class EmptyInputClass(ValueError):
    """An input symbol has no samples."""


def silverman_bandwidth(samples: np.ndarray, eps: float = 1e-6) -> float:
    """1.06 * min(sd, IQR/1.34) * n^(-1/5); zero-spread input degrades to eps."""
    n = len(samples)
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    sd = float(np.std(samples, ddof=1))
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(sd, float(q75 - q25) / 1.34)
    if spread <= 0:
        return eps
    return float(1.06 * spread * n ** (-1 / 5))


@dataclass
class DensityEntry:
    """Gaussian KDE for one input symbol's outputs."""

    samples: np.ndarray
    bandwidth: float
    n: int

    def pdf(self, points) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        z = (pts[:, None] - self.samples[None, :]) / self.bandwidth
        dens = np.exp(-0.5 * z * z).sum(axis=1)
        return dens / (self.n * self.bandwidth * math.sqrt(2 * math.pi))


def estimate_density(samples, eps: float = 1e-6) -> DensityEntry:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1:
        arr = arr.ravel()
    if len(arr) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    return DensityEntry(arr, silverman_bandwidth(arr, eps), len(arr))


@dataclass(frozen=True)
class MiEstimate:
    """Estimated mutual information in bits, with the integration grid used.
    Negative numerical results are clamped to zero and flagged."""

    value_bits: float
    grid_lo: float
    grid_hi: float
    grid_points: int
    clamped: bool = False
    bandwidths: dict = field(default_factory=dict)
    n: int = 0

    @property
    def value_millibits(self) -> float:
        return self.value_bits * 1e3


@dataclass(frozen=True)
class ZeroLeakageBound:
    """Upper 95% bound on MI estimates of dependence-free shuffles of the
    dataset: mean + 1.645 * sd over ``shuffle_count`` trials."""

    bound_bits: float
    shuffle_count: int
    shuffle_mis: tuple
    mean: float
    sd: float
    confidence: float = 0.95
    seed: int = 0


@dataclass(frozen=True)
class LeakVerdict:
    leak: bool
    m: MiEstimate
    m0: ZeroLeakageBound


def _group(inputs, outputs):
    inputs = np.asarray(inputs)
    outputs = np.asarray(outputs, dtype=float)
    if inputs.shape != outputs.shape or inputs.ndim != 1:
        raise ValueError("inputs and outputs must be equal-length 1-d arrays")
    symbols = sorted(set(inputs.tolist()), key=str)
    return symbols, [outputs[inputs == s] for s in symbols]


def _binned_density(samples: np.ndarray, h: float, lo: float, step: float,
                    points: int) -> np.ndarray:
    """KDE on a uniform grid via linear binning + discrete-kernel convolution."""
    pos = (samples - lo) / step
    left = np.clip(np.floor(pos).astype(int), 0, points - 1)
    right = np.clip(left + 1, 0, points - 1)
    frac = pos - np.floor(pos)
    hist = np.bincount(left, weights=1.0 - frac, minlength=points)
    hist += np.bincount(right, weights=frac, minlength=points)
    radius = min(points - 1, max(1, int(math.ceil(4 * h / step))))
    t = np.arange(-radius, radius + 1) * step
    kernel = np.exp(-0.5 * (t / h) ** 2)
    kernel /= kernel.sum()
    dens = np.convolve(hist, kernel, mode="same")
    return dens / (len(samples) * step)


def estimate_mi(inputs, outputs, *, grid_points: int = 4096,
                eps: float = 1e-6) -> MiEstimate:
    """MI in bits between a uniform prior on the observed input symbols and
    the per-symbol output densities, by the rectangle method.

    The grid spans [min - 3*h_max, max + 3*h_max] uniformly. Per-symbol terms
    with negligible density are skipped; the ratio f_i/f is bounded above by
    the inverse prior, so the integrand is well conditioned.
    """
    symbols, groups = _group(inputs, outputs)
    if len(symbols) < 2:
        raise DegenerateAlphabet(f"need >= 2 input symbols, got {len(symbols)}")
    for s, g in zip(symbols, groups):
        if len(g) < 2:
            raise TooFewSamples(f"symbol {s!r} has {len(g)} samples")
    bands = {s: silverman_bandwidth(g, eps) for s, g in zip(symbols, groups)}
    h_max = max(bands.values())
    out_all = np.concatenate(groups)
    lo = float(out_all.min()) - 3 * h_max
    hi = float(out_all.max()) + 3 * h_max
    step = (hi - lo) / (grid_points - 1)
    prior = 1.0 / len(symbols)
    dens = [
        _binned_density(g, bands[s], lo, step, grid_points)
        for s, g in zip(symbols, groups)
    ]
    mixture = prior * np.sum(dens, axis=0)
    mi = 0.0
    for f_i in dens:
        mask = f_i > 1e-300
        ratio = f_i[mask] / mixture[mask]
        mi += prior * float(np.sum(f_i[mask] * np.log2(ratio))) * step
    clamped = mi < 0
    return MiEstimate(max(mi, 0.0), lo, hi, grid_points, clamped,
                      bandwidths={str(s): bands[s] for s in symbols},
                      n=len(out_all))


def zero_leakage_bound(inputs, outputs, shuffles: int = 100, seed: int = 0, *,
                       grid_points: int = 4096, eps: float = 1e-6) -> ZeroLeakageBound:
    """Destroy input/output dependence by permuting the output column, re-run
    the MI estimate, and repeat; the bound is mean + 1.645*sd of the trials."""
    outputs = np.asarray(outputs, dtype=float)
    rng = np.random.default_rng(seed)
    mis = []
    for _ in range(shuffles):
        perm = rng.permutation(len(outputs))
        est = estimate_mi(inputs, outputs[perm], grid_points=grid_points, eps=eps)
        mis.append(est.value_bits)
    mean = float(np.mean(mis))
    sd = float(np.std(mis, ddof=1)) if shuffles > 1 else 0.0
    return ZeroLeakageBound(mean + Z_95 * sd, shuffles, tuple(mis), mean, sd,
                            seed=seed)


def leak_verdict(inputs, outputs, shuffles: int = 100, seed: int = 0, *,
                 grid_points: int = 4096, eps: float = 1e-6) -> LeakVerdict:
    m = estimate_mi(inputs, outputs, grid_points=grid_points, eps=eps)
    m0 = zero_leakage_bound(inputs, outputs, shuffles, seed,
                            grid_points=grid_points, eps=eps)
    return LeakVerdict(m.value_bits > m0.bound_bits, m, m0)


def channel_matrix(inputs, outputs, bins: int,
                   alphabet=None) -> tuple[list, np.ndarray, np.ndarray]:
    """Conditional probability of each output bin given each input symbol.

    Outputs are binned uniformly over their observed range; row (i) holds
    count(i, b) / count(i). Returns (symbols, bin_edges, matrix). When an
    explicit alphabet is given, every listed symbol must have samples.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    symbols, groups = _group(inputs, outputs)
    if alphabet is not None:
        missing = set(str(a) for a in alphabet) - set(str(s) for s in symbols)
        if missing:
            raise EmptyInputClass(f"no samples for symbols {sorted(missing)}")
    for s, g in zip(symbols, groups):
        if len(g) == 0:
            raise EmptyInputClass(f"symbol {s!r} has no samples")
    out_all = np.concatenate(groups)
    lo, hi = float(out_all.min()), float(out_all.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    matrix = np.zeros((len(symbols), bins))
    for row, g in enumerate(groups):
        counts, _ = np.histogram(g, bins=edges)
        matrix[row] = counts / len(g)
    return symbols, edges, matrix


def report_record(verdict: LeakVerdict) -> dict:
    """Structured summary of one measurement, suitable for JSON output."""
    m, m0 = verdict.m, verdict.m0
    return {
        "m_bits": m.value_bits,
        "m_millibits": m.value_millibits,
        "m0_bits": m0.bound_bits,
        "m0_millibits": m0.bound_bits * 1e3,
        "leak": verdict.leak,
        "n": m.n,
        "bandwidths": m.bandwidths,
        "grid": {"lo": m.grid_lo, "hi": m.grid_hi, "points": m.grid_points},
        "clamped": m.clamped,
        "shuffles": m0.shuffle_count,
        "shuffle_seed": m0.seed,
        "shuffle_mean_bits": m0.mean,
        "shuffle_sd_bits": m0.sd,
        "method": {
            "kde": "gaussian kernel, silverman bandwidth",
            "integration": "rectangle method on uniform grid",
            "bound": "one-sided normal approximation, mean + 1.645*sd",
        },
    }
