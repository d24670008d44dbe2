"""Temporal-fluctuation estimators, shot-noise mitigation, error propagation,
spectra and homoscedasticity checks.

A measurement record is a ``(K, R)`` array: ``K`` times, ``R`` repetitions.
Currents are in 1/us, so variances are in 1/us^2.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .measurement import MeasurementRecord


def _as_matrix(record) -> np.ndarray:
    x = record.values if isinstance(record, MeasurementRecord) else np.asarray(record, dtype=float)
    if x.ndim != 2:
        raise ValueError("record must be a (K, R) array")
    K, R = x.shape
    if K < 2 or R < 2:
        raise ValueError(f"need K >= 2 and R >= 2, got K={K}, R={R}")
    return x


def temporal_fluctuation(values) -> float:
    """Sample variance over time, ``x^T M x / (K - 1)`` with ``M = 1 - J/K``."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need a 1-d series with at least two samples")
    d = x - x[0]             # anchoring makes constant series exactly zero
    d = d - d.mean()
    return float(d @ d / (len(x) - 1))


@dataclass
class EstimatorReport:
    sigma_t2_naive: float
    sigma_t2_mitigated: float
    sampling_variances: list[float]
    mean_sampling_variance: float
    standard_error: float
    K: int
    R: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_csv(self) -> str:
        """One row per time index with the scalar fields repeated."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "sampling_variance", "sigma_t2_naive", "sigma_t2_mitigated",
                    "mean_sampling_variance", "standard_error", "K", "R"])
        for k, v in enumerate(self.sampling_variances):
            w.writerow([k, repr(v), repr(self.sigma_t2_naive), repr(self.sigma_t2_mitigated),
                        repr(self.mean_sampling_variance), repr(self.standard_error), self.K, self.R])
        return buf.getvalue()


def _row_variances(x: np.ndarray) -> np.ndarray:
    return (x - x[:, :1]).var(axis=1, ddof=1)


def sampling_variances(record) -> np.ndarray:
    """Diagonal of the sampling covariance estimate, one value per time."""
    return _row_variances(_as_matrix(record))


def _se_formula(centered: np.ndarray, var: np.ndarray, R: int) -> float:
    K = len(var)
    first = 2.0 / R * float(np.sum(var * centered ** 2))
    second = float(var.sum()) ** 2 / (K * R) ** 2
    third = (K - 2) / (K * R ** 2) * float(np.sum(var ** 2))
    return math.sqrt(2.0) / (K - 1) * math.sqrt(first + second + third)


def fluctuation_standard_error(record) -> float:
    """Second-order error propagation for the naive estimator, evaluated
    at the repetition means and the estimated per-time sampling variances."""
    x = _as_matrix(record)
    xm = x.mean(axis=1)
    return _se_formula(xm - xm.mean(), _row_variances(x), x.shape[1])


def propagated_standard_error(truth, sigma2, R: int) -> float:
    """The same propagation formula evaluated at known means and variances."""
    truth = np.asarray(truth, dtype=float)
    return _se_formula(truth - truth.mean(), np.broadcast_to(np.asarray(sigma2, float), truth.shape), R)


def mitigated_fluctuation(record) -> EstimatorReport:
    """Naive and shot-noise-mitigated temporal fluctuation of a record.

    The mitigated value subtracts ``sum_r |x_r - x~|^2 / (K R (R-1))`` and is
    unbiased; it can be negative and is reported as is.
    """
    x = _as_matrix(record)
    K, R = x.shape
    xm = x.mean(axis=1)
    naive = temporal_fluctuation(xm)
    var = _row_variances(x)
    correction = float(var.sum()) / (K * R)
    return EstimatorReport(
        sigma_t2_naive=naive,
        sigma_t2_mitigated=naive - correction,
        sampling_variances=[float(v) for v in var],
        mean_sampling_variance=float(var.mean()),
        standard_error=_se_formula(xm - xm.mean(), var, R),
        K=K,
        R=R,
    )


# --- spectra -------------------------------------------------------------------

@dataclass
class SpectrumReport:
    frequencies_mhz: list[float]
    psd: list[float]
    K: int
    dt_ns: float
    population_variance: float = field(default=0.0)

    @property
    def bin_width_mhz(self) -> float:
        return 1e3 / (self.K * self.dt_ns)

    def raw_sum(self) -> float:
        """``(2/K) * sum_{n=1}^{ceil(K/2)} S_n``."""
        return 2.0 / self.K * float(np.sum(self.psd[1:]))

    def variance_from_spectrum(self) -> float:
        """Population variance rebuilt from the one-sided spectrum.

        Each bin with a distinct mirror bin ``K - n`` counts twice; a
        self-mirrored Nyquist bin (even ``K``) counts once; for odd ``K`` the
        top bin ``(K+1)/2`` duplicates bin ``(K-1)/2`` and is skipped.  This
        equals the population variance (1/K normalisation); multiply by
        ``K/(K-1)`` for the sample variance.
        """
        K = self.K
        psd = np.asarray(self.psd)
        half = (K - 1) // 2
        total = 2.0 * psd[1:half + 1].sum()
        if K % 2 == 0:
            total += psd[K // 2]
        return float(total) / K

    def nyquist_excess(self) -> float:
        """``raw_sum() - variance_from_spectrum()``; the top-bin slack."""
        top = self.psd[-1]
        return (2.0 if self.K % 2 else 1.0) * top / self.K

    def dominant_frequency(self, skip_zero: bool = True) -> tuple[int, float]:
        psd = np.asarray(self.psd)
        start = 1 if skip_zero else 0
        n = start + int(np.argmax(psd[start:]))
        return n, self.frequencies_mhz[n]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "frequency_mhz", "psd"])
        for n, (f, s) in enumerate(zip(self.frequencies_mhz, self.psd)):
            w.writerow([n, repr(f), repr(s)])
        return buf.getvalue()


def power_spectrum(series, dt_ns: float) -> SpectrumReport:
    """``S(w_n) = |sum_k I_k exp(-i w_n k dt)|^2 / K`` for ``n = 0 .. ceil(K/2)``."""
    x = np.asarray(getattr(series, "values", series), dtype=float)
    K = len(x)
    if K < 2:
        raise ValueError("need at least two samples")
    nmax = math.ceil(K / 2)
    # the phase offset of starting at k=1 instead of 0 drops out of |.|^2
    X = np.fft.fft(x)
    n = np.arange(nmax + 1)
    psd = np.abs(X[n % K]) ** 2 / K
    freqs = n * 1e3 / (K * dt_ns)
    return SpectrumReport([float(f) for f in freqs], [float(s) for s in psd], K, float(dt_ns),
                          float(np.var(x)))


# --- F distribution and the Brown-Forsythe test ---------------------------------

def _betacf(a: float, b: float, x: float, eps: float = 1e-15, max_iter: int = 100000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_beta(x: float, a: float, b: float) -> float:
    """``I_x(a, b)``."""
    if not (a > 0 and b > 0):
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, d1: float, d2: float) -> float:
    """``P(F > f)`` for an F(d1, d2) variable."""
    if f <= 0:
        return 1.0
    return regularized_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)


@dataclass(frozen=True)
class VarianceTestResult:
    statistic: float
    dof: tuple[int, int]
    p_value: float


class DegenerateTestError(ValueError):
    pass


def brown_forsythe(groups) -> VarianceTestResult:
    """Median-centred Levene test for equal variances across groups.

    ``groups`` is a ``(K, R)`` array (one group per row) or a list of 1-d
    samples of possibly different sizes.
    """
    if isinstance(groups, MeasurementRecord):
        groups = groups.values
    arr = np.asarray(groups, dtype=float) if not isinstance(groups, list) else None
    if arr is not None and arr.ndim == 2:
        rows = list(arr)
    else:
        rows = [np.asarray(g, dtype=float) for g in groups]
    k = len(rows)
    if k < 2:
        raise ValueError("need at least two groups")
    if any(len(g) < 2 for g in rows):
        raise ValueError("each group needs at least two values")
    z = [np.abs(g - np.median(g)) for g in rows]
    n = np.array([len(g) for g in rows])
    N = int(n.sum())
    zbar = np.array([zi.mean() for zi in z])
    grand = sum(zi.sum() for zi in z) / N
    within = sum(float(((zi - m) ** 2).sum()) for zi, m in zip(z, zbar))
    between = float(np.sum(n * (zbar - grand) ** 2))
    if within == 0.0:
        raise DegenerateTestError("zero spread of absolute deviations within every group")
    d1, d2 = k - 1, N - k
    stat = (d2 / d1) * between / within
    return VarianceTestResult(float(stat), (d1, d2), min(1.0, max(0.0, f_survival(stat, d1, d2))))


@dataclass(frozen=True)
class ChiSquareSummary:
    ks_distance: float
    mean_variance: float
    dof: int
    degenerate: bool


def chi_square_variance_check(variances, R: int) -> ChiSquareSummary:
    """Kolmogorov-Smirnov distance between the per-time variance estimates
    and ``mean * chi2(R-1) / (R-1)``."""
    from scipy.stats import chi2

    if R < 2:
        raise ValueError("need R >= 2")
    v = np.sort(np.asarray(variances, dtype=float))
    mean = float(v.mean())
    if mean <= 0.0 or np.ptp(v) == 0.0:
        return ChiSquareSummary(float("nan"), mean, R - 1, True)
    cdf = chi2.cdf(v * (R - 1) / mean, R - 1)
    n = len(v)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return ChiSquareSummary(float(max(upper.max(), lower.max())), mean, R - 1, False)


# --- size scaling ---------------------------------------------------------------

@dataclass(frozen=True)
class LogSlopeFit:
    slope: float
    intercept: float
    stderr: float
    upper_95: float

    def decreasing(self) -> bool:
        """One-sided: the 95% upper confidence bound on the slope is negative."""
        return self.upper_95 < 0


def fit_log_slope(sizes, values) -> LogSlopeFit:
    """Least-squares fit of ``log(values)`` against size with a one-sided
    95% upper bound on the slope (Student t, ``n - 2`` dof)."""
    from scipy.stats import t as student_t

    x = np.asarray(sizes, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if len(x) < 3:
        raise ValueError("need at least three sizes for a slope confidence bound")
    xm = x.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xm)
    resid = y - (intercept + slope * x)
    dof = len(x) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    return LogSlopeFit(slope, intercept, stderr, slope + float(student_t.ppf(0.95, dof)) * stderr)
