"""Small statistics kernel used by the metrics and analysis layers.

Only what the pipeline needs: z-scores, Gaussian KDE, OLS, Hartigan's dip
statistic and two two-sample tests.  Everything works on float64 and is a
pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from .errors import ArgumentError, DegenerateError

# populations above this size are summed with math.fsum (exactly rounded)
COMPENSATED_THRESHOLD = 1_000_000


@dataclass(frozen=True)
class DensitySeries:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    @property
    def mode(self) -> float:
        return float(self.grid[int(np.argmax(self.density))])


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    n: int


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    test_name: str
    n1: int
    n2: int

    __test__ = False  # keep pytest from collecting this class


def _as_1d(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.ravel()
    return arr


def _sum(x: np.ndarray) -> float:
    if x.size > COMPENSATED_THRESHOLD:
        return math.fsum(x.tolist())
    return float(np.sum(x))


def mean_sd(values) -> tuple[float, float]:
    """Mean and population standard deviation (two-pass)."""
    x = _as_1d(values)
    if x.size == 0:
        raise ArgumentError("mean_sd of an empty collection")
    mu = _sum(x) / x.size
    dev = x - mu
    return mu, math.sqrt(_sum(dev * dev) / x.size)


def zscore(values) -> np.ndarray:
    """Standardize with the population sd; constant input maps to zeros."""
    x = _as_1d(values)
    if x.size == 0:
        raise ArgumentError("cannot standardize an empty collection")
    if np.all(x == x[0]):
        return np.zeros_like(x)
    mu, sd = mean_sd(x)
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - mu) / sd


def silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0.0:
        # heavy ties collapse the IQR; fall back to the sd
        spread = sd
    return 0.9 * spread * x.size ** (-0.2)


# direct evaluation above this many kernel evaluations switches to binning
_DIRECT_KDE_LIMIT = 20_000_000


def kde(values, grid_size: int = 512) -> DensitySeries:
    """Gaussian KDE with Silverman's bandwidth on an evenly spaced grid.

    The grid covers ``[min - 3h, max + 3h]``.  Large inputs are linearly
    binned onto a fine grid and convolved with the kernel instead of being
    evaluated point by point.
    """
    x = _as_1d(values)
    if x.size < 2 or np.unique(x).size < 2:
        raise ArgumentError("kde needs at least two distinct values")
    if grid_size < 2:
        raise ArgumentError("grid_size must be >= 2")
    h = silverman_bandwidth(x)
    lo, hi = float(x.min()) - 3 * h, float(x.max()) + 3 * h
    grid = np.linspace(lo, hi, grid_size)

    if x.size * grid_size <= _DIRECT_KDE_LIMIT:
        density = np.zeros(grid_size)
        step = max(1, _DIRECT_KDE_LIMIT // (4 * grid_size))
        for start in range(0, x.size, step):
            u = (grid[:, None] - x[None, start:start + step]) / h
            density += np.exp(-0.5 * u * u).sum(axis=1)
        density /= x.size * h * math.sqrt(2 * math.pi)
    else:
        density = _binned_kde(x, h, lo, hi, grid)
    return DensitySeries(grid=grid, density=np.maximum(density, 0.0), bandwidth=h)


def _binned_kde(x, h, lo, hi, grid):
    m = max(8 * grid.size, 4096)
    fine = np.linspace(lo, hi, m)
    delta = fine[1] - fine[0]
    pos = (x - lo) / delta
    left = np.clip(np.floor(pos).astype(np.int64), 0, m - 2)
    frac = pos - left
    counts = np.bincount(left, weights=1.0 - frac, minlength=m)
    counts += np.bincount(left + 1, weights=frac, minlength=m)
    half = min(m - 1, int(math.ceil(5 * h / delta)))
    offsets = np.arange(-half, half + 1) * delta
    kernel = np.exp(-0.5 * (offsets / h) ** 2) / (h * math.sqrt(2 * math.pi))
    smooth = signal.fftconvolve(counts, kernel, mode="same") / x.size
    return np.interp(grid, fine, smooth)


def ols_fit(x, y) -> RegressionFit:
    xs, ys = _as_1d(x), _as_1d(y)
    if xs.size != ys.size:
        raise ArgumentError("x and y differ in length")
    if xs.size < 2:
        raise ArgumentError("ols_fit needs at least two points")
    if np.all(xs == xs[0]):
        raise DegenerateError("all x values are equal; the regression line is undefined")
    mx, my = xs.mean(), ys.mean()
    dx, dy = xs - mx, ys - my
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    intercept = float(my - slope * mx)
    resid = ys - (intercept + slope * xs)
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - float(resid @ resid) / ss_tot))
    return RegressionFit(slope=slope, intercept=intercept, r_squared=r2, n=int(xs.size))


def dip_statistic(values) -> float:
    """Hartigan & Hartigan's dip of the empirical distribution of ``values``.

    Greatest convex minorant / least concave majorant iteration (AS 217, in
    the formulation of Maechler's R ``diptest``).  The result is bounded
    below by ``1/(2n)``, the dip of ``n`` evenly spread points, and above
    by 0.25.
    """
    xs = np.sort(_as_1d(values))
    n = xs.size
    if n < 2:
        raise ArgumentError("dip_statistic needs at least two values")
    x = xs.tolist()
    dip = 1.0  # in units of 1/(2n) * 2n, i.e. counts; rescaled on return
    if x[-1] == x[0]:
        return dip / (2 * n)

    # convex minorant links
    mn = [0] * n
    for j in range(1, n):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 0 or (x[j] - x[mnj]) * (mnj - mnmnj) < (x[mnj] - x[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj
    # concave majorant links
    mj = [0] * n
    mj[n - 1] = n - 1
    for k in range(n - 2, -1, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n - 1 or (x[k] - x[mjk]) * (mjk - mjmjk) < (x[mjk] - x[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    low, high = 0, n - 1
    gcm = [0] * (n + 1)
    lcm = [0] * (n + 1)
    while True:
        gcm[0] = high
        i = 0
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = l_gcm = i
        ix = ig - 1

        lcm[0] = low
        i = 0
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = l_lcm = i
        iv = 1

        d = 0.0
        if l_gcm != 1 or l_lcm != 1:
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmil = gcm[ix + 1]
                    dx = (lcmiv - gcmil + 1) - (x[lcmiv] - x[gcmil]) * (gcmix - gcmil) / (x[gcmix] - x[gcmil])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmivl = lcm[iv - 1]
                    dx = (x[gcmix] - x[lcmivl]) * (lcmiv - lcmivl) / (x[lcmiv] - x[lcmivl]) - (gcmix - lcmivl - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 0:
                    ix = 0
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break
        if d < dip:
            break

        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            jb, je = gcm[j + 1], gcm[j]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (jj - jb + 1) - (x[jj] - x[jb]) * c
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t

        dip_u = 0.0
        for j in range(ih, l_lcm):
            max_t = 1.0
            jb, je = lcm[j], lcm[j + 1]
            if je - jb > 1 and x[je] != x[jb]:
                c = (je - jb) / (x[je] - x[jb])
                for jj in range(jb, je + 1):
                    t = (x[jj] - x[jb]) * c - (jj - jb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t

        dip = max(dip, dip_l, dip_u)
        if low == gcm[ig] and high == lcm[ih]:
            break
        low, high = gcm[ig], lcm[ih]

    return dip / (2 * n)


def welch_t_test(a, b) -> TestResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    xa, xb = _as_1d(a), _as_1d(b)
    if xa.size < 2 or xb.size < 2:
        raise ArgumentError("welch_t_test needs at least two values per sample")
    va, vb = float(np.var(xa, ddof=1)), float(np.var(xb, ddof=1))
    if va == 0.0 or vb == 0.0:
        raise DegenerateError("welch_t_test: a sample has zero variance")
    na, nb = xa.size, xb.size
    sa, sb = va / na, vb / nb
    t = (float(xa.mean()) - float(xb.mean())) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TestResult(statistic=t, p_value=min(1.0, max(0.0, p)), test_name="welch-t", n1=na, n2=nb)


def two_proportion_z_test(k1: int, n1: int, k2: int, n2: int) -> TestResult:
    """Two-sided pooled-variance z-test for a difference of proportions."""
    if n1 < 1 or n2 < 1 or not (0 <= k1 <= n1) or not (0 <= k2 <= n2):
        raise ArgumentError(f"invalid counts {k1}/{n1}, {k2}/{n2}")
    pooled = (k1 + k2) / (n1 + n2)
    if pooled <= 0.0 or pooled >= 1.0:
        raise DegenerateError("pooled proportion is 0 or 1")
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    z = (k1 / n1 - k2 / n2) / se
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return TestResult(statistic=z, p_value=min(1.0, p), test_name="two-proportion-z", n1=n1, n2=n2)
