"""Shared fixtures for the test suite."""

import numpy as np

from raoscore.core import Dataset


def exact_normal_moment_data(shift=0.0):
    """Weighted sample about ``shift`` with m3 = 0 and m4 = 3 m2^2 exactly.

    Support {0, +-1, +-2} with weights (w0, 1, 1): kurtosis 3 needs
    (w0 + 4)(2 + 32) = 3 (2 + 8)^2.
    """
    w0 = 300.0 / 34.0 - 4.0
    y = shift + np.array([0.0, -1.0, 1.0, -2.0, 2.0])
    return Dataset.from_arrays(y=y, weights=np.array([w0, 1.0, 1.0, 1.0, 1.0]))


def sample_with_mean(rng, n, mean, sd=1.0):
    e = rng.standard_normal(n)
    return mean + sd * (e - e.mean())


def random_pd(rng, p, ridge=None):
    a = rng.normal(size=(p, p))
    return a @ a.T + (p if ridge is None else ridge) * np.eye(p)


def central_gradient(fun, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h * max(1.0, abs(x[j]))
        g[j] = (fun(x + e) - fun(x - e)) / (2 * e[j])
    return g


def central_jacobian(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h * max(1.0, abs(x[j]))
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * e[j]))
    return np.column_stack(cols)


def normal_moment_residuals(n=40, seed=0):
    """Skewed sample with m4/m2^2 = 3 and m6/m2^3 = 15 to machine precision.

    Two points are solved for so the kurtosis and sixth-moment ratios hit
    their normal values; the third moment stays nonzero.
    """
    from scipy import optimize

    rng = np.random.default_rng(seed)
    base = rng.normal(size=n) + 0.3 * rng.exponential(size=n)

    def ratios(v):
        e = base.copy()
        e[:2] = v
        m2, m4, m6 = (np.mean(e**k) for k in (2, 4, 6))
        return [m4 / m2**2 - 3.0, m6 / m2**3 - 15.0]

    for start in ([2.0, -2.0], [2.5, 1.5], [3.0, -1.0], [-2.5, 0.5]):
        sol = optimize.fsolve(ratios, start, xtol=1e-14, full_output=True)
        if sol[2] == 1 and max(abs(r) for r in ratios(sol[0])) < 1e-12:
            e = base.copy()
            e[:2] = sol[0]
            return e
    raise RuntimeError("could not solve for normal moment ratios")
