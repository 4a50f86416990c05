"""Gaussian and mixture moments: exact polynomials and sample statistics.

Univariate moments come from the two-term recursion

    M_0 = 1,  M_1 = mu,  M_i = mu*M_{i-1} + (i-1)*var*M_{i-2},

which works verbatim for numbers and for SparsePoly symbols.  Multivariate
moment polynomials are extracted from the moment generating function of the
mixture by truncated power-series expansion with exact rational coefficients;
only the coordinates actually appearing in a moment key enter the expansion,
so high ambient dimension costs nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from momentmix.errors import InputError, MissingMomentError
from momentmix.polysys import SparsePoly

# ---------------------------------------------------------------------------
# basic containers


@dataclass(frozen=True)
class UnivariateGaussian:
    """One Gaussian component; var > 0 for a statistically meaningful one,
    but arbitrary (even complex) values are allowed symbolically."""

    mu: float
    var: float


def key_order(key) -> int:
    return int(sum(key))


def axis_key(n: int, axis: int, power: int) -> tuple:
    """Moment key power*e_axis in dimension n (axis is 0-based)."""
    key = [0] * n
    key[axis] = power
    return tuple(key)


def pair_key(n: int, i: int, j: int, ci: int, cj: int = 1) -> tuple:
    key = [0] * n
    key[i] = ci
    key[j] = cj
    return tuple(key)


class MomentTable:
    """Map from moment multi-indices to real values."""

    def __init__(self, n: int, entries=None):
        self.n = int(n)
        self.entries: dict = {}
        if entries:
            for key, value in dict(entries).items():
                self.set(key, value)

    def set(self, key, value):
        key = tuple(int(i) for i in key)
        if len(key) != self.n:
            raise InputError(f"moment key {key} has dimension {len(key)}, table has n={self.n}")
        if any(i < 0 for i in key):
            raise InputError(f"moment key {key} has a negative entry")
        value = float(value)
        if not math.isfinite(value):
            raise InputError(f"moment m_{key} is not finite")
        if all(i == 0 for i in key) and abs(value - 1.0) > 1e-12:
            raise InputError(f"the order-zero moment must equal 1, got {value}")
        self.entries[key] = value

    def __contains__(self, key):
        return tuple(key) in self.entries

    def get(self, key) -> float:
        key = tuple(int(i) for i in key)
        if all(i == 0 for i in key):
            return self.entries.get(key, 1.0)
        if key not in self.entries:
            raise MissingMomentError(key)
        return self.entries[key]

    def univariate(self, axis: int, max_order: int) -> list:
        """Moments m_1..m_max_order along one coordinate axis."""
        return [self.get(axis_key(self.n, axis, c)) for c in range(1, max_order + 1)]

    def sorted_items(self):
        return sorted(self.entries.items(), key=lambda kv: (key_order(kv[0]), kv[0]))

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f"MomentTable(n={self.n}, {len(self.entries)} entries)"


class MixtureParams:
    """Weights, means and covariances of a k-component Gaussian mixture."""

    def __init__(self, weights, means, covariances):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(means, dtype=float))
        self.covariances = np.asarray(covariances, dtype=float)
        if self.covariances.ndim == 2:
            self.covariances = self.covariances[None, :, :]
        self.k = self.weights.shape[0]
        self.n = self.means.shape[1]
        if self.means.shape != (self.k, self.n):
            raise InputError(f"means shape {self.means.shape} != ({self.k}, {self.n})")
        if self.covariances.shape != (self.k, self.n, self.n):
            raise InputError(
                f"covariances shape {self.covariances.shape} != ({self.k}, {self.n}, {self.n})"
            )
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InputError(f"weights sum to {self.weights.sum()!r}, expected 1")
        if np.any(self.weights <= 0) or np.any(self.weights > 1):
            raise InputError("each weight must lie in (0, 1]")
        for idx, cov in enumerate(self.covariances):
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise InputError(f"covariance {idx + 1} is not symmetric")

    def is_meaningful(self) -> bool:
        """True when every covariance is positive definite."""
        for cov in self.covariances:
            if np.linalg.eigvalsh(cov).min() <= 0:
                return False
        return True

    def parameter_vector(self, diagonal_only=False) -> np.ndarray:
        """Flatten to (weights, means, covariance entries) for error metrics."""
        parts = [self.weights, self.means.ravel()]
        if diagonal_only:
            parts.append(np.array([np.diag(c) for c in self.covariances]).ravel())
        else:
            iu = np.triu_indices(self.n)
            parts.append(np.array([c[iu] for c in self.covariances]).ravel())
        return np.concatenate(parts)

    def __repr__(self):
        return f"MixtureParams(k={self.k}, n={self.n})"


@dataclass(frozen=True)
class Knowns:
    """Fixed parameters of a univariate mixture model.

    weights/variances fix per-component values; equal_variances marks a
    single shared but unknown variance; means is accepted for completeness
    (no solver class fixes the means and leaves anything else free).
    """

    weights: tuple | None = None
    variances: tuple | None = None
    equal_variances: bool = False
    means: tuple | None = None

    def __post_init__(self):
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            if abs(sum(self.weights) - 1.0) > 1e-9:
                raise InputError(f"known weights sum to {sum(self.weights)}, expected 1")
        if self.variances is not None:
            object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
            if self.equal_variances:
                raise InputError("variances cannot be both fixed and a shared unknown")
        if self.means is not None:
            object.__setattr__(self, "means", tuple(float(m) for m in self.means))


class UnivariateRing:
    """Variable layout of the univariate moment system for given knowns.

    Order conventions: with known weights and fully free component shapes
    the variables interleave as (mu_1, var_1, ..., mu_k, var_k); every other
    combination uses block order (free weights, free means, free variances),
    with a single trailing variance when it is shared.
    """

    def __init__(self, k: int, knowns: Knowns):
        if k < 1:
            raise InputError("k must be at least 1")
        self.k = k
        self.knowns = knowns
        w_free = knowns.weights is None
        m_free = knowns.means is None
        v_free = knowns.variances is None
        if not (w_free or m_free or v_free or knowns.equal_variances):
            raise InputError("all parameters fixed; nothing to solve")
        self._lam = [None] * k
        self._mu = [None] * k
        self._var = [None] * k
        names = []
        if not w_free and m_free and v_free and not knowns.equal_variances:
            # interleaved layout for the known-weights, all-shapes-free model
            for ell in range(k):
                self._mu[ell] = len(names)
                names.append(f"mu{ell + 1}")
                self._var[ell] = len(names)
                names.append(f"var{ell + 1}")
        else:
            if w_free:
                for ell in range(k):
                    self._lam[ell] = len(names)
                    names.append(f"lam{ell + 1}")
            if m_free:
                for ell in range(k):
                    self._mu[ell] = len(names)
                    names.append(f"mu{ell + 1}")
            if knowns.equal_variances:
                shared = len(names)
                names.append("var")
                self._var = [shared] * k
            elif v_free:
                for ell in range(k):
                    self._var[ell] = len(names)
                    names.append(f"var{ell + 1}")
        self.nvars = len(names)
        self.names = names

    def _sym(self, idx, known_values, ell):
        if idx is not None:
            return SparsePoly.variable(self.nvars, idx)
        return Fraction(known_values[ell])

    def lam(self, ell):
        if self._lam[ell] is not None:
            return SparsePoly.variable(self.nvars, self._lam[ell])
        return Fraction(self.knowns.weights[ell])

    def mu(self, ell):
        if self._mu[ell] is not None:
            return SparsePoly.variable(self.nvars, self._mu[ell])
        return Fraction(self.knowns.means[ell])

    def var(self, ell):
        if self._var[ell] is not None:
            return SparsePoly.variable(self.nvars, self._var[ell])
        return Fraction(self.knowns.variances[ell])

    def lam_index(self, ell):
        return self._lam[ell]

    def mu_index(self, ell):
        return self._mu[ell]

    def var_index(self, ell):
        return self._var[ell]


# ---------------------------------------------------------------------------
# univariate moments


def gaussian_moment(i: int, mu, var):
    """i-th raw moment of N(mu, var) via the two-term recursion.

    Accepts numbers or SparsePoly symbols for mu and var; total in i >= 0.
    """
    if i < 0:
        raise InputError("moment order must be non-negative")
    if i == 0:
        return 1
    prev2, prev = 1, mu
    for j in range(2, i + 1):
        prev2, prev = prev, mu * prev + (j - 1) * var * prev2
    return prev


def mixture_moment_poly(i: int, k: int, knowns: Knowns, target_moment=0.0) -> SparsePoly:
    """The order-i mixture moment equation sum_l lam_l M_i(mu_l, var_l) minus
    the target value, as a sparse polynomial over the free parameters."""
    if i < 0:
        raise InputError("moment order must be non-negative")
    ring = UnivariateRing(k, knowns)
    acc = SparsePoly.constant(ring.nvars, 0)
    for ell in range(k):
        acc = acc + ring.lam(ell) * gaussian_moment(i, ring.mu(ell), ring.var(ell))
    if target_moment:
        acc = acc - Fraction(target_moment)
    elif i == 0:
        # order zero reads sum of weights = 1
        acc = acc - 1
    return acc


# ---------------------------------------------------------------------------
# multivariate moments through the moment generating function


def _series_scale(series, scalar):
    return {e: v * scalar for e, v in series.items()}


def _series_mul(a, b, max_order):
    out = {}
    for ea, va in a.items():
        da = sum(ea)
        for eb, vb in b.items():
            if da + sum(eb) > max_order:
                continue
            e = tuple(x + y for x, y in zip(ea, eb))
            prod = va * vb
            if e in out:
                out[e] = out[e] + prod
            else:
                out[e] = prod
    return out


def _series_exp(a, max_order):
    """exp of a power series with no constant term, truncated by total order."""
    nact = len(next(iter(a))) if a else 0
    zero = (0,) * nact
    out = {zero: Fraction(1)}
    term = {zero: Fraction(1)}
    for j in range(1, max_order + 1):
        term = _series_scale(_series_mul(term, a, max_order), Fraction(1, j))
        if not term:
            break
        for e, v in term.items():
            if e in out:
                out[e] = out[e] + v
            else:
                out[e] = v
    return out


def _component_mgf_coefficient(key_active, mu_elems, cov_elems):
    """[t^key] exp(sum_s mu_s t_s + 1/2 sum_{s,t} sigma_st t_s t_t) over the
    active coordinates; elements may be numbers or SparsePoly."""
    nact = len(key_active)
    d = sum(key_active)
    arg = {}

    def basis(*pairs):
        e = [0] * nact
        for pos, inc in pairs:
            e[pos] += inc
        return tuple(e)

    for s in range(nact):
        arg[basis((s, 1))] = mu_elems[s]
    for s in range(nact):
        for t in range(s, nact):
            coef = cov_elems[(s, t)]
            if s == t:
                coef = coef * Fraction(1, 2)
            e = basis((s, 1), (t, 1))
            arg[e] = arg[e] + coef if e in arg else coef
    if d == 0:
        return 1
    series = _series_exp(arg, d)
    return series.get(tuple(key_active), 0)


class _MultivariateRing:
    """Variable layout for multivariate moment polynomials: free weights
    first, then component means mu_{l,s}, then covariance entries
    sigma_{l,s,t} with s <= t, each block component-major."""

    def __init__(self, k, n, weights=None, means=None, covariances=None):
        self.k, self.n = k, n
        self.weights = weights
        self.means = means
        self.covariances = covariances
        names = []
        self._lam = [None] * k
        self._mu = {}
        self._sig = {}
        if weights is None:
            for ell in range(k):
                self._lam[ell] = len(names)
                names.append(f"lam{ell + 1}")
        if means is None:
            for ell in range(k):
                for s in range(n):
                    self._mu[(ell, s)] = len(names)
                    names.append(f"mu{ell + 1}{s + 1}")
        if covariances is None:
            for ell in range(k):
                for s in range(n):
                    for t in range(s, n):
                        self._sig[(ell, s, t)] = len(names)
                        names.append(f"sig{ell + 1}{s + 1}{t + 1}")
        self.nvars = len(names)
        self.names = names

    def lam(self, ell):
        if self._lam[ell] is not None:
            return SparsePoly.variable(self.nvars, self._lam[ell])
        return Fraction(self.weights[ell])

    def mu(self, ell, s):
        if (ell, s) in self._mu:
            return SparsePoly.variable(self.nvars, self._mu[(ell, s)])
        return Fraction(self.means[ell][s])

    def sig(self, ell, s, t):
        s, t = min(s, t), max(s, t)
        if (ell, s, t) in self._sig:
            return SparsePoly.variable(self.nvars, self._sig[(ell, s, t)])
        return Fraction(self.covariances[ell][s][t])


def multivariate_moment_poly(key, k: int, weights=None, means=None,
                             covariances=None, max_order=None):
    """Exact polynomial expression of the moment m_key of a k-mixture.

    key is a multi-index (i_1, ..., i_n); parameters left as None stay
    symbolic.  The expansion order is capped at max_order (default 3k+1).
    """
    key = tuple(int(i) for i in key)
    if any(i < 0 for i in key):
        raise InputError(f"moment key {key} has a negative entry")
    n = len(key)
    d = key_order(key)
    cap = max_order if max_order is not None else 3 * k + 1
    if d > cap:
        raise InputError(f"moment order {d} exceeds the configured maximum {cap}")
    ring = _MultivariateRing(k, n, weights, means, covariances)
    active = [s for s in range(n) if key[s] > 0]
    key_active = tuple(key[s] for s in active)
    fact = 1
    for i in key_active:
        fact *= math.factorial(i)
    acc = SparsePoly.constant(ring.nvars, 0)
    for ell in range(k):
        mu_elems = [ring.mu(ell, s) for s in active]
        cov_elems = {
            (a, b): ring.sig(ell, active[a], active[b])
            for a in range(len(active))
            for b in range(a, len(active))
        }
        coef = _component_mgf_coefficient(key_active, mu_elems, cov_elems)
        acc = acc + ring.lam(ell) * coef * fact
    return acc


# ---------------------------------------------------------------------------
# numeric tables


def sample_moments(data, keys) -> MomentTable:
    """Empirical moments (1/N) sum_i prod_s y_{i,s}^{k_s} for each key."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[0] < 1:
        raise InputError("data must be a non-empty N x n matrix")
    if not np.all(np.isfinite(data)):
        raise InputError("data contains NaN or Inf")
    n = data.shape[1]
    table = MomentTable(n)
    for key in keys:
        key = tuple(int(i) for i in key)
        if len(key) != n:
            raise InputError(f"moment key {key} has dimension {len(key)}, data has n={n}")
        value = 1.0 if all(i == 0 for i in key) else float(
            np.prod(data ** np.asarray(key), axis=1).mean()
        )
        table.set(key, value)
    return table


def _gaussian_key_moment(key, mean, cov) -> float:
    """Raw moment E[prod X_s^{i_s}] of one multivariate Gaussian."""
    active = [s for s in range(len(key)) if key[s] > 0]
    if not active:
        return 1.0
    if len(active) == 1:
        s = active[0]
        return float(gaussian_moment(key[s], float(mean[s]), float(cov[s][s])))
    key_active = tuple(key[s] for s in active)
    mu_elems = [float(mean[s]) for s in active]
    cov_elems = {
        (a, b): float(cov[active[a]][active[b]])
        for a in range(len(active))
        for b in range(a, len(active))
    }
    coef = _component_mgf_coefficient(key_active, mu_elems, cov_elems)
    fact = 1
    for i in key_active:
        fact *= math.factorial(i)
    return float(coef * fact)


def exact_moments(params: MixtureParams, keys, max_order=None) -> MomentTable:
    """Moment table of an explicit mixture, for round trips and harnesses."""
    cap = max_order if max_order is not None else 3 * params.k + 1
    table = MomentTable(params.n)
    for key in keys:
        key = tuple(int(i) for i in key)
        if len(key) != params.n:
            raise InputError(f"moment key {key} has dimension {len(key)}, model has n={params.n}")
        if key_order(key) > cap:
            raise InputError(f"moment order {key_order(key)} exceeds the configured maximum {cap}")
        value = sum(
            params.weights[ell] * _gaussian_key_moment(key, params.means[ell], params.covariances[ell])
            for ell in range(params.k)
        )
        table.set(key, value)
    return table
