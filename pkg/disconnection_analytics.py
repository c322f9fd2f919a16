"""
Disconnection time of a V-node under edge dynamics
Birth-death chain on the edge count, mean hitting times and the phase-type law
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Tuple

import numpy as np
import pandas as pd
from scipy import stats

TAIL_MASS = 1e-12
CONDITIONING_LIMIT = 1e5


@dataclass(frozen=True)
class BirthDeathChain:
    """
    Edge count of one V-node: states 0..m, 0 absorbing.
    From k each of the m slots flips at rate lam: down with k*lam, up with (m-k)*lam.
    """
    m: int
    lam: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"Chain needs m >= 1, got {self.m}")
        if not self.lam > 0:
            raise ValueError(f"Flip rate must be positive, got {self.lam}")

    @property
    def mu(self) -> float:
        return 1.0 / self.lam

    def up_rate(self, k: int) -> float:
        return (self.m - k) * self.lam

    def down_rate(self, k: int) -> float:
        return k * self.lam

    def subgenerator(self) -> np.ndarray:
        """Transient block S over states 1..m (row k-1 is state k)"""
        m, lam = self.m, self.lam
        S = np.zeros((m, m))
        for k in range(1, m + 1):
            S[k - 1, k - 1] = -m * lam
            if k < m:
                S[k - 1, k] = self.up_rate(k)
            if k > 1:
                S[k - 1, k - 2] = self.down_rate(k)
        return S

    def exit_vector(self) -> np.ndarray:
        """S0 = -S 1: only state 1 leaks into 0"""
        S0 = np.zeros(self.m)
        S0[0] = self.lam
        return S0

    def generator(self) -> np.ndarray:
        """Full generator H over states 0..m"""
        H = np.zeros((self.m + 1, self.m + 1))
        H[1:, 0] = self.exit_vector()
        H[1:, 1:] = self.subgenerator()
        return H


@dataclass
class PhaseTypeDist:
    """PH(a, S) with exit column S0 = -S 1"""
    a: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.S.shape != (self.a.size, self.a.size):
            raise ValueError(f"Subgenerator shape {self.S.shape} does not match a of size {self.a.size}")
        if not math.isclose(self.a.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"Initial vector must sum to 1, got {self.a.sum()}")

    @classmethod
    def from_chain(cls, chain: BirthDeathChain, d: int) -> 'PhaseTypeDist':
        if not 1 <= d <= chain.m:
            raise ValueError(f"Initial degree d={d} outside 1..{chain.m}")
        a = np.zeros(chain.m)
        a[d - 1] = 1.0
        return cls(a, chain.subgenerator())

    @property
    def S0(self) -> np.ndarray:
        return -self.S.sum(axis=1)

    def mean(self) -> float:
        """-a S^-1 1"""
        return float(-self.a @ np.linalg.solve(self.S, np.ones(self.a.size)))

    def _series(self, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Uniformization at rate q = max exit rate: P = I + S/q and
        a exp(Sx) = sum_n Poisson(qx; n) a P^n. The rows a P^n do not depend on x,
        so one series serves a whole grid. Truncated at Poisson tail mass 1e-12.
        """
        if np.any(xs < 0):
            raise ValueError(f"Time must be nonnegative, got {xs.min()}")
        q = float(np.max(-np.diag(self.S)))
        if not q > 0:
            raise ValueError("Subgenerator has no exit rate")
        qx = q * xs
        top = float(qx.max()) if qx.size else 0.0
        if top > CONDITIONING_LIMIT:
            warnings.warn(f"Uniformization with q*x={top:.3g} needs a long Poisson series",
                          RuntimeWarning, stacklevel=3)
        n_terms = int(stats.poisson.ppf(1.0 - TAIL_MASS, top)) + 1 if top > 0 else 0
        P = np.eye(self.a.size) + self.S / q
        rows = np.empty((n_terms + 1, self.a.size))
        rows[0] = self.a
        for n in range(1, n_terms + 1):
            rows[n] = rows[n - 1] @ P
        weights = stats.poisson.pmf(np.arange(n_terms + 1)[:, None], qx[None, :])
        return weights, rows

    @staticmethod
    def _shape(x, values: np.ndarray):
        return float(values[0]) if np.ndim(x) == 0 else values

    def survival(self, x):
        """a exp(Sx) 1 for a scalar or an array of times"""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        weights, rows = self._series(xs)
        return self._shape(x, np.clip(rows.sum(axis=1) @ weights, 0.0, 1.0))

    def cdf(self, x):
        return self._shape(x, 1.0 - np.atleast_1d(self.survival(x)))

    def density(self, x):
        """a exp(Sx) S0"""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        weights, rows = self._series(xs)
        return self._shape(x, np.maximum((rows @ self.S0) @ weights, 0.0))


# =============================================================================
# MEAN DISCONNECTION TIME
# =============================================================================

def _check_degree(m: int, d: int) -> None:
    if m < 1 or not 1 <= d <= m:
        raise ValueError(f"Need 1 <= d <= m, got m={m}, d={d}")


def closed_form_constant(m: int, d: int) -> Fraction:
    """C_d(m) as the exact double sum over (m-k)!(k-1)!/(n!(m-n)!)"""
    _check_degree(m, d)
    f = math.factorial
    return sum((Fraction(f(m - k) * f(k - 1), f(n) * f(m - n))
                for k in range(1, d + 1) for n in range(m - k + 1)), Fraction(0))


def mean_disconnection_time(m: int, d: int, mu: float) -> float:
    """
    Backward recursion X_m = mu/m, X_k = ((m-k)/k) X_{k+1} + mu/k.
    The mean from degree d is X_1 + ... + X_d.
    """
    _check_degree(m, d)
    X = [0.0] * (m + 2)
    X[m] = mu / m
    for k in range(m - 1, 0, -1):
        X[k] = (m - k) / k * X[k + 1] + mu / k
    return float(sum(X[1:d + 1]))


def hitting_time_system(m: int, mu: float) -> np.ndarray:
    """
    Mean hitting times of 0 from each state 1..m by direct elimination of
        m x_k - k x_{k-1} - (m-k) x_{k+1} = mu,   x_0 = 0.
    Solved exactly in rationals with mu = 1 and scaled at the end.
    """
    if m < 1:
        raise ValueError(f"Need m >= 1, got {m}")
    # tridiagonal rows: sub[k] x_{k-1} + diag[k] x_k + sup[k] x_{k+1} = 1
    sub = [Fraction(-k) for k in range(1, m + 1)]
    diag = [Fraction(m)] * m
    sup = [Fraction(-(m - k)) for k in range(1, m + 1)]
    rhs = [Fraction(1)] * m

    for i in range(1, m):
        factor = sub[i] / diag[i - 1]
        diag[i] -= factor * sup[i - 1]
        rhs[i] -= factor * rhs[i - 1]

    x = [Fraction(0)] * m
    x[m - 1] = rhs[m - 1] / diag[m - 1]
    for i in range(m - 2, -1, -1):
        x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i]
    return np.array([float(value) * mu for value in x])


# =============================================================================
# LAW OF THE DISCONNECTION TIME
# =============================================================================

def survival(pht: PhaseTypeDist, x: float) -> float:
    return pht.survival(x)


def density(pht: PhaseTypeDist, x: float) -> float:
    return pht.density(x)


def concentration_check(m: int, d: int, mu: float, scale_ratio: float) -> Tuple[float, float]:
    """(P(D <= x), P(D >= x)) at x = mu * scale_ratio"""
    if not scale_ratio > 0:
        raise ValueError(f"scale_ratio must be positive, got {scale_ratio}")
    pht = PhaseTypeDist.from_chain(BirthDeathChain(m, 1.0 / mu), d)
    tail = pht.survival(mu * scale_ratio)
    return 1.0 - tail, tail


def pht_grid(m: int, d: int, lam: float, xs: Iterable[float]) -> pd.DataFrame:
    """Survival, cdf and density of D on a grid of times"""
    pht = PhaseTypeDist.from_chain(BirthDeathChain(m, lam), d)
    xs = np.asarray(list(xs), dtype=float)
    surv = pht.survival(xs)
    return pd.DataFrame({'x': xs, 'survival': surv, 'cdf': 1.0 - surv, 'density': pht.density(xs)},
                        columns=['x', 'survival', 'cdf', 'density'])
