"""
Objetivos autoconcordantes de los experimentos.

Cada clase implementa ObjectiveOracle aprovechando su estructura:
- PortfolioProblem: f(x) = -sum_i ln(a_i' x), sobre el símplex
- DOptProblem: f(x) = -log det(A Diag(x) A'), sobre el símplex
- LogisticProblem: regresión logística con término ridge, sobre la bola l1
- QuadraticProblem: cuadrática convexa, útil como referencia porque el
  modelo de Newton es exacto
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import expit

from errors import DomainError, InputValidationError
from oracles import DenseHessian, HessianOperator, ObjectiveOracle

LOGGER = logging.getLogger(__name__)


def softplus(z):
    """ln(1 + exp(z)) sin desbordamiento."""
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


# ---------------------------------------------------------------------------
# Portfolio
# ---------------------------------------------------------------------------

@dataclass
class _PortfolioCache:
    r: np.ndarray
    inside: bool


class _PortfolioHessian(HessianOperator):
    def __init__(self, A, weights, counters):
        super().__init__(A.shape[1], counters)
        self.A = A
        self.weights = weights

    def _apply(self, v):
        return self.A.T @ (self.weights * (self.A @ v))

    def _column(self, j):
        return self.A.T @ (self.weights * self.A[:, j])


class PortfolioProblem(ObjectiveOracle):
    """
    Cartera log-óptima: f(x) = -sum_i ln(a_i' x).

    Args:
        A (np.ndarray): matriz n x p de rendimientos (filas a_i')
    """

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise InputValidationError(f"A debe ser una matriz, recibida forma {A.shape}")
        super().__init__(A.shape[1])
        self.A = A

    def _build_cache(self, x):
        r = self.A @ x
        return _PortfolioCache(r=r, inside=bool(np.all(r > 0)))

    def _inside(self, x):
        cache = self._at(x)
        if not cache.inside:
            raise DomainError("el punto sale del dominio {Ax > 0}")
        return cache

    def evaluate(self, x):
        self.counters.evals += 1
        cache = self._at(x)
        # Centinela para que las búsquedas de línea puedan rechazar el punto
        if not cache.inside:
            return math.inf
        return float(-np.log(cache.r).sum())

    def grad(self, x):
        self.counters.grads += 1
        cache = self._inside(x)
        return -self.A.T @ (1.0 / cache.r)

    def hessian_operator(self, x):
        cache = self._inside(x)
        return _PortfolioHessian(self.A, 1.0 / cache.r ** 2, self.counters)

    def domain_check(self, x):
        return self._at(x).inside

    def max_step(self, x, d):
        r = self._at(x).r
        Ad = self.A @ d
        decreasing = Ad < 0
        if not np.any(decreasing):
            return 1.0
        limit = float(np.min(-r[decreasing] / Ad[decreasing]))
        return 1.0 if limit > 1.0 else 0.99 * limit

    def value_lower_bound(self):
        # En el símplex a_i' x <= max_j A_ij
        best = self.A.max(axis=1)
        if np.any(best <= 0):
            return -math.inf
        return float(-np.log(best).sum())


# ---------------------------------------------------------------------------
# D-optimal design
# ---------------------------------------------------------------------------

@dataclass
class _DOptCache:
    inside: bool
    logdet: float = math.nan
    B: np.ndarray = None


class _DOptHessian(HessianOperator):
    """
    Hessiana (b_j' b_k)^2 con B = L^-1 A. Nunca se forma para p grande:
    las columnas cuestan O(np) y el producto completo O(n^2 p).
    """

    def __init__(self, B, counters, dense_threshold):
        super().__init__(B.shape[1], counters)
        self.B = B
        self._squared_gram = None
        if self.dim <= dense_threshold:
            gram = B.T @ B
            self._squared_gram = gram * gram

    def _apply(self, v):
        if self._squared_gram is not None:
            return self._squared_gram @ v
        W = (self.B * v) @ self.B.T
        return np.einsum('ij,ij->j', self.B, W @ self.B)

    def _column(self, j):
        if self._squared_gram is not None:
            return self._squared_gram[:, j].copy()
        inner = self.B.T @ self.B[:, j]
        return inner * inner


def _dopt_step(kappa, n, low, high):
    """
    Minimizador de -log det((1 - t) M + t a a') en [low, high], con
    kappa = a' M^-1 a. Para kappa <= 1 la función crece en t.
    """
    if kappa <= 1.0:
        return low
    tau = (kappa - n) / (n * (kappa - 1.0))
    return float(min(max(tau, low), high))


class DOptProblem(ObjectiveOracle):
    """
    Diseño D-óptimo: f(x) = -log det(A Diag(x) A').

    Args:
        A (np.ndarray): matriz n x p cuyas columnas son los puntos a_j
        dense_threshold (int): hasta esta p se guarda la Hessiana densa
            (b_j' b_k)^2 para los productos completos
    """

    def __init__(self, A, dense_threshold=None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise InputValidationError(f"A debe ser una matriz, recibida forma {A.shape}")
        super().__init__(A.shape[1])
        self.A = A
        self.n = A.shape[0]
        self.dense_threshold = 2 * self.n if dense_threshold is None else dense_threshold

    def _build_cache(self, x):
        M = (self.A * x) @ self.A.T
        try:
            L = cholesky(M, lower=True)
        except LinAlgError:
            return _DOptCache(inside=False)
        B = solve_triangular(L, self.A, lower=True)
        logdet = 2.0 * float(np.log(np.diag(L)).sum())
        return _DOptCache(inside=True, logdet=logdet, B=B)

    def _inside(self, x):
        cache = self._at(x)
        if not cache.inside:
            raise DomainError("A Diag(x) A' no es definida positiva (rango < n)")
        return cache

    def evaluate(self, x):
        self.counters.evals += 1
        cache = self._at(x)
        if not cache.inside:
            return math.inf
        return -cache.logdet

    def grad(self, x):
        self.counters.grads += 1
        B = self._inside(x).B
        return -np.einsum('ij,ij->j', B, B)

    def kappa(self, x):
        """kappa_j = a_j' M(x)^-1 a_j para todos los puntos."""
        B = self._inside(x).B
        return np.einsum('ij,ij->j', B, B)

    def hessian_operator(self, x):
        return _DOptHessian(self._inside(x).B, self.counters, self.dense_threshold)

    def domain_check(self, x):
        return self._at(x).inside

    def linesearch_step(self, x, j, low=0.0, high=1.0):
        """
        Paso exacto t para (1 - t) x + t e_j restringido a [low, high].
        Con low < 0 sirve también para pasos 'away'.
        """
        B = self._inside(x).B
        kappa = float(B[:, j] @ B[:, j])
        return _dopt_step(kappa, self.n, low, high)

    def line_search(self, x, d, tau_max):
        # Forma cerrada sólo para direcciones hacia un vértice e_j
        target = x + d
        j = int(np.argmax(target))
        vertex = np.zeros_like(target)
        vertex[j] = 1.0
        if not np.allclose(target, vertex, rtol=0.0, atol=1e-12):
            return None
        return self.linesearch_step(x, j, 0.0, tau_max)

    def value_lower_bound(self):
        # det(M) <= (tr(M)/n)^n y tr(M) <= max_j ||a_j||^2 en el símplex
        largest = float(np.max(np.einsum('ij,ij->j', self.A, self.A)))
        return -self.n * math.log(largest / self.n)


def dopt_linesearch_step(problem, x, j):
    """
    argmin_{t en [0,1]} f((1 - t) x + t e_j) en forma cerrada:
    t = (kappa_j - n) / (n (kappa_j - 1)) recortado a [0, 1].
    """
    return problem.linesearch_step(x, j, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

@dataclass
class _LogisticCache:
    z: np.ndarray
    s: np.ndarray
    w: np.ndarray


class _LogisticHessian(HessianOperator):
    def __init__(self, problem, w):
        super().__init__(problem.dim, problem.counters)
        self.problem = problem
        self.w = w

    def _apply(self, v):
        prob = self.problem
        return prob.scale * (prob.A @ (self.w * (prob.A.T @ v)) / prob.n + prob.mu * v)

    def _column(self, j):
        prob = self.problem
        row = prob.A[[j]].toarray().ravel()
        column = prob.A @ (self.w * row) / prob.n
        column[j] += prob.mu
        return prob.scale * column


class LogisticProblem(ObjectiveOracle):
    """
    Regresión logística con término ridge:
    f(x) = (1/n) sum_i ln(1 + exp(z_i)) + (mu/2) ||x||^2, con z = A' x.

    Args:
        A (array o matriz dispersa): matriz p x n cuyas columnas son -y_i a_i
        mu (float): peso ridge (> 0); por defecto 1/n
        standardize (bool): si True, se minimiza (M_f^2/4) f con
            M_f = max_i ||a_i|| / sqrt(mu), que tiene la forma estándar
    """

    def __init__(self, A, mu=None, standardize=False):
        A = sp.csr_matrix(A, dtype=float)
        super().__init__(A.shape[0])
        self.A = A
        self.n = A.shape[1]
        self.mu = 1.0 / self.n if mu is None else float(mu)
        if self.mu <= 0:
            raise InputValidationError(f"mu debe ser positivo, recibido {self.mu}")
        self.scale = 1.0
        if standardize:
            column_norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=0)).ravel())
            m_f = float(column_norms.max()) / math.sqrt(self.mu)
            self.scale = m_f ** 2 / 4.0
            LOGGER.info("Objetivo logístico reescalado por %.6g", self.scale)

    @classmethod
    def from_samples(cls, features, labels, mu=None, standardize=False):
        """
        Construye el problema a partir de muestras (a_i, y_i).

        Args:
            features: matriz n x p (densa o dispersa) con filas a_i
            labels (np.ndarray): etiquetas en {-1, +1}
        """
        labels = np.asarray(labels, dtype=float)
        X = sp.csr_matrix(features, dtype=float)
        if X.shape[0] != labels.size:
            raise InputValidationError("el número de etiquetas no coincide con las muestras")
        A = sp.diags(-labels) @ X
        return cls(A.T.tocsr(), mu=mu, standardize=standardize)

    def _build_cache(self, x):
        z = self.A.T @ x
        s = expit(z)
        return _LogisticCache(z=z, s=s, w=s * (1.0 - s))

    def evaluate(self, x):
        self.counters.evals += 1
        x = np.asarray(x, dtype=float)
        cache = self._at(x)
        value = softplus(cache.z).sum() / self.n + 0.5 * self.mu * float(x @ x)
        return self.scale * float(value)

    def grad(self, x):
        self.counters.grads += 1
        cache = self._at(x)
        return self.scale * (self.A @ cache.s / self.n + self.mu * np.asarray(x, dtype=float))

    def hessian_operator(self, x):
        return _LogisticHessian(self, self._at(x).w)

    def domain_check(self, x):
        return bool(np.all(np.isfinite(x)))

    def value_lower_bound(self):
        return 0.0


# ---------------------------------------------------------------------------
# Quadratic
# ---------------------------------------------------------------------------

class QuadraticProblem(ObjectiveOracle):
    """
    f(x) = 0.5 x' Q x + c' x con Q simétrica semidefinida positiva.
    """

    def __init__(self, Q, c):
        Q = np.asarray(Q, dtype=float)
        super().__init__(Q.shape[0])
        self.Q = Q
        self.c = np.asarray(c, dtype=float)

    def _build_cache(self, x):
        return self.Q @ x

    def evaluate(self, x):
        self.counters.evals += 1
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self._at(x) + self.c @ x)

    def grad(self, x):
        self.counters.grads += 1
        return self._at(x) + self.c

    def hessian_operator(self, x):
        return DenseHessian(self.Q, self.counters)

    def domain_check(self, x):
        return bool(np.all(np.isfinite(x)))

    def line_search(self, x, d, tau_max):
        curvature = float(d @ self.Q @ d)
        slope = float((self._at(x) + self.c) @ d)
        if curvature <= 0:
            return tau_max if slope < 0 else 0.0
        return float(min(tau_max, max(0.0, -slope / curvature)))
