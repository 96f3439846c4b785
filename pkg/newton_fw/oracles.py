"""
Oráculos de objetivo y de conjunto factible.

Un objetivo autoconcordante se usa sólo a través de su valor, su gradiente
y productos Hessiana-vector. Un conjunto factible se usa a través de su
oráculo de minimización lineal (LMO), su diámetro, un test de pertenencia y,
para los métodos de comparación, la proyección euclídea.

Contenido:
- ObjectiveOracle / HessianOperator: interfaz de los objetivos
- FeasibleSet, Simplex, L1Ball: conjuntos con LMO barato
- Vertex: vértice disperso (índice, magnitud con signo)
- local_norm: norma local ||v||_x reutilizando H v
"""

import abc
import math
from dataclasses import dataclass

import numpy as np

from errors import InputValidationError, NumericalPSDError


@dataclass(frozen=True)
class Vertex:
    """
    Vértice de un conjunto atómico: value * e_index.

    Atributos:
        index: coordenada no nula
        value: magnitud con signo (1 en el símplex, +-rho en la bola l1)
        dim: dimensión del espacio
    """
    index: int
    value: float
    dim: int

    @property
    def key(self):
        """Identificador del vértice dentro de un conjunto activo."""
        return (self.index, self.value > 0)

    def to_dense(self):
        dense = np.zeros(self.dim)
        dense[self.index] = self.value
        return dense

    def dot(self, g):
        return self.value * g[self.index]


@dataclass
class OracleCounters:
    """Contadores de llamadas a un objetivo."""
    evals: int = 0
    grads: int = 0
    hess_ops: int = 0


class HessianOperator(abc.ABC):
    """
    Hessiana de un objetivo en un punto fijo, vista como operador.

    Las subclases implementan _apply y, si tienen una forma barata de
    obtener columnas, _column.
    """

    def __init__(self, dim, counters):
        self.dim = dim
        self.counters = counters

    @abc.abstractmethod
    def _apply(self, v):
        ...

    def _column(self, j):
        e_j = np.zeros(self.dim)
        e_j[j] = 1.0
        return self._apply(e_j)

    def apply(self, v):
        """Producto H v."""
        self.counters.hess_ops += 1
        return self._apply(np.asarray(v, dtype=float))

    def column(self, j):
        """Columna j de H."""
        self.counters.hess_ops += 1
        return self._column(j)


class DenseHessian(HessianOperator):
    """Operador a partir de una matriz explícita."""

    def __init__(self, matrix, counters=None):
        super().__init__(matrix.shape[0], counters or OracleCounters())
        self.matrix = matrix

    def _apply(self, v):
        return self.matrix @ v

    def _column(self, j):
        return self.matrix[:, j].copy()


class ObjectiveOracle(abc.ABC):
    """
    Interfaz de un objetivo autoconcordante.

    Cada instancia guarda una caché ligada al último punto consultado
    (por ejemplo A x o una factorización de Cholesky); se recalcula cuando
    cambia el punto. Dos ejecuciones concurrentes deben usar instancias
    distintas.
    """

    def __init__(self, dim):
        self.dim = dim
        self.counters = OracleCounters()
        self._point = None
        self._cache = None

    def _at(self, x):
        x = np.asarray(x, dtype=float)
        if self._point is None or not np.array_equal(self._point, x):
            self._cache = self._build_cache(x)
            self._point = x.copy()
        return self._cache

    @abc.abstractmethod
    def _build_cache(self, x):
        ...

    @abc.abstractmethod
    def evaluate(self, x):
        """Valor f(x); +inf fuera del dominio."""

    @abc.abstractmethod
    def grad(self, x):
        """Gradiente de f en x."""

    @abc.abstractmethod
    def hessian_operator(self, x):
        """HessianOperator ligado a x."""

    @abc.abstractmethod
    def domain_check(self, x):
        """True si x está en el dominio de f."""

    def hvp(self, x, v):
        return self.hessian_operator(x).apply(v)

    def hess_column(self, x, j):
        return self.hessian_operator(x).column(j)

    def max_step(self, x, d):
        """
        Mayor paso en [0, 1] que mantiene x + t d dentro del dominio.
        Por defecto el dominio no restringe el paso.
        """
        return 1.0

    def line_search(self, x, d, tau_max):
        """
        Paso exacto en [0, tau_max] si el objetivo tiene forma cerrada;
        None si hay que usar una búsqueda numérica.
        """
        return None

    def value_lower_bound(self):
        """Cota inferior de f sobre el conjunto factible (o -inf)."""
        return -math.inf


def _check_direction(g):
    g = np.asarray(g, dtype=float)
    if g.ndim != 1:
        raise InputValidationError(f"se esperaba un vector, recibida forma {g.shape}")
    if not np.all(np.isfinite(g)):
        raise InputValidationError("el vector del LMO contiene NaN o Inf")
    return g


def lmo_simplex(g):
    """
    LMO del símplex unidad: e_j con j = argmin g_j (empates: menor índice).

    Raises:
        InputValidationError: si g contiene NaN o Inf
    """
    g = _check_direction(g)
    return Vertex(index=int(np.argmin(g)), value=1.0, dim=g.size)


def lmo_l1ball(g, rho):
    """
    LMO de la bola l1 de radio rho: -rho sign(g_j) e_j con j = argmax |g_j|.
    Empates por menor índice y sign(0) = +1.
    """
    g = _check_direction(g)
    j = int(np.argmax(np.abs(g)))
    sign = 1.0 if g[j] >= 0 else -1.0
    return Vertex(index=j, value=-rho * sign, dim=g.size)


def diameter_simplex():
    return math.sqrt(2.0)


def diameter_l1ball(rho):
    return 2.0 * rho


def project_simplex(y):
    """
    Proyección euclídea sobre el símplex unidad por ordenación
    (umbral de Duchi et al., O(p log p)).

    Args:
        y (np.ndarray): vector a proyectar

    Returns:
        np.ndarray: proyección (no negativa, suma 1)
    """
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, y.size + 1)
    # Último índice donde u_k - (css_k - 1)/k > 0
    rho = np.nonzero(u - (css - 1.0) / ks > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def project_l1ball(y, rho):
    """
    Proyección euclídea sobre la bola l1 de radio rho: umbral suave con el
    parámetro de la proyección de |y|/rho sobre el símplex.
    """
    y = np.asarray(y, dtype=float)
    if np.abs(y).sum() <= rho:
        return y.copy()
    magnitudes = rho * project_simplex(np.abs(y) / rho)
    return np.sign(y) * magnitudes


class FeasibleSet(abc.ABC):
    """Conjunto compacto con LMO barato."""

    def __init__(self, dim):
        self.dim = dim

    @abc.abstractmethod
    def lmo(self, g):
        """Vertex que minimiza <g, u> sobre el conjunto."""

    @abc.abstractmethod
    def diameter(self):
        ...

    @abc.abstractmethod
    def contains(self, x, tol=1e-12):
        ...

    @abc.abstractmethod
    def project(self, y):
        ...

    @abc.abstractmethod
    def default_start(self):
        """Punto inicial factible por defecto."""


class Simplex(FeasibleSet):
    """Símplex unidad {x >= 0, sum x = 1}."""

    def lmo(self, g):
        return lmo_simplex(g)

    def diameter(self):
        return diameter_simplex()

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def project(self, y):
        return project_simplex(y)

    def default_start(self):
        return np.full(self.dim, 1.0 / self.dim)


class L1Ball(FeasibleSet):
    """Bola {x : ||x||_1 <= rho}."""

    def __init__(self, dim, rho):
        if rho <= 0:
            raise InputValidationError(f"el radio debe ser positivo, recibido {rho}")
        super().__init__(dim)
        self.rho = rho

    def lmo(self, g):
        return lmo_l1ball(g, self.rho)

    def diameter(self):
        return diameter_l1ball(self.rho)

    def contains(self, x, tol=1e-12):
        return bool(np.abs(np.asarray(x, dtype=float)).sum() <= self.rho + tol)

    def project(self, y):
        return project_l1ball(y, self.rho)

    def default_start(self):
        return np.zeros(self.dim)


def local_norm(oracle, x, v, hv=None):
    """
    Norma local ||v||_x = sqrt(v' H(x) v).

    Args:
        oracle (ObjectiveOracle): objetivo
        x (np.ndarray): punto de la Hessiana
        v (np.ndarray): dirección
        hv (np.ndarray): producto H(x) v ya calculado; si se pasa, el coste
            es un único producto escalar

    Returns:
        tuple: (norma, H v)

    Raises:
        NumericalPSDError: si v' H v < -1e-10 en términos relativos
    """
    v = np.asarray(v, dtype=float)
    if hv is None:
        hv = oracle.hvp(x, v)
    curvature = float(hv @ v)
    scale = float(np.linalg.norm(hv) * np.linalg.norm(v))
    if curvature < -1e-10 * scale:
        raise NumericalPSDError(f"curvatura negativa v'Hv = {curvature:.3e}")
    return math.sqrt(max(curvature, 0.0)), hv
