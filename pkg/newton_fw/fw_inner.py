"""
Frank-Wolfe para el subproblema cuadrático de Newton.

En cada iteración externa el solver minimiza sobre el conjunto factible el
modelo

    psi(u) = <h, u - u0> + 0.5 <H (u - u0), u - u0>

con h = grad f(u0) y H = Hessiana en u0. Aquí se resuelve ese modelo con
Frank-Wolfe y paso exacto (fw_quadratic) o con Frank-Wolfe con pasos 'away'
(fw_away_quadratic), que converge linealmente sobre politopos y se puede
arrancar en caliente con el conjunto activo de la iteración anterior.

El umbral tol del modelo es eta^2: una solución con gap <= eta^2 es una
eta-solución del subproblema.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from errors import BudgetExhaustedError, InternalConsistencyError

LOGGER = logging.getLogger(__name__)

EPS = np.finfo(float).eps
# El gap no se puede certificar por debajo de GAP_FLOOR_FACTOR * eps * escala
GAP_FLOOR_FACTOR = 64.0
MAX_ITERS_CAP = 10 ** 6
REFRESH_EVERY = 500
WEIGHT_DRIFT_TOL = 1e-9


@dataclass
class QuadraticModel:
    """
    Modelo cuadrático del subproblema de Newton.

    Atributos:
        grad: vector h (gradiente en el ancla)
        hessian: HessianOperator con apply() y column()
        anchor: punto u0 (factible)
        tol: umbral del gap (eta^2)
    """
    grad: np.ndarray
    hessian: object
    anchor: np.ndarray
    tol: float

    @classmethod
    def from_objective(cls, objective, x, tol):
        x = np.array(x, dtype=float)
        return cls(grad=objective.grad(x), hessian=objective.hessian_operator(x), anchor=x, tol=tol)

    @property
    def dim(self):
        return self.anchor.size

    def value(self, u, hd=None):
        """psi(u); hd = H (u - u0) si ya se conoce."""
        d = np.asarray(u, dtype=float) - self.anchor
        if hd is None:
            hd = self.hessian.apply(d)
        return float((self.grad + 0.5 * hd) @ d)


@dataclass
class InnerResult:
    """
    Resultado de un subproblema.

    Atributos:
        u: solución aproximada z
        gap: último gap de Frank-Wolfe
        lmo_calls: llamadas al LMO
        hd: H (u - u0), reutilizable para la norma local de la dirección
        gaps: gap de cada iteración
        model_values: psi en cada iteración
        at_floor: True si paró el suelo numérico del gap y no tol
    """
    u: np.ndarray
    gap: float
    lmo_calls: int
    hd: np.ndarray
    iterations: int = 0
    gaps: List[float] = field(default_factory=list)
    model_values: List[float] = field(default_factory=list)
    at_floor: bool = False


class ActiveSet:
    """
    Combinación convexa de vértices: u = sum_i w_i v_i.

    Los vértices se identifican por Vertex.key; el orden de inserción se
    conserva, lo que hace deterministas los empates.
    """

    def __init__(self, dim):
        self.dim = dim
        self.vertices = {}
        self.weights = {}

    @classmethod
    def from_vertex(cls, vertex):
        active = cls(vertex.dim)
        active.add(vertex, 1.0)
        return active

    def __len__(self):
        return len(self.weights)

    def add(self, vertex, weight):
        key = vertex.key
        self.vertices[key] = vertex
        self.weights[key] = self.weights.get(key, 0.0) + weight

    def remove(self, key):
        del self.vertices[key]
        del self.weights[key]

    def scale(self, factor):
        for key in self.weights:
            self.weights[key] *= factor

    def total_weight(self):
        return math.fsum(self.weights.values())

    def normalize(self):
        total = self.total_weight()
        self.scale(1.0 / total)

    def materialize(self):
        u = np.zeros(self.dim)
        for key, weight in self.weights.items():
            vertex = self.vertices[key]
            u[vertex.index] += weight * vertex.value
        return u

    def prune(self):
        """Quita los vértices con peso no positivo."""
        for key in [k for k, w in self.weights.items() if w <= 0.0]:
            self.remove(key)

    def check(self, tol=WEIGHT_DRIFT_TOL):
        """
        Raises:
            InternalConsistencyError: si los pesos no suman 1 o son negativos
        """
        total = self.total_weight()
        if abs(total - 1.0) > tol:
            raise InternalConsistencyError(f"los pesos suman {total!r}")
        lowest = min(self.weights.values(), default=0.0)
        if lowest < -tol:
            raise InternalConsistencyError(f"peso negativo {lowest!r}")

    def copy(self):
        clone = ActiveSet(self.dim)
        clone.vertices = dict(self.vertices)
        clone.weights = dict(self.weights)
        return clone


class _VertexProducts:
    """H v para vértices, con las columnas de H guardadas por índice."""

    def __init__(self, hessian):
        self.hessian = hessian
        self._columns = {}

    def __call__(self, vertex):
        column = self._columns.get(vertex.index)
        if column is None:
            column = self.hessian.column(vertex.index)
            self._columns[vertex.index] = column
        return vertex.value * column


def estimate_lambda_max(hessian, iters=20, seed=0):
    """
    Estimación barata de lambda_max(H) por el método de la potencia.

    Returns:
        float: mayor cociente de Rayleigh encontrado (cota inferior)
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(hessian.dim)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iters):
        w = hessian.apply(v)
        estimate = max(estimate, float(v @ w))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
    return estimate


def default_max_iters(lambda_hat, diameter, tol):
    """
    Presupuesto por subproblema: 50 * ceil(6 lambda D^2 / tol), máximo 10^6.
    """
    if tol <= 0:
        return MAX_ITERS_CAP
    bound = 50 * math.ceil(6.0 * lambda_hat * diameter ** 2 / tol)
    return int(min(MAX_ITERS_CAP, max(bound, 1)))


def _gap_floor(offset, hu, u, vertex):
    scale = (np.abs(offset).max() + np.abs(hu).max()) * (np.abs(u).sum() + abs(vertex.value))
    return GAP_FLOOR_FACTOR * EPS * scale


def _resolve_max_iters(model, feasible_set, max_iters):
    if max_iters is not None:
        return max_iters
    lambda_hat = estimate_lambda_max(model.hessian)
    return default_max_iters(lambda_hat, feasible_set.diameter(), model.tol)


def fw_quadratic(model, feasible_set, max_iters=None):
    """
    Frank-Wolfe con paso exacto sobre el modelo cuadrático.

    Args:
        model (QuadraticModel): modelo; el ancla es el punto inicial
        feasible_set (FeasibleSet): conjunto con LMO
        max_iters (int): iteraciones máximas (llamadas al LMO); por defecto
            default_max_iters con lambda estimada por potencia

    Returns:
        InnerResult: solución con gap <= tol (o <= suelo numérico)

    Raises:
        BudgetExhaustedError: si se agotan las iteraciones; lleva el resultado
    """
    max_iters = _resolve_max_iters(model, feasible_set, max_iters)
    hessian = model.hessian
    products = _VertexProducts(hessian)
    debug = LOGGER.isEnabledFor(logging.DEBUG)

    u = model.anchor.copy()
    hu0 = hessian.apply(u)
    offset = model.grad - hu0
    hu = hu0.copy()
    gaps, values = [], []

    def result(gap, calls, at_floor=False):
        hd = hu - hu0
        return InnerResult(u=u, gap=gap, lmo_calls=calls, hd=hd, iterations=calls,
                           gaps=gaps, model_values=values, at_floor=at_floor)

    gap = math.inf
    for t in range(max_iters):
        # g_t = h + H (u_t - u0)
        g = offset + hu
        vertex = feasible_set.lmo(g)
        gap = float(g @ u) - vertex.dot(g)
        gaps.append(gap)
        values.append(float((model.grad + 0.5 * (hu - hu0)) @ (u - model.anchor)))

        if gap <= model.tol:
            return result(gap, t + 1)
        floor = _gap_floor(offset, hu, u, vertex)
        if gap <= floor:
            LOGGER.info("FW parado en el suelo numérico del gap (%.3e > tol %.3e)", gap, model.tol)
            return result(gap, t + 1, at_floor=True)

        d = -u
        d[vertex.index] += vertex.value
        d_h = products(vertex) - hu
        curvature = float(d @ d_h)
        # Curvatura nula: el modelo es lineal en el segmento
        tau = 1.0 if curvature <= EPS else min(1.0, gap / curvature)
        u = u + tau * d
        hu = hu + tau * d_h
        if debug:
            LOGGER.debug("FW t=%d gap=%.3e tau=%.3e", t, gap, tau)

    raise BudgetExhaustedError(
        f"FW sin converger tras {max_iters} iteraciones (gap {gap:.3e} > {model.tol:.3e})",
        result=result(gap, max_iters),
    )


def fw_away_quadratic(model, feasible_set, active_set=None, max_iters=None):
    """
    Frank-Wolfe con pasos 'away' sobre el modelo cuadrático.

    Args:
        model (QuadraticModel): modelo a minimizar
        feasible_set (FeasibleSet): conjunto con LMO
        active_set (ActiveSet): conjunto activo para arrancar en caliente; si
            es None o está vacío se empieza en el vértice LMO(h)
        max_iters (int): iteraciones máximas

    Returns:
        tuple: (InnerResult, ActiveSet) con el conjunto activo final

    Raises:
        BudgetExhaustedError: si se agotan las iteraciones
        InternalConsistencyError: si los pesos se desvían más de 1e-9
    """
    max_iters = _resolve_max_iters(model, feasible_set, max_iters)
    hessian = model.hessian
    products = _VertexProducts(hessian)
    debug = LOGGER.isEnabledFor(logging.DEBUG)

    hu0 = hessian.apply(model.anchor)
    offset = model.grad - hu0
    lmo_calls = 0
    if active_set is None or len(active_set) == 0:
        # En u0 el gradiente del modelo es h
        active = ActiveSet.from_vertex(feasible_set.lmo(model.grad))
        lmo_calls += 1
    else:
        active = active_set.copy()
        active.check()
        active.normalize()
    u = active.materialize()
    hu = hessian.apply(u)
    gaps, values = [], []

    def finish(gap, at_floor=False):
        active.normalize()
        final_u = active.materialize()
        inner = InnerResult(u=final_u, gap=gap, lmo_calls=lmo_calls, hd=hu - hu0,
                            iterations=len(gaps), gaps=gaps, model_values=values,
                            at_floor=at_floor)
        return inner, active

    gap = math.inf
    for t in range(max_iters):
        if t and t % REFRESH_EVERY == 0:
            active.normalize()
            u = active.materialize()
            hu = hessian.apply(u)

        g = offset + hu
        fw_vertex = feasible_set.lmo(g)
        lmo_calls += 1
        g_u = float(g @ u)
        gap = g_u - fw_vertex.dot(g)
        gaps.append(gap)
        values.append(float((model.grad + 0.5 * (hu - hu0)) @ (u - model.anchor)))

        if gap <= model.tol:
            return finish(gap)
        if gap <= _gap_floor(offset, hu, u, fw_vertex):
            LOGGER.info("FW-away parado en el suelo numérico del gap (%.3e > tol %.3e)",
                        gap, model.tol)
            return finish(gap, at_floor=True)

        away_key = max(active.weights, key=lambda key: active.vertices[key].dot(g))
        away_vertex = active.vertices[away_key]
        away_gap = away_vertex.dot(g) - g_u

        if gap >= away_gap:
            d = -u
            d[fw_vertex.index] += fw_vertex.value
            d_h = products(fw_vertex) - hu
            tau_max, slope = 1.0, gap
        else:
            weight = active.weights[away_key]
            d = u.copy()
            d[away_vertex.index] -= away_vertex.value
            d_h = hu - products(away_vertex)
            tau_max = weight / (1.0 - weight) if weight < 1.0 else math.inf
            slope = away_gap

        curvature = float(d @ d_h)
        tau = tau_max if curvature <= EPS else min(tau_max, slope / curvature)

        if gap >= away_gap:
            if tau >= 1.0:
                active = ActiveSet.from_vertex(fw_vertex)
                u = fw_vertex.to_dense()
                hu = products(fw_vertex)
            else:
                active.scale(1.0 - tau)
                active.add(fw_vertex, tau)
                u = u + tau * d
                hu = hu + tau * d_h
        else:
            active.scale(1.0 + tau)
            if tau >= tau_max:
                # Paso de descarte: el vértice sale del conjunto activo
                active.remove(away_key)
            else:
                active.weights[away_key] -= tau
            active.prune()
            u = u + tau * d
            hu = hu + tau * d_h
        active.check()

        if debug:
            kind = "fw" if gap >= away_gap else "away"
            LOGGER.debug("FW-away t=%d %s gap=%.3e tau=%.3e |S|=%d", t, kind, gap, tau, len(active))

    inner, final_active = finish(gap)
    raise BudgetExhaustedError(
        f"FW-away sin converger tras {max_iters} iteraciones (gap {gap:.3e} > {model.tol:.3e})",
        result=inner,
    )


def certify_eta_solution(model, feasible_set, u):
    """
    Gap de Frank-Wolfe del modelo en u con una sola llamada al LMO.

    u es una eta-solución si el valor devuelto es <= eta^2.

    Returns:
        float: max_w <grad psi(u), u - w> (>= 0)
    """
    u = np.asarray(u, dtype=float)
    g = model.grad + model.hessian.apply(u - model.anchor)
    vertex = feasible_set.lmo(g)
    return max(0.0, float(g @ u) - vertex.dot(g))
