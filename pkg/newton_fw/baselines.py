"""
Métodos de comparación.

- FW: Frank-Wolfe clásico con paso 2/(t+2)
- FW-LS: Frank-Wolfe con búsqueda de línea exacta (forma cerrada si el
  objetivo la tiene, scipy.optimize.minimize_scalar si no)
- PG-BB: gradiente proyectado con paso de Barzilai-Borwein
- FW-AWAY-DOPT: Frank-Wolfe con pasos away para el diseño D-óptimo con el
  paso cerrado de Khachiyan

Todos devuelven un SolverReport con la misma traza que nfw_solve; la
columna gap_proxy es el gap de Frank-Wolfe en el punto de la fila.
"""

import enum
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from errors import (DomainError, InputValidationError, NewtonFWError,
                    UnsupportedMethodError)
from nfw_solver import Budget, SolverReport, Termination, TraceRow
from objectives import DOptProblem
from oracles import Simplex

LOGGER = logging.getLogger(__name__)

MIN_STEP = 1e-16
BB_STEP_MIN = 1e-10
BB_STEP_MAX = 1e10


class Method(enum.Enum):
    NFW = "nfw"
    FW = "fw"
    FW_LS = "fw-ls"
    PG_BB = "pg-bb"
    FW_AWAY_DOPT = "fw-away-dopt"
    # Etiquetas reservadas para poder mezclar trazas externas
    PN = "pn"
    APG_LSRS = "apg-lsrs"

    @property
    def reserved(self):
        return self in (Method.PN, Method.APG_LSRS)

    @classmethod
    def parse(cls, tag):
        """
        Convierte una etiqueta ('fw-ls', 'FW_LS', ...) en Method.

        Raises:
            InputValidationError: si la etiqueta no existe
        """
        normalized = str(tag).strip().lower().replace('_', '-')
        for method in cls:
            if method.value == normalized:
                return method
        raise InputValidationError(f"método desconocido: {tag!r}")


@dataclass
class BaselineConfig:
    """
    Configuración de un método de comparación.

    Atributos:
        method: método
        max_iters: iteraciones máximas
        max_seconds: tiempo máximo (None sin límite)
        max_lmo: llamadas al LMO (o proyecciones) máximas
        ls_tol: tolerancia de la búsqueda de línea numérica
        gap_tol: se para cuando el gap de Frank-Wolfe baja de este valor
    """
    method: Method
    max_iters: int = 10000
    max_seconds: Optional[float] = None
    max_lmo: Optional[int] = None
    ls_tol: float = 1e-10
    gap_tol: float = 0.0

    def __post_init__(self):
        if isinstance(self.method, str):
            self.method = Method.parse(self.method)
        if self.max_iters <= 0:
            raise InputValidationError(f"max_iters debe ser positivo, recibido {self.max_iters}")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise InputValidationError(f"max_seconds debe ser positivo, recibido {self.max_seconds}")
        if self.ls_tol <= 0:
            raise InputValidationError(f"ls_tol debe ser positivo, recibido {self.ls_tol}")

    @property
    def budget(self):
        return Budget(max_iters=self.max_iters, max_lmo=self.max_lmo, max_seconds=self.max_seconds)


class _Trace:
    """Acumula las filas de la traza de un método de comparación."""

    def __init__(self, solver, objective, x):
        self.report = SolverReport(solver=solver, x=x)
        self.counters = objective.counters
        self.start = time.perf_counter()
        self.lmo_calls = 0

    def elapsed(self):
        return time.perf_counter() - self.start

    def record(self, iteration, fval, gap, stage, alpha=math.nan):
        self.report.rows.append(TraceRow(
            iter=iteration, time_s=self.elapsed(), fval=fval, gap_proxy=gap, stage=stage,
            alpha=alpha, lmo_calls_cum=self.lmo_calls, grad_evals_cum=self.counters.grads,
            hess_ops_cum=self.counters.hess_ops,
        ))
        LOGGER.debug("%s t=%d f=%.12g gap=%.3e alpha=%.3e", self.report.solver, iteration,
                     fval, gap, alpha)

    def should_stop(self, iteration, gap, budget, gap_tol):
        if gap <= gap_tol:
            self.report.termination = Termination.CONVERGED
            return True
        stop = budget.exhausted(iteration, self.lmo_calls, self.elapsed())
        if stop is not None:
            self.report.termination = stop
            return True
        return False

    def finish(self, x):
        report = self.report
        report.x = x
        LOGGER.info("%s: %s tras %d iteraciones, f = %.12g", report.solver,
                    report.termination.value, report.rows[-1].iter, report.final_value)
        return report

    def fail(self, exc, x):
        self.report.termination = Termination.ERROR
        self.report.error = str(exc)
        self.report.x = x
        exc.report = self.report


def _start_point(objective, feasible_set, x0):
    x = feasible_set.default_start() if x0 is None else np.array(x0, dtype=float)
    if not feasible_set.contains(x, 1e-10):
        raise InputValidationError("x0 no pertenece al conjunto factible")
    if not objective.domain_check(x):
        raise DomainError("x0 está fuera del dominio del objetivo")
    return x


def _shrink_into_domain(objective, x, d, tau, solver):
    """Divide tau entre dos hasta que x + tau d quede en el dominio."""
    shrunk = False
    while not objective.domain_check(x + tau * d):
        tau /= 2.0
        shrunk = True
        if tau < MIN_STEP:
            raise DomainError(f"{solver}: no hay paso positivo dentro del dominio")
    if shrunk:
        LOGGER.warning("%s: paso reducido a %.3e para no salir del dominio", solver, tau)
    return tau


def _fw_loop(objective, feasible_set, x0, budget, gap_tol, solver, step_rule):
    budget = Budget(max_iters=10000) if budget is None else budget
    x = _start_point(objective, feasible_set, x0)
    trace = _Trace(solver, objective, x)
    try:
        fval = objective.evaluate(x)
        g = objective.grad(x)
        vertex = feasible_set.lmo(g)
        trace.lmo_calls += 1
        gap = float(g @ x) - vertex.dot(g)
        trace.record(0, fval, gap, "init")
        t = 0
        while not trace.should_stop(t, gap, budget, gap_tol):
            d = -x
            d[vertex.index] += vertex.value
            tau = step_rule(x, d, t)
            x = x + tau * d
            t += 1
            fval = objective.evaluate(x)
            g = objective.grad(x)
            vertex = feasible_set.lmo(g)
            trace.lmo_calls += 1
            gap = float(g @ x) - vertex.dot(g)
            trace.record(t, fval, gap, "fw", tau)
    except NewtonFWError as exc:
        trace.fail(exc, x)
        raise
    return trace.finish(x)


def fw_standard(objective, feasible_set, x0=None, budget=None, gap_tol=0.0):
    """
    Frank-Wolfe clásico: x+ = x + 2/(t+2) (LMO(grad f(x)) - x).

    Si el paso sale del dominio se divide entre dos hasta volver a entrar.

    Args:
        objective (ObjectiveOracle): objetivo
        feasible_set (FeasibleSet): conjunto factible
        x0 (np.ndarray): punto inicial (por defecto default_start())
        budget (Budget): límites (por defecto 10000 iteraciones)
        gap_tol (float): parada por gap de Frank-Wolfe

    Returns:
        SolverReport: traza con el gap de Frank-Wolfe en gap_proxy
    """
    def step_rule(x, d, t):
        return _shrink_into_domain(objective, x, d, 2.0 / (t + 2.0), "FW")

    return _fw_loop(objective, feasible_set, x0, budget, gap_tol, "fw", step_rule)


def fw_linesearch(objective, feasible_set, x0=None, budget=None, gap_tol=0.0, ls_tol=1e-10):
    """
    Frank-Wolfe con búsqueda de línea en [0, tau_max], con tau_max el mayor
    paso que mantiene el iterado en el dominio.

    Usa objective.line_search si hay forma cerrada; si no, minimize_scalar
    acotado. Si la búsqueda falla se usa 2/(t+2).
    """
    def step_rule(x, d, t):
        tau_max = objective.max_step(x, d)
        tau = objective.line_search(x, d, tau_max)
        if tau is None:
            result = minimize_scalar(lambda s: objective.evaluate(x + s * d), bounds=(0.0, tau_max),
                                     method='bounded', options={'xatol': ls_tol})
            tau = float(result.x) if result.success and np.isfinite(result.fun) else None
        if tau is None:
            LOGGER.warning("FW-LS: búsqueda de línea fallida en t=%d, se usa 2/(t+2)", t)
            tau = _shrink_into_domain(objective, x, d, min(2.0 / (t + 2.0), tau_max), "FW-LS")
        return tau

    return _fw_loop(objective, feasible_set, x0, budget, gap_tol, "fw-ls", step_rule)


def pg_bb(objective, feasible_set, x0=None, budget=None, gap_tol=0.0, initial_step=1.0):
    """
    Gradiente proyectado con paso de Barzilai-Borwein
    tau = <dx, dg> / <dg, dg>, acotado a [1e-10, 1e10]. El paso se divide
    entre dos hasta que la proyección queda en el dominio (no monótono).

    lmo_calls_cum cuenta proyecciones. El gap de Frank-Wolfe de gap_proxy se
    calcula con un LMO de monitorización que no se cuenta.

    Raises:
        UnsupportedMethodError: si el conjunto no tiene proyección
    """
    if not callable(getattr(feasible_set, 'project', None)):
        raise UnsupportedMethodError("PG-BB necesita la proyección sobre el conjunto")
    budget = Budget(max_iters=10000) if budget is None else budget
    x = _start_point(objective, feasible_set, x0)
    trace = _Trace("pg-bb", objective, x)

    def monitor_gap(point, g):
        vertex = feasible_set.lmo(g)
        return float(g @ point) - vertex.dot(g)

    try:
        fval = objective.evaluate(x)
        g = objective.grad(x)
        gap = monitor_gap(x, g)
        trace.record(0, fval, gap, "init")
        tau = initial_step
        t = 0
        while not trace.should_stop(t, gap, budget, gap_tol):
            step = tau
            while True:
                try:
                    x_new = feasible_set.project(x - step * g)
                except NotImplementedError as exc:
                    raise UnsupportedMethodError("PG-BB necesita la proyección sobre el conjunto") from exc
                trace.lmo_calls += 1
                if objective.domain_check(x_new):
                    break
                step /= 2.0
                LOGGER.warning("PG-BB: paso reducido a %.3e en t=%d para no salir del dominio",
                               step, t)
                if step < MIN_STEP:
                    raise DomainError("PG-BB: no hay paso positivo dentro del dominio")
            g_new = objective.grad(x_new)
            s, y = x_new - x, g_new - g
            yy = float(y @ y)
            if yy > 0:
                tau = float(np.clip(float(s @ y) / yy, BB_STEP_MIN, BB_STEP_MAX))
            x, g = x_new, g_new
            t += 1
            fval = objective.evaluate(x)
            gap = monitor_gap(x, g)
            trace.record(t, fval, gap, "pg", step)
    except NewtonFWError as exc:
        trace.fail(exc, x)
        raise
    return trace.finish(x)


def fw_away_dopt(problem, feasible_set, x0=None, budget=None, gap_tol=0.0):
    """
    Frank-Wolfe con pasos away para -log det(A Diag(x) A') sobre el símplex.

    El conjunto activo es el soporte de x. Ambos pasos usan la forma
    cerrada t = (kappa - n)/(n (kappa - 1)): en [0, 1] hacia el vértice de
    mayor kappa y en [-w/(1-w), 0] desde el vértice del soporte de menor
    kappa (peso w). Un paso away hasta el extremo elimina el vértice.

    Raises:
        UnsupportedMethodError: si el problema no es D-óptimo sobre el símplex
    """
    if not isinstance(problem, DOptProblem) or not isinstance(feasible_set, Simplex):
        raise UnsupportedMethodError("FW-AWAY-DOPT sólo admite el diseño D-óptimo sobre el símplex")
    budget = Budget(max_iters=10000) if budget is None else budget
    x = _start_point(problem, feasible_set, x0)
    trace = _Trace("fw-away-dopt", problem, x)

    def gaps(point):
        g = problem.grad(point)
        vertex = feasible_set.lmo(g)
        trace.lmo_calls += 1
        g_x = float(g @ point)
        support = np.flatnonzero(point > 0)
        away = int(support[np.argmax(g[support])])
        return g, vertex, g_x - vertex.dot(g), float(g[away]) - g_x, away

    try:
        fval = problem.evaluate(x)
        g, vertex, gap, away_gap, away = gaps(x)
        trace.record(0, fval, gap, "init")
        t = 0
        while not trace.should_stop(t, gap, budget, gap_tol):
            if gap >= away_gap or x[away] >= 1.0:
                j, kind = vertex.index, "fw"
                tau = problem.linesearch_step(x, j, 0.0, 1.0)
            else:
                j, kind = away, "away"
                weight = x[j]
                low = -weight / (1.0 - weight)
                tau = problem.linesearch_step(x, j, low, 0.0)
                if tau == low:
                    kind = "drop"
            x_new = (1.0 - tau) * x
            x_new[j] += tau
            if kind == "drop":
                x_new[j] = 0.0
            if not problem.domain_check(x_new):
                raise DomainError(f"FW-AWAY-DOPT: el paso {kind} deja la matriz singular")
            x = x_new
            t += 1
            fval = problem.evaluate(x)
            g, vertex, gap, away_gap, away = gaps(x)
            trace.record(t, fval, gap, kind, tau)
    except NewtonFWError as exc:
        trace.fail(exc, x)
        raise
    return trace.finish(x)


def run_baseline(config, objective, feasible_set, x0=None):
    """
    Ejecuta el método de comparación indicado por config.

    Raises:
        UnsupportedMethodError: para las etiquetas reservadas y para 'nfw',
            que se ejecuta con nfw_solve
    """
    method = config.method
    if method.reserved:
        raise UnsupportedMethodError(f"el método {method.value} no está implementado")
    if method is Method.FW:
        return fw_standard(objective, feasible_set, x0, config.budget, config.gap_tol)
    if method is Method.FW_LS:
        return fw_linesearch(objective, feasible_set, x0, config.budget, config.gap_tol,
                             config.ls_tol)
    if method is Method.PG_BB:
        return pg_bb(objective, feasible_set, x0, config.budget, config.gap_tol)
    if method is Method.FW_AWAY_DOPT:
        return fw_away_dopt(objective, feasible_set, x0, config.budget, config.gap_tol)
    raise UnsupportedMethodError(f"{method.value} no es un método de comparación")
