"""
Método de Newton proyectado con subproblemas resueltos por Frank-Wolfe.

El bucle externo tiene dos etapas:

- Amortiguada: x+ = x + alpha d con el paso alpha = delta (g^2 - e^2) /
  (g^3 + g^2 - e^2 g), que garantiza descenso para objetivos
  autoconcordantes estándar.
- Completa: en cuanto gamma + eta <= h_inv(beta), x+ = z y la sucesión
  certificado lambda y la precisión eta se contraen por sigma.

El método para cuando lambda <= eps. lambda no es una medida sino una cota
de ||x - x*||_{x*}, válida si los parámetros cumplen las condiciones de
validate_params.

Este módulo define también la traza (TraceRow, SolverReport) que comparten
los métodos de comparación y que la CLI vuelca a CSV.
"""

import enum
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from errors import (BudgetExhaustedError, DescentViolationError, DomainError,
                    InputValidationError, InternalConsistencyError,
                    InvalidParameterError, NewtonFWError)
from fw_inner import (QuadraticModel, default_max_iters, estimate_lambda_max,
                      fw_away_quadratic, fw_quadratic)
from oracles import local_norm
from sc_core import (SolverParams, h_inv, initial_eta, nu_exponent, omega,
                     validate_params)

LOGGER = logging.getLogger(__name__)

CSV_COLUMNS = [
    'problem', 'solver', 'iter', 'time_s', 'fval', 'gap_proxy', 'gamma', 'eta',
    'lambda', 'stage', 'alpha', 'lmo_calls_cum', 'grad_evals_cum', 'hess_ops_cum',
]
MAX_ETA_HALVINGS = 60
DESCENT_SLACK = 1e-9
FEASIBILITY_TOL = 1e-10


class Stage(enum.Enum):
    DAMPED = "damped"
    FULL = "full"


class StepKind(enum.Enum):
    INIT = "init"
    DAMPED = "damped"
    FULL = "full"
    # Paso completo que salía del dominio, repetido como amortiguado
    DAMPED_RETRY = "damped-retry"


class Termination(enum.Enum):
    CONVERGED = "converged"
    DEGENERATE = "degenerate"
    MAX_ITERS = "max_iters"
    MAX_LMO = "max_lmo"
    MAX_SECONDS = "max_seconds"
    INNER_BUDGET = "inner_budget"
    ERROR = "error"


@dataclass
class Budget:
    """
    Límites de una ejecución. None desactiva el límite.

    Atributos:
        max_iters: iteraciones externas (o iteraciones de un baseline)
        max_lmo: llamadas al LMO acumuladas (proyecciones en PG-BB)
        max_seconds: tiempo de reloj
    """
    max_iters: Optional[int] = None
    max_lmo: Optional[int] = None
    max_seconds: Optional[float] = None

    def __post_init__(self):
        for name in ('max_iters', 'max_lmo', 'max_seconds'):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise InputValidationError(f"{name} debe ser positivo, recibido {value}")

    def exhausted(self, iters, lmo_calls, elapsed):
        """Termination correspondiente al primer límite alcanzado, o None."""
        if self.max_iters is not None and iters >= self.max_iters:
            return Termination.MAX_ITERS
        if self.max_lmo is not None and lmo_calls >= self.max_lmo:
            return Termination.MAX_LMO
        if self.max_seconds is not None and elapsed >= self.max_seconds:
            return Termination.MAX_SECONDS
        return None

    def remaining_lmo(self, lmo_calls):
        if self.max_lmo is None:
            return None
        return max(self.max_lmo - lmo_calls, 1)


@dataclass
class NFWState:
    """Estado del bucle externo."""
    x: np.ndarray
    lam: float
    eta: float
    stage: Stage = Stage.DAMPED
    k: int = 0
    lmo_calls: int = 0
    full_steps: int = 0
    damped_steps: int = 0
    eta_switch: Optional[float] = None


@dataclass
class TraceRow:
    """
    Fila de la traza: valores tras el paso `iter` (la fila 0 es el punto
    inicial). Los campos que no aplican valen NaN.
    """
    iter: int
    time_s: float
    fval: float
    gap_proxy: float = math.nan
    gamma: float = math.nan
    eta: float = math.nan
    lam: float = math.nan
    stage: str = ""
    alpha: float = math.nan
    inner_lmo_calls: int = 0
    lmo_calls_cum: int = 0
    grad_evals_cum: int = 0
    hess_ops_cum: int = 0


@dataclass
class SolverReport:
    """
    Informe de una ejecución.

    Atributos:
        solver: etiqueta del método ('nfw', 'fw', 'fw-ls', 'pg-bb', ...)
        rows: traza
        termination: motivo de parada
        x: último iterado
        switch_iter: iteración del primer paso completo (NFW)
        k_max: cota de pasos amortiguados, si se conoce una cota inferior de f*
        iterates: iterados (sólo con keep_iterates=True)
        metadata: datos auxiliares (parámetros, cotas teóricas...)
        error: mensaje del error que cortó la ejecución, si lo hubo
    """
    solver: str
    rows: List[TraceRow] = field(default_factory=list)
    termination: Optional[Termination] = None
    x: Optional[np.ndarray] = None
    switch_iter: Optional[int] = None
    damped_steps: int = 0
    full_steps: int = 0
    descent_violations: int = 0
    k_max: Optional[int] = None
    iterates: Optional[List[np.ndarray]] = None
    metadata: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def final_value(self):
        return self.rows[-1].fval if self.rows else math.nan

    @property
    def lmo_calls(self):
        return self.rows[-1].lmo_calls_cum if self.rows else 0

    @property
    def converged(self):
        return self.termination is Termination.CONVERGED

    def lmo_calls_to(self, target):
        """
        Llamadas al LMO acumuladas hasta la primera fila con f <= target.

        Returns:
            int o None: None si la traza nunca llega a target
        """
        for row in self.rows:
            if row.fval <= target:
                return row.lmo_calls_cum
        return None

    def to_frame(self, problem):
        """
        Traza con las columnas del CSV.

        Args:
            problem (str): etiqueta del problema para la primera columna

        Returns:
            pd.DataFrame: una fila por TraceRow, columnas CSV_COLUMNS
        """
        records = []
        for row in self.rows:
            record = asdict(row)
            record['lambda'] = record.pop('lam')
            del record['inner_lmo_calls']
            record['problem'] = problem
            record['solver'] = self.solver
            records.append(record)
        return pd.DataFrame(records, columns=CSV_COLUMNS)


def damped_step_size(gamma, eta, delta):
    """
    Paso amortiguado alpha = delta (gamma^2 - eta^2) / (gamma^3 + gamma^2 - eta^2 gamma).

    Cumple alpha * gamma < delta < 1.

    Raises:
        InvalidParameterError: si gamma <= eta o delta fuera de (0, 1)
    """
    if not gamma > eta >= 0:
        raise InvalidParameterError(f"dirección degenerada: gamma = {gamma} <= eta = {eta}")
    if not 0 < delta < 1:
        raise InvalidParameterError(f"delta = {delta} fuera de (0, 1)")
    diff = gamma ** 2 - eta ** 2
    return delta * diff / (gamma ** 3 + gamma ** 2 - eta ** 2 * gamma)


def damped_descent_check(f_before, f_after, gamma, eta, delta, slack=DESCENT_SLACK):
    """
    Comprueba f_after <= f_before - delta * omega((gamma^2 - eta^2)/gamma) + slack.
    """
    decrease = delta * omega((gamma ** 2 - eta ** 2) / gamma)
    return bool(f_after <= f_before - decrease + slack)


def k_max_damped(f0, fstar_lower, params):
    """
    Máximo de pasos amortiguados:
    ceil((f0 - f*_inf) / (delta * omega((1 - 2 C1)/C1 * h_inv(beta)))).

    Args:
        f0 (float): valor inicial
        fstar_lower (float): cota inferior de f*; -inf desactiva la cota
        params (SolverParams): parámetros

    Returns:
        int o None: la cota, o None si fstar_lower es -inf

    Raises:
        InvalidParameterError: si C1 >= 0.5
    """
    if not 0 < params.c_one < 0.5:
        raise InvalidParameterError(f"c_one = {params.c_one} debe estar en (0, 0.5)")
    if math.isinf(fstar_lower):
        return None
    gap = max(f0 - fstar_lower, 0.0)
    tau = (1.0 - 2.0 * params.c_one) / params.c_one * h_inv(params.beta)
    return int(math.ceil(gap / (params.delta * omega(tau))))


def t1_lmo_bound(lambda_max0, diameter, params, k_max):
    """
    Cota de llamadas al LMO de la etapa amortiguada:
    6 D^2 lambda_max(H(x0)) / (C1 h_inv(beta))^2 * (1 - (1-delta)^(K+1)) / (delta (1-delta)^K).

    Sólo se informa; para delta cerca de 1 es astronómica.

    Returns:
        float: la cota (inf si k_max es None o desborda)
    """
    if k_max is None:
        return math.inf
    base = 6.0 * diameter ** 2 * lambda_max0 / (params.c_one * h_inv(params.beta)) ** 2
    rest = 1.0 - params.delta
    log_growth = -k_max * math.log(rest)
    if log_growth > 700:
        return math.inf
    return base * (1.0 - rest ** (k_max + 1)) * math.exp(log_growth) / params.delta


def _solve_inner(method, model, feasible_set, active, max_iters):
    if method == "away":
        return fw_away_quadratic(model, feasible_set, active, max_iters=max_iters)
    return fw_quadratic(model, feasible_set, max_iters=max_iters), None


@dataclass
class _Direction:
    """Resultado de resolver el subproblema en una iteración externa."""
    result: object = None
    gamma: float = math.nan
    eta: float = math.nan
    full: bool = False
    lmo_calls: int = 0
    termination: Optional[Termination] = None


def _newton_direction(objective, feasible_set, grad, hessian, state, params, budget, inner, active,
                      lambda_hat, switch_radius):
    """
    Resuelve el subproblema hasta tener una dirección utilizable.

    En la etapa amortiguada, si gamma <= eta se divide eta entre dos y se
    vuelve a resolver (como mucho MAX_ETA_HALVINGS veces).

    Returns:
        tuple: (_Direction, conjunto activo para el arranque en caliente)
    """
    x = state.x
    eta = state.eta
    direction = _Direction()
    for halvings in range(MAX_ETA_HALVINGS + 1):
        max_iters = default_max_iters(lambda_hat, feasible_set.diameter(), eta ** 2)
        remaining = budget.remaining_lmo(state.lmo_calls + direction.lmo_calls)
        limited_by_budget = remaining is not None and remaining <= max_iters
        if limited_by_budget:
            max_iters = remaining
        model = QuadraticModel(grad=grad, hessian=hessian, anchor=x, tol=eta ** 2)
        try:
            result, active = _solve_inner(inner, model, feasible_set, active, max_iters)
        except BudgetExhaustedError as exc:
            direction.lmo_calls += exc.result.lmo_calls
            direction.termination = (Termination.MAX_LMO if limited_by_budget
                                     else Termination.INNER_BUDGET)
            LOGGER.warning("NFW: subproblema sin resolver en k=%d: %s", state.k, exc)
            return direction, active
        direction.lmo_calls += result.lmo_calls

        gamma, _ = local_norm(objective, x, result.u - x, hv=result.hd)
        full = gamma + eta <= switch_radius or state.lam <= params.beta
        if full or gamma > eta:
            direction.result, direction.gamma, direction.eta, direction.full = result, gamma, eta, full
            return direction, active
        if halvings < MAX_ETA_HALVINGS:
            eta /= 2.0
            LOGGER.warning("NFW: dirección degenerada en k=%d (gamma=%.3e), eta -> %.3e",
                           state.k, gamma, eta)

    direction.termination = Termination.DEGENERATE
    LOGGER.warning("NFW: gamma <= eta tras %d reducciones de eta; se da por convergido "
                   "a la tolerancia", MAX_ETA_HALVINGS)
    return direction, active


def nfw_solve(objective, feasible_set, params=None, x0=None, budget=None, inner="away",
              fstar_lower="auto", check_descent=False, keep_iterates=False):
    """
    Minimiza un objetivo autoconcordante sobre un conjunto con LMO.

    Args:
        objective (ObjectiveOracle): objetivo
        feasible_set (FeasibleSet): conjunto factible
        params (SolverParams): parámetros (por defecto SolverParams())
        x0 (np.ndarray): punto inicial factible; por defecto default_start()
        budget (Budget): límites de la ejecución
        inner (str): 'away' (FW con pasos away, arranque en caliente) o 'fw'
        fstar_lower: cota inferior de f* para k_max; 'auto' usa
            objective.value_lower_bound(), None equivale a -inf
        check_descent (bool): si True un paso amortiguado sin el descenso
            garantizado lanza DescentViolationError; si no, se avisa
        keep_iterates (bool): guardar todos los iterados en el informe

    Returns:
        SolverReport: traza completa y motivo de parada

    Raises:
        InvalidParameterError: si los parámetros no son válidos
        InputValidationError: si x0 no es factible o inner no es válido
        DomainError: si x0 está fuera del dominio
    """
    params = SolverParams() if params is None else params
    check = validate_params(params)
    if not check:
        raise InvalidParameterError(str(check))
    if inner not in ("away", "fw"):
        raise InputValidationError(f"inner debe ser 'away' o 'fw', recibido {inner!r}")
    budget = Budget() if budget is None else budget

    x = feasible_set.default_start() if x0 is None else np.array(x0, dtype=float)
    if not feasible_set.contains(x, FEASIBILITY_TOL):
        raise InputValidationError("x0 no pertenece al conjunto factible")
    if not objective.domain_check(x):
        raise DomainError("x0 está fuera del dominio del objetivo")

    switch_radius = h_inv(params.beta)
    state = NFWState(x=x, lam=params.beta / params.sigma, eta=initial_eta(params))
    report = SolverReport(solver="nfw", x=x)
    report.iterates = [x.copy()] if keep_iterates else None
    counters = objective.counters
    start = time.perf_counter()

    fval = objective.evaluate(x)
    if fstar_lower == "auto":
        fstar_lower = objective.value_lower_bound()
    elif fstar_lower is None:
        fstar_lower = -math.inf
    report.k_max = k_max_damped(fval, fstar_lower, params)
    report.metadata.update({
        'params': asdict(params),
        'inner': inner,
        'nu': nu_exponent(params.beta, params.sigma),
        'eta0': state.eta,
    })
    report.rows.append(TraceRow(iter=0, time_s=0.0, fval=fval, gap_proxy=state.lam,
                                eta=state.eta, lam=state.lam, stage=StepKind.INIT.value,
                                grad_evals_cum=counters.grads, hess_ops_cum=counters.hess_ops))
    LOGGER.info("NFW: f0 = %.10g, eta0 = %.3e, k_max = %s", fval, state.eta, report.k_max)

    active = None
    try:
        while True:
            elapsed = time.perf_counter() - start
            stop = budget.exhausted(state.k, state.lmo_calls, elapsed)
            if stop is not None:
                report.termination = stop
                break

            x = state.x
            grad = objective.grad(x)
            hessian = objective.hessian_operator(x)
            lambda_hat = estimate_lambda_max(hessian)
            if state.k == 0:
                report.metadata['t1_lmo_bound'] = t1_lmo_bound(
                    lambda_hat, feasible_set.diameter(), params, report.k_max)

            sub, active = _newton_direction(objective, feasible_set, grad, hessian, state, params,
                                            budget, inner, active, lambda_hat, switch_radius)
            state.lmo_calls += sub.lmo_calls
            if sub.termination is not None:
                report.termination = sub.termination
                break
            result, gamma, eta, full = sub.result, sub.gamma, sub.eta, sub.full
            inner_calls = sub.lmo_calls
            d = result.u - x
            state.eta = eta

            step_kind, alpha = None, 1.0
            if full:
                x_new = result.u
                if objective.domain_check(x_new):
                    step_kind = StepKind.FULL
                else:
                    LOGGER.warning("NFW: el paso completo sale del dominio en k=%d; "
                                   "se repite como paso amortiguado", state.k)
                    step_kind = StepKind.DAMPED_RETRY
            if step_kind is StepKind.FULL:
                if state.stage is Stage.DAMPED:
                    state.stage = Stage.FULL
                    state.eta_switch = eta
                    report.switch_iter = state.k + 1
                    LOGGER.info("NFW: cambio a pasos completos en k=%d (gamma=%.3e, eta=%.3e)",
                                state.k, gamma, eta)
                j = state.full_steps
                state.lam = params.beta * params.sigma ** j
                state.full_steps += 1
                state.eta = state.eta_switch * params.sigma ** state.full_steps
                f_new = objective.evaluate(x_new)
            else:
                if step_kind is None:
                    step_kind = StepKind.DAMPED
                if gamma > eta:
                    alpha = damped_step_size(gamma, eta, params.delta)
                else:
                    alpha = params.delta / (1.0 + gamma)
                x_new = x + alpha * d
                if not objective.domain_check(x_new):
                    raise InternalConsistencyError(
                        f"el paso amortiguado alpha={alpha:.3e} sale del dominio en k={state.k}")
                f_new = objective.evaluate(x_new)
                state.damped_steps += 1
                if gamma > eta and not damped_descent_check(fval, f_new, gamma, eta, params.delta):
                    report.descent_violations += 1
                    message = (f"paso amortiguado sin el descenso garantizado en k={state.k}: "
                               f"f {fval:.12g} -> {f_new:.12g}")
                    if check_descent:
                        raise DescentViolationError(message)
                    LOGGER.warning("NFW: %s", message)
                if report.k_max is not None and state.damped_steps == report.k_max + 1:
                    LOGGER.warning("NFW: %d pasos amortiguados superan la cota k_max = %d",
                                   state.damped_steps, report.k_max)

            state.x = x_new
            state.k += 1
            fval = f_new
            report.rows.append(TraceRow(
                iter=state.k, time_s=time.perf_counter() - start, fval=fval,
                gap_proxy=state.lam, gamma=gamma, eta=eta, lam=state.lam,
                stage=step_kind.value, alpha=alpha, inner_lmo_calls=inner_calls,
                lmo_calls_cum=state.lmo_calls, grad_evals_cum=counters.grads,
                hess_ops_cum=counters.hess_ops,
            ))
            if keep_iterates:
                report.iterates.append(x_new.copy())
            LOGGER.debug("NFW k=%d %s f=%.12g gamma=%.3e eta=%.3e lambda=%.3e lmo=%d",
                         state.k, step_kind.value, fval, gamma, eta, state.lam, inner_calls)

            if step_kind is StepKind.FULL and state.lam <= params.eps:
                report.termination = Termination.CONVERGED
                break
    except NewtonFWError as exc:
        report.termination = Termination.ERROR
        report.error = str(exc)
        _finish(report, state)
        exc.report = report
        raise

    _finish(report, state)
    LOGGER.info("NFW: %s tras %d iteraciones, f = %.12g, %d llamadas al LMO",
                report.termination.value, state.k, fval, state.lmo_calls)
    return report


def _finish(report, state):
    report.x = state.x
    report.damped_steps = state.damped_steps
    report.full_steps = state.full_steps
