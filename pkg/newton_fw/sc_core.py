"""
Utilidades escalares de autoconcordancia.

Este módulo reúne las funciones univariantes que usa el método de Newton
proyectado con subproblemas resueltos por Frank-Wolfe:

1. omega y omega_star, las funciones que acotan el crecimiento de una
   función autoconcordante estándar
2. h y su inversa, que deciden el cambio de etapa (amortiguada -> completa)
3. La validación de la terna (beta, sigma, C) y del resto de parámetros
4. El exponente nu de la complejidad en llamadas al LMO

Todas las funciones son puras y se pueden llamar desde varios hilos.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from errors import DomainError

# Tolerancia absoluta de la bisección de h_inv
H_INV_XTOL = 1e-12
# Margen por debajo de C2 para que h sea finita en el extremo derecho
C2_MARGIN = 1e-9


@dataclass(frozen=True)
class SolverParams:
    """
    Parámetros del método.

    Atributos:
        beta: radio de la región de convergencia local, en (0, 0.5)
        sigma: factor de contracción, en (0, 1)
        c_big: cociente de precisión C > 1
        c_one: fracción de precisión de la etapa amortiguada, en (0, 0.5)
        delta: escala del paso amortiguado, en (0, 1)
        eps: precisión objetivo en la norma local del óptimo
    """
    beta: float = 0.05
    sigma: float = 0.17
    c_big: float = 10.0
    c_one: float = 0.25
    delta: float = 0.95
    eps: float = 1e-6


@dataclass
class ParamsCheck:
    """
    Resultado de validate_params.

    Atributos:
        ok: True si se cumplen todas las condiciones
        violations: una línea por desigualdad violada, con su lado izquierdo
    """
    ok: bool
    violations: List[str] = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "parámetros válidos"
        return "; ".join(self.violations)


def _as_output(values, scalar):
    return float(values) if scalar else values


def omega(tau):
    """
    Calcula omega(tau) = tau - ln(1 + tau).

    Args:
        tau (float o np.ndarray): valor(es) no negativos

    Returns:
        float o np.ndarray: omega evaluada en tau

    Raises:
        DomainError: si algún valor es negativo
    """
    scalar = np.isscalar(tau)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(np.isnan(tau)):
        raise DomainError(f"omega necesita tau >= 0, recibido {tau}")
    return _as_output(tau - np.log1p(tau), scalar)


def omega_star(tau):
    """
    Calcula omega*(tau) = -tau - ln(1 - tau) para tau en [0, 1).

    Raises:
        DomainError: si tau < 0 o tau >= 1
    """
    scalar = np.isscalar(tau)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(tau >= 1) or np.any(np.isnan(tau)):
        raise DomainError(f"omega_star necesita 0 <= tau < 1, recibido {tau}")
    return _as_output(-tau - np.log1p(-tau), scalar)


def _h_denominator(tau):
    return (1.0 - 2.0 * tau) * (1.0 - tau) ** 2 - tau ** 2


@lru_cache(maxsize=None)
def c2_root():
    """
    Raíz C2 de (1 - 2t)(1 - t)^2 - t^2 = 0 en (0.3, 0.4).

    Returns:
        float: C2 (~0.3522), extremo derecho del dominio de h
    """
    return bisect(_h_denominator, 0.3, 0.4, xtol=1e-15)


def h(tau):
    """
    Función de cambio de etapa.

    h(tau) = tau (1 - 2 tau + 2 tau^2) / ((1 - 2 tau)(1 - tau)^2 - tau^2),
    creciente en [0, C2).

    Args:
        tau (float o np.ndarray): valor(es) en [0, C2)

    Returns:
        float o np.ndarray: h evaluada en tau

    Raises:
        DomainError: si algún valor está fuera de [0, C2)
    """
    scalar = np.isscalar(tau)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0) or np.any(tau >= c2_root()) or np.any(np.isnan(tau)):
        raise DomainError(f"h necesita 0 <= tau < C2 = {c2_root():.6f}, recibido {tau}")
    values = tau * (1.0 - 2.0 * tau + 2.0 * tau ** 2) / _h_denominator(tau)
    return _as_output(values, scalar)


def h_inv(y):
    """
    Inversa de h por bisección en [0, C2 - 1e-9] con tolerancia 1e-12.

    Args:
        y (float): valor no negativo

    Returns:
        float: el único tau en [0, C2) con h(tau) = y. Para valores de y
        mayores que h(C2 - 1e-9) devuelve ese extremo.

    Raises:
        DomainError: si y < 0
    """
    if y < 0 or math.isnan(y):
        raise DomainError(f"h_inv necesita y >= 0, recibido {y}")
    if y == 0:
        return 0.0
    upper = c2_root() - C2_MARGIN
    if h(upper) <= y:
        return upper
    return bisect(lambda tau: h(tau) - y, 0.0, upper, xtol=H_INV_XTOL)


def sigma_lower_bound(beta, c_big):
    """
    Lado izquierdo de la condición de contracción:
    1/(C(1 - beta)) + beta/((1 - 2 beta)(1 - beta)^2).
    """
    return 1.0 / (c_big * (1.0 - beta)) + beta / ((1.0 - 2.0 * beta) * (1.0 - beta) ** 2)


def validate_params(params, rel_slack=1e-3):
    """
    Comprueba las condiciones de rango y las dos desigualdades de la terna
    (beta, sigma, C).

    Args:
        params (SolverParams): parámetros a validar
        rel_slack (float): holgura relativa admitida en las dos
            desigualdades (no en los rangos). Con 1e-3 se acepta el par
            redondeado (0.05, 0.1668); con 0.0 la comprobación es estricta.

    Returns:
        ParamsCheck: resultado con un diagnóstico por condición violada
    """
    violations = []
    beta, sigma, c_big = params.beta, params.sigma, params.c_big

    # Rangos abiertos
    ranges = [
        ("beta", beta, 0.0, 0.5),
        ("sigma", sigma, 0.0, 1.0),
        ("c_one", params.c_one, 0.0, 0.5),
        ("delta", params.delta, 0.0, 1.0),
    ]
    for name, value, low, high in ranges:
        if not low < value < high:
            violations.append(f"{name} = {value} fuera de ({low}, {high})")
    if not c_big > 1.0:
        violations.append(f"c_big = {c_big} debe ser > 1")
    if not params.eps > 0.0:
        violations.append(f"eps = {params.eps} debe ser > 0")

    # Las desigualdades sólo tienen sentido con beta y C en rango
    if 0.0 < beta < 0.5 and c_big > 0.0:
        contraction = sigma_lower_bound(beta, c_big)
        if contraction > sigma * (1.0 + rel_slack):
            violations.append(
                f"1/(C(1-beta)) + beta/((1-2beta)(1-beta)^2) = {contraction:.6g} > sigma = {sigma}"
            )
        ratio = 1.0 / c_big + 1.0 / (1.0 - 2.0 * beta)
        if ratio > 2.0 * (1.0 + rel_slack):
            violations.append(f"1/C + 1/(1-2beta) = {ratio:.6g} > 2")

    return ParamsCheck(ok=not violations, violations=violations)


def nu_exponent(beta, sigma):
    """
    Exponente de la complejidad en llamadas al LMO:
    nu = 1 + ln(1 - 2 beta) / ln(sigma).
    """
    return 1.0 + math.log(1.0 - 2.0 * beta) / math.log(sigma)


def initial_eta(params):
    """
    Precisión inicial de los subproblemas: min(beta/C, C1 h_inv(beta)).
    """
    return min(params.beta / params.c_big, params.c_one * h_inv(params.beta))


def feasible_region_grid(c_big=10.0, betas=None, sigmas=None):
    """
    Tabla de la región factible de (beta, sigma) para un C dado.

    Args:
        c_big (float): valor de C
        betas (array-like): valores de beta (por defecto 99 puntos en (0, 0.5))
        sigmas (array-like): valores de sigma (por defecto 99 puntos en (0, 1))

    Returns:
        pd.DataFrame: columnas 'beta', 'sigma', 'feasible', 'sigma_min'
    """
    if betas is None:
        betas = np.linspace(0.005, 0.495, 99)
    if sigmas is None:
        sigmas = np.linspace(0.01, 0.99, 99)

    rows = []
    for beta in betas:
        sigma_min = sigma_lower_bound(beta, c_big)
        for sigma in sigmas:
            check = validate_params(
                SolverParams(beta=float(beta), sigma=float(sigma), c_big=c_big), rel_slack=0.0
            )
            rows.append({
                'beta': float(beta),
                'sigma': float(sigma),
                'feasible': check.ok,
                'sigma_min': sigma_min,
            })
    return pd.DataFrame(rows, columns=['beta', 'sigma', 'feasible', 'sigma_min'])


if __name__ == "__main__":
    params = SolverParams()
    print(f"C2 = {c2_root():.10f}")
    print(f"h_inv(beta) = {h_inv(params.beta):.10f}")
    print(f"eta_0 = {initial_eta(params):.6g}")
    print(f"nu = {nu_exponent(params.beta, params.sigma):.4f}")
    print(f"Validación: {validate_params(params, rel_slack=0.0)}")
