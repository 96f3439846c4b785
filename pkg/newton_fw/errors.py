"""
Errores del paquete.

Todas las excepciones que lanzan los solvers, los oráculos y la CLI heredan de
NewtonFWError. Las que corresponden a errores de entrada heredan además de
ValueError, para que el código que ya captura ValueError siga funcionando.
"""


class NewtonFWError(Exception):
    """
    Error base. Los solvers adjuntan el informe parcial en `report`
    cuando el error escapa de su bucle principal.
    """

    report = None


class InputValidationError(NewtonFWError, ValueError):
    """Entrada con forma incorrecta, NaN/Inf o valores no admitidos."""


class DomainError(NewtonFWError, ValueError):
    """Punto fuera del dominio de una función escalar o de un objetivo."""


class InvalidParameterError(NewtonFWError, ValueError):
    """Parámetros del solver que no cumplen las condiciones exigidas."""


class NumericalPSDError(NewtonFWError, FloatingPointError):
    """Curvatura negativa por encima de la tolerancia numérica."""


class BudgetExhaustedError(NewtonFWError):
    """
    Se agotó el presupuesto de iteraciones de un subproblema.

    Atributos:
        result: InnerResult con el último iterado (el mejor, porque el
            paso exacto hace que el modelo decrezca de forma monótona)
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InternalConsistencyError(NewtonFWError, RuntimeError):
    """Invariante interno roto (pesos del conjunto activo, dominio...)."""


class DescentViolationError(InternalConsistencyError):
    """Un paso amortiguado no cumplió la desigualdad de descenso."""


class UnsupportedMethodError(NewtonFWError, NotImplementedError):
    """Método no disponible para el problema o conjunto indicado."""


class DataFormatError(NewtonFWError, ValueError):
    """
    Datos de entrada mal formados.

    Atributos:
        line: número de línea (empezando en 1) si se conoce
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"línea {line}: {message}"
        super().__init__(message)
        self.line = line
