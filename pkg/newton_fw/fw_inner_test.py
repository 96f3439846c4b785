"""
Tests para el módulo fw_inner.py
Comprueban Frank-Wolfe y Frank-Wolfe con pasos 'away' sobre modelos
cuadráticos pequeños con solución conocida.
"""

import numpy as np
import pytest

from errors import BudgetExhaustedError, InternalConsistencyError
from fw_inner import (MAX_ITERS_CAP, ActiveSet, QuadraticModel, certify_eta_solution,
                      default_max_iters, estimate_lambda_max, fw_away_quadratic,
                      fw_quadratic)
from objectives import QuadraticProblem
from oracles import DenseHessian, L1Ball, OracleCounters, Simplex, Vertex


@pytest.fixture
def small_model():
    """
    Modelo con H = I, u0 = (0.5, 0.5) y h = (0.1, -0.1); el óptimo es (0.4, 0.6)
    """
    return QuadraticModel(grad=np.array([0.1, -0.1]), hessian=DenseHessian(np.eye(2)),
                          anchor=np.array([0.5, 0.5]), tol=1e-12)


@pytest.fixture
def face_model():
    """
    Modelo en el 3-símplex cuyo óptimo (0.5, 0.5, 0) está en una cara
    """
    return QuadraticModel(grad=np.array([-1.0 / 6.0, -1.0 / 6.0, 4.0 / 3.0]),
                          hessian=DenseHessian(np.eye(3)),
                          anchor=np.full(3, 1.0 / 3.0), tol=1e-10)


def _uniform_active_set(dim):
    active = ActiveSet(dim)
    for j in range(dim):
        active.add(Vertex(index=j, value=1.0, dim=dim), 1.0 / dim)
    return active


class TestFWQuadratic:
    """
    Pruebas para fw_quadratic
    """

    def test_known_solution(self, small_model):
        """
        Verificar el óptimo conocido con dos llamadas al LMO
        """
        result = fw_quadratic(small_model, Simplex(2))
        assert result.u == pytest.approx([0.4, 0.6]), "La solución debe ser (0.4, 0.6)"
        assert result.gap <= small_model.tol, "El gap final debe ser <= tol"
        assert result.lmo_calls == 2, "Deben bastar dos llamadas al LMO"
        assert result.hd == pytest.approx(result.u - small_model.anchor), "hd debe ser H (u - u0)"
        assert not result.at_floor, "No debe parar en el suelo numérico"

    def test_zero_gradient(self):
        """
        Verificar que con h = 0 el ancla ya es solución
        """
        model = QuadraticModel(grad=np.zeros(3), hessian=DenseHessian(np.eye(3)),
                               anchor=np.full(3, 1.0 / 3.0), tol=1e-12)
        result = fw_quadratic(model, Simplex(3))
        assert result.lmo_calls == 1, "Debe bastar una llamada al LMO"
        assert result.u == pytest.approx(model.anchor), "La solución debe ser el ancla"

    def test_l1ball(self):
        """
        Verificar un modelo sobre la bola l1 con el óptimo en un vértice
        """
        model = QuadraticModel(grad=np.array([-3.0, 0.0]), hessian=DenseHessian(np.eye(2)),
                               anchor=np.zeros(2), tol=1e-12)
        result = fw_quadratic(model, L1Ball(2, 1.0))
        assert result.u == pytest.approx([1.0, 0.0]), "La solución debe ser el vértice (1, 0)"
        assert result.lmo_calls == 2, "Deben bastar dos llamadas al LMO"

    def test_budget_exhausted(self, small_model):
        """
        Verificar que al agotar las iteraciones se lanza la excepción con el resultado
        """
        with pytest.raises(BudgetExhaustedError) as excinfo:
            fw_quadratic(small_model, Simplex(2), max_iters=1)
        assert excinfo.value.result is not None, "La excepción debe llevar el resultado"
        assert excinfo.value.result.lmo_calls == 1, "Debe constar una llamada al LMO"

    def test_monotone_model_values(self, face_model):
        """
        Verificar que el valor del modelo no crece con el paso exacto
        """
        with pytest.raises(BudgetExhaustedError) as excinfo:
            fw_quadratic(face_model, Simplex(3), max_iters=300)
        values = np.array(excinfo.value.result.model_values)
        assert np.all(np.diff(values) <= 1e-15), "El valor del modelo debe decrecer"

    def test_zigzag_on_face(self, face_model):
        """
        Verificar que FW sin pasos 'away' no alcanza tol cuando el óptimo está en una cara
        """
        with pytest.raises(BudgetExhaustedError) as excinfo:
            fw_quadratic(face_model, Simplex(3), max_iters=2000)
        assert min(excinfo.value.result.gaps) > 1e-9, "El gap no debería bajar de 1e-9"

    @pytest.mark.parametrize("seed", range(10))
    def test_gap_rate(self, seed):
        """
        Verificar min_{t <= T} V_t <= 6 lambda_max D^2 / (T + 1) en el 30-símplex
        """
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((30, 30))
        H = M @ M.T / 30.0
        lambda_max = np.linalg.eigvalsh(H)[-1]
        model = QuadraticModel(grad=rng.standard_normal(30), hessian=DenseHessian(H),
                               anchor=np.full(30, 1.0 / 30.0), tol=0.0)
        simplex = Simplex(30)
        for T in (10, 100, 1000):
            try:
                gaps = fw_quadratic(model, simplex, max_iters=T + 1).gaps
            except BudgetExhaustedError as exc:
                gaps = exc.result.gaps
            bound = 6.0 * lambda_max * simplex.diameter() ** 2 / (T + 1)
            assert min(gaps[:T + 1]) <= bound, f"Cota del gap violada con T = {T}"

    def test_from_objective(self):
        """
        Verificar la construcción del modelo a partir de un objetivo
        """
        problem = QuadraticProblem(np.diag([1.0, 2.0]), np.array([1.0, -1.0]))
        model = QuadraticModel.from_objective(problem, np.array([0.5, 0.5]), tol=1e-8)
        assert model.grad == pytest.approx([1.5, 0.0]), "El gradiente del ancla no es el esperado"
        assert model.dim == 2, "La dimensión debe ser 2"
        assert model.value(model.anchor) == 0.0, "psi(u0) debe ser 0"


class TestFWAwayQuadratic:
    """
    Pruebas para fw_away_quadratic
    """

    def test_known_solution(self, small_model):
        """
        Verificar que la variante 'away' da la misma solución
        """
        result, active = fw_away_quadratic(small_model, Simplex(2))
        assert result.u == pytest.approx([0.4, 0.6]), "La solución debe ser (0.4, 0.6)"
        assert result.lmo_calls == 3, "Se cuentan el LMO inicial y dos iteraciones"
        assert active.total_weight() == pytest.approx(1.0), "Los pesos deben sumar 1"
        assert active.materialize() == pytest.approx(result.u), "El conjunto activo debe dar u"

    def test_warm_start(self, small_model):
        """
        Verificar que arrancar en caliente en el óptimo cuesta un LMO
        """
        _, active = fw_away_quadratic(small_model, Simplex(2))
        result, _ = fw_away_quadratic(small_model, Simplex(2), active_set=active)
        assert result.lmo_calls == 1, "Arrancando en el óptimo basta una llamada"
        assert result.u == pytest.approx([0.4, 0.6]), "La solución no debe cambiar"

    def test_warm_start_does_not_mutate(self, small_model):
        """
        Verificar que el conjunto activo recibido no se modifica
        """
        active = _uniform_active_set(2)
        before = dict(active.weights)
        fw_away_quadratic(small_model, Simplex(2), active_set=active)
        assert active.weights == before, "El conjunto activo de entrada no debe cambiar"

    def test_face_solution(self, face_model):
        """
        Verificar convergencia lineal cuando el óptimo está en una cara
        """
        result, active = fw_away_quadratic(face_model, Simplex(3),
                                           active_set=_uniform_active_set(3), max_iters=10000)
        assert result.gap <= 1e-10, "El gap final debe ser <= 1e-10"
        assert result.u[2] <= 1e-6, "La tercera coordenada debe anularse"
        assert result.u == pytest.approx([0.5, 0.5, 0.0], abs=1e-4), "La solución debe ser (0.5, 0.5, 0)"
        assert all(w > 0 for w in active.weights.values()), "No debe haber pesos no positivos"

    def test_counts_hessian_columns_once(self, face_model):
        """
        Verificar que las columnas de H se piden una sola vez por índice
        """
        counters = OracleCounters()
        face_model.hessian = DenseHessian(np.eye(3), counters)
        result, _ = fw_away_quadratic(face_model, Simplex(3),
                                      active_set=_uniform_active_set(3), max_iters=10000)
        # apply(u0) y apply(u) más como mucho tres columnas
        assert counters.hess_ops <= 5 + result.iterations // 500, \
            "Las columnas deben reutilizarse"


class TestActiveSet:
    """
    Pruebas para ActiveSet
    """

    def test_add_merges_vertices(self):
        """
        Verificar que añadir un vértice existente acumula su peso
        """
        active = ActiveSet(3)
        vertex = Vertex(index=1, value=1.0, dim=3)
        active.add(vertex, 0.25)
        active.add(vertex, 0.75)
        assert len(active) == 1, "Debe haber un único vértice"
        assert active.materialize() == pytest.approx([0.0, 1.0, 0.0]), "u debe ser e_1"

    def test_check_detects_drift(self):
        """
        Verificar que unos pesos que no suman 1 lanzan InternalConsistencyError
        """
        active = ActiveSet(2)
        active.add(Vertex(index=0, value=1.0, dim=2), 0.5)
        active.add(Vertex(index=1, value=1.0, dim=2), 0.4)
        with pytest.raises(InternalConsistencyError):
            active.check()

    def test_check_detects_negative_weight(self):
        """
        Verificar que un peso negativo lanza InternalConsistencyError
        """
        active = ActiveSet(2)
        active.add(Vertex(index=0, value=1.0, dim=2), 1.2)
        active.add(Vertex(index=1, value=1.0, dim=2), -0.2)
        with pytest.raises(InternalConsistencyError):
            active.check()

    def test_prune(self):
        """
        Verificar que prune quita los pesos no positivos
        """
        active = _uniform_active_set(3)
        active.weights[(2, True)] = 0.0
        active.prune()
        assert len(active) == 2, "Debe quedar con dos vértices"


def test_estimate_lambda_max():
    """
    Verificar el método de la potencia con una matriz diagonal
    """
    hessian = DenseHessian(np.diag([1.0, 2.0, 5.0]))
    assert estimate_lambda_max(hessian) == pytest.approx(5.0, rel=1e-3), "lambda_max debe ser 5"


@pytest.mark.parametrize("lambda_hat, diameter, tol, expected", [
    (1.0, 2.0, 0.5, 2400),
    (1.0, 2.0, 1e-12, MAX_ITERS_CAP),
    (1.0, 2.0, 0.0, MAX_ITERS_CAP),
])
def test_default_max_iters(lambda_hat, diameter, tol, expected):
    """
    Verificar el presupuesto por defecto de iteraciones
    """
    assert default_max_iters(lambda_hat, diameter, tol) == expected, "Presupuesto incorrecto"


def test_certify_eta_solution(small_model):
    """
    Verificar el certificado del gap en el óptimo y fuera de él
    """
    simplex = Simplex(2)
    assert certify_eta_solution(small_model, simplex, np.array([0.4, 0.6])) == \
        pytest.approx(0.0, abs=1e-15), "En el óptimo el gap debe ser 0"
    assert certify_eta_solution(small_model, simplex, small_model.anchor) == pytest.approx(0.1), \
        "En el ancla el gap debe ser 0.1"
