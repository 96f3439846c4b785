"""
Tests para el módulo oracles.py
Comprueban los LMO, las proyecciones, los conjuntos factibles y la norma
local.
"""

import itertools
import math

import numpy as np
import pytest

from errors import InputValidationError, NumericalPSDError
from objectives import QuadraticProblem
from oracles import (DenseHessian, L1Ball, OracleCounters, Simplex, Vertex,
                     diameter_l1ball, diameter_simplex, lmo_l1ball, lmo_simplex,
                     local_norm, project_l1ball, project_simplex)


def _closest(y, candidates):
    return min(candidates, key=lambda x: float(np.sum((x - y) ** 2)))


def _simplex_qp(y):
    """
    Proyección sobre el símplex recorriendo todos los soportes: en cada cara
    el óptimo es y_S desplazado para sumar 1, válido si queda no negativo.
    """
    p = y.size
    candidates = []
    for size in range(1, p + 1):
        for support in itertools.combinations(range(p), size):
            support = list(support)
            x = np.zeros(p)
            x[support] = y[support] - (y[support].sum() - 1.0) / size
            if np.all(x[support] >= 0):
                candidates.append(x)
    return _closest(y, candidates)


def _l1ball_qp(y, rho):
    """
    Proyección sobre la bola l1 recorriendo el interior y todas las caras
    {s' x = rho} con s en {-1, 0, 1}^p.
    """
    candidates = [y.copy()] if np.abs(y).sum() <= rho else []
    for signs in itertools.product([-1.0, 0.0, 1.0], repeat=y.size):
        s = np.array(signs)
        support = s != 0
        if not support.any():
            continue
        theta = (s @ y - rho) / support.sum()
        x = np.where(support, y - theta * s, 0.0)
        if theta >= 0 and np.all(s * x >= 0):
            candidates.append(x)
    return _closest(y, candidates)


class TestVertex:
    """
    Pruebas para la clase Vertex
    """

    def test_dense_and_dot(self):
        """
        Verificar la forma densa y el producto escalar de un vértice
        """
        vertex = Vertex(index=2, value=-3.0, dim=4)
        assert np.array_equal(vertex.to_dense(), [0.0, 0.0, -3.0, 0.0]), \
            "La forma densa no es la esperada"
        assert vertex.dot(np.array([1.0, 2.0, 3.0, 4.0])) == -9.0, "El producto escalar debe ser -9"

    def test_key_distinguishes_sign(self):
        """
        Verificar que la clave distingue +rho e_j de -rho e_j
        """
        plus = Vertex(index=1, value=2.0, dim=3)
        minus = Vertex(index=1, value=-2.0, dim=3)
        assert plus.key != minus.key, "Los vértices opuestos deben tener claves distintas"
        assert plus.key == Vertex(index=1, value=2.0, dim=3).key, "La clave debe ser estable"


class TestLMO:
    """
    Pruebas para los oráculos de minimización lineal
    """

    def test_simplex(self):
        """
        Verificar que el LMO del símplex elige el menor gradiente
        """
        vertex = lmo_simplex(np.array([3.0, 1.0, 2.0]))
        assert vertex.index == 1, "Debe elegir la coordenada 1"
        assert vertex.value == 1.0, "El vértice del símplex tiene valor 1"

    def test_simplex_ties(self):
        """
        Verificar que los empates se resuelven por el menor índice
        """
        assert lmo_simplex(np.array([1.0, 1.0, 2.0])).index == 0, "El empate debe dar el índice 0"

    def test_l1ball(self):
        """
        Verificar el LMO de la bola l1
        """
        vertex = lmo_l1ball(np.array([0.5, -2.0, 1.0]), rho=3.0)
        assert vertex.index == 1, "Debe elegir la mayor componente en valor absoluto"
        assert vertex.value == 3.0, "El signo debe ser opuesto al del gradiente"

    def test_l1ball_zero_gradient(self):
        """
        Verificar que sign(0) = +1 y el empate da el menor índice
        """
        vertex = lmo_l1ball(np.zeros(3), rho=2.0)
        assert vertex.index == 0, "Con gradiente nulo debe elegir el índice 0"
        assert vertex.value == -2.0, "Con sign(0) = +1 el valor debe ser -rho"

    def test_support_functions(self):
        """
        Verificar <g, LMO(g)> = min_j g_j en el símplex y -rho ||g||_inf en la bola
        """
        rng = np.random.default_rng(11)
        for _ in range(1000):
            g = rng.standard_normal(9)
            assert lmo_simplex(g).dot(g) == g.min(), "El valor en el símplex debe ser min g"
            assert lmo_l1ball(g, 2.5).dot(g) == pytest.approx(-2.5 * np.abs(g).max()), \
                "El valor en la bola debe ser -rho ||g||_inf"

    @pytest.mark.parametrize("g", [
        np.array([1.0, np.nan]),
        np.array([np.inf, 0.0]),
        np.ones((2, 2)),
    ])
    def test_invalid_input(self, g):
        """
        Verificar que NaN, Inf o una matriz lanzan InputValidationError
        """
        with pytest.raises(InputValidationError):
            lmo_simplex(g)
        with pytest.raises(InputValidationError):
            lmo_l1ball(g, 1.0)

    def test_diameters(self):
        """
        Verificar los diámetros
        """
        assert diameter_simplex() == pytest.approx(math.sqrt(2.0)), "El diámetro del símplex es sqrt(2)"
        assert diameter_l1ball(10.0) == 20.0, "El diámetro de la bola l1 es 2 rho"


class TestProjections:
    """
    Pruebas para las proyecciones euclídeas
    """

    @pytest.mark.parametrize("y, expected", [
        ([0.5, 0.5], [0.5, 0.5]),
        ([2.0, 0.0], [1.0, 0.0]),
        ([-1.0, -1.0], [0.5, 0.5]),
        ([0.2, 0.2, 0.9], [0.1, 0.1, 0.8]),
        ([0.6, 0.4, -0.2], [0.6, 0.4, 0.0]),
    ])
    def test_simplex_examples(self, y, expected):
        """
        Verificar proyecciones conocidas sobre el símplex
        """
        assert project_simplex(np.array(y)) == pytest.approx(expected), "Proyección incorrecta"

    def test_simplex_feasible(self):
        """
        Verificar que la proyección de puntos aleatorios es factible
        """
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = project_simplex(3.0 * rng.standard_normal(7))
            assert np.all(x >= 0), "La proyección no puede tener negativos"
            assert x.sum() == pytest.approx(1.0), "La proyección debe sumar 1"

    def test_l1ball_inside(self):
        """
        Verificar que un punto de la bola no se mueve
        """
        y = np.array([0.3, -0.2])
        assert np.array_equal(project_l1ball(y, 1.0), y), "Un punto interior no debe cambiar"

    def test_l1ball_outside(self):
        """
        Verificar que un punto exterior cae en la frontera conservando signos
        """
        y = np.array([3.0, -2.0, 0.5])
        x = project_l1ball(y, 2.0)
        assert np.abs(x).sum() == pytest.approx(2.0), "La proyección debe estar en la frontera"
        assert x == pytest.approx([1.5, -0.5, 0.0]), "Proyección incorrecta"
        assert project_l1ball(np.array([2.0, -1.0]), 1.0) == pytest.approx([1.0, 0.0]), \
            "La proyección de (2, -1) sobre la bola unidad debe ser (1, 0)"

    @pytest.mark.parametrize("name", ["simplex", "l1ball"])
    def test_variational_inequality(self, name):
        """
        Verificar <y - P(y), u - P(y)> <= 0 frente a 10^4 puntos factibles
        """
        rng = np.random.default_rng(21)
        p, rho = 6, 1.5
        for _ in range(20):
            y = 2.0 * rng.standard_normal(p)
            if name == "simplex":
                projection = project_simplex(y)
                points = rng.dirichlet(np.ones(p), size=10 ** 4)
            else:
                projection = project_l1ball(y, rho)
                # Los p primeros pesos de un punto del (p+1)-símplex suman <= 1
                weights = rng.dirichlet(np.ones(p + 1), size=10 ** 4)[:, :p]
                points = rho * weights * rng.choice([-1.0, 1.0], size=(10 ** 4, p))
            worst = float(((points - projection) @ (y - projection)).max())
            assert worst <= 1e-10, f"Desigualdad variacional violada: {worst:.3e}"

    @pytest.mark.parametrize("p", [2, 5, 8])
    def test_matches_exhaustive_qp(self, p):
        """
        Verificar las proyecciones contra la resolución exhaustiva de las KKT
        """
        rng = np.random.default_rng(p)
        for _ in range(10):
            y = 1.5 * rng.standard_normal(p)
            assert project_simplex(y) == pytest.approx(_simplex_qp(y), abs=1e-8), \
                "La proyección sobre el símplex no coincide"
            assert project_l1ball(y, 1.0) == pytest.approx(_l1ball_qp(y, 1.0), abs=1e-8), \
                "La proyección sobre la bola l1 no coincide"


class TestFeasibleSets:
    """
    Pruebas para Simplex y L1Ball
    """

    def test_simplex(self):
        """
        Verificar el conjunto símplex
        """
        simplex = Simplex(4)
        start = simplex.default_start()
        assert start == pytest.approx(np.full(4, 0.25)), "El inicio por defecto es el baricentro"
        assert simplex.contains(start), "El baricentro debe pertenecer al símplex"
        assert not simplex.contains(np.array([0.5, 0.5, 0.5, -0.5])), \
            "Un punto con negativos no pertenece al símplex"
        assert simplex.lmo(np.array([0.0, -1.0, 2.0, 3.0])).index == 1, "El LMO debe elegir el índice 1"

    def test_l1ball(self):
        """
        Verificar el conjunto bola l1
        """
        ball = L1Ball(3, 2.0)
        assert np.array_equal(ball.default_start(), np.zeros(3)), "El inicio por defecto es el origen"
        assert ball.contains(np.array([1.0, -1.0, 0.0])), "Un punto de la frontera pertenece a la bola"
        assert not ball.contains(np.array([1.5, -1.0, 0.0])), "Un punto exterior no pertenece"
        assert ball.diameter() == 4.0, "El diámetro debe ser 2 rho"

    def test_l1ball_invalid_radius(self):
        """
        Verificar que un radio no positivo lanza InputValidationError
        """
        with pytest.raises(InputValidationError):
            L1Ball(3, 0.0)


class TestHessianAndLocalNorm:
    """
    Pruebas para DenseHessian y local_norm
    """

    def test_dense_hessian_counts(self):
        """
        Verificar que cada producto y cada columna cuentan como operación
        """
        counters = OracleCounters()
        op = DenseHessian(np.array([[2.0, 1.0], [1.0, 3.0]]), counters)
        assert np.array_equal(op.apply(np.array([1.0, 0.0])), [2.0, 1.0]), "Producto incorrecto"
        assert np.array_equal(op.column(1), [1.0, 3.0]), "Columna incorrecta"
        assert counters.hess_ops == 2, "Deben contarse dos operaciones"

    def test_local_norm(self):
        """
        Verificar ||v||_x con una cuadrática diagonal
        """
        problem = QuadraticProblem(np.diag([4.0, 1.0]), np.zeros(2))
        norm, hv = local_norm(problem, np.zeros(2), np.array([1.0, 0.0]))
        assert norm == pytest.approx(2.0), "La norma local de e_1 con H = diag(4, 1) es 2"
        assert np.array_equal(hv, [4.0, 0.0]), "Debe devolver el producto H v"

    def test_local_norm_reuses_product(self):
        """
        Verificar que con H v dado no se llama al oráculo
        """
        v = np.array([1.0, 2.0])
        norm, _ = local_norm(None, None, v, hv=np.array([1.0, 2.0]))
        assert norm == pytest.approx(math.sqrt(5.0)), "La norma debe usar el producto dado"

    def test_negative_curvature(self):
        """
        Verificar que una curvatura negativa lanza NumericalPSDError
        """
        v = np.array([1.0, 1.0])
        with pytest.raises(NumericalPSDError):
            local_norm(None, None, v, hv=-v)
