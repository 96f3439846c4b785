"""
Datos de los experimentos.

Generadores sintéticos con semilla (cartera, diseño D-óptimo, regresión
logística), lectura y escritura del formato LIBSVM, carga de una matriz de
precios en CSV y almacenamiento en .npz.

Convenciones de forma:
- cartera: matriz n x p de rendimientos (una fila por escenario)
- D-óptimo: matriz n x p cuyas columnas son los puntos
- logística: matriz n x p de características (una fila por muestra) y
  etiquetas en {-1, +1}
"""

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from errors import DataFormatError, InputValidationError

LOGGER = logging.getLogger(__name__)

MAX_REDRAWS = 100


class Problem(enum.Enum):
    PORTFOLIO = "portfolio"
    DOPT = "dopt"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, tag):
        try:
            return cls(str(tag).strip().lower())
        except ValueError:
            raise InputValidationError(f"problema desconocido: {tag!r}") from None


@dataclass
class Dataset:
    """
    Datos de un problema.

    Atributos:
        problem: tipo de problema
        matrix: matriz densa (np.ndarray) o dispersa (scipy.sparse)
        labels: etiquetas en {-1, +1}; sólo para regresión logística
        name: nombre descriptivo
        metadata: origen de los datos (semilla, fichero...)
    """
    problem: Problem
    matrix: object
    labels: Optional[np.ndarray] = None
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.problem, str):
            self.problem = Problem.parse(self.problem)
        values = self.matrix.data if sp.issparse(self.matrix) else np.asarray(self.matrix)
        if not np.all(np.isfinite(values)):
            raise DataFormatError("la matriz contiene NaN o Inf")
        if (self.labels is not None) != (self.problem is Problem.LOGISTIC):
            raise DataFormatError("las etiquetas sólo existen, y son obligatorias, en logística")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=float)
            if self.labels.size != self.matrix.shape[0]:
                raise DataFormatError("el número de etiquetas no coincide con las filas")
            if not np.all(np.isin(self.labels, (-1.0, 1.0))):
                raise DataFormatError("las etiquetas deben estar en {-1, +1}")

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)


def _check_sizes(n, p):
    if n < 1 or p < 1:
        raise InputValidationError(f"n y p deben ser >= 1, recibidos n={n}, p={p}")


def gen_portfolio(n, p, seed):
    """
    Rendimientos sintéticos A = 1 + 0.1 N(0, 1), de tamaño n x p.

    Las filas con (A x0)_i <= 0 para x0 = e/p se vuelven a generar, de modo
    que el punto inicial por defecto está en el dominio.

    Args:
        n (int): escenarios
        p (int): activos
        seed (int): semilla

    Returns:
        Dataset: problema de cartera
    """
    _check_sizes(n, p)
    rng = np.random.default_rng(seed)
    A = 1.0 + 0.1 * rng.standard_normal((n, p))
    for _ in range(MAX_REDRAWS):
        bad = A.mean(axis=1) <= 0
        if not np.any(bad):
            break
        LOGGER.debug("gen_portfolio: se regeneran %d filas", int(bad.sum()))
        A[bad] = 1.0 + 0.1 * rng.standard_normal((int(bad.sum()), p))
    return Dataset(Problem.PORTFOLIO, A, name=f"portfolio-{n}x{p}",
                   metadata={'n': n, 'p': p, 'seed': seed})


def _covariance_factor(covariance, n):
    if covariance is None:
        return np.eye(n)
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim == 0:
        cov = float(cov) * np.eye(n)
    elif cov.ndim == 1:
        cov = np.diag(cov)
    if cov.shape != (n, n):
        raise InputValidationError(f"la covarianza debe ser {n}x{n}, recibida {cov.shape}")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise InputValidationError("la covarianza no es definida positiva") from exc


def gen_dopt_points(n, p, seed, covariance=None):
    """
    p puntos de R^n con distribución N(0, Sigma), como columnas de A.

    Args:
        n (int): dimensión
        p (int): número de puntos (p >= n)
        seed (int): semilla
        covariance: None (identidad), escalar, diagonal o matriz n x n

    Returns:
        Dataset: problema D-óptimo con A de rango n

    Raises:
        InputValidationError: si p < n o la covarianza no es válida
    """
    _check_sizes(n, p)
    if p < n:
        raise InputValidationError(f"se necesitan al menos n={n} puntos, recibidos p={p}")
    factor = _covariance_factor(covariance, n)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REDRAWS):
        A = factor @ rng.standard_normal((n, p))
        if np.linalg.matrix_rank(A) == n:
            return Dataset(Problem.DOPT, A, name=f"dopt-{n}x{p}",
                           metadata={'n': n, 'p': p, 'seed': seed})
        LOGGER.debug("gen_dopt_points: muestra de rango deficiente, se repite")
    raise InputValidationError("no se obtuvo una muestra de rango completo")


def gen_logistic(n, p, seed, density=0.1):
    """
    Clasificación binaria sintética: características gaussianas dispersas y
    etiquetas de un modelo lineal disperso con ruido.

    Args:
        n (int): muestras
        p (int): características
        seed (int): semilla
        density (float): fracción de entradas no nulas, en (0, 1]

    Returns:
        Dataset: problema logístico con matriz CSR
    """
    _check_sizes(n, p)
    if not 0 < density <= 1:
        raise InputValidationError(f"density debe estar en (0, 1], recibido {density}")
    rng = np.random.default_rng(seed)
    X = sp.random(n, p, density=density, format='csr', random_state=rng,
                  data_rvs=rng.standard_normal)
    planted = np.zeros(p)
    support = rng.choice(p, size=max(1, p // 10), replace=False)
    planted[support] = rng.standard_normal(support.size)
    margin = X @ planted + 0.1 * rng.standard_normal(n)
    labels = np.where(margin >= 0, 1.0, -1.0)
    return Dataset(Problem.LOGISTIC, X, labels=labels, name=f"logistic-{n}x{p}",
                   metadata={'n': n, 'p': p, 'seed': seed, 'density': density})


def _parse_libsvm_line(line, number):
    tokens = line.split()
    try:
        label = float(tokens[0])
    except ValueError:
        raise DataFormatError(f"etiqueta no numérica {tokens[0]!r}", line=number) from None
    indices, values = [], []
    previous = 0
    for token in tokens[1:]:
        index, sep, value = token.partition(':')
        if not sep:
            raise DataFormatError(f"se esperaba 'índice:valor', recibido {token!r}", line=number)
        try:
            index, value = int(index), float(value)
        except ValueError:
            raise DataFormatError(f"par mal formado {token!r}", line=number) from None
        if index <= previous:
            raise DataFormatError(f"índices no crecientes ({previous} -> {index})", line=number)
        if not np.isfinite(value):
            raise DataFormatError(f"valor no finito en {token!r}", line=number)
        indices.append(index - 1)
        values.append(value)
        previous = index
    return label, indices, values


def parse_libsvm(path, n_features=None):
    """
    Lee un fichero LIBSVM ("etiqueta índice:valor ...", índices desde 1).

    Las etiquetas se asignan a {-1, +1} por orden: la menor a -1. Con una
    sola etiqueta, los valores positivos van a +1.

    Args:
        path (str o Path): fichero
        n_features (int): número de columnas; por defecto el mayor índice

    Returns:
        Dataset: problema logístico con matriz CSR

    Raises:
        DataFormatError: líneas mal formadas (con su número), índices no
            crecientes o más de dos etiquetas distintas
    """
    path = Path(path)
    raw_labels, data, columns, indptr = [], [], [], [0]
    with path.open() as handle:
        for number, line in enumerate(handle, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            label, indices, values = _parse_libsvm_line(line, number)
            raw_labels.append(label)
            columns.extend(indices)
            data.extend(values)
            indptr.append(len(columns))

    if not raw_labels:
        raise DataFormatError(f"{path} no contiene muestras")
    distinct = sorted(set(raw_labels))
    if len(distinct) > 2:
        raise DataFormatError(f"más de dos etiquetas: {distinct}")
    if len(distinct) == 2:
        mapping = {distinct[0]: -1.0, distinct[1]: 1.0}
    else:
        mapping = {distinct[0]: 1.0 if distinct[0] > 0 else -1.0}
    labels = np.array([mapping[label] for label in raw_labels])

    width = max(columns, default=-1) + 1
    if n_features is not None:
        if n_features < width:
            raise DataFormatError(f"índice {width} mayor que n_features = {n_features}")
        width = n_features
    X = sp.csr_matrix((data, columns, indptr), shape=(len(raw_labels), width))
    LOGGER.info("Leídas %d muestras con %d características de %s", X.shape[0], width, path)
    return Dataset(Problem.LOGISTIC, X, labels=labels, name=path.stem,
                   metadata={'source': str(path)})


def write_libsvm(dataset, path):
    """Escribe un Dataset logístico en formato LIBSVM sin pérdida."""
    X = sp.csr_matrix(dataset.matrix)
    with Path(path).open('w') as handle:
        for i, label in enumerate(dataset.labels):
            start, end = X.indptr[i], X.indptr[i + 1]
            pairs = [f"{j + 1}:{value!r}" for j, value in
                     zip(X.indices[start:end], X.data[start:end].tolist()) if value != 0]
            handle.write(" ".join([f"{int(label):+d}"] + pairs) + "\n")


def load_price_csv(path):
    """
    Carga precios (una fila por periodo, una columna por activo) y devuelve
    el problema de cartera con A_ij = precio_{i+1,j} / precio_{i,j}.

    Las columnas no numéricas (fechas) se ignoran.

    Raises:
        DataFormatError: si faltan datos o hay precios no positivos
    """
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"CSV ilegible: {exc}") from exc
    prices = frame.select_dtypes('number')
    if prices.shape[1] == 0 or prices.shape[0] < 2:
        raise DataFormatError("se necesitan al menos dos periodos y una columna de precios")
    values = prices.to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values) & (values > 0), axis=1))
    if bad_rows.size:
        # La cabecera es la línea 1
        raise DataFormatError("precio ausente o no positivo", line=int(bad_rows[0]) + 2)
    A = values[1:] / values[:-1]
    return Dataset(Problem.PORTFOLIO, A, name=Path(path).stem,
                   metadata={'source': str(path), 'assets': list(prices.columns)})


def save_dataset(dataset, path):
    """Guarda un Dataset en .npz (denso o CSR)."""
    arrays = {'problem': np.array(dataset.problem.value), 'name': np.array(dataset.name)}
    if dataset.is_sparse:
        X = sp.csr_matrix(dataset.matrix)
        arrays.update(data=X.data, indices=X.indices, indptr=X.indptr, shape=np.array(X.shape))
    else:
        arrays['matrix'] = np.asarray(dataset.matrix)
    if dataset.labels is not None:
        arrays['labels'] = dataset.labels
    np.savez(path, **arrays)


def load_dataset(path):
    """
    Lee un Dataset guardado con save_dataset.

    Raises:
        DataFormatError: si el fichero no existe o le faltan campos
    """
    try:
        with np.load(path, allow_pickle=False) as archive:
            fields = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"no se puede leer {path}: {exc}") from exc
    try:
        if 'matrix' in fields:
            matrix = fields['matrix']
        else:
            matrix = sp.csr_matrix((fields['data'], fields['indices'], fields['indptr']),
                                   shape=tuple(fields['shape']))
        return Dataset(str(fields['problem']), matrix, labels=fields.get('labels'),
                       name=str(fields.get('name', '')), metadata={'source': str(path)})
    except KeyError as exc:
        raise DataFormatError(f"falta el campo {exc} en {path}") from exc
