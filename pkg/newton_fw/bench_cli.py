"""
Banco de pruebas por línea de comandos.

Subcomandos:
    gen     genera datos sintéticos y los guarda (.npz, o LIBSVM para logística)
    run     ejecuta los métodos sobre un problema y escribe una traza CSV por
            método y un metadata.json
    check   valida (beta, sigma, C, ...) y opcionalmente escribe la tabla de
            la región factible

Ejemplos:
    python newton_fw/bench_cli.py gen --problem portfolio --n 200 --p 50 --seed 1 --out data.npz
    python newton_fw/bench_cli.py run --problem portfolio --n 200 --p 50 --seed 1 --out results
    python newton_fw/bench_cli.py run --config experimento.cfg --solvers nfw,fw
    python newton_fw/bench_cli.py check --beta 0.05 --sigma 0.17 --grid-out region.csv

Códigos de salida: 0 éxito, 1 error de uso, 2 fallo de un método, 3 error de datos.
"""

import argparse
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy

from baselines import BaselineConfig, Method, run_baseline
from datasets import (Problem, gen_dopt_points, gen_logistic, gen_portfolio,
                      load_dataset, load_price_csv, parse_libsvm, save_dataset,
                      write_libsvm)
from errors import (DataFormatError, InputValidationError, InvalidParameterError,
                    NewtonFWError, UnsupportedMethodError)
from nfw_solver import Budget, SolverReport, Termination, nfw_solve
from objectives import DOptProblem, LogisticProblem, PortfolioProblem
from oracles import L1Ball, Simplex
from sc_core import (SolverParams, feasible_region_grid, h_inv, initial_eta,
                     nu_exponent, sigma_lower_bound, validate_params)

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_DATA = 3

DEFAULT_SOLVERS = "nfw,fw,fw-ls,pg-bb"
LIBSVM_SUFFIXES = ('.svm', '.libsvm', '.txt')
BB_VARIANT = "tau = <dx, dg> / <dg, dg>, acotado a [1e-10, 1e10]"
# Distancias a la mejor f final para las que se cuentan llamadas al LMO
TARGET_GAPS = (1e-4, 1e-8)

# Tipo de cada clave admitida en el fichero de configuración
CONFIG_KEYS = {
    'problem': str, 'data': str, 'n': int, 'p': int, 'seed': int, 'solvers': str,
    'beta': float, 'sigma': float, 'cbig': float, 'c1': float, 'delta': float,
    'eps': float, 'max_lmo': int, 'max_seconds': float, 'max_iters': int, 'out': str,
    'mu': float, 'rho': float, 'inner': str, 'standardize': bool, 'density': float,
    'jobs': int,
}
DEFAULTS = {
    'problem': 'portfolio', 'n': 200, 'p': 50, 'solvers': DEFAULT_SOLVERS,
    'out': 'results', 'rho': 10.0, 'inner': 'away', 'standardize': False,
    'density': 0.1, 'jobs': 1,
}


@dataclass
class ExperimentConfig:
    """
    Configuración de un experimento.

    Hay exactamente una fuente de datos: un fichero (data) o datos
    sintéticos con semilla (n, p, seed).
    """
    problem: Problem
    solvers: List[Method]
    data: Optional[str] = None
    n: int = 200
    p: int = 50
    seed: Optional[int] = None
    params: SolverParams = field(default_factory=SolverParams)
    budget: Budget = field(default_factory=Budget)
    out: str = "results"
    mu: Optional[float] = None
    rho: float = 10.0
    inner: str = "away"
    standardize: bool = False
    density: float = 0.1
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.problem, str):
            self.problem = Problem.parse(self.problem)
        self.solvers = [Method.parse(s) if isinstance(s, str) else s for s in self.solvers]
        if not self.solvers:
            raise InputValidationError("la lista de métodos está vacía")
        for method in self.solvers:
            if method.reserved:
                raise UnsupportedMethodError(f"el método {method.value} está reservado")
        if self.data is not None and self.seed is not None:
            raise InputValidationError("indica un fichero de datos o una semilla, no ambos")
        if self.data is None and self.seed is None:
            raise InputValidationError("los datos sintéticos necesitan una semilla (--seed)")
        if self.jobs < 1:
            raise InputValidationError(f"jobs debe ser >= 1, recibido {self.jobs}")


def load_config_file(path):
    """
    Lee un fichero 'clave = valor' con comentarios '#'. Las claves son los
    nombres largos de las opciones, con '-' o '_'.

    Returns:
        dict: valores convertidos a su tipo

    Raises:
        InputValidationError: clave desconocida, línea sin '=' o valor inválido
    """
    values = {}
    with Path(path).open() as handle:
        for number, line in enumerate(handle, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            key = key.strip().lstrip('-').replace('-', '_')
            value = value.strip()
            if not sep or key not in CONFIG_KEYS:
                raise InputValidationError(f"{path}, línea {number}: entrada no válida {line!r}")
            kind = CONFIG_KEYS[key]
            try:
                if kind is bool:
                    values[key] = value.lower() in ('1', 'true', 'yes', 'si', 'sí')
                else:
                    values[key] = kind(value)
            except ValueError:
                raise InputValidationError(
                    f"{path}, línea {number}: valor no válido para {key}: {value!r}") from None
    return values


def config_from_values(values):
    """Construye ExperimentConfig a partir de un diccionario de claves CLI."""
    merged = {**DEFAULTS, **values}
    defaults = SolverParams()
    params = SolverParams(
        beta=merged.get('beta', defaults.beta),
        sigma=merged.get('sigma', defaults.sigma),
        c_big=merged.get('cbig', defaults.c_big),
        c_one=merged.get('c1', defaults.c_one),
        delta=merged.get('delta', defaults.delta),
        eps=merged.get('eps', defaults.eps),
    )
    budget = Budget(max_iters=merged.get('max_iters'), max_lmo=merged.get('max_lmo'),
                    max_seconds=merged.get('max_seconds'))
    return ExperimentConfig(
        problem=merged['problem'],
        solvers=[tag for tag in merged['solvers'].split(',') if tag.strip()],
        data=merged.get('data'),
        n=merged['n'],
        p=merged['p'],
        seed=merged.get('seed'),
        params=params,
        budget=budget,
        out=merged['out'],
        mu=merged.get('mu'),
        rho=merged['rho'],
        inner=merged['inner'],
        standardize=merged['standardize'],
        density=merged['density'],
        jobs=merged['jobs'],
    )


def generate_dataset(problem, n, p, seed, density=0.1):
    """Datos sintéticos del problema indicado."""
    problem = Problem.parse(problem) if isinstance(problem, str) else problem
    if problem is Problem.PORTFOLIO:
        return gen_portfolio(n, p, seed)
    if problem is Problem.DOPT:
        return gen_dopt_points(n, p, seed)
    return gen_logistic(n, p, seed, density)


def load_experiment_data(config):
    """
    Dataset del experimento: fichero (.npz, .csv de precios o LIBSVM) o
    datos sintéticos.

    Raises:
        DataFormatError: si el fichero no corresponde al problema
    """
    if config.data is None:
        return generate_dataset(config.problem, config.n, config.p, config.seed, config.density)
    path = Path(config.data)
    if not path.exists():
        raise DataFormatError(f"no existe el fichero {path}")
    if path.suffix == '.npz':
        dataset = load_dataset(path)
    elif path.suffix == '.csv':
        dataset = load_price_csv(path)
    else:
        dataset = parse_libsvm(path)
    if dataset.problem is not config.problem:
        raise DataFormatError(f"{path} contiene datos de {dataset.problem.value}, "
                              f"no de {config.problem.value}")
    return dataset


def build_problem(config, dataset):
    """
    Objetivo y conjunto factible del experimento.

    Returns:
        tuple: (ObjectiveOracle, FeasibleSet)
    """
    if dataset.problem is Problem.PORTFOLIO:
        objective = PortfolioProblem(dataset.matrix)
        return objective, Simplex(objective.dim)
    if dataset.problem is Problem.DOPT:
        objective = DOptProblem(dataset.matrix)
        return objective, Simplex(objective.dim)
    objective = LogisticProblem.from_samples(dataset.matrix, dataset.labels, mu=config.mu,
                                             standardize=config.standardize)
    return objective, L1Ball(objective.dim, config.rho)


def run_solver(config, dataset, method):
    """
    Ejecuta un método con oráculos propios. Los errores de los métodos no se
    propagan: el informe parcial queda con termination = ERROR.

    Returns:
        SolverReport: informe del método
    """
    objective, feasible_set = build_problem(config, dataset)
    try:
        if method is Method.NFW:
            return nfw_solve(objective, feasible_set, params=config.params,
                             budget=config.budget, inner=config.inner)
        baseline = BaselineConfig(
            method=method,
            max_iters=config.budget.max_iters or BaselineConfig.max_iters,
            max_seconds=config.budget.max_seconds,
            max_lmo=config.budget.max_lmo,
        )
        return run_baseline(baseline, objective, feasible_set)
    except NewtonFWError as exc:
        LOGGER.error("%s falló: %s", method.value, exc)
        report = exc.report or SolverReport(solver=method.value)
        report.termination = Termination.ERROR
        report.error = str(exc)
        return report


def _best_value(reports):
    """Menor f final entre las ejecuciones con traza; None si no hay ninguna."""
    values = [report.final_value for report in reports
              if report.rows and np.isfinite(report.final_value)]
    return min(values) if values else None


def _report_summary(report, best_value=None):
    summary = {
        'termination': report.termination.value if report.termination else None,
        'iterations': report.rows[-1].iter if report.rows else 0,
        'final_value': report.final_value if report.rows else None,
        'lmo_calls': report.lmo_calls,
        'lmo_to_target': None,
        'error': report.error,
    }
    if best_value is not None:
        summary['lmo_to_target'] = {f"{gap:.0e}": report.lmo_calls_to(best_value + gap)
                                    for gap in TARGET_GAPS}
    if report.solver == Method.NFW.value:
        summary.update({
            'switch_iter': report.switch_iter,
            'damped_steps': report.damped_steps,
            'full_steps': report.full_steps,
            'descent_violations': report.descent_violations,
            'k_max': report.k_max,
            't1_lmo_bound': report.metadata.get('t1_lmo_bound'),
            'nu': report.metadata.get('nu'),
            'lambda_note': "lambda es una cota certificada, válida si los parámetros son válidos",
        })
    if report.solver == Method.PG_BB.value:
        summary['bb_step'] = BB_VARIANT
    return summary


def _json_default(value):
    if isinstance(value, (Problem, Method)):
        return value.value
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def run_experiment(config, jobs=None):
    """
    Ejecuta todos los métodos de config y escribe
    {out}/{problema}_{método}.csv y {out}/metadata.json.

    Args:
        config (ExperimentConfig): experimento
        jobs (int): procesos en paralelo (por defecto config.jobs); cada
            proceso construye sus propios oráculos

    Returns:
        dict: método -> SolverReport
    """
    jobs = config.jobs if jobs is None else jobs
    dataset = load_experiment_data(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    LOGGER.info("Experimento %s con %s (%d métodos)", config.problem.value, dataset.name,
                len(config.solvers))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_solver, config, dataset, method) for method in config.solvers]
            reports = [future.result() for future in futures]
    else:
        reports = [run_solver(config, dataset, method) for method in config.solvers]

    results = {}
    for method, report in zip(config.solvers, reports):
        path = out / f"{config.problem.value}_{method.value}.csv"
        report.to_frame(config.problem.value).to_csv(path, index=False, float_format='%.17g')
        results[method.value] = report
    best_value = _best_value(reports)

    metadata = {
        'config': asdict(config),
        'dataset': {'name': dataset.name, 'shape': list(dataset.shape), **dataset.metadata},
        'versions': {
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'pandas': pd.__version__,
        },
        'best_value': best_value,
        'solvers': {name: _report_summary(report, best_value) for name, report in results.items()},
    }
    with (out / "metadata.json").open('w') as handle:
        json.dump(metadata, handle, indent=2, default=_json_default)
    return results


class _Parser(argparse.ArgumentParser):
    """ArgumentParser que sale con código 1 en los errores de uso."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_param_flags(parser):
    parser.add_argument('--beta', type=float)
    parser.add_argument('--sigma', type=float)
    parser.add_argument('--cbig', type=float)
    parser.add_argument('--c1', type=float)
    parser.add_argument('--delta', type=float)
    parser.add_argument('--eps', type=float)


def build_parser():
    parser = _Parser(prog="bench_cli", description="Banco de pruebas de Newton Frank-Wolfe")
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help="genera datos sintéticos")
    gen.add_argument('--problem', required=True, choices=[p.value for p in Problem])
    gen.add_argument('--n', type=int, required=True)
    gen.add_argument('--p', type=int, required=True)
    gen.add_argument('--seed', type=int, required=True)
    gen.add_argument('--density', type=float, default=0.1)
    gen.add_argument('--out', required=True)

    run = commands.add_parser('run', help="ejecuta un experimento")
    run.add_argument('--config')
    run.add_argument('--problem', choices=[p.value for p in Problem])
    run.add_argument('--data')
    run.add_argument('--n', type=int)
    run.add_argument('--p', type=int)
    run.add_argument('--seed', type=int)
    run.add_argument('--solvers')
    _add_param_flags(run)
    run.add_argument('--max-lmo', type=int)
    run.add_argument('--max-seconds', type=float)
    run.add_argument('--max-iters', type=int)
    run.add_argument('--out')
    run.add_argument('--mu', type=float)
    run.add_argument('--rho', type=float)
    run.add_argument('--inner', choices=['away', 'fw'])
    run.add_argument('--standardize', action='store_true', default=None)
    run.add_argument('--density', type=float)
    run.add_argument('--jobs', type=int)

    check = commands.add_parser('check', help="valida los parámetros")
    _add_param_flags(check)
    check.add_argument('--grid-out')
    return parser


def _cmd_gen(args):
    dataset = generate_dataset(args.problem, args.n, args.p, args.seed, args.density)
    out = Path(args.out)
    if dataset.problem is Problem.LOGISTIC and out.suffix in LIBSVM_SUFFIXES:
        write_libsvm(dataset, out)
    else:
        save_dataset(dataset, out)
    print(f"{dataset.name}: matriz {dataset.shape[0]}x{dataset.shape[1]} guardada en {out}")
    return EXIT_OK


def _cmd_run(args):
    values = load_config_file(args.config) if args.config else {}
    flags = {key: value for key, value in vars(args).items()
             if value is not None and key in CONFIG_KEYS}
    config = config_from_values({**values, **flags})
    check = validate_params(config.params)
    if not check:
        raise InvalidParameterError(str(check))
    results = run_experiment(config)

    failed = False
    for name, report in results.items():
        status = report.termination.value if report.termination else "?"
        print(f"{name:14s} {status:12s} f = {report.final_value:.12g}  "
              f"LMO = {report.lmo_calls}")
        failed = failed or report.termination is Termination.ERROR
    print(f"Trazas en {config.out}")
    return EXIT_SOLVER if failed else EXIT_OK


def _cmd_check(args):
    defaults = SolverParams()
    params = SolverParams(
        beta=defaults.beta if args.beta is None else args.beta,
        sigma=defaults.sigma if args.sigma is None else args.sigma,
        c_big=defaults.c_big if args.cbig is None else args.cbig,
        c_one=defaults.c_one if args.c1 is None else args.c1,
        delta=defaults.delta if args.delta is None else args.delta,
        eps=defaults.eps if args.eps is None else args.eps,
    )
    check = validate_params(params, rel_slack=0.0)
    print(f"Parámetros: {params}")
    print(f"Resultado: {check}")
    if check:
        print(f"sigma mínima = {sigma_lower_bound(params.beta, params.c_big):.6g}")
        print(f"h_inv(beta) = {h_inv(params.beta):.10g}")
        print(f"eta_0 = {initial_eta(params):.6g}")
        print(f"nu = {nu_exponent(params.beta, params.sigma):.4f}")
    if args.grid_out:
        grid = feasible_region_grid(params.c_big)
        grid.to_csv(args.grid_out, index=False)
        print(f"Región factible guardada en {args.grid_out} ({int(grid['feasible'].sum())} "
              f"de {len(grid)} puntos factibles)")
    return EXIT_OK if check else EXIT_USAGE


def main(argv=None):
    """
    Punto de entrada.

    Returns:
        int: código de salida
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=args.log_level,
        format="%(levelname)s :: %(asctime)s :: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    commands = {'gen': _cmd_gen, 'run': _cmd_run, 'check': _cmd_check}
    try:
        return commands[args.command](args)
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"Error de datos: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InputValidationError, InvalidParameterError, UnsupportedMethodError) as exc:
        print(f"Error de uso: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NewtonFWError as exc:
        print(f"Error del método: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
