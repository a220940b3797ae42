import argparse
import logging
import sys
from collections import namedtuple
from pathlib import Path
from typing import Iterable
import numpy as np

from error_metrics import run_convergence_study
from export import export_run, load_state, write_convergence, write_history, write_vtk
from factory import Cases
from hoist_config import load_config
from initialization import init_solution
from mesh_generators import refine
from robustness import Robustness
from simplex_mesh import all_element_measures, read_mesh, write_mesh
from sqp_solver import TrackingProblem, hoist_solve, start_state
from utilies import HoistError

logger = logging.getLogger(__name__)

EXIT_CODES = {'converged': 0, 'max_iterations': 2, 'failed': 3}
EXIT_ERROR = 3

RunOutcome = namedtuple('RunOutcome', ['case', 'result', 'metrics', 'mesh', 'h'])


def mesh_size(mesh):
    """(domain measure / element count)^(1/d) of a mesh."""
    return float((all_element_measures(mesh).v0.sum() / mesh.n_elems) ** (1.0 / mesh.dim))


def run_case(config, level=None):
    """One tracking solve of ``config`` on refinement ``level`` (default: the configured one)."""
    case = config.tracking_case()
    level = config.discretization.refinement if level is None else level
    if config.discretization.mesh:
        mesh = read_mesh(config.discretization.mesh)
        for _ in range(level):
            mesh = refine(mesh)
    else:
        mesh = case.mesh(level)
    h = mesh_size(mesh)
    model = case.model()
    logger.info("case %s: p = %d, q = %d, level %d, %d elements", case.NAME, case.p, mesh.q, level, mesh.n_elems)
    problem = TrackingProblem(model, mesh, case.p, case.boundaries(), config.ideal, config.sqp.poisson)
    u0 = init_solution(model, mesh, case.p)
    state = start_state(problem, u0, config.sqp)
    result = hoist_solve(problem, state, config.sqp, Robustness(config.robustness))
    final = result.problem.mesh.with_nodes(result.problem.coordinates(result.state.y))
    try:
        metrics = case.metrics(result.problem, result.state.u, result.state.y)
    except (HoistError, ValueError) as exc:
        logger.warning("error metrics unavailable: %s", exc)
        metrics = {}
    for name, value in metrics.items():
        logger.info("%s = %s", name, value)
    return RunOutcome(case, result, metrics, final, h)


def _directional_error(exact, plus, minus, eps):
    fd = (plus - minus) / (2.0 * eps)
    scale = max(float(np.linalg.norm(fd)), float(np.linalg.norm(exact)), 1e-14)
    return float(np.linalg.norm(exact - fd)) / scale


def check_jacobians(problem, u, x, directions=20, eps=1e-6, seed=0):
    """
    Largest relative error of central differences against the assembled Jacobians
    along random directions, per Jacobian.
    """
    rng = np.random.default_rng(seed)
    asm, dist = problem.assembler, problem.distortion
    std, enr = asm.linearize(u, x), asm.linearize(u, x, problem.degree + 1)
    _, dmsh = dist.linearize(x)
    # coordinate directions scaled by the smallest element size keep elements valid
    h = float(all_element_measures(problem.mesh, x).l_min.min())
    errors = {'dr/du': 0.0, 'dr/dx': 0.0, 'dR/du': 0.0, 'dR/dx': 0.0, 'dR_msh/dx': 0.0}
    for _ in range(directions):
        du = rng.standard_normal(len(u))
        dx = h * rng.uniform(-1.0, 1.0, len(x))
        for name, jac, f in (('dr/du', std.du, lambda t: asm.residual(u + t * du, x)),
                             ('dR/du', enr.du, lambda t: asm.residual(u + t * du, x, problem.degree + 1))):
            errors[name] = max(errors[name], _directional_error(jac @ du, f(eps), f(-eps), eps))
        for name, jac, f in (('dr/dx', std.dx, lambda t: asm.residual(u, x + t * dx)),
                             ('dR/dx', enr.dx, lambda t: asm.residual(u, x + t * dx, problem.degree + 1)),
                             ('dR_msh/dx', dmsh, lambda t: dist.values(x + t * dx))):
            errors[name] = max(errors[name], _directional_error(jac @ dx, f(eps), f(-eps), eps))
    return errors


def cmd_run(args):
    config = load_config(args.config)
    outcome = run_case(config)
    state = outcome.result.state
    export_run(config.output.path, config.case, outcome.mesh, state.u, outcome.case.p, outcome.case.model(),
               state, config.output.write_vtk, config.case_options)
    logger.info("results written to %s", config.output.path)
    return EXIT_CODES[outcome.result.status]


def cmd_study(args):
    config = load_config(args.config)

    def solve(level):
        outcome = run_case(config, level)
        numbers = {k: float(v) for k, v in outcome.metrics.items() if isinstance(v, (int, float))}
        return outcome.h, outcome.mesh.n_elems, numbers, outcome.result.status

    case = config.tracking_case()
    record = run_convergence_study(solve, args.levels, case.p, case.q)
    directory = config.output.path
    directory.mkdir(parents=True, exist_ok=True)
    path = write_convergence(directory / f"{config.case}_p{case.p}_convergence.csv", record)
    logger.info("convergence table written to %s", path)
    if any(level['status'] == 'failed' for level in record.levels):
        return EXIT_ERROR
    return 0 if all(level['status'] == 'converged' for level in record.levels) else EXIT_CODES['max_iterations']


def cmd_check_jacobians(args):
    config = load_config(args.config)
    case = config.tracking_case()
    mesh = case.mesh(config.discretization.refinement)
    model = case.model()
    problem = TrackingProblem(model, mesh, case.p, case.boundaries(), config.ideal, config.sqp.poisson)
    u0 = init_solution(model, mesh, case.p)
    errors = check_jacobians(problem, u0, mesh.nodes.reshape(-1), args.directions, args.eps)
    for name, value in errors.items():
        logger.info("%-10s %.3e", name, value)
    return 0 if max(errors.values()) <= args.tolerance else EXIT_ERROR


def cmd_export(args):
    archive = load_state(args.state)
    directory = Path(args.output or '.')
    directory.mkdir(parents=True, exist_ok=True)
    case = archive['case']
    if args.format == 'mesh':
        path = write_mesh(archive['mesh'], directory / f"{case}.mesh")
    elif args.format == 'vtk':
        model = Cases[case](archive['p'], archive['mesh'].q, **archive['case_options']).model()
        path = write_vtk(directory / f"{case}.vtk", archive['mesh'], archive['u'], archive['p'], model)
    else:
        path = write_history(directory / f"{case}_history.csv", archive['history'])
    logger.info("wrote %s", path)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog='hoist', description="High-order implicit shock tracking")
    ap.add_argument('--verbose', '-v', action='store_true', help="debug output and tracebacks")
    ap.add_argument('--quiet', '-q', action='store_true', help="warnings and errors only")
    sub = ap.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help="track one case")
    run.add_argument('config')
    run.set_defaults(func=cmd_run)

    study = sub.add_parser('study', help="convergence study over uniform refinements")
    study.add_argument('config')
    study.add_argument('--levels', type=int, default=4)
    study.set_defaults(func=cmd_study)

    check = sub.add_parser('check-jacobians', help="finite-difference checks at the initial iterate")
    check.add_argument('config')
    check.add_argument('--directions', type=int, default=20)
    check.add_argument('--eps', type=float, default=1e-6)
    check.add_argument('--tolerance', type=float, default=1e-6)
    check.set_defaults(func=cmd_check_jacobians)

    export = sub.add_parser('export', help="convert a state archive")
    export.add_argument('state')
    export.add_argument('--format', choices=('mesh', 'vtk', 'csv'), default='vtk')
    export.add_argument('--output', default=None, help="output directory (default: current)")
    export.set_defaults(func=cmd_export)
    return ap


def main(argv: Iterable[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(format="%(message)s", level=level)
    try:
        return args.func(args)
    except (HoistError, OSError) as exc:
        logger.error("error: %s", exc, exc_info=args.verbose)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
