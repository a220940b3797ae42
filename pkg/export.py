import csv
import json
import logging
from functools import lru_cache
from pathlib import Path
import meshio
import numpy as np

from quadrature import nodal_basis
from simplex_mesh import SimplexMesh, write_mesh
from sqp_solver import HistoryRecord
from utilies import NonphysicalStateError

logger = logging.getLogger(__name__)

EVENT_FIELDS = ('k', 'event', 'detail', 'elements')


@lru_cache(maxsize=None)
def sub_lattice(dim, level):
    """
    Master points of the level-``level`` lattice and the straight sub-cells over it.
    :return: (points (np, dim), cells (nc, dim + 1))
    """
    if dim == 1:
        points = np.linspace(0.0, 1.0, level + 1)[:, None]
        cells = np.column_stack([np.arange(level), np.arange(1, level + 1)])
        return points, cells
    index, points = {}, []
    for j in range(level + 1):
        for i in range(level + 1 - j):
            index[i, j] = len(points)
            points.append((i / level, j / level))
    cells = []
    for j in range(level):
        for i in range(level - j):
            cells.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j < level - 1:
                cells.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return np.array(points), np.array(cells)


def _edge_lattice(level):
    """Lattice point ids along the three triangle edges, in order."""
    points, _ = sub_lattice(2, level)
    lookup = {tuple(np.round(p * level).astype(int)): k for k, p in enumerate(points)}
    t = range(level + 1)
    return [[lookup[i, 0] for i in t], [lookup[level - i, i] for i in t], [lookup[0, level - i] for i in t]]


def point_fields(model, U, X):
    """Named per-point fields of states ``U`` (npts, m) at physical points ``X``."""
    fields = {f"u{c}": np.real(U[:, c]) for c in range(U.shape[1])}
    fields['chi'] = np.real(model.chi(U))
    if hasattr(model, 'primitives'):
        try:
            rho, v, p = model.primitives(U, X)
        except NonphysicalStateError:
            logger.warning("non-physical states in the exported field; primitive fields skipped")
        else:
            fields['density'] = np.real(rho)
            fields['pressure'] = np.real(p)
            for i in range(v.shape[-1]):
                fields[f"velocity{i}"] = np.real(v[..., i])
    return fields


def vtk_mesh(mesh, u, degree, model, x=None):
    """
    meshio mesh of the solution: every element as a straight sub-triangulation at
    lattice level q + 1, plus its curved edges as polylines.
    """
    level = mesh.q + 1
    dim, m = mesh.dim, model.n_states
    lattice, sub_cells = sub_lattice(dim, level)
    coords = mesh.element_coords(x)
    X = np.einsum('pb,ebi->epi', mesh.basis.eval(lattice), coords)
    ue = np.asarray(u).reshape(mesh.n_elems, -1, m)
    U = np.einsum('pj,ejc->epc', nodal_basis(dim, degree).eval(lattice), ue)
    npts = len(lattice)
    offset = (np.arange(mesh.n_elems) * npts)[:, None, None]
    cells = (sub_cells[None] + offset).reshape(-1, dim + 1)

    points = X.reshape(-1, dim)
    points3 = np.zeros((len(points), 3))
    points3[:, :dim] = points
    blocks = [('line' if dim == 1 else 'triangle', cells)]
    element_ids = [np.repeat(np.arange(mesh.n_elems), len(sub_cells))]
    if dim == 2:
        edges = []
        for path in _edge_lattice(level):
            path = np.array(path)
            edges.append(np.stack([path[:-1], path[1:]], axis=1)[None] + offset)
        edges = np.concatenate(edges, axis=1)
        blocks.append(('line', edges.reshape(-1, 2)))
        element_ids.append(np.repeat(np.arange(mesh.n_elems), edges.shape[1]))
    fields = point_fields(model, U.reshape(-1, m), points)
    return meshio.Mesh(points3, blocks, point_data=fields, cell_data={'element': element_ids})


def write_vtk(path, mesh, u, degree, model, x=None):
    path = Path(path)
    try:
        meshio.write(path, vtk_mesh(mesh, u, degree, model, x), file_format='vtk', binary=False)
    except OSError as exc:
        raise OSError(f"Could not write visualization file {path}: {exc}") from exc
    logger.info("wrote %s", path)
    return path


def _write_rows(path, header, rows):
    path = Path(path)
    try:
        with open(path, 'w', newline='') as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"Could not write {path}: {exc}") from exc
    return path


def write_history(path, history):
    """One row per SQP iteration; an empty history gives the header only."""
    return _write_rows(path, HistoryRecord.FIELDS,
                       ([repr(getattr(rec, f)) for f in HistoryRecord.FIELDS] for rec in history))


def write_events(path, events):
    return _write_rows(path, EVENT_FIELDS, (list(event) for event in events))


def read_history(path):
    with open(path, newline='') as fh:
        reader = csv.DictReader(fh)
        return [HistoryRecord(**{k: (int(v) if k in ('k', 'n_elems', 'backtracks') else float(v))
                                 for k, v in row.items()}) for row in reader]


def write_convergence(path, record):
    """
    Columns p, q, n_elems, h, then each error and its segment-wise slope (empty on
    the first level).
    """
    names = record.metric_names
    slopes = {name: record.slopes(name) for name in names}
    header = ['p', 'q', 'n_elems', 'h', 'status'] + [c for name in names for c in (name, f"m_{name}")]
    rows = []
    for i, level in enumerate(record.levels):
        row = [record.p, record.q, level['n_elems'], repr(level['h']), level['status']]
        for name in names:
            row += [repr(float(level.get(name, np.nan))), '' if i == 0 else repr(float(slopes[name][i - 1]))]
        rows.append(row)
    return _write_rows(path, header, rows)


def read_convergence(path):
    with open(path, newline='') as fh:
        return list(csv.DictReader(fh))


def save_state(path, case, mesh, u, degree, history=(), case_options=None):
    """State archive: mesh arrays, coefficients, degrees, case and history."""
    path = Path(path)
    table = np.array([[float(getattr(rec, f)) for f in HistoryRecord.FIELDS] for rec in history]).reshape(
        -1, len(HistoryRecord.FIELDS))
    try:
        np.savez(path, dim=mesh.dim, q=mesh.q, p=degree, case=case,
                 case_options=json.dumps(case_options or {}), ref_nodes=mesh.ref_nodes, nodes=mesh.nodes,
                 elements=mesh.elements, boundary_faces=mesh.boundary_faces, fixed=mesh.fixed,
                 u=np.asarray(u), history=table)
    except OSError as exc:
        raise OSError(f"Could not write state archive {path}: {exc}") from exc
    return path


def load_state(path):
    """:return: dict with case, case_options, p, mesh, u, history"""
    try:
        data = np.load(path, allow_pickle=False)
    except OSError as exc:
        raise OSError(f"Could not read state archive {path}: {exc}") from exc
    with data:
        mesh = SimplexMesh(int(data['dim']), int(data['q']), data['ref_nodes'], data['nodes'], data['elements'],
                           data['boundary_faces'], data['fixed'])
        history = [HistoryRecord(**{f: (int(v) if f in ('k', 'n_elems', 'backtracks') else float(v))
                                    for f, v in zip(HistoryRecord.FIELDS, row)}) for row in data['history']]
        return {'case': str(data['case']), 'case_options': json.loads(str(data['case_options'])),
                'p': int(data['p']), 'mesh': mesh, 'u': data['u'].copy(), 'history': history}


def export_run(directory, case, mesh, u, degree, model, state, write_visualization=True, case_options=None):
    """Every artifact of a run, named after the case, in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [write_mesh(mesh, directory / f"{case}.mesh"),
             write_history(directory / f"{case}_history.csv", state.history),
             write_events(directory / f"{case}_events.csv", state.events),
             save_state(directory / f"{case}_state.npz", case, mesh, u, degree, state.history, case_options)]
    if write_visualization:
        paths.append(write_vtk(directory / f"{case}.vtk", mesh, u, degree, model))
    return paths
