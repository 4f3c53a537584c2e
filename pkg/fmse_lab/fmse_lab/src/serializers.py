"""
Readers and writers for fields, pair arrays, DN matrices and JSON reports.

Binary pair format: b"FMSE", u32 format version, u32 components, u32 node count, then
node_count² × components float64 values, little-endian, pair-major with the components
of one pair contiguous. Scalar pair arrays (σ, operator and DN matrices) use
components = 1.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np

from fmse_lab.core.utils import json_digest, tool_version
from .exceptions import ConfigurationError
from .fields import BivariateVectorField
from .grid import Grid, ScalarField
from .solver import DnMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b"FMSE"
FORMAT_VERSION = 1
_HEADER = np.dtype('<u4')
_VALUES = np.dtype('<f8')
_FLOAT_FORMAT = '%.17g'


def _coordinate_header(n: int) -> str:
    return ','.join(f"coord_{k + 1}" for k in range(n))


def _load_table(path: PathLike, columns: int) -> np.ndarray:
    try:
        table = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    except (OSError, ValueError) as error:
        raise ConfigurationError(f"cannot read table {path}: {error}") from error
    if table.size and table.shape[1] != columns:
        raise ConfigurationError(f"{path}: expected {columns} columns, found {table.shape[1]}")
    return table.reshape(-1, columns)


# --- scalar fields -------------------------------------------------------------------

def write_scalar_csv(path: PathLike, u: ScalarField) -> Path:
    """node_index,coord_1..coord_n,value"""
    grid = u.grid
    table = np.column_stack([np.arange(grid.node_count), grid.nodes, u.values])
    header = f"node_index,{_coordinate_header(grid.n)},value"
    formats = ['%d'] + [_FLOAT_FORMAT] * (grid.n + 1)
    np.savetxt(path, table, delimiter=',', header=header, comments='', fmt=formats)
    return Path(path)


def read_scalar_csv(path: PathLike, grid: Grid) -> ScalarField:
    table = _load_table(path, grid.n + 2)
    indices = table[:, 0].astype(np.int64)
    if sorted(indices.tolist()) != list(range(grid.node_count)):
        raise ConfigurationError(f"{path}: node indices do not cover the {grid.node_count} grid nodes")
    values = np.empty(grid.node_count)
    values[indices] = table[:, -1]
    return ScalarField(grid, values)


def write_exterior_csv(path: PathLike, grid: Grid, f: Iterable[float]) -> Path:
    """exterior_node_index,value with global node indices in exterior order."""
    f = np.asarray(list(f), dtype=float)
    table = np.column_stack([grid.exterior_indices, f])
    np.savetxt(path, table, delimiter=',', header='exterior_node_index,value', comments='',
               fmt=['%d', _FLOAT_FORMAT])
    return Path(path)


def read_exterior_csv(path: PathLike, grid: Grid) -> np.ndarray:
    """Exterior data in `grid.exterior_indices` order; nodes not listed get 0."""
    table = _load_table(path, 2)
    position = {int(node): k for k, node in enumerate(grid.exterior_indices)}
    f = np.zeros(grid.exterior_indices.size)
    for node, value in table:
        if int(node) not in position:
            raise ConfigurationError(f"{path}: node {int(node)} is not an exterior node")
        f[position[int(node)]] = value
    return f


# --- pair arrays ---------------------------------------------------------------------

def encode_pair_array(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3 or values.shape[0] != values.shape[1]:
        raise ValueError(f"pair array must have shape (N, N) or (N, N, n), got {values.shape}")
    count, _, components = values.shape
    header = np.array([FORMAT_VERSION, components, count], dtype=_HEADER).tobytes()
    return MAGIC + header + np.ascontiguousarray(values, dtype=_VALUES).tobytes()


def decode_pair_array(payload: bytes, source: str = '<bytes>') -> np.ndarray:
    """Inverse of `encode_pair_array`; scalar arrays come back with shape (N, N)."""
    if payload[:4] != MAGIC:
        raise ConfigurationError(f"{source}: bad magic {payload[:4]!r}")
    if len(payload) < 16:
        raise ConfigurationError(f"{source}: truncated header")
    version, components, count = np.frombuffer(payload[4:16], dtype=_HEADER).tolist()
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"{source}: unsupported format version {version}")
    expected = count * count * components * _VALUES.itemsize
    body = payload[16:]
    if len(body) != expected:
        raise ConfigurationError(f"{source}: expected {expected} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype=_VALUES).reshape(count, count, components).astype(float)
    return values[:, :, 0] if components == 1 else values


def write_pair_binary(path: PathLike, values: np.ndarray) -> Path:
    Path(path).write_bytes(encode_pair_array(values))
    return Path(path)


def read_pair_binary(path: PathLike) -> np.ndarray:
    try:
        payload = Path(path).read_bytes()
    except OSError as error:
        raise ConfigurationError(f"cannot read {path}: {error}") from error
    return decode_pair_array(payload, str(path))


def write_vector_field(path: PathLike, A: BivariateVectorField) -> Path:
    return write_pair_binary(path, A.values)


def read_vector_field(path: PathLike, grid: Grid) -> BivariateVectorField:
    values = read_pair_binary(path)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.shape != (grid.node_count, grid.node_count, grid.n):
        raise ConfigurationError(f"{path}: vector field shape {values.shape} does not match the grid")
    return BivariateVectorField(grid, values)


def write_vector_field_csv(path: PathLike, A: BivariateVectorField) -> Path:
    """i,j,comp_1..comp_n for every ordered pair."""
    count, n = A.grid.node_count, A.grid.n
    i, j = np.meshgrid(np.arange(count), np.arange(count), indexing='ij')
    table = np.column_stack([i.reshape(-1), j.reshape(-1), A.values.reshape(-1, n)])
    header = 'i,j,' + ','.join(f"comp_{k + 1}" for k in range(n))
    np.savetxt(path, table, delimiter=',', header=header, comments='', fmt=['%d', '%d'] + [_FLOAT_FORMAT] * n)
    return Path(path)


def read_vector_field_csv(path: PathLike, grid: Grid) -> BivariateVectorField:
    table = _load_table(path, grid.n + 2)
    values = np.zeros((grid.node_count, grid.node_count, grid.n))
    i, j = table[:, 0].astype(np.int64), table[:, 1].astype(np.int64)
    if np.any((i < 0) | (i >= grid.node_count) | (j < 0) | (j >= grid.node_count)):
        raise ConfigurationError(f"{path}: pair index outside the grid")
    values[i, j] = table[:, 2:]
    return BivariateVectorField(grid, values)


# --- DN matrices ---------------------------------------------------------------------

def write_dn_csv(directory: PathLike, dn: DnMatrix, stem: str = 'dn') -> Dict[str, Path]:
    """<stem>.csv with row,col,value and <stem>_legend.csv with row,node_index,coords."""
    directory = Path(directory)
    count = dn.exterior_indices.size
    rows, cols = np.meshgrid(np.arange(count), np.arange(count), indexing='ij')
    matrix_path = directory / f"{stem}.csv"
    np.savetxt(matrix_path, np.column_stack([rows.reshape(-1), cols.reshape(-1), dn.matrix.reshape(-1)]),
               delimiter=',', header='row,col,value', comments='', fmt=['%d', '%d', _FLOAT_FORMAT])

    legend_path = directory / f"{stem}_legend.csv"
    legend = np.column_stack([np.arange(count), dn.exterior_indices, dn.legend()])
    np.savetxt(legend_path, legend, delimiter=',', header=f"row,node_index,{_coordinate_header(dn.grid.n)}",
               comments='', fmt=['%d', '%d'] + [_FLOAT_FORMAT] * dn.grid.n)
    return {'matrix': matrix_path, 'legend': legend_path}


def read_dn_matrix(path: PathLike, grid: Grid, potentials_hash: str = '') -> DnMatrix:
    """Load a DN matrix from the binary pair format or the row,col,value CSV."""
    count = grid.exterior_indices.size
    if str(path).endswith('.csv'):
        table = _load_table(path, 3)
        matrix = np.zeros((count, count))
        rows, cols = table[:, 0].astype(np.int64), table[:, 1].astype(np.int64)
        if np.any((rows < 0) | (rows >= count) | (cols < 0) | (cols >= count)):
            raise ConfigurationError(f"{path}: DN index outside 0..{count - 1}")
        matrix[rows, cols] = table[:, 2]
    else:
        matrix = read_pair_binary(path)
    if matrix.shape != (count, count):
        raise ConfigurationError(f"{path}: DN matrix shape {matrix.shape}, grid has {count} exterior nodes")
    return DnMatrix(
        grid=grid, matrix=matrix, exterior_indices=grid.exterior_indices.copy(),
        potentials_hash=potentials_hash, grid_hash=grid.digest, method='file',
    )


# --- reports -------------------------------------------------------------------------

def _to_json(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def report_json(report: Dict[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_to_json)


def build_report(body: Dict[str, Any], config_payload: Dict[str, Any], grid_hash: Optional[str],
                 schema_version: str = '1') -> Dict[str, Any]:
    """Attach the provenance keys every report carries."""
    report = dict(body)
    report.update({
        'config_hash': json_digest(config_payload),
        'grid_hash': grid_hash or '',
        'tool_version': tool_version(),
        'schema_version': schema_version,
    })
    return report


def write_report(path: PathLike, report: Dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(report_json(report) + '\n', encoding='utf-8')
    logger.info(f"Report written to {path}")
    return path
