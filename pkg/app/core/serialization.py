"""Model file loading, initial-state parsing and trajectory output (JSONL and CSV)."""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..models.model_file import (
    KrausModelFile,
    LindbladModelFile,
    ModelFile,
    complex_matrix_from_pairs,
    complex_matrix_to_pairs,
)
from .discrete import DiscreteChain, KrausModel
from .jump import SampledPath
from .logger import get_logger
from .model import DecompositionChoice, ExplicitSuperoperators, LindbladModel, NaturalChoice
from .numlin import DensityMatrix, Superoperator

logger = get_logger(__name__)

Trajectory = Union[SampledPath, DiscreteChain]


class ModelFileError(Exception):
    """Model file or state literal could not be parsed."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = ", ".join(part for part in (
            f"field '{field}'" if field else "",
            f"line {line}" if line else "",
        ) if part)
        super().__init__(f"{message} ({location})" if location else message)
        self.field = field
        self.line = line


def _line_of(text: str, key: str) -> Optional[int]:
    """First line mentioning a JSON key."""
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def parse_model_text(text: str) -> ModelFile:
    """Parse model JSON into a Lindblad or Kraus schema."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"Invalid JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise ModelFileError("Model file must contain a JSON object", line=1)

    is_kraus = data.get("kind") == "kraus" or "kraus_operators" in data
    schema = KrausModelFile if is_kraus else LindbladModelFile
    try:
        return schema.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        keys = [str(part) for part in error["loc"]]
        field = ".".join(keys) if keys else None
        line = next((n for n in (_line_of(text, k) for k in reversed(keys)) if n), None)
        raise ModelFileError(error["msg"], field=field, line=line) from e


def load_model_file(path: Union[str, Path]) -> Tuple[ModelFile, str]:
    """Read and parse a model file; returns the schema and the file's sha256."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ModelFileError(f"Cannot read model file {path}: {e.strerror}") from e
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ModelFileError(f"Model file {path} is not UTF-8") from e
    parsed = parse_model_text(text)
    logger.debug(f"Loaded {parsed.kind} model d={parsed.dim} from {path}")
    return parsed, model_hash(raw)


def model_hash(raw: bytes) -> str:
    """sha256 hex digest of the model file bytes."""
    return hashlib.sha256(raw).hexdigest()


def to_lindblad_model(schema: LindbladModelFile) -> Tuple[LindbladModel, DecompositionChoice]:
    """Domain model and decomposition choice from a Lindblad file."""
    model = LindbladModel(
        hamiltonian=complex_matrix_from_pairs(schema.hamiltonian),
        jump_operators=tuple(complex_matrix_from_pairs(v) for v in schema.jump_operators),
    )
    if schema.decomposition is None:
        return model, NaturalChoice()
    dim = schema.dim
    choice = ExplicitSuperoperators(
        l0=Superoperator(complex_matrix_from_pairs(schema.decomposition.l0), dim),
        jumps=tuple(Superoperator(complex_matrix_from_pairs(j), dim) for j in schema.decomposition.jumps),
    )
    return model, choice


def to_kraus_model(schema: KrausModelFile) -> KrausModel:
    """Domain model from a Kraus file."""
    return KrausModel(tuple(complex_matrix_from_pairs(v) for v in schema.kraus_operators))


def parse_theta0(text: str, dim: int) -> DensityMatrix:
    """Initial state from ``basis:n``, ``plus``, ``mixed`` or a JSON matrix literal."""
    text = text.strip()
    if text.startswith("basis:"):
        try:
            index = int(text.split(":", 1)[1])
        except ValueError as e:
            raise ModelFileError(f"Invalid basis index in '{text}'", field="theta0") from e
        if not 0 <= index < dim:
            raise ModelFileError(f"Basis index {index} outside 0..{dim - 1}", field="theta0")
        return DensityMatrix.basis(dim, index)
    if text == "plus":
        if dim != 2:
            raise ModelFileError("'plus' is only defined for d = 2", field="theta0")
        return DensityMatrix.pure([1.0, 1.0])
    if text == "mixed":
        return DensityMatrix.maximally_mixed(dim)

    try:
        matrix = complex_matrix_from_pairs(json.loads(text))
    except (json.JSONDecodeError, TypeError, ValueError, IndexError) as e:
        raise ModelFileError(f"Cannot parse initial state '{text}'", field="theta0") from e
    if matrix.shape != (dim, dim):
        raise ModelFileError(f"Initial state has shape {matrix.shape}, model has d={dim}", field="theta0")
    return DensityMatrix(matrix)


def trajectory_records(trajectory: Trajectory) -> Iterator[Dict[str, Any]]:
    """Per-node output records: {t, state[, counts]} for paths, {n, state, outcome} for chains."""
    if isinstance(trajectory, DiscreteChain):
        for n in range(trajectory.steps + 1):
            yield {
                "n": n,
                "state": complex_matrix_to_pairs(trajectory.states[n]),
                "outcome": int(trajectory.outcomes[n - 1]) if n > 0 else None,
            }
        return

    grid = trajectory.grid_view()
    counts = None
    if trajectory.unraveling == "jump":
        counts = grid.record.counts_until(grid.times, trajectory.num_detectors)
    for j, t in enumerate(grid.times):
        record: Dict[str, Any] = {"t": float(t), "state": complex_matrix_to_pairs(grid.states[j])}
        if counts is not None:
            record["counts"] = [int(c) for c in counts[j]]
        yield record


def trajectory_header(config_echo: Dict[str, Any], digest: str, index: int, seed: int) -> Dict[str, Any]:
    """Header record identifying a trajectory file."""
    return {"config": config_echo, "model_hash": digest, "trajectory": index, "seed": seed}


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def write_trajectory_jsonl(path: Path, header: Dict[str, Any], trajectory: Trajectory) -> Path:
    """Write the header line and one line per output node."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        handle.write(_dumps(header) + "\n")
        for record in trajectory_records(trajectory):
            handle.write(_dumps(record) + "\n")
    return path


def read_trajectory_jsonl(path: Path) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Header and records, with states decoded to DensityMatrix."""
    with Path(path).open("r", encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise ModelFileError(f"Trajectory file {path} is empty")
    header = json.loads(lines[0])
    records = []
    for line in lines[1:]:
        record = json.loads(line)
        record["state"] = DensityMatrix(complex_matrix_from_pairs(record["state"]))
        records.append(record)
    return header, records


def write_trajectory_csv(path: Path, trajectory: Trajectory) -> Path:
    """Plot-ready table: time (or step), populations, purity."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(trajectory, DiscreteChain):
        axis, times, states = "n", np.arange(trajectory.steps + 1), trajectory.states
    else:
        grid = trajectory.grid_view()
        axis, times, states = "t", grid.times, grid.states
    dim = states.shape[1]

    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([axis, *(f"p{i}" for i in range(dim)), "purity"])
        for t, state in zip(times, states):
            populations = np.real(np.diag(state))
            purity = float(np.real(np.trace(state @ state)))
            writer.writerow([repr(float(t)) if axis == "t" else int(t), *(repr(float(p)) for p in populations), repr(purity)])
    return path


def trajectory_filename(index: int, suffix: str = "jsonl") -> str:
    """trajectory_00000.jsonl, ..."""
    return f"trajectory_{index:05d}.{suffix}"
