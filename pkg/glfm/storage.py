"""On-disk artifacts: state JSON, trace NDJSON and the CSV tables of each command."""
import logging
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from glfm import linalg
from glfm.exceptions import StateError
from glfm.models import LatentState, Trace
from glfm.schemas import BenchmarkReport, HeldoutScore, Pattern, StateDocument

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


def _write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="\n" keeps the bytes identical across platforms
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    logger.debug("Wrote %s", path)
    return path


def _write_frame(path: Path, frame: pd.DataFrame) -> Path:
    return _write_text(path, frame.to_csv(index=False, lineterminator="\n", float_format=FLOAT_FORMAT))


# State
def state_document(state: LatentState) -> StateDocument:
    return StateDocument(
        specs=state.specs,
        hyperparams=state.hp,
        Z=["".join(str(int(b)) for b in row) for row in state.Z],
        B=state.B.tolist(),
        Y=state.Y.tolist(),
        theta=[None if t is None else t.tolist() for t in state.theta],
        sigma2=state.sigma2.tolist(),
        pinned=np.flatnonzero(state.pinned).tolist(),
        rng=state.rng_state,
        iteration=state.iteration,
    )


def save_state(path: Path, state: LatentState) -> Path:
    return _write_text(path, state_document(state).model_dump_json(indent=2) + "\n")


def _state_from_document(doc: StateDocument) -> LatentState:
    N = len(doc.Z)
    K = len(doc.Z[0]) if N else 0
    if any(len(row) != K or set(row) - {"0", "1"} for row in doc.Z):
        raise StateError("Z rows must be 0/1 strings of equal length")

    slices, start = [], 0
    for spec in doc.specs:
        slices.append(slice(start, start + spec.width))
        start += spec.width

    Z = np.array([[float(c) for c in row] for row in doc.Z]).reshape(N, K)
    try:
        B = np.array(doc.B, dtype=float) if doc.B else np.zeros((K, start))
        Y = np.array(doc.Y, dtype=float) if doc.Y else np.zeros((N, start))
    except ValueError:
        raise StateError("B and Y must be rectangular")
    if B.shape != (K, start) or Y.shape != (N, start):
        raise StateError(f"state arrays disagree: Z is {N}x{K}, B is {B.shape}, Y is {Y.shape}")
    if len(doc.sigma2) != len(doc.specs) or len(doc.theta) != len(doc.specs):
        raise StateError("sigma2 and theta need one entry per attribute")

    if any(not 0 <= i < N for i in doc.pinned):
        raise StateError("pinned row index out of range")
    pinned = np.zeros(N, dtype=bool)
    pinned[doc.pinned] = True
    P, lam = linalg.natural_params(Z, Y, doc.hyperparams.sigma_B2)
    return LatentState(
        Z=Z, B=B, Y=Y,
        theta=[None if t is None else np.array(t, dtype=float) for t in doc.theta],
        sigma2=np.array(doc.sigma2, dtype=float), P=P, lam=lam,
        specs=list(doc.specs), hp=doc.hyperparams, slices=slices, pinned=pinned, rng_state=doc.rng,
        iteration=doc.iteration,
    )


def load_state(path: Path) -> LatentState:
    try:
        doc = StateDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as e:
        raise StateError(f"{path}: not a valid state document ({e.error_count()} errors)")
    return _state_from_document(doc)


# Trace
def write_trace(path: Path, trace: Trace) -> Path:
    return _write_text(path, "".join(record.model_dump_json() + "\n" for record in trace.records))


# Tables
def write_completed(path: Path, frame: pd.DataFrame) -> Path:
    return _write_frame(path, frame)


def write_patterns(path: Path, patterns: Sequence[Pattern]) -> Path:
    frame = pd.DataFrame(
        [(p.label, "".join(map(str, p.bits)), p.empirical_prob, p.count) for p in patterns],
        columns=["pattern", "bits", "probability", "count"],
    )
    return _write_frame(path, frame)


def write_feature_probs(path: Path, probs: Sequence[float]) -> Path:
    frame = pd.DataFrame({"feature": range(1, len(probs) + 1), "probability": list(probs)})
    return _write_frame(path, frame)


def write_pdfs(path: Path, rows: Iterable[Tuple[str, str, object, float]]) -> Path:
    """rows: (pattern label, attribute, value, density or probability)."""
    frame = pd.DataFrame(list(rows), columns=["pattern", "attribute", "value", "density"])
    frame["value"] = frame["value"].map(lambda v: v if isinstance(v, str) else format(v, ".10g"))
    return _write_frame(path, frame)


def write_scores(path: Path, scores: Union[HeldoutScore, BenchmarkReport]) -> Path:
    return _write_text(path, scores.model_dump_json(indent=2) + "\n")

