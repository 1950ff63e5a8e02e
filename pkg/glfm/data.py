import io
import logging
import warnings
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from glfm.exceptions import DataError, SpecError
from glfm.models import AttributeKind, DataMatrix, Preprocess
from glfm.schemas import AttributeSpec

logger = logging.getLogger(__name__)

# Upper bound of the reflected transform g2(x) = log((100 - x) + 1) (percentages).
REFLECT_BOUND = 100.0

KIND_TAGS = {
    "real": AttributeKind.REAL,
    "g": AttributeKind.REAL,
    "positivereal": AttributeKind.POSITIVE_REAL,
    "positive-real": AttributeKind.POSITIVE_REAL,
    "positive_real": AttributeKind.POSITIVE_REAL,
    "p": AttributeKind.POSITIVE_REAL,
    "categorical": AttributeKind.CATEGORICAL,
    "c": AttributeKind.CATEGORICAL,
    "ordinal": AttributeKind.ORDINAL,
    "o": AttributeKind.ORDINAL,
    "count": AttributeKind.COUNT,
    "n": AttributeKind.COUNT,
}

PREPROCESS_TAGS = {p.value: p for p in Preprocess}


# Attribute spec parsing
def _parse_spec_line(line: str, lineno: int) -> AttributeSpec:
    fields = [f.strip() for f in line.split(",")]
    if len(fields) < 2 or not fields[0]:
        raise SpecError(f"line {lineno}: expected 'name,kind[,categories][,preprocess]'")
    name, tag, extra = fields[0], fields[1].lower(), fields[2:]
    if tag not in KIND_TAGS:
        raise SpecError(f"line {lineno}: unknown attribute kind '{fields[1]}'")

    n_categories = None
    preprocess = Preprocess.NONE
    for item in extra:
        if not item:
            continue
        if item.lower() in PREPROCESS_TAGS:
            preprocess = PREPROCESS_TAGS[item.lower()]
            continue
        try:
            n_categories = int(item)
        except ValueError:
            raise SpecError(f"line {lineno}: cannot read '{item}' as a category count or preprocess tag")

    try:
        return AttributeSpec(name=name, kind=KIND_TAGS[tag], n_categories=n_categories, preprocess=preprocess)
    except ValidationError as e:
        raise SpecError(f"line {lineno}: {e.errors()[0]['msg']}")


def parse_attribute_spec(spec_file: str) -> List[AttributeSpec]:
    """One attribute per line: name,kind[,R_d][,preprocess]. Blank lines and '#' comments are skipped."""
    specs = []
    for lineno, line in enumerate(spec_file.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        specs.append(_parse_spec_line(line, lineno))
    if not specs:
        raise SpecError("spec file declares no attributes")
    return specs


def read_spec_file(path: Path) -> List[AttributeSpec]:
    return parse_attribute_spec(Path(path).read_text(encoding="utf-8"))


# Preprocess transforms
def apply_preprocess(x: np.ndarray, preprocess: Preprocess) -> np.ndarray:
    if preprocess == Preprocess.LOG1P:
        return np.log1p(x)
    if preprocess == Preprocess.REFLECTED_LOG1P:
        return np.log1p(REFLECT_BOUND - x)
    return x


def invert_preprocess(v: np.ndarray, preprocess: Preprocess) -> np.ndarray:
    if preprocess == Preprocess.LOG1P:
        return np.expm1(v)
    if preprocess == Preprocess.REFLECTED_LOG1P:
        return REFLECT_BOUND - np.expm1(v)
    return v


def preprocess_log_jacobian(x: np.ndarray, preprocess: Preprocess) -> np.ndarray:
    """log |dg/dx| in original units."""
    x = np.asarray(x, dtype=float)
    if preprocess == Preprocess.LOG1P:
        return -np.log1p(x)
    if preprocess == Preprocess.REFLECTED_LOG1P:
        return -np.log1p(REFLECT_BOUND - x)
    return np.zeros_like(x)


# Dataset loading
def _is_missing(cell: str, sentinel: str) -> bool:
    text = cell.strip()
    if text == "" or text == sentinel:
        return True
    if sentinel:
        try:
            return float(text) == float(sentinel)
        except ValueError:
            return False
    return False


def _order_labels(kind: AttributeKind, seen: List[str], known: List[str]) -> List[str]:
    new = [label for label in seen if label not in known]
    if kind == AttributeKind.ORDINAL and not known:
        # Ordinal levels are sorted when every label is a number, else kept in order of appearance.
        try:
            return sorted(new, key=float)
        except ValueError:
            return new
    return list(known) + new


def _encode_column(values: Sequence[str], missing: np.ndarray, spec: AttributeSpec) -> Tuple[np.ndarray, AttributeSpec]:
    n = len(values)
    out = np.full(n, np.nan)
    observed = [values[i].strip() for i in range(n) if not missing[i]]
    update = {}

    if spec.kind.is_discrete_finite:
        seen = list(dict.fromkeys(observed))
        labels = _order_labels(spec.kind, seen, spec.labels)
        if len(labels) > spec.n_categories:
            raise DataError(
                f"column '{spec.name}': {len(labels)} distinct labels exceed the declared {spec.n_categories} categories"
            )
        index = {label: i + 1 for i, label in enumerate(labels)}
        for i in range(n):
            if not missing[i]:
                out[i] = index[values[i].strip()]
        update["labels"] = labels
        return out, spec.model_copy(update=update)

    for i in range(n):
        if missing[i]:
            continue
        text = values[i].strip()
        try:
            out[i] = float(text)
        except ValueError:
            raise DataError(f"column '{spec.name}', row {i + 1}: non-numeric value '{text}'")
        if not np.isfinite(out[i]):
            raise DataError(f"column '{spec.name}', row {i + 1}: non-finite value '{text}'")

    obs = out[~missing]
    if obs.size:
        update["value_min"] = float(obs.min())
        update["value_max"] = float(obs.max())

    if spec.kind == AttributeKind.COUNT:
        bad = obs[(obs != np.floor(obs)) | (obs < 0)]
        if bad.size:
            raise DataError(f"column '{spec.name}': count attributes need non-negative integers, got {bad[0]:g}")
        update["max_count"] = int(obs.max()) if obs.size else 0
    else:
        if spec.preprocess == Preprocess.REFLECTED_LOG1P and np.any(obs > REFLECT_BOUND):
            raise DataError(f"column '{spec.name}': reflected-log1p needs values <= {REFLECT_BOUND:g}")
        out = apply_preprocess(out, spec.preprocess)
        if spec.kind == AttributeKind.POSITIVE_REAL and np.any(out[~missing] <= 0):
            raise DataError(f"column '{spec.name}': positive real attributes need values > 0")

    return out, spec.model_copy(update=update)


def load_dataset(csv: str, specs: Sequence[AttributeSpec], missing_sentinel: str = "") -> DataMatrix:
    """Parse CSV text (header row required) into an encoded DataMatrix."""
    try:
        with warnings.catch_warnings():
            # extra trailing fields only warn; index_col=False stops them becoming an index
            warnings.simplefilter("error", pd.errors.ParserWarning)
            df = pd.read_csv(io.StringIO(csv), dtype=str, keep_default_na=False, na_filter=False,
                             skipinitialspace=False, index_col=False)
    except pd.errors.EmptyDataError:
        raise DataError("input has no header row")
    except (pd.errors.ParserError, pd.errors.ParserWarning) as e:
        raise DataError(f"ragged rows: {e}")

    if df.shape[1] != len(specs):
        raise DataError(f"input has {df.shape[1]} columns but the spec declares {len(specs)}")
    if df.shape[0] < 1:
        raise DataError("input has no data rows")
    if df.isna().any().any():
        raise DataError("ragged rows: some rows have fewer fields than the header")
    for column, spec in zip(df.columns, specs):
        if column.strip() != spec.name:
            logger.warning("Column '%s' is declared as '%s' in the spec", column, spec.name)

    raw = df.values.tolist()
    N, D = df.shape
    missing = np.array([[_is_missing(cell, missing_sentinel) for cell in row] for row in raw], dtype=bool).reshape(N, D)
    cells = np.full((N, D), np.nan)
    encoded_specs = []
    for d, spec in enumerate(specs):
        column, new_spec = _encode_column([row[d] for row in raw], missing[:, d], spec)
        cells[:, d] = column
        encoded_specs.append(new_spec)

    logger.info("Loaded %d rows x %d attributes, %d missing cells", N, D, int(missing.sum()))
    return DataMatrix(cells=cells, missing=missing, specs=encoded_specs, raw=raw, header=[str(c) for c in df.columns])


def read_dataset(path: Path, specs: Sequence[AttributeSpec], missing_sentinel: str = "") -> DataMatrix:
    return load_dataset(Path(path).read_text(encoding="utf-8"), specs, missing_sentinel)


# Transform parameters
def fit_transform_params(column: np.ndarray, mask: np.ndarray, kind: AttributeKind) -> Tuple[float, float]:
    """Data driven (w, mu). `mask` marks missing entries, which are excluded."""
    if kind.is_discrete_finite:
        return 1.0, 0.0
    values = np.asarray(column, dtype=float)[~np.asarray(mask, dtype=bool)]
    if values.size < 2:
        raise DataError("at least two observed values are needed to fit transform parameters")
    std = float(np.std(values, ddof=1))
    if std <= 0:
        raise DataError("degenerate column: standard deviation is zero")
    # f(y) = w y + mu, so w carries the scale back and pseudo-observations stay O(1)
    if kind == AttributeKind.REAL:
        return std, float(values.mean())
    return std / 2.0, float(values.min())


def fit_transforms(data: DataMatrix) -> DataMatrix:
    specs = []
    for d, spec in enumerate(data.specs):
        try:
            w, mu = fit_transform_params(data.cells[:, d], data.missing[:, d], spec.kind)
        except DataError as e:
            logger.warning("Keeping w=1, mu=0 for '%s': %s", spec.name, e.detail)
            w, mu = 1.0, 0.0
        specs.append(spec.model_copy(update={"w": w, "mu": mu}))
    return DataMatrix(cells=data.cells, missing=data.missing, specs=specs, raw=data.raw, header=data.header)


# Decoding
def decode_cell(spec: AttributeSpec, value: float):
    """Encoded value -> original units or label."""
    if spec.kind.is_discrete_finite:
        index = int(value)
        if 1 <= index <= len(spec.labels):
            return spec.labels[index - 1]
        return str(index)
    if spec.kind == AttributeKind.COUNT:
        return int(value)
    return float(invert_preprocess(np.asarray(value, dtype=float), spec.preprocess))


def format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".10g")


# Row selection and masking
def rows_all_equal(data: DataMatrix, label: str) -> np.ndarray:
    """Rows whose observed discrete cells all carry `label` (and have at least one)."""
    discrete = [d for d, spec in enumerate(data.specs) if spec.kind.is_discrete_finite]
    pinned = np.zeros(data.n_rows, dtype=bool)
    for n in range(data.n_rows):
        labels = [decode_cell(data.specs[d], data.cells[n, d]) for d in discrete if not data.missing[n, d]]
        pinned[n] = bool(labels) and all(lab == label for lab in labels)
    return pinned


def mask_heldout(rng: np.random.Generator, data: DataMatrix, fraction: float) -> Tuple[DataMatrix, np.ndarray]:
    """Hide a uniformly chosen `fraction` of the observed cells (MCAR)."""
    if not 0 <= fraction < 1:
        raise DataError("held-out fraction must lie in [0, 1)")
    observed = np.flatnonzero(~data.missing.ravel())
    n_hide = int(round(fraction * observed.size))
    hidden = np.zeros(data.missing.size, dtype=bool)
    hidden[rng.choice(observed, size=n_hide, replace=False)] = True
    hidden = hidden.reshape(data.missing.shape)
    return data.with_missing(data.missing | hidden), hidden

