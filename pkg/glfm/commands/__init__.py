"""One module per subcommand; each exposes run(config) -> exit status."""
import logging
from typing import Optional

import numpy as np

from glfm import storage
from glfm.data import fit_transforms, read_dataset, read_spec_file, rows_all_equal
from glfm.exceptions import StateError
from glfm.models import DataMatrix, LatentState
from glfm.schemas import RunConfig

logger = logging.getLogger(__name__)


def load_inputs(config: RunConfig) -> DataMatrix:
    specs = read_spec_file(config.spec_path)
    data = read_dataset(config.input_path, specs, config.missing_sentinel)
    if config.fit_transform:
        data = fit_transforms(data)
    return data


def pinned_rows(config: RunConfig, data: DataMatrix) -> Optional[np.ndarray]:
    if config.pin_label is None:
        return None
    pinned = rows_all_equal(data, config.pin_label)
    logger.info("Pinning %d rows whose discrete cells all read '%s'", int(pinned.sum()), config.pin_label)
    return pinned


def load_saved_state(config: RunConfig, data: DataMatrix) -> LatentState:
    """Saved state for this table; the table adopts the state's fitted specs."""
    state = storage.load_state(config.state_path)
    if state.n_rows != data.n_rows or [s.name for s in state.specs] != data.names:
        raise StateError(f"{config.state_path} was not learned on this table")
    data.specs = state.specs
    return state
