from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional

import numpy as np

if TYPE_CHECKING:
    from glfm.schemas import AttributeSpec, Hyperparams


# Enums
class AttributeKind(str, enum.Enum):
    REAL = "real"
    POSITIVE_REAL = "positivereal"
    CATEGORICAL = "categorical"
    ORDINAL = "ordinal"
    COUNT = "count"

    @property
    def is_discrete_finite(self) -> bool:
        return self in (AttributeKind.CATEGORICAL, AttributeKind.ORDINAL)

    @property
    def is_continuous(self) -> bool:
        return self in (AttributeKind.REAL, AttributeKind.POSITIVE_REAL)


class Preprocess(str, enum.Enum):
    NONE = "none"
    LOG1P = "log1p"  # g1(x) = log(x + 1)
    REFLECTED_LOG1P = "reflected-log1p"  # g2(x) = log((100 - x) + 1)


class BirthMode(str, enum.Enum):
    POSTERIOR = "posterior"
    PRIOR = "prior"


# Containers
@dataclass
class DataMatrix:
    """Encoded N x D observation table.

    `cells` holds encoded values (category indices 1..R_d, counts, preprocessed
    reals); `raw` keeps the source text so untouched cells can be written back
    byte for byte.
    """

    cells: np.ndarray
    missing: np.ndarray
    specs: List["AttributeSpec"]
    raw: List[List[str]] = field(default_factory=list)
    header: List[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_cols(self) -> int:
        return self.cells.shape[1]

    @property
    def names(self) -> List[str]:
        return [spec.name for spec in self.specs]

    def with_missing(self, missing: np.ndarray) -> "DataMatrix":
        cells = self.cells.copy()
        cells[missing] = np.nan
        return DataMatrix(cells=cells, missing=missing.copy(), specs=self.specs, raw=self.raw, header=self.header)


@dataclass
class LatentState:
    """One sample of the hidden variables plus the maintained natural parameters.

    Pseudo-observations and weights of all attributes share one column space:
    attribute d owns the columns `slices[d]` (R_d of them when categorical, one
    otherwise). P = Z'Z + I/sigma_B^2 and lam = Z'Y are kept in step with Z and Y.
    """

    Z: np.ndarray
    B: np.ndarray
    Y: np.ndarray
    theta: List[Optional[np.ndarray]]
    sigma2: np.ndarray
    P: np.ndarray
    lam: np.ndarray
    specs: List["AttributeSpec"]
    hp: "Hyperparams"
    slices: List[slice]
    pinned: np.ndarray
    rng_state: Optional[dict] = None
    # sweeps completed so far; a resumed chain continues from here
    iteration: int = 0
    # Cholesky factor of P and P^{-1}; None when they must be rebuilt from P.
    L: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None

    @property
    def n_rows(self) -> int:
        return self.Z.shape[0]

    @property
    def n_dims(self) -> int:
        return len(self.specs)

    @property
    def K_plus(self) -> int:
        return self.Z.shape[1]

    @property
    def n_fixed(self) -> int:
        # bias column is never sampled
        return 1 if self.hp.bias else 0

    def B_d(self, d: int) -> np.ndarray:
        return self.B[:, self.slices[d]]

    def Y_d(self, d: int) -> np.ndarray:
        return self.Y[:, self.slices[d]]

    def lam_d(self, d: int) -> np.ndarray:
        return self.lam[:, self.slices[d]]

    def column_variances(self) -> np.ndarray:
        """sigma_d^2 repeated over the columns each attribute owns."""
        widths = [s.stop - s.start for s in self.slices]
        return np.repeat(self.sigma2, widths)

    def copy(self) -> "LatentState":
        return LatentState(
            Z=self.Z.copy(),
            B=self.B.copy(),
            Y=self.Y.copy(),
            theta=[None if t is None else t.copy() for t in self.theta],
            sigma2=self.sigma2.copy(),
            P=self.P.copy(),
            lam=self.lam.copy(),
            specs=self.specs,
            hp=self.hp,
            slices=list(self.slices),
            pinned=self.pinned.copy(),
            rng_state=None if self.rng_state is None else dict(self.rng_state),
            iteration=self.iteration,
            L=None if self.L is None else self.L.copy(),
            Q=None if self.Q is None else self.Q.copy(),
        )


@dataclass
class Trace:
    """Per-sweep records of a chain plus the post burn-in states it kept."""

    records: List = field(default_factory=list)
    samples: List[LatentState] = field(default_factory=list)

    @property
    def final_log_joint(self) -> float:
        return self.records[-1].log_joint if self.records else float("-inf")
