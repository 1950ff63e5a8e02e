from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from glfm.models import AttributeKind, BirthMode, Preprocess


# Attribute schemas
class AttributeSpec(BaseModel):
    """Declared type of one column plus everything needed to encode and decode it."""

    model_config = ConfigDict(frozen=True)

    name: str
    kind: AttributeKind
    n_categories: Optional[int] = None
    w: float = Field(1.0, gt=0)
    mu: float = 0.0
    preprocess: Preprocess = Preprocess.NONE
    # Filled in by load_dataset: label i is encoded as i + 1.
    labels: List[str] = Field(default_factory=list)
    # Observed range in original units (grids for PDFs) and count support cap.
    value_min: Optional[float] = None
    value_max: Optional[float] = None
    max_count: Optional[int] = None

    @model_validator(mode="after")
    def check_kind_fields(self):
        if self.kind.is_discrete_finite:
            if self.n_categories is None or self.n_categories < 2:
                raise ValueError(f"{self.name}: {self.kind.value} attributes need at least 2 categories")
            if len(self.labels) > self.n_categories:
                raise ValueError(f"{self.name}: {len(self.labels)} labels exceed the declared {self.n_categories} categories")
        elif self.n_categories is not None:
            raise ValueError(f"{self.name}: a category count is only valid for categorical or ordinal attributes")
        if self.preprocess != Preprocess.NONE and not self.kind.is_continuous:
            raise ValueError(f"{self.name}: preprocessing is only valid for real or positive real attributes")
        return self

    @property
    def width(self) -> int:
        """Number of pseudo-observation columns (S_d)."""
        return self.n_categories if self.kind == AttributeKind.CATEGORICAL else 1


# Sampler schemas
class Hyperparams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(5.0, ge=0)
    sigma_B2: float = Field(1.0, gt=0)
    sigma_y2: float = Field(1.0, gt=0)
    sigma_u2: float = Field(0.01, gt=0)
    sigma_theta2: float = Field(1.0, gt=0)
    beta1: float = Field(1.0, gt=0)
    beta2: float = Field(1.0, gt=0)
    K_max: int = Field(50, ge=1)
    K_init: int = Field(2, ge=0)
    bias: bool = False
    sample_variance: bool = False
    iterations: int = Field(1000, ge=0)
    burn_in: int = Field(200, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    birth: BirthMode = BirthMode.POSTERIOR
    max_births: int = Field(3, ge=0)
    refresh_every: int = Field(100, ge=1)  # sweeps between full recomputations of P and lam
    gh_nodes: int = Field(32, ge=2)
    keep_last: int = Field(1, ge=1)  # post burn-in states kept for averaged scoring

    @model_validator(mode="after")
    def check_schedule(self):
        if self.iterations > 0 and self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        return self


class TraceRecord(BaseModel):
    iteration: int
    k_plus: int
    log_joint: float
    sigma2: List[float]


# Task schemas
class Pattern(BaseModel):
    bits: Tuple[int, ...]
    empirical_prob: float
    count: int
    bias: bool = False

    @property
    def label(self) -> str:
        # Bias is active in every pattern, so it is left out of the label.
        bits = self.bits[1:] if self.bias else self.bits
        return "(" + "".join(str(b) for b in bits) + ")"


class HeldoutScore(BaseModel):
    average: float
    per_dimension: Dict[str, float]
    n_cells: int


class BenchmarkReport(BaseModel):
    heldout_fraction: float
    splits: List[HeldoutScore]
    mean: float
    per_dimension_mean: Dict[str, float]


class StateDocument(BaseModel):
    """Single JSON document holding a full chain state."""

    specs: List[AttributeSpec]
    hyperparams: Hyperparams
    Z: List[str]
    B: List[List[float]]
    Y: List[List[float]]
    theta: List[Optional[List[float]]]
    sigma2: List[float]
    pinned: List[int] = Field(default_factory=list)
    rng: Optional[dict] = None
    iteration: int = Field(0, ge=0)


# Command schemas
class RunConfig(BaseModel):
    subcommand: str
    input_path: Path
    spec_path: Path
    output_dir: Path
    hp: Hyperparams = Field(default_factory=Hyperparams)
    heldout_fraction: Optional[float] = Field(None, ge=0, lt=1)
    splits: int = Field(1, ge=1)
    missing_sentinel: str = ""
    chains: int = Field(1, ge=1)
    top_k: int = Field(10, ge=1)
    state_path: Optional[Path] = None
    fit_transform: bool = True
    pin_label: Optional[str] = None
    grid_points: int = Field(200, ge=2)
    progress: bool = False

    @field_validator("subcommand")
    @classmethod
    def known_subcommand(cls, v):
        if v not in ("infer", "complete", "explore"):
            raise ValueError(f"Unknown subcommand {v}")
        return v

    @model_validator(mode="after")
    def check_heldout(self):
        if self.heldout_fraction is not None and self.subcommand != "complete":
            raise ValueError("--heldout is only valid with complete")
        return self
