import numpy as np
import pytest

from glfm import randkit
from glfm.data import load_dataset, parse_attribute_spec
from glfm.schemas import Hyperparams

MIXED_SPEC = """\
# one attribute of each kind
height,real
income,positivereal
colour,categorical,3
grade,ordinal,3
visits,count
"""


def mixed_csv(n_rows: int = 40, seed: int = 3, missing_every: int = 7) -> str:
    """Small heterogeneous table; every `missing_every`-th cell is left empty."""
    rng = np.random.default_rng(seed)
    lines = ["height,income,colour,grade,visits"]
    colours = ["red", "green", "blue"]
    for n in range(n_rows):
        group = n % 2
        cells = [
            f"{rng.normal(170 + 10 * group, 5):.2f}",
            f"{rng.gamma(2.0 + 3 * group, 1.0) + 0.1:.3f}",
            colours[(n + group) % 3],
            str(1 + group + (n % 3 == 0 and group == 0)),
            str(int(rng.poisson(1 + 4 * group))),
        ]
        for d in range(len(cells)):
            if missing_every and (n * len(cells) + d) % missing_every == 0:
                cells[d] = ""
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return randkit.make_rng(2024)


@pytest.fixture
def mixed_specs():
    return parse_attribute_spec(MIXED_SPEC)


@pytest.fixture
def mixed_data(mixed_specs):
    return load_dataset(mixed_csv(), mixed_specs)


@pytest.fixture
def fast_hp():
    return Hyperparams(iterations=20, burn_in=5, seed=11, K_init=2, K_max=10)


SYNTHETIC_SPEC = "r1,real\nr2,real\np,positivereal\nc,categorical,3\no,ordinal,3\nn,count\n"
# every column declared real, the degenerate all-Gaussian configuration
SYNTHETIC_REAL_SPEC = "r1,real\nr2,real\np,real\nc,real\no,real\nn,real\n"


def synthetic_csv(n_rows: int = 1000, seed: int = 41, k_true: int = 3) -> str:
    """Table drawn from the model itself: bias plus `k_true` features, one column of each kind.

    Categories are written as 1..3 so the same text also loads with every column real.
    """
    rng = np.random.default_rng(seed)
    Z = np.hstack([np.ones((n_rows, 1)), (rng.random((n_rows, k_true)) < 0.4).astype(float)])
    B = rng.normal(scale=2.0, size=(k_true + 1, 8))
    Y = Z @ B + rng.normal(size=(n_rows, 8))
    lines = ["r1,r2,p,c,o,n"]
    for n in range(n_rows):
        cells = [
            f"{Y[n, 0]:.5f}",
            f"{Y[n, 1]:.5f}",
            f"{np.logaddexp(0.0, Y[n, 2]) + 1e-6:.6f}",
            str(int(np.argmax(Y[n, 3:6])) + 1),
            str(int(np.searchsorted([0.0, 1.5], Y[n, 6], side="left") + 1)),
            str(int(np.floor(np.logaddexp(0.0, Y[n, 7])))),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
