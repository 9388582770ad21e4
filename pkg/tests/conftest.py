import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus import build_corpus  # noqa: E402

from rampsched import solve  # noqa: E402


@pytest.fixture(scope="session")
def corpus96():
    return build_corpus(96)


@pytest.fixture(scope="session")
def solved96(corpus96):
    """Converged solutions for every corpus scenario on the 96-node grid."""
    return {name: solve(sc) for name, sc in corpus96.items()}
