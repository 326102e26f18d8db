import numpy as np
import pytest

from lorank.model import SdpProblem, SparseSymMatrix


def random_sym(rng, n, density=0.4):
    """Random sparse symmetric matrix in upper-triangle COO form."""
    entries = []
    for i in range(n):
        for j in range(i, n):
            if rng.random() < density:
                entries.append((i, j, float(rng.standard_normal())))
    if not entries:
        entries.append((0, 0, 1.0))
    return SparseSymMatrix.from_entries(n, entries)


def random_problem(rng, n, m, density=0.4, class_tag="generic"):
    """Random instance; b is chosen so a PSD-feasible point exists."""
    constraints = tuple(random_sym(rng, n, density) for _ in range(m))
    W = rng.standard_normal((n, max(2, n // 2)))
    X = W @ W.T / n
    rhs = np.array([float(np.sum(A.to_dense() * X)) for A in constraints])
    return SdpProblem(
        n=n, m=m, objective=random_sym(rng, n, density),
        constraints=constraints, rhs=rhs, class_tag=class_tag)


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)
