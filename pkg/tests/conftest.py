import pytest

from pairenergy.optimizer import OptimOpts, minimize_multistart

ACCEPTANCE_SEED = 2024


@pytest.fixture(scope="session")
def solve():
    """Session-wide memoised multistart solver so acceptance criteria that
    share (fixture, N, options) reuse one minimisation."""
    cache = {}

    def _solve(spec, n, *, tol, starts, hops):
        key = (spec, n, tol, starts, hops)
        if key not in cache:
            opts = OptimOpts(seed=ACCEPTANCE_SEED, grad_tol=tol,
                             n_starts=starts, hop_count=hops)
            cache[key] = minimize_multistart(spec, n, opts, workers=2)
        return cache[key]

    return _solve
