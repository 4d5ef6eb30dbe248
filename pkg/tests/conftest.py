import numpy as np
import pytest
from hypothesis import settings

from nonconvex_mc.dataio import SyntheticSpec, random_mask, synth_low_rank
from nonconvex_mc.solver import ObservedMatrix

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rank5_instance():
    """50x50 rank-5 synthetic, half observed, 40 dB noise."""
    return synth_low_rank(SyntheticSpec(50, 50, 5, obs_fraction=0.5, snr_db=40.0, seed=1))


@pytest.fixture(scope="session")
def rank1_instance():
    """Noiseless 10x10 ``M = 10 u v^T`` with 80% of entries observed."""
    rng = np.random.default_rng(11)
    u = rng.standard_normal(10)
    v = rng.standard_normal(10)
    M = 10.0 * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    mask = random_mask(10, 10, 0.8, seed=12)
    return M, ObservedMatrix(M, mask)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one ``(name, ok, detail)`` line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(name, ok, detail):
        lines.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in lines:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    passed = sum(ok for _, ok, _ in lines)
    terminalreporter.write_line(f"{passed}/{len(lines)} criteria passed")
