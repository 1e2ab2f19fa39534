import numpy as np
import pytest

from foolmetrics.attacklab import STANDARD_ATTACKS, AttackConfig, evaluate_attack, generate_task, train_model
from foolmetrics.taxonomy import load_taxonomy

TOY_EDGES = [("dog", "animal"), ("cat", "animal"), ("car", "vehicle"), ("animal", "root"), ("vehicle", "root")]
TOY_LABELS = [(0, "dog"), (1, "cat"), (2, "car")]

E2E_SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture
def toy():
    return load_taxonomy(TOY_EDGES, TOY_LABELS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class E2ERun:
    def __init__(self, seed):
        self.seed = seed
        self.task = generate_task(seed=seed)
        self.train = train_model(self.task, seed=seed)
        self.model = self.train.model
        self.runs = {k: evaluate_attack(self.model, self.task, AttackConfig(k, seed=seed))
                     for k in STANDARD_ATTACKS}


_E2E_CACHE = {}


def e2e_run(seed):
    if seed not in _E2E_CACHE:
        _E2E_CACHE[seed] = E2ERun(seed)
    return _E2E_CACHE[seed]


@pytest.fixture(scope="session")
def e2e():
    """Lazily built end-to-end runs keyed by seed, shared across test files."""
    return e2e_run


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_acceptance(criterion, ok, detail):
    """``ok`` is True, False, or None for a skipped criterion."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{status} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
