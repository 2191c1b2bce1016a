import time
from pathlib import Path

import pytest

from plapsys.config import load_config
from plapsys.construct import escalate_blowup
from plapsys.grid import build_grid

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def ansatz(p, gamma):
    beta = p / (gamma - p + 1)
    A = (beta ** (p - 1) * (beta + 1) * (p - 1)) ** (1 / (gamma - p + 1))
    return beta, A


BLOWUP_CONFIGS = {(2.0, 3.0): "blowup_p2_g3.toml", (3.0, 4.0): "blowup_p3_g4.toml",
                  (1.5, 2.0): "blowup_p15_g2.toml"}


@pytest.fixture(scope="session")
def blowup_traces():
    """Escalation traces of the shipped blow-up configs, with wall time."""
    traces = {}
    for key, name in BLOWUP_CONFIGS.items():
        cfg = load_config(CONFIG_DIR / name)
        t0 = time.perf_counter()
        grid = build_grid(cfg.domain)
        tr = escalate_blowup(grid, cfg.system, cfg.p, cfg.schedule, cfg.solver, cfg.fit_window)
        traces[key] = (tr, time.perf_counter() - t0)
    return traces


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Record the outcome of one acceptance criterion for the summary table.

    Usage: ``with record(n, "title") as note: ...; note("detail")``.  Any
    exception inside the block marks the criterion FAIL and is re-raised.
    """
    table = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    class _Block:
        def __init__(self, number, title):
            self.number, self.title, self.details = number, title, []

        def __call__(self, text):
            self.details.append(text)

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            ok = exc_type is None
            if not ok:
                self.details.append(f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            prev = table.get(self.number)
            passed = ok and (prev is None or prev[1])
            details = (prev[2] if prev else []) + self.details
            table[self.number] = (self.title, passed, details)
            return False

    return _Block


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(ACCEPTANCE_KEY, None)
    if not table:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(table):
        title, passed, details = table[n]
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {n:2d}. {title}" + (f" | {'; '.join(details)}" if details else ""))
