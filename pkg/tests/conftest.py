import os
import time
from pathlib import Path

import pytest

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def record(request):
    """Append a one-line PASS/FAIL verdict that is echoed in the terminal summary."""

    def _record(name, ok, detail, elapsed=None):
        took = f" [{elapsed:.1f} s]" if elapsed is not None else ""
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}{took}"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def unicycle_cfg():
    from asyncmpc.harness import load_config

    return load_config(CONFIGS / "unicycle.yaml")


@pytest.fixture(scope="session")
def unicycle_models(unicycle_cfg, tmp_path_factory):
    """Neural-ODE and equal-capacity RNN pretrained on the zero-wind unicycle.

    Set ``ASYNCMPC_MODEL_CACHE`` to a directory to keep the checkpoints
    between sessions; otherwise they are trained once per session.
    Returns ``(models, seconds spent pretraining)``.
    """
    from asyncmpc.harness import obtain_model

    cache = os.environ.get("ASYNCMPC_MODEL_CACHE")
    out = Path(cache) if cache else tmp_path_factory.mktemp("pretrained")
    start = time.perf_counter()
    models = {kind: obtain_model(unicycle_cfg, kind, out) for kind in ("node", "rnn")}
    return models, time.perf_counter() - start


@pytest.fixture(scope="session")
def beltbox_specialist(tmp_path_factory):
    """Belt-box config and a model trained on the single average environment.

    Shares the ``ASYNCMPC_MODEL_CACHE`` directory (under ``beltbox/``).
    Returns ``(cfg, model, seconds spent training)``.
    """
    from asyncmpc.harness import load_config, train_specialist

    cfg = load_config(CONFIGS / "beltbox.yaml")
    cache = os.environ.get("ASYNCMPC_MODEL_CACHE")
    out = Path(cache) / "beltbox" if cache else tmp_path_factory.mktemp("beltbox")
    start = time.perf_counter()
    model = train_specialist(cfg, out)
    return cfg, model, time.perf_counter() - start
