import json
import sys
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def oracles():
    return {k: np.array(v) for k, v in json.loads((HERE / "oracles.json").read_text()).items()}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


PIPELINE_SEED = 12345


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    """Every pipeline run once on its defaults; results written to disk.

    Maps kind to ``(artifacts, output_dir, runtime_s, warnings)``.
    """
    import time
    import warnings

    from dynunc.pipelines import KINDS, PipelineConfig, run_pipeline

    root = tmp_path_factory.mktemp("pipelines")
    runs = {}
    for kind in KINDS:
        cfg = PipelineConfig(kind, output=root / kind, seed=PIPELINE_SEED)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            t = time.perf_counter()
            art = run_pipeline(cfg)
            dt = time.perf_counter() - t
        runs[kind] = (art, root / kind, dt, [str(w.message) for w in caught])
    return runs
