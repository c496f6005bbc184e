import pytest

from feebench.agents import HeuristicParams
from feebench.metrics import build_deviation_rows
from feebench.orchestrator import ExperimentConfig, run_factorial


@pytest.fixture(scope="session")
def rational_logs():
    return run_factorial(ExperimentConfig.paper_profile("rational"))


@pytest.fixture(scope="session")
def rational_rows(rational_logs):
    return build_deviation_rows(rational_logs)


@pytest.fixture(scope="session")
def heuristic_config():
    return ExperimentConfig.paper_profile(
        "heuristic",
        heuristic=HeuristicParams(center_pull=0.5, anchor_weight=0.2, trend_weight=0.1),
    )


@pytest.fixture(scope="session")
def heuristic_logs(heuristic_config):
    return run_factorial(heuristic_config)


@pytest.fixture(scope="session")
def heuristic_rows(heuristic_logs):
    return build_deviation_rows(heuristic_logs)
