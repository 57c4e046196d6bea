import pytest


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--run-slow", action="store_true", default=False, help="run long Monte-Carlo checks")


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: long Monte-Carlo or training check, needs --run-slow")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return

    skip_slow = pytest.mark.skip(reason="needs --run-slow")

    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
