import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run the long simulation studies")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow") or os.environ.get("PRF_RUN_SLOW"):
        return
    skip = pytest.mark.skip(reason="slow study; use --run-slow or PRF_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
