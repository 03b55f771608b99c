import os
import re

import pytest

import mvdrift
from mvdrift import _version

PYPROJECT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "pyproject.toml")


@pytest.fixture
def project():
    tomllib = pytest.importorskip("tomllib")
    with open(PYPROJECT, "rb") as f:
        return tomllib.load(f)


def test_tool_sections(project):
    assert set(project["tool"]) == {"setuptools", "setuptools_scm", "pytest"}
    assert any(m.startswith("slow:") for m in project["tool"]["pytest"]["ini_options"]["markers"])


def test_console_script(project):
    module, func = project["project"]["scripts"]["mvdrift"].split(":")
    assert module == "mvdrift.cli" and func == "main"


def test_version(project):
    assert mvdrift.__version__ == _version.__version__
    assert re.match(r"\d+\.\d+", mvdrift.__version__)
    assert project["tool"]["setuptools_scm"]["fallback_version"] == _version.FALLBACK_VERSION
