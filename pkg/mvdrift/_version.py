"""
Installed version of mvdrift.

The version is written into the package metadata by setuptools_scm at build
time; a source checkout that was never installed reports the fallback.
"""
from importlib.metadata import version, PackageNotFoundError

FALLBACK_VERSION = "0.1.0"

try:
    __version__ = version("mvdrift")
except PackageNotFoundError:
    __version__ = FALLBACK_VERSION
