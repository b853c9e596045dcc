"""Python bindings for the nvloc C++ library.

Numbers are SI (Hz, s, T, m, rad). The command wrappers mirror the nvloc CLI and
return the parsed report.
"""

import json
import os

from ._nvloc import (
    ConvergenceError,
    DomainError,
    Error,
    IdentifiabilityError,
    InputError,
    __version__,
    dipole_tensor,
    extract_couplings,
    forward_triplet,
    invert_dipole,
    nominal_tau,
    odmr_lines,
    precession_frequency,
)
from . import _nvloc

__all__ = [
    "ConvergenceError",
    "DomainError",
    "Error",
    "IdentifiabilityError",
    "InputError",
    "__version__",
    "dipole_tensor",
    "extract_couplings",
    "forward_triplet",
    "invert_dipole",
    "nominal_tau",
    "odmr_lines",
    "precession_frequency",
    "CommandResult",
    "calibrate",
    "localize",
    "simulate",
    "dft_residuals",
]


class CommandResult:
    def __init__(self, raw):
        self.exit_code, report, self.files = raw
        self.report = json.loads(report)

    def __repr__(self):
        return f"CommandResult(exit_code={self.exit_code}, files={self.files!r})"


def _config(config):
    # dict, path to a JSON file, or None
    if config is None:
        return "", "."
    if isinstance(config, dict):
        return json.dumps(config), "."
    path = os.fspath(config)
    with open(path) as fh:
        return fh.read(), os.path.dirname(os.path.abspath(path))


def calibrate(odmr_file, config=None, out=None, threads=None):
    text, base = _config(config)
    return CommandResult(_nvloc._calibrate(os.fspath(odmr_file), text, base, out, threads))


def localize(measurements_file, config=None, out=None, threads=None, seed=None, samples=None, a_iso=None):
    """a_iso: "auto", "free" or a value in kHz, overriding every nucleus."""
    text, base = _config(config)
    if a_iso is not None and not isinstance(a_iso, str):
        a_iso = repr(float(a_iso))
    return CommandResult(
        _nvloc._localize(os.fspath(measurements_file), text, base, out, threads, seed, samples, a_iso)
    )


def simulate(truth_file, config=None, out=None, seed=None, traces=False):
    text, base = _config(config)
    return CommandResult(_nvloc._simulate(os.fspath(truth_file), text, base, out, seed, traces))


def dft_residuals(table_file, config=None, out=None):
    text, base = _config(config)
    return CommandResult(_nvloc._dft_residuals(os.fspath(table_file), text, base, out))
