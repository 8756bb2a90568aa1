"""
We use loguru for logging. The library disables its own logger on import.

Call `logger.enable("conemob")` to let engine messages through, or
[configure_logging][conemob.logging.configure_logging] to also install handlers
which print the engine's numeric dumps (arrays, singular value spectra) below
the message that carries them.
"""

from __future__ import annotations

import sys
import typing as t

import numpy as np
from loguru import logger

if t.TYPE_CHECKING:
    import pathlib

    from loguru import Record

g_configured: bool = False

LogLevelList = ["trace", "debug", "info", "success", "warning", "error", "critical"]
LogLevelLiteral = t.Literal["trace", "debug", "info", "success", "warning", "error", "critical"]
"""Valid logging levels."""

LEVEL_STYLES: dict[str, tuple[str, str]] = {
    "TRACE": ("<magenta>", "[T]"),
    "DEBUG": ("<blue>", "[_]"),
    "INFO": ("<cyan>", "[=]"),
    "SUCCESS": ("<green>", "[+]"),
    "WARNING": ("<yellow>", "[-]"),
    "ERROR": ("<red>", "[!]"),
    "CRITICAL": ("<RED>", "[x]"),
}
"""Color and icon per level."""

ARRAY_PRECISION = 6


def _format(record: Record) -> str:
    line = "<green>{time:HH:mm:ss.SSS}</green> | <level>{level.icon}</level> <dim>{name}</dim> {message}\n"
    if "array" in record["extra"]:
        line += "{extra[array]}\n"
    return line + "{exception}"


def configure_logging(
    log_level: LogLevelLiteral,
    log_file: pathlib.Path | None = None,
    log_file_level: LogLevelLiteral = "debug",
) -> None:
    """
    Install the stderr handler (and optionally a file handler) for engine logs.

    Records produced by [trace_array][conemob.logging.trace_array] are printed with
    the array on the following lines. Calling it a second time does nothing.

    Args:
        log_level: Level for the stderr handler.
        log_file: Optional path of a log file, usually with a lower level to keep
            the trace dumps out of the terminal.
        log_file_level: Level for the file handler.
    """
    global g_configured

    if g_configured:
        return

    logger.enable("conemob")
    for level, (color, icon) in LEVEL_STYLES.items():
        logger.level(level, color=color, icon=icon)

    logger.remove()
    logger.add(sys.stderr, format=_format, level=log_level.upper())
    if log_file is not None:
        logger.add(log_file, format=_format, level=log_file_level.upper())
        logger.info(f"Logging to {log_file}")

    g_configured = True


def trace_array(array: np.ndarray, title: str) -> None:
    """
    Trace log a numeric array with a title.

    Args:
        array: The array to print.
        title: The title of the log entry.
    """
    text = np.array2string(np.asarray(array), precision=ARRAY_PRECISION, suppress_small=True, max_line_width=120)
    logger.bind(array=text).trace(f"{title} {tuple(np.shape(array))}")


def trace_spectrum(singular_values: np.ndarray, cutoff: float, title: str) -> None:
    """
    Trace log normalized singular values around a rank cutoff.

    Args:
        singular_values: Singular values, largest first.
        cutoff: Relative cutoff in effect.
        title: The title of the log entry.
    """
    values = np.asarray(singular_values, dtype=float)
    if values.size == 0 or values[0] == 0:
        logger.trace(f"{title}: empty spectrum")
        return
    relative = values / values[0]
    kept = int(np.sum(relative > cutoff))
    logger.bind(array=np.array2string(relative, precision=3)).trace(
        f"{title}: {kept}/{values.size} above {cutoff:.1e}"
    )
