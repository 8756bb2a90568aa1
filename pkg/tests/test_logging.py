import pathlib
import typing as t

import numpy as np
import pytest
from loguru import logger

from conemob import logging as conemob_logging
from conemob.logging import configure_logging, trace_array, trace_spectrum


@pytest.fixture(autouse=True)
def reset_logging() -> t.Iterator[None]:
    yield
    logger.remove()
    conemob_logging.g_configured = False
    logger.disable("conemob")


def _configured_log(tmp_path: pathlib.Path) -> pathlib.Path:
    path = tmp_path / "conemob.log"
    configure_logging("critical", path, "trace")
    return path


def test_trace_array_prints_below_its_title(tmp_path: pathlib.Path) -> None:
    path = _configured_log(tmp_path)
    trace_array(np.array([[1.0, 2.0], [3.0, 4.0]]), "basis")
    logger.remove()
    lines = path.read_text().splitlines()
    (index,) = [i for i, line in enumerate(lines) if "basis (2, 2)" in line]
    assert "[T]" in lines[index]
    assert "conemob.logging" in lines[index]
    assert lines[index + 1] == "[[1. 2.]"
    assert lines[index + 2] == " [3. 4.]]"


def test_trace_spectrum_counts_kept_values(tmp_path: pathlib.Path) -> None:
    path = _configured_log(tmp_path)
    trace_spectrum(np.array([2.0, 1.0, 1e-12]), 1e-8, "kernel")
    trace_spectrum(np.zeros(0), 1e-8, "empty")
    logger.remove()
    text = path.read_text()
    assert "kernel: 2/3 above 1.0e-08" in text
    assert "empty: empty spectrum" in text


def test_configure_logging_is_idempotent(tmp_path: pathlib.Path) -> None:
    path = _configured_log(tmp_path)
    configure_logging("trace", tmp_path / "other.log", "trace")
    logger.remove()
    assert not (tmp_path / "other.log").exists()
    assert "Logging to" in path.read_text()
