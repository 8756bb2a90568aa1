"""
Tabular views of results with pandas: mobility reports, B scans, verification
runs and the corpus facts.
"""

from __future__ import annotations

import json
import typing as t

import pandas as pd

from conemob import corpus
from conemob.mobility import BSearchResult, MobilityReport

if t.TYPE_CHECKING:
    from conemob.canonical import PairBlocks
    from conemob.verify import CheckResult


def flatten_reports(reports: MobilityReport | t.Sequence[MobilityReport]) -> list[dict[str, t.Any]]:
    """
    Flatten mobility reports into one dictionary each.

    Diagnostics are prefixed with `diagnostics_`, scanned candidates are left out
    (see [scan_to_df][conemob.data.scan_to_df]).

    Args:
        reports: A report or a list of reports.

    Returns:
        A list of flat dictionaries.
    """
    reports = [reports] if isinstance(reports, MobilityReport) else reports

    flattened: list[dict[str, t.Any]] = []
    for report in reports:
        # pydantic does the conversion, including nested diagnostics
        report_json = report.model_dump(exclude={"B_candidates"}, mode="json")
        diagnostics = report_json.pop("diagnostics")
        flattened.append({**report_json, **{f"diagnostics_{key}": value for key, value in diagnostics.items()}})

    return flattened


def reports_to_df(reports: MobilityReport | t.Sequence[MobilityReport]) -> pd.DataFrame:
    """
    Convert mobility reports to a DataFrame with one row per report.

    Args:
        reports: A report or a list of reports.

    Returns:
        The DataFrame.
    """
    return pd.DataFrame(flatten_reports(reports))


def scan_to_df(scan: BSearchResult) -> pd.DataFrame:
    """
    One row per scanned value of `B` with its dimension (missing where ambiguous).

    The `best` column marks the selected value.
    """
    df = pd.DataFrame(scan.candidates, columns=["B", "dim"])
    df["dim"] = df["dim"].astype("Int64")
    df["best"] = df["B"] == scan.best
    return df


_CHECK_COLUMNS = ("name", "passed", "detail", "provenance", "elapsed")


def checks_to_df(results: t.Sequence[CheckResult]) -> pd.DataFrame:
    """
    Convert verification results to a DataFrame indexed by check name.
    """
    df = pd.DataFrame([result.model_dump() for result in results], columns=list(_CHECK_COLUMNS))
    return df.set_index("name")


def blocks_to_df(form: PairBlocks) -> pd.DataFrame:
    """
    One row per canonical block: eigenvalue, chain length, dimension and sign.
    """
    rows = [
        {"real": block.real, "imag": block.imag, "size": block.size, "dim": block.dim, "sign": block.sign}
        for block in form.blocks
    ]
    df = pd.DataFrame(rows, columns=["real", "imag", "size", "dim", "sign"])
    df["sign"] = df["sign"].astype("Int64")
    return df


def corpus_to_df(identifiers: t.Sequence[str] | None = None) -> pd.DataFrame:
    """
    Expected facts of corpus entries, one row per fact.

    Args:
        identifiers: Entries to include (every registered name with its defaults otherwise).

    Returns:
        A DataFrame with columns `identifier`, `dim`, `fact`, `value`, `provenance` and `note`.
    """
    identifiers = corpus.list_entries() if identifiers is None else identifiers

    rows: list[dict[str, t.Any]] = []
    for identifier in identifiers:
        entry = corpus.get(identifier)
        for fact in entry.facts:
            rows.append(
                {
                    "identifier": entry.identifier,
                    "dim": entry.metric.dim,
                    "fact": fact.name,
                    # lists (partitions) do not fit a single cell type
                    "value": json.dumps(fact.value) if isinstance(fact.value, list) else fact.value,
                    "provenance": fact.provenance,
                    "note": fact.note,
                }
            )

    return pd.DataFrame(rows, columns=["identifier", "dim", "fact", "value", "provenance", "note"])
