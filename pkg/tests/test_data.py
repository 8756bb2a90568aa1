import pandas as pd

from conemob.canonical import Block, PairBlocks
from conemob.data import blocks_to_df, checks_to_df, corpus_to_df, flatten_reports, reports_to_df, scan_to_df
from conemob.mobility import BSearchResult, MobilityReport
from conemob.verify import CheckResult


def _report(D: int, **diagnostics: object) -> MobilityReport:
    return MobilityReport(
        D=D, B=0.0, B_candidates=[(0.0, D)], route="extended-system", seed=42, label="test", diagnostics=diagnostics
    )


def test_flatten_reports() -> None:
    (flat,) = flatten_reports(_report(6, generator_count=0))
    assert flat["D"] == 6
    assert flat["diagnostics_generator_count"] == 0
    assert "B_candidates" not in flat
    assert "diagnostics" not in flat


def test_reports_to_df() -> None:
    df = reports_to_df([_report(6), _report(10, transport_residual=1e-12)])
    assert list(df["D"]) == [6, 10]
    assert df["route"].unique().tolist() == ["extended-system"]
    assert pd.isna(df.loc[0, "diagnostics_transport_residual"])


def test_scan_to_df() -> None:
    scan = BSearchResult(candidates=[(-1.0, 6), (0.0, 1), (1.0, None)], best=-1.0, best_dim=6, generic_dim=1)
    df = scan_to_df(scan)
    assert str(df["dim"].dtype) == "Int64"
    assert df["best"].tolist() == [True, False, False]
    assert pd.isna(df.loc[2, "dim"])


def test_checks_to_df() -> None:
    results = [
        CheckResult(name="flat_maximum", passed=True, detail="D = 10", provenance="PUBLISHED", elapsed=0.1),
        CheckResult(name="barB", passed=False, detail="mismatch", provenance="DERIVED", elapsed=0.2),
    ]
    df = checks_to_df(results)
    assert df.index.tolist() == ["flat_maximum", "barB"]
    assert df.loc["barB", "passed"] == False  # noqa: E712
    assert checks_to_df([]).empty


def test_blocks_to_df() -> None:
    form = PairBlocks(
        blocks=[Block(real=1.0, size=2, sign=-1), Block(real=0.0, imag=1.0, size=1)],
        P=[[1.0]],
        residual_G=0.0,
        residual_L=0.0,
        signature=(2, 2),
    )
    df = blocks_to_df(form)
    assert df["dim"].tolist() == [2, 2]
    assert df.loc[0, "sign"] == -1
    assert pd.isna(df.loc[1, "sign"])


def test_corpus_to_df() -> None:
    df = corpus_to_df(["sphere3", "example2"])
    assert list(df.columns) == ["identifier", "dim", "fact", "value", "provenance", "note"]
    sphere = df[df["identifier"] == "sphere,n=3"]
    assert sphere.set_index("fact").loc["D", "value"] == 10
    partition = df[(df["identifier"] == "example2") & (df["fact"] == "jordan_partition")]
    assert partition["value"].item() == "[2, 2, 2]"
