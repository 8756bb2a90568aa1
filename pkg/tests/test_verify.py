import pytest

from conemob import verify
from conemob.error import VerificationError
from conemob.prolong import EngineParams

PARAMS = EngineParams(samples=5, extra_points=2)


def _broken(params: EngineParams) -> tuple[bool, str]:
    raise RuntimeError("engine exploded")


def test_checks_are_registered() -> None:
    assert verify.list_checks() == [
        "flat_maximum",
        "sphere_cone",
        "example1",
        "example2",
        "realization",
        "correspondence",
        "barB",
        "pair_certification",
        "canonical",
        "properties",
    ]


@pytest.mark.parametrize("name", ["flat_maximum", "example1", "barB", "pair_certification", "canonical"])
def test_check_passes(name: str) -> None:
    (result,) = verify.run_checks([name], PARAMS)
    assert result.name == name
    assert result.passed, result.detail
    assert result.elapsed >= 0


@pytest.mark.slow
@pytest.mark.parametrize("name", ["sphere_cone", "example2", "realization", "correspondence", "properties"])
def test_slow_check_passes(name: str) -> None:
    (result,) = verify.run_checks([name], PARAMS)
    assert result.passed, result.detail


def test_unknown_check() -> None:
    with pytest.raises(ValueError):
        verify.run_checks(["flat_maximum", "nonsense"])


def test_exceptions_become_failures(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setitem(verify.g_checks, "broken", (_broken, "DERIVED"))
    (result,) = verify.run_checks(["broken"], PARAMS)
    assert not result.passed
    assert result.detail == "RuntimeError: engine exploded"
    assert result.provenance == "DERIVED"


def test_verify_all_raises_on_failure(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(
        verify, "g_checks", {"ok": (lambda params: (True, "fine"), "TRIVIAL"), "broken": (_broken, "DERIVED")}
    )
    with pytest.raises(VerificationError) as exc:
        verify.verify_all(PARAMS)
    assert exc.value.failed == ["broken"]


def test_verify_all_returns_results(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(verify, "g_checks", {"ok": (lambda params: (True, "fine"), "TRIVIAL")})
    (result,) = verify.verify_all(PARAMS)
    assert result.passed
