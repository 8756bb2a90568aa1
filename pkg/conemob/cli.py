"""
Command line front-end. Every command prints JSON on stdout; errors are printed
as one JSON object `{"error": ..., "message": ...}` on stderr.

Exit codes: `0` success, `1` malformed input, `2` numeric indecision,
`3` failed verification or residual check.
"""

from __future__ import annotations

import json
import pathlib
import typing as t

import click
from pydantic import BaseModel

from conemob import corpus
from conemob.canonical import canonical_pair_form
from conemob.cone import build_cone, check_hom, cone_manifold
from conemob.data import checks_to_df, corpus_to_df
from conemob.error import (
    ClusteringIndecisionError,
    InvalidCorpusEntryError,
    RankIndecisionError,
    ResidualError,
    VerificationError,
)
from conemob.geometry import riemann
from conemob.logging import LogLevelList, LogLevelLiteral, configure_logging
from conemob.mobility import cone_mobility, degree
from conemob.model import MetricSpec
from conemob.pairs import analyze_pair, projective_field_solution
from conemob.parsing import CORPUS_PREFIX, load_field, load_matrix, load_metric
from conemob.prolong import EngineParams
from conemob.verify import list_checks, run_checks

if t.TYPE_CHECKING:
    from conemob.cone import ConeManifold

EXIT_MALFORMED = 1
EXIT_INDECISION = 2
EXIT_VERIFICATION = 3


def exit_code_for(error: BaseException) -> int | None:
    """Exit code of an exception, None for exceptions the command line does not handle."""
    if isinstance(error, (RankIndecisionError, ClusteringIndecisionError)):
        return EXIT_INDECISION
    if isinstance(error, (VerificationError, ResidualError)):
        return EXIT_VERIFICATION
    # ExprSyntaxError, DomainError, DegenerateMetricError and pydantic errors are ValueErrors
    if isinstance(error, (ValueError, TypeError, InvalidCorpusEntryError, OSError, click.UsageError)):
        return EXIT_MALFORMED
    return None


# click >= 8.2 raises this for a bare `conemob`, which should still print the help
_NO_ARGS_IS_HELP: t.Any = getattr(click.exceptions, "NoArgsIsHelpError", ())


def _report_error(error: Exception) -> None:
    message = error.format_message() if isinstance(error, click.UsageError) else str(error)
    click.echo(json.dumps({"error": type(error).__name__, "message": message}), err=True)


class JsonErrorGroup(click.Group):
    def make_context(
        self, info_name: str | None, args: list[str], parent: click.Context | None = None, **extra: t.Any
    ) -> click.Context:
        # errors in the group's own options are raised before `invoke`
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except _NO_ARGS_IS_HELP:
            raise
        except click.UsageError as e:
            _report_error(e)
            raise click.exceptions.Exit(EXIT_MALFORMED) from e

    def invoke(self, ctx: click.Context) -> t.Any:
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.Abort):
            raise
        except Exception as e:
            code = exit_code_for(e)
            if code is None:
                raise
            _report_error(e)
            ctx.exit(code)


def _echo(ctx: click.Context, value: BaseModel | t.Sequence[t.Any], key: str | None = None) -> None:
    # every payload is an object carrying the seed; lists go under `key`
    if isinstance(value, BaseModel):
        payload: dict[str, t.Any] = json.loads(value.model_dump_json())
    else:
        items = [json.loads(item.model_dump_json()) if isinstance(item, BaseModel) else item for item in value]
        payload = {key or "items": items}
    if "seed" not in payload:
        payload = {"seed": _params(ctx).seed, **payload}
    click.echo(json.dumps(payload, indent=2))


def _params(ctx: click.Context) -> EngineParams:
    return t.cast(EngineParams, ctx.obj)


def _parse_point(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as e:
        raise click.BadParameter(f"'{text}' is not a comma separated list of numbers", param_hint="--point") from e


def _corpus_cone(ref: str) -> ConeManifold | None:
    # `corpus:<id>` without a fragment names the total metric of cone entries
    if not ref.startswith(CORPUS_PREFIX) or "#" in ref:
        return None
    return corpus.get(ref[len(CORPUS_PREFIX) :]).cone


@click.group(cls=JsonErrorGroup)
@click.option("--seed", type=int, default=42, show_default=True, help="Seed for sample and base points.")
@click.option("--samples", type=click.IntRange(min=1), default=20, show_default=True, help="Points for residuals.")
@click.option(
    "--log-level",
    type=click.Choice(LogLevelList),
    default="warning",
    show_default=True,
    help="Level of log messages on stderr.",
)
@click.option("--log-file", type=click.Path(dir_okay=False, path_type=pathlib.Path), help="Also log to this file.")
@click.pass_context
def cli(ctx: click.Context, seed: int, samples: int, log_level: LogLevelLiteral, log_file: pathlib.Path | None) -> None:
    """Degree of mobility and parallel symmetric forms of explicit metrics."""
    configure_logging(log_level, log_file)
    ctx.obj = EngineParams(seed=seed, samples=samples)


# geom


@cli.group()
def geom() -> None:
    """Curvature of a metric."""


@geom.command("curvature")
@click.argument("metric")
@click.option("--point", help="Comma separated coordinates (a seeded sample point by default).")
@click.option("--order", type=click.IntRange(0, 2), default=0, show_default=True, help="Covariant derivatives of R.")
@click.pass_context
def geom_curvature(ctx: click.Context, metric: str, point: str | None, order: int) -> None:
    """Metric, Christoffel symbols and curvature at a point."""
    m = load_metric(metric)
    params = _params(ctx)
    at = _parse_point(point)
    _echo(ctx, riemann(m, m.samples(1, params.seed)[0] if at is None else at, t.cast(t.Literal[0, 1, 2], order)))


# cone


@cli.group()
def cone() -> None:
    """Cone construction and the cone criterion."""


@cone.command("build")
@click.argument("metric")
@click.option("--r-name", default="r", show_default=True, help="Name of the radial coordinate.")
@click.pass_context
def cone_build(ctx: click.Context, metric: str, r_name: str) -> None:
    """The cone dr^2 + r^2 g over a base metric."""
    _echo(ctx, build_cone(load_metric(metric), r_name=r_name))


@cone.command("check")
@click.argument("metric")
@click.option("--v", "v", required=True, help="Candidate cone function, e.g. 'r^2/2'.")
@click.pass_context
def cone_check(ctx: click.Context, metric: str, v: str) -> None:
    """Residuals of v_,ij = g_ij and v_,i v^,i = 2v at sample points."""
    m = load_metric(metric)
    params = _params(ctx)
    _echo(ctx, check_hom(m, v, m.samples(params.samples, params.seed)))


# mobility


@cli.group()
def mobility() -> None:
    """Degree of mobility."""


@mobility.command("degree")
@click.argument("metric")
@click.option("--B", "B", type=float, help="Constant of the extended system.")
@click.option("--search-B", "search", is_flag=True, help="Scan for the constant which maximizes the dimension.")
@click.pass_context
def mobility_degree(ctx: click.Context, metric: str, B: float | None, search: bool) -> None:
    """Degree of mobility from the extended system."""
    if B is not None and search:
        raise click.UsageError("--B and --search-B are mutually exclusive")
    _echo(ctx, degree(load_metric(metric), B, search=search, params=_params(ctx)))


@mobility.command("cone")
@click.argument("base")
@click.option("--v", "v", help="Treat METRIC as a cone already, with this cone function.")
@click.pass_context
def mobility_cone(ctx: click.Context, base: str, v: str | None) -> None:
    """Degree of mobility as the number of parallel symmetric forms on the cone."""
    params = _params(ctx)
    target: MetricSpec | ConeManifold | None = _corpus_cone(base) if v is None else None
    if target is None:
        m = load_metric(base)
        target = m if v is None else cone_manifold(m, v, samples=params.samples, seed=params.seed)
    _echo(ctx, cone_mobility(target, params))


# pairs


@cli.group()
def pairs() -> None:
    """Geodesically equivalent pairs and projective vector fields."""


@pairs.command("analyze")
@click.argument("g")
@click.argument("gbar")
@click.option("--B", "B", type=float, help="Constant of g, to also compute the constant of gbar.")
@click.pass_context
def pairs_analyze(ctx: click.Context, g: str, gbar: str, B: float | None) -> None:
    """Certify geodesic equivalence and sample (phi, a, lambda)."""
    first, second = load_metric(g), load_metric(gbar)
    params = _params(ctx)
    _echo(ctx, analyze_pair(first, second, first.samples(params.samples, params.seed), B=B))


@pairs.command("projective")
@click.argument("g")
@click.option("--field", "field", required=True, help="Vector field file, or corpus:<id>#L.")
@click.pass_context
def pairs_projective(ctx: click.Context, g: str, field: str) -> None:
    """Test a vector field for being projective through the solution it induces."""
    m = load_metric(g)
    params = _params(ctx)
    _echo(ctx, projective_field_solution(m, load_field(field, m.coords), m.samples(params.samples, params.seed)))


# canonical


@cli.group()
def canonical() -> None:
    """Canonical form of self-adjoint pairs."""


@canonical.command("form")
@click.option("--G", "g_file", required=True, help="JSON file with the symmetric matrix G.")
@click.option("--L", "l_file", required=True, help="JSON file with the G-self-adjoint matrix L.")
@click.pass_context
def canonical_form(ctx: click.Context, g_file: str, l_file: str) -> None:
    """Blocks and basis change of the canonical form of (G, L)."""
    _echo(ctx, canonical_pair_form(load_matrix(g_file), load_matrix(l_file)))


# corpus


@cli.group("corpus")
def corpus_group() -> None:
    """Built-in metrics with known answers."""


@corpus_group.command("list")
@click.option("--facts", is_flag=True, help="Print the expected facts of every entry as CSV instead.")
@click.pass_context
def corpus_list(ctx: click.Context, facts: bool) -> None:
    """Names of the registered entries."""
    if facts:
        click.echo(corpus_to_df().to_csv(index=False), nl=False)
        return
    _echo(ctx, corpus.list_entries(), "entries")


@corpus_group.command("export")
@click.argument("name")
@click.argument("params", nargs=-1)
@click.option(
    "--part",
    type=click.Choice(["metric", "base", "partner", "L"]),
    default="metric",
    show_default=True,
    help="Which companion to export.",
)
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=pathlib.Path), help="Write to a file.")
@click.pass_context
def corpus_export(
    ctx: click.Context, name: str, params: tuple[str, ...], part: str, output: pathlib.Path | None
) -> None:
    """
    Export an entry as a metric (or field) file.

    PARAMS are `key=value` pairs, e.g. `realization n=7 k=0 partition=4;4`.
    """
    entry = corpus.get(",".join([name, *params]))
    exported: BaseModel | None = {
        "metric": entry.metric,
        "base": entry.base,
        "partner": entry.partner,
        "L": entry.endomorphism,
    }[part]
    if exported is None:
        raise InvalidCorpusEntryError(entry.identifier, f"entry has no '{part}'")
    if isinstance(exported, MetricSpec) and exported.seed is None:
        # metric files keep the seed their sample points were drawn with
        exported = exported.replace(seed=_params(ctx).seed)
    text = exported.model_dump_json(indent=2, exclude_none=True)
    if output is None:
        click.echo(text)
    else:
        output.write_text(text + "\n")


# verify


@cli.group()
def verify() -> None:
    """Acceptance checks against known results."""


@verify.command("all")
@click.option("--check", "checks", multiple=True, type=click.Choice(list_checks()), help="Only run these checks.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=pathlib.Path), help="Also write a CSV.")
@click.pass_context
def verify_all(ctx: click.Context, checks: tuple[str, ...], csv_path: pathlib.Path | None) -> None:
    """Run the acceptance checks, exit code 0 iff all pass."""
    results = run_checks(list(checks) or None, _params(ctx))
    _echo(ctx, results, "checks")
    if csv_path is not None:
        checks_to_df(results).to_csv(csv_path)
    failed = [result.name for result in results if not result.passed]
    if failed:
        raise VerificationError(failed)


if __name__ == "__main__":
    cli()
