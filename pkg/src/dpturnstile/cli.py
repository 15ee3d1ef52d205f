"""Command line front-end: generate | run | evaluate | validate | bench.

Exit codes: 0 success, 1 internal error, 2 usage or input error, 3 hypothesis violation.
"""

from __future__ import annotations

import json
import sys
import time
import warnings
from pathlib import Path

import click
import numpy as np

from . import experiment as ex
from .counter import CounterBank, noise_floor
from .domain_reduction import HypothesisViolation, lemma1_validate, lemma2_validate, lemma3_validate
from .metrics import ErrorProfile, TraceFormatError, read_trace, report, success_rate, verify_envelope
from .privacy import NoiseSource, make_rng
from .stream import (GeneratorKind, Model, StreamFormatError, StreamMeta, StrictTurnstileViolation,
                     f2_lowerbound_pair, gen_stream, write_stream)

SEED_ENV = "DPTURNSTILE_SEED"
EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_HYPOTHESIS = 0, 1, 2, 3

KINDS = [k.value for k in GeneratorKind]
MODELS = [m.value for m in Model]

seed_option = click.option("--seed", type=int, envvar=SEED_ENV, default=0, show_default=True,
                           help=f"Master seed (default from ${SEED_ENV}).")
json_option = click.option("--json", "as_json", is_flag=True, help="Print machine-readable JSON.")


def _emit(data: dict, as_json: bool):
    if as_json:
        click.echo(json.dumps(data, indent=2, sort_keys=True))
        return
    width = max((len(k) for k in data), default=0)
    for key, value in data.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, (dict, list)):
            value = json.dumps(value, sort_keys=True)
        click.echo(f"{key:<{width}}  {value}")


@click.group()
@click.version_option(package_name="dpturnstile")
def cli():
    """Private continual estimators for turnstile streams."""


@cli.command()
@click.option("--kind", type=click.Choice(KINDS), required=True)
@click.option("--n", "n", type=int, default=1024, show_default=True, help="Universe size.")
@click.option("--T", "T", type=int, required=True, help="Stream length.")
@click.option("--model", type=click.Choice(MODELS), default="strict", show_default=True)
@click.option("--peak", type=int, default=None, help="Peak support for the phased generator.")
@click.option("--p-insert", type=float, default=0.6, show_default=True)
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def generate(kind, n, T, model, peak, p_insert, seed, out):
    """Write a synthetic stream file (the f2-lowerbound kind writes a neighbor pair)."""
    out = Path(out)
    if kind == GeneratorKind.F2_LOWER_BOUND.value:
        meta = StreamMeta(max(n, 2), T, Model.INSERTION_ONLY)
        base, neighbor = f2_lowerbound_pair(T)
        pair = out.with_name(out.stem + ".neighbor" + out.suffix)
        write_stream(meta, base, out)
        write_stream(meta, neighbor, pair)
        click.echo(f"wrote {out} and {pair}")
        return
    meta = StreamMeta(n, T, Model(model))
    write_stream(meta, gen_stream(kind, meta, seed, p_insert=p_insert, peak=peak), out)
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--estimator", type=click.Choice(ex.ESTIMATORS), default=None)
@click.option("--stream", "stream_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--gen", "gen_kind", type=click.Choice(KINDS), default=None,
              help="Generate the stream instead of reading a file (fresh per trial).")
@click.option("--n", "n", type=int, default=1024, show_default=True)
@click.option("--T", "T", type=int, default=1024, show_default=True)
@click.option("--model", type=click.Choice(MODELS), default="strict", show_default=True)
@click.option("--peak", type=int, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--delta", type=float, default=None)
@seed_option
@click.option("--alpha", type=float, default=0.25, show_default=True, help="F2 accuracy target.")
@click.option("--c-prime", type=float, default=None, help="Domain reduction level-selection constant.")
@click.option("--max-level", type=int, default=None)
@click.option("--replicas", type=int, default=None, help="Override the replica / row count.")
@click.option("--noise-off", is_flag=True, help="Disable noise (not private; for testing).")
@click.option("--trials", type=int, default=1, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--manifest", "manifest_in", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Replay a previous run from its manifest.")
@click.option("--out", type=click.Path(), required=True,
              help="Trace CSV (a directory when --trials > 1).")
@json_option
def run(estimator, stream_path, gen_kind, n, T, model, peak, rho, epsilon, delta, seed, alpha, c_prime,
        max_level, replicas, noise_off, trials, jobs, manifest_in, out, as_json):
    """Run an estimator and write its trace and manifest."""
    if jobs < 1:
        raise click.UsageError("--jobs must be >= 1")
    if manifest_in is not None:
        man, same = ex.replay_manifest(manifest_in, out, jobs)
        _emit({"replayed": manifest_in, "identical": same,
               "traces": [t["trace"] for t in man["trials"]]}, as_json)
        if not same:
            raise click.ClickException("replayed trace differs from the manifest")
        return
    if estimator is None:
        raise click.UsageError("--estimator is required unless --manifest is given")
    generator = None
    if gen_kind is not None:
        generator = ex.GeneratorSpec(gen_kind, n, T, model, peak)
    try:
        cfg = ex.RunConfig(estimator=estimator, seed=seed, rho=rho, epsilon=epsilon, delta=delta,
                           stream=stream_path, generator=generator, alpha=alpha, c_prime=c_prime,
                           max_level=max_level, replicas=replicas, noise_off=noise_off, trials=trials)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        man = ex.write_run(cfg, out, jobs)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    first = man["trials"][0]
    summary = {"estimator": estimator, "trials": trials, "rho": man["rho"], "composed_rho": first["composed_rho"],
               "in_hypothesis": all(t["in_hypothesis"] for t in man["trials"]), "out": str(out)}
    summary.update({k: first[k] for k in ("tau", "lambda") if k in first})
    _emit(summary, as_json)


def _parse_profile(text: str) -> ErrorProfile:
    try:
        p, q, r, s = (float(v) for v in text.split(","))
    except ValueError:
        raise click.BadParameter("expected four comma-separated numbers p,q,r,s", param_hint="--profile") from None
    try:
        return ErrorProfile(p, q, r, s)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--profile") from None


@cli.command()
@click.argument("target", type=click.Path(exists=True))
@click.option("--alpha", type=float, default=None, help="Report the minimal beta at this alpha.")
@click.option("--profile", "profile_text", default=None, help="Check a fixed envelope p,q,r,s.")
@click.option("--refine", is_flag=True, help="Search p/q splits on a grid.")
@json_option
def evaluate(target, alpha, profile_text, refine, as_json):
    """Evaluate a trace file, or every trace in a directory."""
    if (alpha is None) == (profile_text is None):
        raise click.UsageError("give exactly one of --alpha or --profile")
    if alpha is not None and alpha < 1:
        raise click.BadParameter("alpha must be >= 1", param_hint="--alpha")
    profile = _parse_profile(profile_text) if profile_text else None
    path = Path(target)
    if path.is_file():
        _emit(report(read_trace(path), alpha=alpha, profile=profile, refine=refine), as_json)
        return
    files = sorted(path.glob("*.csv"))
    if not files:
        raise click.UsageError(f"no trace files in {path}")
    traces = [read_trace(f) for f in files]
    out = {"traces": len(traces)}
    if profile is not None:
        out["success_rate"] = success_rate(traces, profile)
        out["failed"] = [f.name for f, tr in zip(files, traces) if not verify_envelope(tr, profile)]
    else:
        betas = [report(tr, alpha=alpha, refine=refine)["beta"] for tr in traces]
        out.update(alpha=alpha, beta_max=max(betas), beta_median=float(np.median(betas)))
    _emit(out, as_json)


def _sparse_vector(n: int, nnz: int, seed: int, signed: bool) -> np.ndarray:
    if not (1 <= nnz <= n):
        raise click.BadParameter("need 1 <= nnz <= n", param_hint="--nnz")
    rng = make_rng(seed, "validate", "x")
    x = np.zeros(n, dtype=np.int64)
    support = rng.choice(n, size=nnz, replace=False)
    x[support] = rng.choice([-1, 1], size=nnz) if signed else 1
    return x


@cli.command()
@click.argument("lemma", type=click.Choice(["lemma1", "lemma2", "lemma3"]))
@click.option("--n", "n", type=int, default=None, help="Universe size (default: just large enough).")
@click.option("--nnz", type=int, required=True, help="Support size of the test vector.")
@click.option("--m", "m", type=int, default=None, help="Reduced domain size (default: edge of the regime).")
@click.option("--ell", type=float, default=None, help="Default 100 log2 n for lemmas 1-2, 10 for lemma 3.")
@click.option("--ell-prime", type=float, default=10.0, show_default=True)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--signed/--unsigned", default=True, show_default=True, help="Random signs on the support.")
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the JSON report here.")
def validate(lemma, n, nnz, m, ell, ell_prime, trials, signed, seed, out):
    """Monte-Carlo check of a domain-reduction lemma; prints a JSON report."""
    n = n or nnz
    x = _sparse_vector(n, nnz, seed, signed)
    lg = float(np.log2(max(n, 2)))
    if lemma == "lemma1":
        ell = ell if ell is not None else 100 * lg
        m = m if m is not None else max(1, int(nnz // ell))
        result = lemma1_validate(x, m, ell, trials, seed=seed, n=n)
    elif lemma == "lemma2":
        ell = ell if ell is not None else 100 * lg
        m = m if m is not None else int(np.ceil(ell * nnz))
        result = lemma2_validate(x, m, trials, seed=seed, n=n, ell=ell)
    else:
        ell = ell if ell is not None else 10.0
        m = m if m is not None else int(np.ceil(nnz * ell * ell_prime))
        result = lemma3_validate(x, m, ell, ell_prime, trials, seed=seed)
    result["lemma"] = lemma
    text = json.dumps(result, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@cli.command()
@click.argument("target", type=click.Choice(["counter", *[e for e in ex.ESTIMATORS if e != "counter"]]))
@click.option("--T", "T", type=int, default=4096, show_default=True)
@click.option("--n", "n", type=int, default=1024, show_default=True)
@click.option("--width", type=int, default=1024, show_default=True, help="Counters per bank (counter target).")
@click.option("--rho", type=float, default=1.0, show_default=True)
@seed_option
@json_option
def bench(target, T, n, width, rho, seed, as_json):
    """Time one run and report throughput and state size."""
    if target == "counter":
        bank = CounterBank(width, T, rho, NoiseSource(seed, "bench"))
        rng = make_rng(seed, "bench", "updates")
        updates = rng.integers(-1, 2, size=(T, width))
        start = time.perf_counter()
        for row in updates:
            bank._advance(row)
        elapsed = time.perf_counter() - start
        _emit({"target": target, "T": T, "width": width, "seconds": elapsed,
               "counter_steps_per_second": T * width / elapsed, "state_words": bank.state_words(),
               "tau": noise_floor(T, rho, B=width).tau}, as_json)
        return
    model = "general" if target == "domain-reduction" else "strict"
    cfg = ex.RunConfig(estimator=target, seed=seed, rho=rho, generator=ex.GeneratorSpec("uniform", n, T, model))
    meta, stream = ex.load_stream(cfg, seed)
    est = ex.build_estimator(cfg, meta, seed)
    start = time.perf_counter()
    for a, s in stream:
        est.step(a, s)
    elapsed = time.perf_counter() - start
    _emit({"target": target, "T": T, "n": n, "seconds": elapsed, "updates_per_second": T / elapsed,
           "state_words": est.state_words()}, as_json)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="dpturnstile", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_INTERNAL
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_INTERNAL
    except HypothesisViolation as exc:
        click.echo(f"hypothesis violation: {exc}", err=True)
        return EXIT_HYPOTHESIS
    except (StreamFormatError, TraceFormatError, StrictTurnstileViolation) as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
