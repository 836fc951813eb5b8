"""Command-line front end.

Examples
--------
::

    multivariance --input data.csv --blocks "0-1;2;3" --command compute
    multivariance --input data.csv --command test --method permutation --seed 7
    multivariance --command power --generator sinusoidal --param 1,2,4 --N 200
    multivariance --command bernstein --N 10000 --seed 1
    multivariance --command oracle-check --seed 3

Exit codes: 0 on success, 2 on input or parameter errors, 3 on numerical
failures. Errors are reported as ``{"error": {"code": ..., "message": ...}}``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import experiments, inference, oracle
from . import multivariance as mv
from .centering import BlockSample, broadcast_specs, centered_matrices
from .cndf import CndfSpec, parse_spec
from .errors import InputError, MultivarianceError, NumericalError, ParameterError
from .rng import make_rng, resolve_seed

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

COMMANDS = ("compute", "test", "power", "bernstein", "oracle-check")
METHODS = ("conservative", "permutation", "montecarlo")


@dataclass
class RunConfig:
    command: str = "compute"
    input_path: str | None = None
    block_spec: str | None = None
    psi_specs: list[str] = field(default_factory=lambda: ["euclid"])
    method: str = "conservative"
    statistic: str = "normalized-total"
    alpha: float = 0.05
    resamples: int = inference.DEFAULT_RESAMPLES
    seed: int | None = None
    output: str | None = None
    format: str = "json"
    # power / bernstein / oracle-check
    generator: str = "bernstein"
    params: list[int] = field(default_factory=list)
    sizes: list[int] = field(default_factory=list)
    replications: int | None = None
    power_test: str = "test2"
    workers: int | None = None


# --------------------------------------------------------------------- input


def parse_block_spec(text: str, n_columns: int) -> list[list[int]]:
    """Parse ``"0-1;2;3"`` into column lists (0-based, inclusive ranges)."""
    blocks: list[list[int]] = []
    seen: dict[int, int] = {}
    for k, part in enumerate(text.split(";")):
        part = part.strip()
        if not part:
            raise InputError(f"block {k} in {text!r} is empty")
        lo_text, sep, hi_text = part.partition("-")
        try:
            lo = int(lo_text)
            hi = int(hi_text) if sep else lo
        except ValueError:
            raise InputError(f"cannot parse block {part!r}; expected 'i' or 'i-j'") from None
        if lo < 0 or hi < lo:
            raise InputError(f"invalid column range {part!r}")
        if hi >= n_columns:
            raise InputError(f"block {part!r} refers to column {hi} but the file has {n_columns} columns")
        cols = list(range(lo, hi + 1))
        for c in cols:
            if c in seen:
                raise InputError(f"column {c} appears in blocks {seen[c]} and {k}; ranges must be disjoint")
            seen[c] = k
        blocks.append(cols)
    return blocks


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def ingest_csv(path, block_spec: str | None = None) -> BlockSample:
    """Read a numeric CSV into a :class:`BlockSample`.

    A first row without any numeric cell is treated as a header. Without a
    block spec every column is its own block. Error messages use 1-based
    file line numbers and 0-based column indices.
    """
    try:
        with open(path, newline="") as fh:
            rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if any(c.strip() for c in row)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    if rows and not any(_is_number(c.strip()) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")

    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for r, (line, row) in enumerate(rows):
        if len(row) != width:
            raise InputError(f"{path}, line {line}: expected {width} fields, found {len(row)}")
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise InputError(f"{path}, line {line}, column {c}: non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(value):
                raise InputError(f"{path}, line {line}, column {c}: non-finite value {cell.strip()!r}")
            data[r, c] = value

    if block_spec is None:
        return BlockSample(data)
    blocks = parse_block_spec(block_spec, width)
    order = [c for cols in blocks for c in cols]
    return BlockSample(data[:, order], tuple(len(cols) for cols in blocks))


def parse_psi(texts: Sequence[str], sample: BlockSample) -> list[CndfSpec]:
    """One spec string broadcasts to every block; otherwise one per block."""
    if len(texts) == 1:
        return broadcast_specs(parse_spec(texts[0]), sample)
    if len(texts) != sample.n:
        raise InputError(f"got {len(texts)} cndf specs for {sample.n} blocks")
    return [parse_spec(t, w) for t, w in zip(texts, sample.widths)]


# -------------------------------------------------------------------- output


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return "%.17g" % x


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _flat_csv(record: dict) -> str:
    lines = ["key,value"]
    for key, value in record.items():
        if isinstance(value, (list, tuple)):
            for i, v in enumerate(value):
                lines.append(f"{key}[{i}],{_cell(v)}")
        elif isinstance(value, dict):
            for k, v in value.items():
                lines.append(f"{key}.{k},{_cell(v)}")
        else:
            lines.append(f"{key},{_cell(value)}")
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _write(config: RunConfig, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render(config: RunConfig, record: dict) -> str:
    return _flat_csv(record) if config.format == "csv" else dumps(record)


# ------------------------------------------------------------------ commands


def _load(config: RunConfig) -> tuple[BlockSample, list[CndfSpec]]:
    if not config.input_path:
        raise InputError(f"command {config.command!r} needs --input")
    sample = ingest_csv(config.input_path, config.block_spec)
    return sample, parse_psi(config.psi_specs, sample)


def _compute(config: RunConfig) -> dict:
    sample, specs = _load(config)
    est = mv.compute(sample, specs)
    record = est.to_dict()
    record["psi"] = [str(s) for s in specs]
    return record


def _empirical_samplers(sample: BlockSample):
    def make(block):
        def draw(rng, size):
            return block[rng.integers(0, len(block), size)]
        return draw
    return [make(sample.block(i)) for i in range(sample.n)]


def _test(config: RunConfig) -> dict:
    sample, specs = _load(config)
    kind = inference.Statistic(config.statistic)
    if config.method == "conservative":
        if kind is inference.Statistic.NORMALIZED_M:
            report = inference.test_multivariance_conservative(sample, specs, config.alpha)
        elif kind is inference.Statistic.NORMALIZED_TOTAL_M:
            report = inference.test_total_conservative(sample, specs, config.alpha)
        else:
            raise ParameterError("the conservative test needs --statistic normalized or normalized-total")
    elif config.method == "permutation":
        report = inference.permutation_test(sample, specs, kind, config.resamples, config.seed, config.alpha)
    else:
        # marginals are unknown for file input; resample each block's observed values
        report = inference.montecarlo_test(
            sample, specs, _empirical_samplers(sample), kind, config.resamples, config.seed, config.alpha
        )
    record = report.to_dict()
    record["N"] = sample.N
    record["n"] = sample.n
    record["psi"] = [str(s) for s in specs]
    return record


def _power(config: RunConfig) -> str:
    specs = tuple(parse_spec(t) for t in config.psi_specs)
    seed = resolve_seed(config.seed)
    params = config.params or [None]
    sizes = config.sizes or [200]
    configs = [
        experiments.PowerStudyConfig(
            generator=config.generator,
            N=N,
            param=param,
            replications=config.replications or 1000,
            alpha=config.alpha,
            test=config.power_test,
            specs=specs,
            resamples=config.resamples,
            statistic=config.statistic,
            seed=seed,
        )
        for param in params
        for N in sizes
    ]
    rows = experiments.power_study(configs, workers=config.workers)
    return experiments.rows_to_json(rows) if config.format == "json" else experiments.rows_to_csv(rows)


def _bernstein(config: RunConfig) -> dict:
    N = config.sizes[0] if config.sizes else 10_000
    spec = parse_spec(config.psi_specs[0])
    return experiments.bernstein_report(N, config.seed, spec)


def _rel_close(a: float, b: float, rtol: float = 1e-10, atol: float = 1e-14) -> bool:
    return abs(a - b) <= atol + rtol * max(abs(a), abs(b))


def oracle_check(instances: int = 50, seed=None) -> dict:
    """Compare the fast estimators against the independent oracles on random small inputs."""
    seed = resolve_seed(seed)
    rng = make_rng(seed)
    families = [CndfSpec.euclidean(), CndfSpec.minkowski(1.5), CndfSpec.bounded_exp(0.7), CndfSpec.stable(0.5)]
    checks = {"matrix_vs_bruteforce": 0, "matrix_vs_population": 0, "total_vs_subsets": 0}
    failures = {k: 0 for k in checks}
    for _ in range(instances):
        N = int(rng.integers(2, 11))
        widths = tuple(int(w) for w in rng.integers(1, 4, int(rng.integers(2, 5))))
        data = rng.integers(-3, 4, (N, sum(widths))).astype(float)
        sample = BlockSample(data, widths)
        specs = broadcast_specs(families[int(rng.integers(len(families)))], sample)
        mats = centered_matrices(sample, specs)
        fast = mv.sample_multivariance(mats)
        brute = oracle.sample_multivariance_bruteforce(sample, specs)
        pop = oracle.population_multivariance_exact(oracle.FiniteDistribution.empirical(sample), specs)
        for key, ok in (
            ("matrix_vs_bruteforce", _rel_close(fast, brute)),
            ("matrix_vs_population", _rel_close(fast, pop)),
            ("total_vs_subsets", _rel_close(mv.sample_total_multivariance(mats), oracle.total_via_subset_enumeration(mats))),
        ):
            checks[key] += 1
            failures[key] += not ok

    stats = oracle.population_statistics(experiments.bernstein_distribution(), CndfSpec.euclidean())
    target = experiments.bernstein_population()
    bern_ok = (
        abs(stats["m2"] - target["m2"]) <= 1e-12
        and abs(stats["total_m2"] - target["total_m2"]) <= 1e-12
        and all(abs(v - 0.5) <= 1e-12 for v in (*stats["a"], *stats["b"]))
    )
    summary = {
        name: {"instances": checks[name], "failures": failures[name], "pass": failures[name] == 0}
        for name in checks
    }
    summary["bernstein_population"] = {"instances": 1, "failures": int(not bern_ok), "pass": bern_ok}
    return {"seed": seed, "checks": summary, "pass": all(v["pass"] for v in summary.values())}


def run(config: RunConfig) -> int:
    """Execute one command and write its report; returns the exit code."""
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if config.command == "power":
                text = _power(config)
                ok = True
            else:
                if config.command == "compute":
                    record = _compute(config)
                elif config.command == "test":
                    record = _test(config)
                elif config.command == "bernstein":
                    record = _bernstein(config)
                elif config.command == "oracle-check":
                    record = oracle_check(config.replications or 50, config.seed)
                else:
                    raise ParameterError(f"unknown command {config.command!r}")
                ok = record.get("pass", True)
                if caught:
                    record["warnings"] = sorted({str(w.message) for w in caught})
                text = _render(config, record)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        _write(config, text)
        return EXIT_OK if ok else EXIT_NUMERICAL
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(config, "numerical_error", exc, EXIT_NUMERICAL)
    except MultivarianceError as exc:
        return _fail(config, exc.code, exc, EXIT_INPUT)
    except (ValueError, OSError) as exc:
        return _fail(config, "input_error", exc, EXIT_INPUT)


def _fail(config: RunConfig, code: str, exc: BaseException, status: int) -> int:
    message = dumps({"error": {"code": code, "message": str(exc)}})
    print(message, file=sys.stderr)
    return status


# -------------------------------------------------------------------- parser


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="multivariance",
        description="Distance multivariance statistics and independence tests.",
    )
    p.add_argument("--command", choices=COMMANDS, default="compute")
    p.add_argument("--input", dest="input_path", help="numeric CSV file, one observation per row")
    p.add_argument("--blocks", dest="block_spec", help='column ranges, 0-based inclusive, e.g. "0-1;2;3"')
    p.add_argument(
        "--psi",
        default="euclid",
        help='cndf per block separated by ";" or one spec for all: euclid, stable:alpha=A, '
        "minkowski:p=P, boundedexp:gamma=G",
    )
    p.add_argument("--method", choices=METHODS, default="conservative")
    p.add_argument("--statistic", choices=[s.value for s in inference.Statistic], default="normalized-total")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--resamples", type=int, default=inference.DEFAULT_RESAMPLES)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"))

    g = p.add_argument_group("experiments")
    g.add_argument("--generator", choices=[g.value for g in experiments.Generator], default="bernstein")
    g.add_argument("--param", type=_int_list, default=[], help="generator parameters, comma separated")
    g.add_argument("--N", dest="sizes", type=_int_list, default=[], help="sample sizes, comma separated")
    g.add_argument(
        "--replications", type=int, help="power replications (default 1000) or oracle-check instances (default 50)"
    )
    g.add_argument("--test", dest="power_test", choices=[t.value for t in experiments.TestKind], default="test2")
    g.add_argument("--workers", type=int, help="worker threads (default: MULTIVARIANCE_THREADS or CPU count)")
    return p


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    fmt = args.format or ("csv" if args.command == "power" else "json")
    return RunConfig(
        command=args.command,
        input_path=args.input_path,
        block_spec=args.block_spec,
        psi_specs=[s for s in args.psi.split(";") if s.strip()] or ["euclid"],
        method=args.method,
        statistic=args.statistic,
        alpha=args.alpha,
        resamples=args.resamples,
        seed=args.seed,
        output=args.output,
        format=fmt,
        generator=args.generator,
        params=args.param,
        sizes=args.sizes,
        replications=args.replications,
        power_test=args.power_test,
        workers=args.workers,
    )


def main(argv: Sequence[str] | None = None) -> int:
    return run(config_from_args(argv))


if __name__ == "__main__":
    sys.exit(main())
