"""Command-line driver.

Exit codes: 0 ok, 2 usage, 3 format or data error, 4 verification failure.
Config precedence: ``--config`` file, then ``ULTRADELTA_*`` environment
variables, then flags.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .archive import CompressedDelta
from .codec.ratio import entropy_ratio
from .config import ENV_PREFIX, PipelineConfig, coerce, env_overrides, parse_text
from .container import load_container, save_container
from .exceptions import FormatError, UltraDeltaError, UsageError
from .pipeline import compress_tasks, decompress, ratio_report, verify_archive

log = logging.getLogger("ultradelta")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_VERIFY = 0, 2, 3, 4

# flag name -> config key; ULTRADELTA_<FLAG> sets the same value as the flag
FLAG_KEYS = {
    "sparsity": "s_mid",
    "step": "s_step",
    "bits": "bit_width",
    "intervals": "intervals",
    "gamma": "gamma",
    "scheme": "scheme",
    "seed": "master_seed",
    "threads": "threads",
    "select": "selector",
}


def flag_env_overrides(environ):
    """Config values from flag-named variables, e.g. ``ULTRADELTA_BITS``."""
    out = {}
    for flag, key in FLAG_KEYS.items():
        name = ENV_PREFIX + flag.upper()
        if name in environ:
            out[key] = coerce(key, environ[name])
    if ENV_PREFIX + "NO_QUANT" in environ:
        out["use_quantization"] = not coerce("use_quantization", environ[ENV_PREFIX + "NO_QUANT"])
    if ENV_PREFIX + "GAMMA_RANGE" in environ:
        out["gamma_min"], out["gamma_max"] = _gamma_range(environ[ENV_PREFIX + "GAMMA_RANGE"])
    return out


def _gamma_range(text):
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"gamma range expects 'min,max', got {text!r}") from None
    return lo, hi


def _emit(records, fmt, out):
    """Write ``records`` (list of dicts) as json-lines or aligned text."""
    if fmt == "json-lines":
        for rec in records:
            out.write(json.dumps(rec, sort_keys=True) + "\n")
        return
    for rec in records:
        kind = rec.get("type", "")
        body = "  ".join(f"{k}={_fmt(v)}" for k, v in rec.items() if k != "type")
        out.write(f"{kind:<8} {body}\n" if kind else body + "\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def _config_from_args(args, environ=None):
    environ = os.environ if environ is None else environ
    values = {}
    if args.config:
        values.update(parse_text(Path(args.config).read_text()))
    values.update(env_overrides(environ))
    values.update(flag_env_overrides(environ))
    for flag, key in FLAG_KEYS.items():
        if getattr(args, flag) is not None:
            values[key] = getattr(args, flag)
    if args.no_quant:
        values["use_quantization"] = False
    if args.gamma_range:
        values["gamma_min"], values["gamma_max"] = _gamma_range(args.gamma_range)
    if args.per_layer_denominator:
        values["per_layer_denominator"] = True
    return PipelineConfig.from_dict(values)


def cmd_compress(args, out):
    config = _config_from_args(args)
    base = load_container(args.base)
    finetuned = {}
    for path in args.finetuned:
        name = Path(path).stem
        if name in finetuned:
            raise UsageError(f"two fine-tuned inputs share the task name {name!r}")
        finetuned[name] = load_container(path)
    archives = compress_tasks(base, finetuned, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for name, archive in archives.items():
        target = out_dir / f"{name}.udar"
        archive.save(target)
        report, _, summary = ratio_report(archive)
        records.append({
            "type": "task", "task": name, "archive": str(target), "gamma": archive.gamma,
            "overall_sparsity": archive.overall_sparsity,
            "trace_norm": archive.trace_norms.model_trace_norm,
            "entropy_ratio": report.entropy_ratio,
            "realized_bits_per_parameter": report.bits_per_parameter["stored"],
        })
    _emit(records, args.format, out)
    return EXIT_OK


def cmd_decompress(args, out):
    base = load_container(args.base)
    archive = CompressedDelta.load(args.archive)
    rebuilt = decompress(base, archive, args.override_fingerprint)
    save_container(rebuilt, args.out)
    _emit([{"type": "written", "path": args.out, "tensors": len(rebuilt)}], args.format, out)
    return EXIT_OK


def stats_records(archive):
    report, rows, summary = ratio_report(archive)
    records = [{"type": "summary", **summary}, {"type": "ratio", **report.to_dict()}]
    records += [{"type": "layer", **row} for row in rows]
    return records


def cmd_stats(args, out):
    _emit(stats_records(CompressedDelta.load(args.archive)), args.format, out)
    return EXIT_OK


def cmd_verify(args, out):
    try:
        archive = CompressedDelta.load(args.archive)
    except FormatError as exc:
        _emit([{"type": "check", "check": "archive_integrity", "passed": False, "detail": str(exc)},
               {"type": "result", "passed": False, "failed": 1}], args.format, out)
        return EXIT_VERIFY
    report = verify_archive(archive, load_container(args.base), load_container(args.finetuned))
    records = [{"type": "check", **c} for c in report.checks]
    records.append({"type": "result", "passed": report.passed, "failed": len(report.failures)})
    _emit(records, args.format, out)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_ratio(args, out):
    report = entropy_ratio(args.sparsity, args.bits)
    _emit([{"type": "ratio", "sparsity": report.sparsity, "bit_width": report.bit_width,
            "h_geo": report.h_geo, "h_comp": report.h_comp,
            "entropy_ratio": report.entropy_ratio,
            "index_free_ratio": report.index_free_ratio}], args.format, out)
    return EXIT_OK


def cmd_harness(args, out):
    from .harness import ToyTask, accuracy_retention_test

    task = ToyTask(seed=args.task_seed)
    grid = []
    for s in args.sparsity:
        for b in args.bits:
            point = {"s_mid": s, "s_step": min(args.step, s, 0.999 - s), "master_seed": args.seed}
            if b == 0:
                point.update(use_quantization=False, intervals=args.intervals)
            else:
                point["bit_width"] = b
            grid.append(point)
    rows = accuracy_retention_test(task, grid)
    _emit([{"type": "row", "sparsity": s, "bits": b, "accuracy_original": a0,
            "accuracy_compressed": a1} for s, b, a0, a1 in rows], args.format, out)
    return EXIT_OK


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--sparsity", type=float, help="target overall sparsity (s_mid)")
    p.add_argument("--step", type=float, help="sparsity step between variance groups")
    p.add_argument("--bits", type=int, help="quantization bit width")
    p.add_argument("--no-quant", action="store_true", help="interval-grouped unquantized variant")
    p.add_argument("--intervals", type=int, help="interval count for --no-quant")
    p.add_argument("--scheme", choices=["golomb", "csr", "bcsr"])
    p.add_argument("--gamma", type=float, help="fixed rescaling factor for every task")
    p.add_argument("--gamma-range", help="min,max of the rescaling map")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int)
    p.add_argument("--select", action="append", help="layer glob; prefix ! to exclude")
    p.add_argument("--per-layer-denominator", action="store_true",
                   help="rescale by gamma/(1-s_layer) instead of the overall sparsity")


def build_parser():
    parser = argparse.ArgumentParser(prog="ultradelta", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--format", choices=["text", "json-lines"], default="text")
        p.set_defaults(func=func)
        return p

    p = add("compress", cmd_compress, "compress fine-tuned models against a base")
    p.add_argument("--base", required=True)
    p.add_argument("--finetuned", action="append", required=True)
    p.add_argument("--out", required=True, help="output directory for <task>.udar archives")
    _add_config_flags(p)

    p = add("decompress", cmd_decompress, "rebuild fine-tuned weights from an archive")
    p.add_argument("--base", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--override-fingerprint", action="store_true")

    p = add("stats", cmd_stats, "report ratios and per-layer statistics")
    p.add_argument("--archive", required=True)

    p = add("verify", cmd_verify, "check an archive against its source weights")
    p.add_argument("--archive", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--finetuned", required=True)

    p = add("ratio", cmd_ratio, "entropy-based compression ratio calculator")
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--bits", type=int, default=4)

    p = add("harness", cmd_harness, "accuracy-retention table on the toy task")
    p.add_argument("--sparsity", type=float, nargs="+", default=[0.9, 0.95, 0.99])
    p.add_argument("--bits", type=int, nargs="+", default=[4], help="0 selects --no-quant")
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--intervals", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task-seed", type=int, default=0)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, out)
    except UltraDeltaError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_FORMAT


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
