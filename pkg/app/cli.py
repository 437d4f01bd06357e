"""Command-line entry point: enhance, mix, rover, score and defaults subcommands."""

import argparse
import logging
import os
import sys
from collections.abc import Mapping
from pathlib import Path
from typing import Any, NoReturn, Optional

import polars as pl
from sqlalchemy.exc import SQLAlchemyError

from app.audio_io import read_channels, write_wav
from app.config import ToolConfig, defaults_text, load_tool_config
from app.database import record_diagnostics
from app.enhance_service import EnhanceService, parse_manifest
from app.errors import ConfigValidationError, ToolkitError, UsageError
from app.mixer import MixSpec, mix_components, mix_corpus, parse_mix_manifest, sample_snr
from app.models import MixRecord, PhiZeroMode, TieBreak, UtteranceDiagnostics
from app.rover import combine_files, format_hypothesis_line, format_trn_line, read_hypotheses
from app.startup import startup
from app.wer_eval import format_table, relative_reduction, score_corpus, to_frame

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_DIAGNOSTIC_SCHEMA = {
    "utterance_id": pl.Utf8,
    "status": pl.Utf8,
    "num_channels": pl.Int64,
    "mean_mu": pl.Float64,
    "passthrough_fraction": pl.Float64,
    "noise_reduction_db": pl.Float64,
    "distortion_db": pl.Float64,
    "input_duration": pl.Float64,
    "output_duration": pl.Float64,
    "error": pl.Utf8,
}
_MIX_SCHEMA = {
    "utterance_id": pl.Utf8,
    "status": pl.Utf8,
    "snr_db": pl.Float64,
    "gain": pl.Float64,
    "noise_offset": pl.Int64,
    "seed": pl.Int64,
    "error": pl.Utf8,
}


class ToolArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def _frame(rows: list[Any], schema: dict[str, Any]) -> pl.DataFrame:
    data = {name: [] for name in schema}
    for row in rows:
        dumped = row.model_dump(mode="json")
        for name in schema:
            data[name].append(dumped.get(name))
    return pl.DataFrame(data, schema=schema)


def diagnostics_frame(rows: list[UtteranceDiagnostics]) -> pl.DataFrame:
    return _frame(rows, _DIAGNOSTIC_SCHEMA)


def mix_frame(rows: list[MixRecord]) -> pl.DataFrame:
    return _frame(rows, _MIX_SCHEMA)


def write_tsv(frame: pl.DataFrame, path: Path, header: Optional[list[str]] = None) -> None:
    text = frame.write_csv(separator="\t", float_precision=6, null_value="")
    comments = "".join(f"# {line}\n" for line in header or [])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(comments + text)


def _snr_range(value: str) -> tuple[float, float]:
    lo, sep, hi = value.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {value!r}")
    return float(lo), float(hi)


def build_parser() -> ToolArgumentParser:
    defaults = ToolConfig()
    parser = ToolArgumentParser(
        prog="chime-mwf",
        description="Multichannel SDW-MWF speech enhancement, SNR mixing, ROVER combination and WER scoring.",
        epilog="Exit codes: 0 success, 1 usage, 2 validation, 3 runtime. "
        "Every key of `chime-mwf defaults` may be set in --config or as MWF_<KEY>.",
    )
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    enhance = commands.add_parser("enhance", help="SDW-MWF enhancement of a manifest of utterances")
    enhance.add_argument("--manifest", type=Path, required=True, help="id<TAB>output<TAB>mic1<TAB>mic2 ...")
    enhance.add_argument("--report", type=Path, required=True, help="tab-separated diagnostics report")
    enhance.add_argument("--n-edge-frames", dest="n_edge_frames", type=int, help=f"default {defaults.n_edge_frames}")
    enhance.add_argument("--phi-0-ratio", dest="phi_0_ratio", type=float, help=f"default {defaults.phi_0_ratio}")
    enhance.add_argument("--phi-0", dest="phi_0_value", type=float, help="absolute desired residual noise level")
    enhance.add_argument("--ref-channel", dest="ref_channel", type=int, help="0-based, default 0 (first mic)")
    enhance.add_argument("--snr-mode", dest="snr_mode", choices=["per_bin", "broadband"])
    enhance.add_argument("--mu-mode", dest="mu_mode", choices=["adaptive", "fixed"])
    enhance.add_argument("--fixed-mu", dest="fixed_mu", type=float, help=f"default {defaults.fixed_mu}")
    enhance.add_argument("--format", dest="enhance_format", choices=["pcm16", "float32"])
    enhance.add_argument("--workers", dest="workers", type=int, help=f"default {defaults.workers}")
    enhance.add_argument("--record", action="store_true", help="also store diagnostics in APP_DATABASE_URL")
    enhance.add_argument("--run-id", help="run id for --record, default: manifest file stem")

    mix = commands.add_parser("mix", help="mix clean speech with noise at a fixed or random SNR")
    mix.add_argument("--clean", type=Path, nargs="+", help="clean files, one per mic or one multichannel file")
    mix.add_argument("--noise", type=Path, nargs="+", help="noise files, same layout as --clean")
    mix.add_argument("--out", type=Path, help="output mixture")
    mix.add_argument("--manifest", type=Path, help="id<TAB>output<TAB>clean,..<TAB>noise,..")
    mix.add_argument("--report", type=Path, help="tab-separated mixing report")
    snr = mix.add_mutually_exclusive_group()
    snr.add_argument("--snr", dest="snr_db", type=float, help="fixed SNR in dB")
    snr.add_argument(
        "--snr-range", dest="snr_range", type=_snr_range, help="lo:hi, default -6:6; spell a negative lo as --snr-range=-6:6"
    )
    mix.add_argument("--seed", dest="seed", type=int, help=f"default {defaults.seed}")
    mix.add_argument("--ref-channel", dest="ref_channel", type=int)
    mix.add_argument("--format", dest="mix_format", choices=["pcm16", "float32"])

    rover = commands.add_parser("rover", help="combine hypothesis files by voting")
    rover.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True, help="absorbed in this order")
    rover.add_argument("--out", type=Path, required=True)
    rover.add_argument("--alpha", dest="alpha", type=float, help=f"default {defaults.alpha}")
    rover.add_argument("--null-conf", dest="null_confidence", type=float, help=f"default {defaults.null_confidence}")
    rover.add_argument("--tie-break", dest="tie_break", choices=[t.value for t in TieBreak], help=f"default {defaults.tie_break.value}")
    rover.add_argument("--no-casefold", dest="casefold", action="store_const", const=False)
    rover.add_argument("--strip-punctuation", dest="strip_punctuation", action="store_const", const=True)
    rover.add_argument("--format", dest="output_format", choices=["hyp", "trn"], default="hyp")

    score = commands.add_parser("score", help="word error rate of trn hypotheses against references")
    score.add_argument("--ref", type=Path, required=True)
    score.add_argument("--hyp", type=Path, required=True)
    score.add_argument("--baseline", type=Path, help="second hypothesis file for relative WER reduction")
    score.add_argument("--report", type=Path, help="tab-separated per-utterance report")
    score.add_argument("--no-tags", dest="group_by_tag", action="store_const", const=False)

    write_defaults = commands.add_parser("defaults", help="write every configuration key with its default")
    write_defaults.add_argument("--out", type=Path, default=Path("defaults.conf"))
    return parser


_CONFIG_DESTS = set(ToolConfig.model_fields)


def flag_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_DESTS and v is not None}
    if getattr(args, "snr_range", None) is not None:
        overrides["snr_lo"], overrides["snr_hi"] = args.snr_range
    if args.command == "enhance" and args.phi_0_value is not None:
        overrides["phi_0_mode"] = PhiZeroMode.ABSOLUTE.value
    return overrides


def run_enhance(args: argparse.Namespace, config: ToolConfig) -> int:
    service = EnhanceService(config.enhance_config())
    entries = parse_manifest(args.manifest)
    rows = service.enhance_corpus(entries, workers=config.workers)
    write_tsv(diagnostics_frame(rows), args.report)
    if args.record:
        stored = record_diagnostics(args.run_id or args.manifest.stem, rows)
        logger.info(f"recorded {stored} diagnostics rows")
    failed = sum(1 for row in rows if row.error is not None)
    logger.info(f"enhanced {len(rows) - failed} of {len(rows)} utterances")
    return EXIT_OK


def run_mix(args: argparse.Namespace, config: ToolConfig) -> int:
    mix_config = config.mix_config()
    header = [f"seed={mix_config.seed}"]
    if args.manifest is not None:
        if args.report is None:
            raise UsageError("--manifest requires --report")
        records = mix_corpus(parse_mix_manifest(args.manifest), mix_config)
        write_tsv(mix_frame(records), args.report, header)
        return EXIT_OK

    if not args.clean or not args.noise or args.out is None:
        raise UsageError("mix needs --clean, --noise and --out, or --manifest")
    target = mix_config.snr_db
    if target is None:
        target = sample_snr(mix_config.snr_lo, mix_config.snr_hi, mix_config.seed)
    scene = mix_components(
        MixSpec(
            clean=read_channels(args.clean),
            noise=read_channels(args.noise),
            target_snr_db=target,
            ref_channel=mix_config.ref_channel,
            seed=mix_config.seed,
        )
    )
    write_wav(scene.mixture, args.out, mix_config.output_format)
    logger.info(f"mixed at {target:.3f} dB (seed={mix_config.seed}, gain={scene.gain:.6g}) -> {args.out}")
    if args.report is not None:
        record = MixRecord(
            utterance_id=args.out.stem, snr_db=target, gain=scene.gain, noise_offset=scene.noise_offset, seed=mix_config.seed
        )
        write_tsv(mix_frame([record]), args.report, header)
    return EXIT_OK


def run_rover(args: argparse.Namespace, config: ToolConfig) -> int:
    rover_config = config.rover_config()
    hypothesis_sets = [read_hypotheses(path, rover_config) for path in args.inputs]
    combined = combine_files(hypothesis_sets, rover_config)
    formatter = format_trn_line if args.output_format == "trn" else format_hypothesis_line
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("".join(formatter(u, hyp) + "\n" for u, hyp in combined.items()))
    logger.info(f"combined {len(args.inputs)} systems over {len(combined)} utterances -> {args.out}")
    return EXIT_OK


def run_score(args: argparse.Namespace, config: ToolConfig) -> int:
    report = score_corpus(args.ref, args.hyp, config.group_by_tag)
    output = format_table(report)
    if args.baseline is not None:
        baseline = score_corpus(args.ref, args.baseline, config.group_by_tag)
        reduction = relative_reduction(baseline.wer, report.wer)
        output += f"baseline WER {100 * baseline.wer:.2f}%, relative reduction {100 * reduction:.2f}%\n"
    if args.report is not None:
        write_tsv(to_frame(report), args.report)
    sys.stdout.write(output)
    return EXIT_OK


def run_defaults(args: argparse.Namespace, config: ToolConfig) -> int:
    args.out.write_text(defaults_text())
    logger.info(f"wrote defaults to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "enhance": run_enhance,
    "mix": run_mix,
    "rover": run_rover,
    "score": run_score,
    "defaults": run_defaults,
}


def run(argv: list[str], environ: Optional[Mapping[str, str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        logger.error(f"usage: {e}")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        logger.debug(f"argument parser exited with {e.code}")
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    logging.getLogger().setLevel(getattr(logging, args.log_level))
    try:
        config = load_tool_config(args.config, environ, flag_overrides(args))
        if args.command == "enhance":
            config.enhance_config()
        # tables are created only once the settings are known to be valid
        startup(getattr(logging, args.log_level), with_database=getattr(args, "record", False))
        return _HANDLERS[args.command](args, config)
    except ConfigValidationError as e:
        logger.error(f"[{e.module}] invalid configuration: {e}")
        return EXIT_VALIDATION
    except UsageError as e:
        logger.error(f"usage: {e}")
        return EXIT_USAGE
    except (ToolkitError, OSError, SQLAlchemyError) as e:
        logger.error(f"[{getattr(e, 'module', 'io')}] {e}")
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run(sys.argv[1:], os.environ))
