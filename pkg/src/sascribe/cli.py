"""Command line front end.

Subcommands:

  sim    generate synthetic meeting bundles
  infer  run the chunked pipeline over bundles, writing hypothesis artifacts
  score  compare hypothesis artifacts against bundle references
  fmt    parse serialized transcript text and print segments as JSONL

Exit codes: 0 success, 1 file and I/O errors, 2 invalid arguments or
configuration, 3 content diagnostics (parse errors, dropped spans, missing
references).

Every subcommand writes a ``<cmd>.manifest.json`` describing the invocation
(argv, configuration echo, inputs, outputs, version, wall time).  All other
artifacts are byte-deterministic for a given input and configuration; the
manifest is the only file that records timing.

The ``GSTAR_LOG`` environment variable sets the log level by name
(``debug``, ``info``, ``warning``, ``error``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import Optional, Sequence

from . import __version__
from .core import PipelineConfig
from .metrics import aggregate_reports, report_to_dict, score_meeting
from .pipeline import PipelineError, oracle_backend, run_meeting
from .simulator import (
    SimConfig,
    gen_meeting,
    read_bundle,
    read_rttm,
    read_transcript_jsonl,
    write_bundle,
    write_rttm,
    write_transcript_jsonl,
)
from .sot import SotParseError, parse as parse_sot
from .tracking import write_cache_snapshot

log = logging.getLogger("sascribe")

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_CONTENT = 3


def _setup_logging() -> None:
    level_name = os.environ.get("GSTAR_LOG", "").strip().upper()
    level = getattr(logging, level_name, None) if level_name else None
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _write_json(path: str, obj: object) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(path: str, command: str, argv: Sequence[str], started: float,
              config: object, inputs: list[str], outputs: list[str]) -> None:
    _write_json(
        path,
        {
            "argv": list(argv),
            "command": command,
            "config": config,
            "inputs": inputs,
            "outputs": outputs,
            "version": __version__,
            "wall_time_s": time.monotonic() - started,
        },
    )


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="sascribe",
        description="chunked speaker-attributed transcription toolkit",
    )
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="generate synthetic meeting bundles")
    sim.add_argument("--out", required=True, help="output bundle directory")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--count", type=int, default=1,
                     help="number of bundles (seeds seed..seed+count-1)")
    sim.add_argument("--speakers", type=int, default=2)
    sim.add_argument("--duration", type=float, default=60.0, help="seconds")
    sim.add_argument("--overlap", type=float, default=0.0)
    sim.add_argument("--noise", type=float, default=0.0)
    sim.add_argument("--embed-dim", type=int, default=16)
    sim.add_argument("--mean-utterance", type=float, default=2.0, help="seconds")
    sim.add_argument("--gap", type=float, default=0.5, help="seconds")
    sim.add_argument("--frame-period", type=float, default=0.08, help="seconds")

    infer = sub.add_parser("infer", help="run the pipeline over bundles")
    infer.add_argument("bundles", nargs="+", metavar="BUNDLE")
    infer.add_argument("--chunk-s", type=float, default=20.0)
    infer.add_argument("--stride-k", type=int, default=4)
    infer.add_argument("--tau", type=float, default=0.5,
                       help="cosine threshold for cache matching")
    infer.add_argument("--resample", choices=("nearest", "linear"), default="nearest")
    infer.add_argument("--max-slots", type=int, default=4)
    infer.add_argument("--alpha", type=float, default=0.1,
                       help="evidence update rate")
    infer.add_argument("--resolution", type=float, default=0.02,
                       help="timestamp grid in seconds")
    infer.add_argument("--jobs", type=int, default=1)

    score = sub.add_parser("score", help="score hypothesis artifacts against references")
    score.add_argument("bundles", nargs="+", metavar="BUNDLE")
    score.add_argument("--collar", type=float, action="append", default=None,
                       help="diarization collar in seconds (repeatable)")
    score.add_argument("--jobs", type=int, default=1)
    score.add_argument("--out", help="write the aggregate report here instead of stdout")

    fmt = sub.add_parser("fmt", help="parse serialized transcript text")
    fmt.add_argument("path", metavar="FILE", help="input file, or - for stdin")
    fmt.add_argument("--mode", choices=("strict", "lenient"), default="strict")

    return top


# --- sim -------------------------------------------------------------------


def _cmd_sim(args: argparse.Namespace, argv: Sequence[str]) -> int:
    started = time.monotonic()
    if args.count < 1:
        print("sim: --count must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    outputs = []
    cfg_echo = None
    for seed in range(args.seed, args.seed + args.count):
        try:
            cfg = SimConfig(
                seed=seed,
                num_speakers=args.speakers,
                duration_s=args.duration,
                embed_dim=args.embed_dim,
                mean_utterance_s=args.mean_utterance,
                gap_s=args.gap,
                overlap_ratio=args.overlap,
                noise_sigma=args.noise,
                frame_period_s=args.frame_period,
            )
        except ValueError as exc:
            print(f"sim: {exc}", file=sys.stderr)
            return EXIT_USAGE
        meeting, _ = gen_meeting(cfg)
        dest = args.out if args.count == 1 else os.path.join(args.out, meeting.meeting_id)
        write_bundle(dest, meeting, cfg)
        outputs.append(dest)
        cfg_echo = asdict(cfg)
        log.info("wrote bundle %s", dest)
    os.makedirs(args.out, exist_ok=True)
    _manifest(
        os.path.join(args.out, "sim.manifest.json"),
        "sim", argv, started, cfg_echo, [], outputs,
    )
    return EXIT_OK


# --- infer -----------------------------------------------------------------


def _infer_one(bundle: str, cfg: PipelineConfig, argv: Sequence[str]) -> int:
    started = time.monotonic()
    meeting, sim_cfg = read_bundle(bundle)
    if sim_cfg is None:
        print(f"infer: {bundle}: bundle has no simulator config, so no vocabulary "
              "for decoding", file=sys.stderr)
        return EXIT_USAGE
    backend = oracle_backend(
        sim_cfg.vocab, meeting.acoustic.cols, meeting.tracker.cols, cfg
    )
    result = run_meeting(meeting, backend, cfg)
    hyp_jsonl = os.path.join(bundle, "hyp.jsonl")
    hyp_rttm = os.path.join(bundle, "hyp.rttm")
    sot_txt = os.path.join(bundle, "sot.txt")
    cache_txt = os.path.join(bundle, "cache.txt")
    with open(hyp_jsonl, "w") as fh:
        fh.write(write_transcript_jsonl(result.transcript))
    with open(hyp_rttm, "w") as fh:
        fh.write(write_rttm(result.intervals, meeting.meeting_id))
    with open(sot_txt, "w") as fh:
        for idx, text in enumerate(result.chunk_sots):
            fh.write(f"chunk{idx}\t{text}\n")
    with open(cache_txt, "w") as fh:
        fh.write(write_cache_snapshot(result.cache))
    for chunk_idx, diag in result.diagnostics:
        log.warning("%s: chunk %d decode diagnostic: %s", bundle, chunk_idx, diag.message)
    _manifest(
        os.path.join(bundle, "infer.manifest.json"),
        "infer", argv, started, asdict(cfg),
        [bundle], [hyp_jsonl, hyp_rttm, sot_txt, cache_txt],
    )
    return EXIT_OK


def _cmd_infer(args: argparse.Namespace, argv: Sequence[str]) -> int:
    try:
        cfg = PipelineConfig(
            chunk_target_s=args.chunk_s,
            stride_k=args.stride_k,
            resample_mode=args.resample,
            max_slots=args.max_slots,
            similarity_threshold=args.tau,
            evidence_alpha=args.alpha,
            timestamp_resolution_s=args.resolution,
        )
    except ValueError as exc:
        print(f"infer: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("infer: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs == 1:
        codes = [_infer_one(b, cfg, argv) for b in args.bundles]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(lambda b: _infer_one(b, cfg, argv), args.bundles))
    return max(codes)


# --- score -----------------------------------------------------------------


def _score_one(bundle: str, collars: tuple[float, ...], argv: Sequence[str]):
    started = time.monotonic()
    meeting, _ = read_bundle(bundle)
    if meeting.reference is None:
        print(f"score: {bundle}: bundle has no reference", file=sys.stderr)
        return EXIT_CONTENT, None
    hyp_jsonl = os.path.join(bundle, "hyp.jsonl")
    hyp_rttm = os.path.join(bundle, "hyp.rttm")
    if not os.path.exists(hyp_jsonl):
        print(f"score: {bundle}: no hyp.jsonl (run infer first)", file=sys.stderr)
        return EXIT_CONTENT, None
    with open(hyp_jsonl) as fh:
        hyp_t = read_transcript_jsonl(fh.read(), meeting.meeting_id)
    hyp_iv: tuple = ()
    if os.path.exists(hyp_rttm):
        with open(hyp_rttm) as fh:
            rows = read_rttm(fh.read())
        hyp_iv = tuple((int(spk), start, start + dur) for spk, start, dur in rows)
    report = score_meeting(
        meeting.meeting_id,
        meeting.reference.transcript,
        meeting.reference.intervals,
        hyp_t,
        hyp_iv,
        collars=collars,
    )
    report_path = os.path.join(bundle, "report.json")
    _write_json(report_path, report_to_dict(report))
    _manifest(
        os.path.join(bundle, "score.manifest.json"),
        "score", argv, started, {"collars": list(collars)},
        [bundle, hyp_jsonl, hyp_rttm], [report_path],
    )
    return EXIT_OK, report


def _cmd_score(args: argparse.Namespace, argv: Sequence[str]) -> int:
    collars = tuple(args.collar) if args.collar else (0.0,)
    if any(c < 0 for c in collars):
        print("score: collars must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("score: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs == 1:
        results = [_score_one(b, collars, argv) for b in args.bundles]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda b: _score_one(b, collars, argv), args.bundles))
    codes = [code for code, _ in results]
    reports = [r for _, r in results if r is not None]
    if reports:
        aggregate = aggregate_reports(reports)
        text = json.dumps(aggregate, indent=2, sort_keys=True) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return max(codes)


# --- fmt -------------------------------------------------------------------


def _strip_chunk_prefixes(text: str) -> str:
    payloads = []
    for line in text.splitlines():
        body = line
        if body.startswith("chunk"):
            head, sep, rest = body.partition("\t")
            if sep and head[5:].isdigit():
                body = rest
        if body.strip():
            payloads.append(body.strip())
    return " ".join(payloads)


def _cmd_fmt(args: argparse.Namespace) -> int:
    if args.path == "-":
        text = sys.stdin.read()
    else:
        with open(args.path) as fh:
            text = fh.read()
    stream = _strip_chunk_prefixes(text)
    try:
        segments, diagnostics = parse_sot(stream, mode=args.mode)
    except SotParseError as exc:
        print(f"fmt: parse error at byte {exc.offset}: {exc}", file=sys.stderr)
        return EXIT_CONTENT
    for seg in segments:
        sys.stdout.write(
            json.dumps(
                {
                    "speaker": seg.speaker,
                    "t_st": seg.t_st,
                    "t_ed": seg.t_ed,
                    "words": list(seg.words),
                }
            )
            + "\n"
        )
    for diag in diagnostics:
        print(f"fmt: bytes {diag.start}..{diag.end}: {diag.message}", file=sys.stderr)
    return EXIT_CONTENT if diagnostics else EXIT_OK


# --- entry point -----------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        # argparse exits with 2 on bad usage and 0 for --help/--version.
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "sim":
            return _cmd_sim(args, argv)
        if args.command == "infer":
            return _cmd_infer(args, argv)
        if args.command == "score":
            return _cmd_score(args, argv)
        if args.command == "fmt":
            return _cmd_fmt(args)
    except PipelineError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_CONTENT
    except (FileNotFoundError, NotADirectoryError, PermissionError, IsADirectoryError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
