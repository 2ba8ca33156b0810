"""Command-line front end: interactive REPL, suite runner, scene checks.

The REPL reads one user line at a time and prints robot replies prefixed
with "R: ".  After a goal is dispatched the simulation fast-forwards until
the robot arrives (or gives up), so piped input yields a complete,
reproducible transcript.  Reports go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .evaluation import (
    check_thresholds,
    load_suite,
    parse_report,
    render_report,
    run_suite,
    shipped_suite,
)
from .grounding import recognizer_for
from .nlu import fit, shipped_corpus
from .planner import GoalOccupied, NoPath
from .sim import Session, SimConfig, TrialDeps
from .world import ParseError, Scene, ValidationError, load_scene, shipped_scene

# POSIX usage-error code for bad flags; data errors use the documented 2.
EX_USAGE = 64
EX_DATA = 2

# The embedding flag is named after the model family users know it by; it
# selects the lexicon-backed provider.
METHOD_FLAGS = {"clip": "lexicon", "detector": "detector"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _resolve_scene(spec: str) -> Scene:
    """A filesystem path if one exists, else the shipped scene of that name."""
    path = Path(spec)
    if path.exists():
        return load_scene(path)
    try:
        return shipped_scene(spec)
    except FileNotFoundError:
        raise ParseError(f"no scene file or shipped scene named {spec!r}") from None


def _fail(exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return EX_DATA


def cmd_repl(args) -> int:
    try:
        scene = _resolve_scene(args.scene)
    except (ParseError, ValidationError) as e:
        return _fail(e)
    cfg = SimConfig(seed=args.seed)
    deps = TrialDeps(
        nlu_model=fit(shipped_corpus()),
        recognizer=recognizer_for(METHOD_FLAGS[args.method], scene.landmarks),
    )
    session = Session(scene, cfg, deps)
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        if line == "/quit":
            return 0
        if line == "/state":
            snap = session.snapshot()
            x, y, theta = snap["robot"]
            print(
                f"mode={snap['mode']} pose=({x:.2f}, {y:.2f}, {theta:.2f}) "
                f"t={snap['time']:.1f}"
            )
            continue
        reply, _ = session.utterance(line)
        if reply:
            print(f"R: {reply}")
        while session.navigating and session.sim.step < cfg.max_steps:
            try:
                notice = session.advance()
            except (NoPath, GoalOccupied):
                session.manager.clear_goal()
                print("R: I cannot find a way there from here.")
                break
            if notice:
                print(f"R: {notice}")
    return 0


def cmd_eval(args) -> int:
    try:
        # The bundled suite is addressable by name, like shipped scenes.
        if args.suite == "shipped" and not Path(args.suite).exists():
            suite = shipped_suite()
        else:
            suite = load_suite(args.suite)
        scene = _resolve_scene(suite.scene if suite.scene else args.scene)
    except (ParseError, ValidationError) as e:
        return _fail(e)
    methods = tuple(dict.fromkeys(trial.method for trial in suite.trials))
    try:
        report = run_suite(
            scene,
            suite.trials,
            methods=methods,
            cfg=SimConfig(seed=args.seed),
            qa_probes=suite.qa_probes,
        )
        failures = check_thresholds(report, suite.thresholds)
    except ValueError as e:
        return _fail(e)
    sys.stdout.write(render_report(report, args.format))
    for failure in failures:
        print(f"threshold not met: {failure}", file=sys.stderr)
    return 1 if failures else 0


def cmd_validate(args) -> int:
    try:
        scene = _resolve_scene(args.scene)
    except (ParseError, ValidationError) as e:
        return _fail(e)
    print(
        f"scene OK: {len(scene.landmarks)} landmarks, "
        f"{len(scene.routes)} routes, {len(scene.objects)} objects"
    )
    return 0


def cmd_report(args) -> int:
    try:
        text = Path(args.report).read_text(encoding="utf-8")
        report = parse_report(text)
    except OSError as e:
        return _fail(e)
    except (KeyError, TypeError, ValueError) as e:
        return _fail(ParseError(f"not a report file: {e}"))
    sys.stdout.write(render_report(report, args.format))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wayfinder", description="desk-scale guidance robot")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    repl = sub.add_parser("repl", help="interactive session on stdin/stdout")
    repl.add_argument("--scene", default="dragon_lab", help="scene file or shipped name")
    repl.add_argument("--method", choices=sorted(METHOD_FLAGS), default="clip")
    repl.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="run a trial suite and print the report")
    ev.add_argument("suite", help="suite JSON file")
    ev.add_argument("--scene", default="dragon_lab", help="fallback when the suite names none")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--format", choices=("table", "json"), default="table")

    val = sub.add_parser("validate", help="check a scene file")
    val.add_argument("scene", help="scene file or shipped name")

    rep = sub.add_parser("report", help="re-render a saved JSON report")
    rep.add_argument("report", help="report JSON file")
    rep.add_argument("--format", choices=("table", "json"), default="table")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "repl": cmd_repl,
        "eval": cmd_eval,
        "validate": cmd_validate,
        "report": cmd_report,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
