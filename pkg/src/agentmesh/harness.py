"""Scripted-session driver and command-line interface.

Scripts are one step per line, `verb<TAB>args` (spaces work too), with `#`
comments. The driver replays steps against a freshly built topology, drains
the runtime between steps, and checks `expect-query` / `expect-output`
assertions against the trace produced by the preceding steps.

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .learning import PolicyStore
from .mapdemo import Demo, MapState, build_demo_topology
from .messages import Performative
from .runtime import TraceEvent

log = logging.getLogger(__name__)

VERBS = {"say", "click", "answer", "pause", "remark", "expect-query", "expect-output", "reset"}


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    verb: str
    args: str
    line: int


@dataclass
class Script:
    steps: list[Step]

    @classmethod
    def parse(cls, text: str) -> "Script":
        steps = []
        expect_seen = False
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            verb, _, args = line.replace("\t", " ").partition(" ")
            if verb not in VERBS:
                raise ScriptError(f"line {lineno}: unknown verb {verb!r}")
            if verb == "expect-query":
                expect_seen = True
            if verb == "answer" and not expect_seen:
                raise ScriptError(f"line {lineno}: answer before any expect-query")
            steps.append(Step(verb, args.strip(), lineno))
        return cls(steps)

    @classmethod
    def load(cls, path: str | Path) -> "Script":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


@dataclass
class Assertion:
    step: Step
    ok: bool
    expected: str
    actual: str


@dataclass
class SessionReport:
    trace: list[TraceEvent]
    assertions: list[Assertion]
    map_state: MapState
    kb_lines: list[str]

    @property
    def passed(self) -> bool:
        return all(a.ok for a in self.assertions)

    def summary(self) -> str:
        lines = []
        for a in self.assertions:
            status = "ok" if a.ok else "FAIL"
            lines.append(f"{status} line {a.step.line} {a.step.verb} {a.step.args}")
            if not a.ok:
                lines.append(f"    expected: {a.expected}")
                lines.append(f"    actual:   {a.actual}")
        return "\n".join(lines)


def _scan(events: list[TraceEvent], performative: Performative, key: str, want: str) -> tuple[bool, str]:
    seen = []
    for e in events:
        if e.dead_letter or e.message.performative is not performative:
            continue
        value = str(e.message.content.get(key, ""))
        if value == want:
            return True, value
        seen.append(value)
    return False, "; ".join(seen) if seen else "(none)"


def run_script(script: Script, demo: Demo, user: str = "u1") -> SessionReport:
    """Replay a script against a built topology and collect assertion results."""
    runtime = demo.runtime
    funnel = demo.funnel(user)
    assertions: list[Assertion] = []
    start = len(runtime.trace)
    mark = start
    for step in script.steps:
        if step.verb == "say":
            funnel.say(step.args)
        elif step.verb == "click":
            try:
                x, y = (int(v) for v in step.args.split())
            except ValueError:
                raise ScriptError(f"line {step.line}: click needs two integers")
            funnel.click(x, y)
        elif step.verb == "answer":
            funnel.answer(step.args)
        elif step.verb == "pause":
            funnel.advance(float(step.args))
        elif step.verb == "remark":
            funnel.remark(step.args)
        elif step.verb == "reset":
            parts = step.args.split()
            if parts and parts[0] == "system":
                demo.store.reset("system")
            elif len(parts) == 2 and parts[0] == "user":
                demo.store.reset("user", parts[1])
            else:
                raise ScriptError(f"line {step.line}: reset takes 'system' or 'user <id>'")
        elif step.verb in ("expect-query", "expect-output"):
            funnel.flush()
            runtime.run_until_quiescent()
            window = runtime.trace[mark:]
            if step.verb == "expect-query":
                ok, actual = _scan(window, Performative.USER_QUERY, "question", step.args)
            else:
                ok, actual = _scan(window, Performative.OUTPUT, "payload", step.args)
            assertions.append(Assertion(step, ok, step.args, actual))
            mark = len(runtime.trace)
            continue
        runtime.run_until_quiescent()
    funnel.flush()
    runtime.run_until_quiescent()
    kb_lines = [
        f"{agent} {entry.user} {' '.join(entry.pattern)} -> {entry.target} ({entry.weight})"
        for agent, entry in demo.store.learned_entries()
    ]
    return SessionReport(
        trace=runtime.trace[start:],
        assertions=assertions,
        map_state=demo.map_state(),
        kb_lines=kb_lines,
    )


# -- CLI -----------------------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    store = PolicyStore()
    if args.kb_in:
        store.load_kb(args.kb_in)
    demo = build_demo_topology(store=store, seed=args.seed)
    script = Script.load(args.script)
    report = run_script(script, demo, user=args.user)
    if args.trace:
        demo.runtime.write_trace(args.trace)
    if args.kb_out:
        store.save_kb(args.kb_out)
    print(report.summary() or "(no assertions)")
    print(f"map state: center={report.map_state.center} zoom={report.map_state.zoom}")
    return 0 if report.passed else 1


def _cmd_replay_golden(args: argparse.Namespace) -> int:
    directory = Path(args.directory)
    scripts = sorted(directory.glob("*.script"))
    if not scripts:
        print(f"no *.script files in {directory}", file=sys.stderr)
        return 2
    failures = 0
    for script_path in scripts:
        golden_path = script_path.with_suffix(".trace")
        demo = build_demo_topology()
        report = run_script(Script.load(script_path), demo, user=args.user)
        ok = report.passed
        detail = ""
        if golden_path.exists():
            actual = "".join(e.line() for e in demo.runtime.trace)
            expected = golden_path.read_text(encoding="utf-8")
            if actual != expected:
                ok = False
                detail = " (trace differs from golden)"
        print(f"{'ok' if ok else 'FAIL'} {script_path.name}{detail}")
        if not ok:
            failures += 1
            if report.summary():
                print(report.summary())
    return 1 if failures else 0


def _cmd_reset(args: argparse.Namespace) -> int:
    store = PolicyStore()
    store.load_kb(args.kb)
    if args.system:
        store.reset("system")
    else:
        store.reset("user", args.user)
    store.save_kb(args.kb)
    print(f"reset written to {args.kb}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentmesh", description="Scripted sessions for the map demo")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a session script")
    run.add_argument("script")
    run.add_argument("--trace", help="write the full trace log here")
    run.add_argument("--kb-in", help="load a learned knowledge base first")
    run.add_argument("--kb-out", help="save the learned knowledge base after")
    run.add_argument("--seed", type=int, default=None, help="seeded-random scheduling")
    run.add_argument("--user", default="u1")
    run.set_defaults(func=_cmd_run)

    replay = sub.add_parser("replay-golden", help="re-run golden scripts and compare traces")
    replay.add_argument("directory")
    replay.add_argument("--user", default="u1")
    replay.set_defaults(func=_cmd_replay_golden)

    reset = sub.add_parser("reset", help="reset a saved knowledge base")
    reset.add_argument("--kb", required=True)
    group = reset.add_mutually_exclusive_group(required=True)
    group.add_argument("--system", action="store_true")
    group.add_argument("--user")
    reset.set_defaults(func=_cmd_reset)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ScriptError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
