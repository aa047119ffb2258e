"""Task behavior traces: grammar, parser, generators.

A trace is a line-oriented program interpreted by a processing element:

    task <label>:
        compute <ticks>          # busy for <ticks>
        mem <ticks>              # accepted, executed like compute
        syscall <name> <args...> [-> $rN]

Arguments are integer literals, register references ($rN) or trace
references (@label).  compute/mem durations may also be a register
reference, so one shared trace can carry per-task lengths.  Every trace
must end in a terminating syscall (rcsv-exit or join-exit).  Lines
starting with '#' and blank lines are ignored; '#' also starts an
end-of-line comment.
"""

import re
from dataclasses import dataclass, field
from enum import IntEnum

from .protocol import MessageType
from .rng import SplitMix64

NUM_REGISTERS = 4


class TraceError(Exception):
    """Parse failure or ill-formed trace program."""


class StepKind(IntEnum):
    COMPUTE = 0
    SYSCALL = 1


class ArgKind(IntEnum):
    INT = 0
    REG = 1
    TRACE = 2


# syscall name -> (message type, number of args, blocks until reply,
#                  frees the PE at dispatch)
SYSCALLS = {
    "rcsv-spwn": (MessageType.RCSV_SPWN, 3, True, False),
    "rcsv-exit": (MessageType.RCSV_EXIT, 1, False, True),
    "join-init": (MessageType.JOIN_INIT, 1, True, False),
    "join-free": (MessageType.JOIN_FREE, 1, True, False),
    "join-wait": (MessageType.JOIN_WAIT, 1, True, False),
    "join-exit": (MessageType.JOIN_EXIT, 1, False, True),
}

TERMINATING = {"rcsv-exit", "join-exit"}


@dataclass(slots=True, frozen=True)
class Step:
    kind: StepKind
    # COMPUTE: duration argument; SYSCALL: unused
    duration: tuple = ()
    syscall: str = ""
    args: tuple = ()
    ret_reg: int = -1


@dataclass(slots=True)
class TraceProgram:
    name: str
    steps: list


@dataclass(slots=True)
class ProgramSet:
    """Parsed trace file: programs by definition order and by label."""
    programs: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)

    def add(self, prog: TraceProgram) -> int:
        if prog.name in self.labels:
            raise TraceError(f"duplicate trace label {prog.name!r}")
        tid = len(self.programs)
        self.labels[prog.name] = tid
        self.programs.append(prog)
        return tid


_REG_RE = re.compile(r"^\$r(\d+)$")
_LABEL_RE = re.compile(r"^task\s+([A-Za-z_][\w-]*)\s*:$")


def _parse_arg(token, labels, line_no):
    m = _REG_RE.match(token)
    if m:
        idx = int(m.group(1))
        if idx >= NUM_REGISTERS:
            raise TraceError(f"line {line_no}: register $r{idx} out of range")
        return (ArgKind.REG, idx)
    if token.startswith("@"):
        name = token[1:]
        if name not in labels:
            raise TraceError(f"line {line_no}: unknown trace @{name}")
        return (ArgKind.TRACE, labels[name])
    try:
        value = int(token)
    except ValueError:
        raise TraceError(f"line {line_no}: bad argument {token!r}") from None
    if value < 0:
        raise TraceError(f"line {line_no}: negative value {value}")
    return (ArgKind.INT, value)


def parse_traces(text: str) -> ProgramSet:
    pset = ProgramSet()
    current = None

    def close(prog):
        if prog is None:
            return
        if not prog.steps:
            raise TraceError(f"trace {prog.name!r} is empty")
        last = prog.steps[-1]
        if last.kind != StepKind.SYSCALL or last.syscall not in TERMINATING:
            raise TraceError(
                f"trace {prog.name!r} must end in a terminating syscall")

    # Labels must be known before arguments reference them, so collect
    # them in a first pass: traces may spawn traces defined later.
    for line in text.splitlines():
        stripped = line.split("#", 1)[0].strip()
        m = _LABEL_RE.match(stripped)
        if m and m.group(1) in pset.labels:
            raise TraceError(f"duplicate trace label {m.group(1)!r}")
        if m:
            pset.labels[m.group(1)] = len(pset.labels)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LABEL_RE.match(line)
        if m:
            close(current)
            current = TraceProgram(m.group(1), [])
            pset.programs.append(current)
            continue
        if current is None:
            raise TraceError(f"line {line_no}: step outside any task block")
        tokens = line.split()
        op = tokens[0]
        if op in ("compute", "mem"):
            if len(tokens) != 2:
                raise TraceError(f"line {line_no}: {op} takes one duration")
            dur = _parse_arg(tokens[1], pset.labels, line_no)
            if dur[0] == ArgKind.TRACE:
                raise TraceError(f"line {line_no}: duration cannot be @ref")
            current.steps.append(Step(StepKind.COMPUTE, duration=dur))
        elif op == "syscall":
            if len(tokens) < 2:
                raise TraceError(f"line {line_no}: syscall needs a name")
            name = tokens[1]
            info = SYSCALLS.get(name)
            if info is None:
                raise TraceError(f"line {line_no}: unknown syscall {name!r}")
            rest = tokens[2:]
            ret_reg = -1
            if "->" in rest:
                pos = rest.index("->")
                if pos != len(rest) - 2:
                    raise TraceError(f"line {line_no}: malformed '->' capture")
                m2 = _REG_RE.match(rest[-1])
                if not m2:
                    raise TraceError(
                        f"line {line_no}: '->' must target a register")
                ret_reg = int(m2.group(1))
                if ret_reg >= NUM_REGISTERS:
                    raise TraceError(
                        f"line {line_no}: register $r{ret_reg} out of range")
                rest = rest[:pos]
            if len(rest) != info[1]:
                raise TraceError(
                    f"line {line_no}: {name} takes {info[1]} args, "
                    f"got {len(rest)}")
            args = tuple(_parse_arg(t, pset.labels, line_no) for t in rest)
            current.steps.append(
                Step(StepKind.SYSCALL, syscall=name, args=args,
                     ret_reg=ret_reg))
        else:
            raise TraceError(f"line {line_no}: unknown step {op!r}")
    close(current)
    if not pset.programs:
        raise TraceError("no traces defined")
    return pset


def _fmt_arg(arg, names):
    kind, value = arg
    if kind == ArgKind.REG:
        return f"$r{value}"
    if kind == ArgKind.TRACE:
        return f"@{names[value]}"
    return str(value)


def format_traces(pset: ProgramSet) -> str:
    """Pretty-print a program set; reparses to an equal set."""
    names = [p.name for p in pset.programs]
    lines = []
    for prog in pset.programs:
        lines.append(f"task {prog.name}:")
        for step in prog.steps:
            if step.kind == StepKind.COMPUTE:
                lines.append(f"    compute {_fmt_arg(step.duration, names)}")
            else:
                parts = [f"    syscall {step.syscall}"]
                parts += [_fmt_arg(a, names) for a in step.args]
                if step.ret_reg >= 0:
                    parts.append(f"-> $r{step.ret_reg}")
                lines.append(" ".join(parts))
        lines.append("")
    return "\n".join(lines)


# The fork/join protocol every generated app follows: the parent opens a
# barrier sized to the child count, spawns recursively, waits, frees.
_PARENT_TEMPLATE = """\
task parent:
    syscall join-init {n} -> $r0
    syscall rcsv-spwn @child 0 {n}
    syscall join-wait $r0
    syscall join-free $r0
    syscall rcsv-exit 0
"""

_CHILD_FIXED = """\
task child:
    compute {length}
    syscall join-exit $r0
"""

# Register $r1 is loaded with the task's sampled length at spawn time.
_CHILD_SAMPLED = """\
task child:
    compute $r1
    syscall join-exit $r0
"""

# Synthesized for fork-tree nodes: spawn this subtree's share of the
# children and exit.  The fork tree only fans out; joining is the
# parent's job, through the barrier every child carries in $r0, so a
# helper never outlives its spawn request and the transient helper
# count the stop rule watches stays a burst signal.  Registers: $r0
# barrier, $r1 count, $r2 child trace id, $r3 data image.
_HELPER = """\
task helper:
    syscall rcsv-spwn $r2 $r3 $r1
    syscall rcsv-exit 0
"""


@dataclass(slots=True)
class AppBundle:
    """Everything one application injection needs."""
    programs: ProgramSet
    parent_trace: int
    child_trace: int
    helper_trace: int
    n: int
    child_lengths: tuple   # per-child compute ticks, index-aligned
    t_seq: int             # sum of child compute lengths


@dataclass(slots=True, frozen=True)
class Injection:
    tick: int
    gmn: int
    prio: int
    bundle: AppBundle


def _build_bundle(n: int, child_text: str, lengths) -> AppBundle:
    text = _PARENT_TEMPLATE.format(n=n) + child_text + _HELPER
    pset = parse_traces(text)
    return AppBundle(
        programs=pset,
        parent_trace=pset.labels["parent"],
        child_trace=pset.labels["child"],
        helper_trace=pset.labels["helper"],
        n=n,
        child_lengths=tuple(lengths),
        t_seq=sum(lengths),
    )


def gen_independent(n: int, m: int, length: int) -> AppBundle:
    """One app of n identical fixed-length children (m is metadata)."""
    if n < 1 or length < 1:
        raise TraceError("need n >= 1 and length >= 1")
    return _build_bundle(n, _CHILD_FIXED.format(length=length), [length] * n)


def gen_interference_schedule(n: int, max_len: int, arrival_mean: float,
                              duty: float, sim_length: int, num_gmns: int,
                              seed: int, prio: int = 15) -> list:
    """Competing-app stimulus: app launches forming a Poisson process.

    Consecutive launches are separated by exponential gaps with the
    given mean, so bursts of overlapping applications occur naturally.
    Injection stops at duty * sim_length; every app targets an
    independently random global node at the given priority, and child
    lengths are uniform integers in [ceil(0.95 * max_len), max_len].
    """
    rng = SplitMix64(seed)
    horizon = int(duty * sim_length)
    low = -(-95 * max_len // 100)  # ceil(0.95 * max_len)

    injections = []
    tick = 0
    while tick <= horizon:
        lengths = [rng.randint(low, max_len) for _ in range(n)]
        bundle = _build_bundle(n, _CHILD_SAMPLED, lengths)
        target = rng.randint(0, num_gmns - 1)
        injections.append(Injection(tick, target, prio, bundle))
        tick += rng.exponential_ticks(arrival_mean)
    return injections
