"""Management message protocol: types, schemas, sizing, wire codec.

All coordination between node types travels as typed messages with a
fixed per-type data schema.  The header carries type, source,
destination, a 4-bit priority and a broadcast flag; it is padded to a
whole number of 32-bit words, and data fields occupy one word each.
"""

import math
from dataclasses import dataclass
from enum import IntEnum

HEADER_TYPE_BITS = 8
HEADER_PRIO_BITS = 4
WORD_BITS = 32
MAX_PRIO = 15


class ProtocolError(Exception):
    """Malformed message, schema violation, or unroutable address."""


class NodeKind(IntEnum):
    GMN = 0   # global management node
    LC = 1    # local controller (the coupled PE shares the address)


@dataclass(slots=True, frozen=True)
class Address:
    kind: NodeKind
    index: int

    def __str__(self):
        return f"{'G' if self.kind == NodeKind.GMN else 'L'}{self.index}"


class MessageType(IntEnum):
    RCSV_SPWN = 1
    RCSV_EXIT = 2
    JOIN_INIT = 3
    JOIN_FREE = 4
    JOIN_WAIT = 5
    JOIN_EXIT = 6
    TASK_START = 7
    STATUS_BEACON = 8
    SYSCALL_REPLY = 9


MESSAGE_NAMES = {
    MessageType.RCSV_SPWN: "rcsv-spwn",
    MessageType.RCSV_EXIT: "rcsv-exit",
    MessageType.JOIN_INIT: "join-init",
    MessageType.JOIN_FREE: "join-free",
    MessageType.JOIN_WAIT: "join-wait",
    MessageType.JOIN_EXIT: "join-exit",
    MessageType.TASK_START: "task-start",
    MessageType.STATUS_BEACON: "status-beacon",
    MessageType.SYSCALL_REPLY: "syscall-reply",
}

# Data schema per type: field names, one 32-bit word each.
SCHEMAS = {
    MessageType.RCSV_SPWN: ("imem", "dmem", "cnt"),
    MessageType.RCSV_EXIT: ("addr",),
    MessageType.JOIN_INIT: ("cnt",),
    MessageType.JOIN_FREE: ("addr",),
    MessageType.JOIN_WAIT: ("addr",),
    MessageType.JOIN_EXIT: ("addr",),
    MessageType.TASK_START: ("tcb-address", "stack-pointer"),
    MessageType.STATUS_BEACON: ("total-mapped-task-count",
                                "in-flight-helper-count"),
    MessageType.SYSCALL_REPLY: ("return-value",),
}


@dataclass(slots=True, frozen=True)
class Message:
    mtype: MessageType
    src: Address
    dst: Address
    prio: int
    broadcast: bool
    data: tuple


def make_message(mtype, src, dst, data, prio=0, broadcast=False) -> Message:
    schema = SCHEMAS.get(mtype)
    if schema is None:
        raise ProtocolError(f"unknown message type {mtype!r}")
    if len(data) != len(schema):
        raise ProtocolError(
            f"{MESSAGE_NAMES[mtype]} expects {len(schema)} data words, "
            f"got {len(data)}")
    for field, value in zip(schema, data):
        if not 0 <= value < (1 << WORD_BITS):
            raise ProtocolError(
                f"{MESSAGE_NAMES[mtype]}.{field} out of 32-bit range: {value}")
    if not 0 <= prio <= MAX_PRIO:
        raise ProtocolError(f"priority out of range: {prio}")
    return Message(mtype, src, dst, prio, broadcast, tuple(data))


def address_bits(num_nodes: int) -> int:
    if num_nodes < 1:
        raise ProtocolError("a chip has at least one node")
    return max(1, math.ceil(math.log2(num_nodes))) if num_nodes > 1 else 0


def header_bit_width(num_nodes: int) -> int:
    """Raw header bits rounded up to a whole number of 32-bit words."""
    raw = (HEADER_TYPE_BITS + 2 * address_bits(num_nodes)
           + HEADER_PRIO_BITS + 1)
    return ((raw + WORD_BITS - 1) // WORD_BITS) * WORD_BITS


def header_words(num_nodes: int) -> int:
    return header_bit_width(num_nodes) // WORD_BITS


def message_word_count(mtype: MessageType, num_nodes: int) -> int:
    return header_words(num_nodes) + len(SCHEMAS[mtype])


def _flat_index(addr: Address, num_gmns: int, num_lcs: int) -> int:
    if addr.kind == NodeKind.GMN:
        if not 0 <= addr.index < num_gmns:
            raise ProtocolError(f"no such global node: {addr}")
        return addr.index
    if not 0 <= addr.index < num_lcs:
        raise ProtocolError(f"no such local controller: {addr}")
    return num_gmns + addr.index


def _unflat(index: int, num_gmns: int) -> Address:
    if index < num_gmns:
        return Address(NodeKind.GMN, index)
    return Address(NodeKind.LC, index - num_gmns)


def encode_message(msg: Message, num_gmns: int, num_lcs: int) -> tuple:
    """Pack a message into 32-bit words (header first, then data)."""
    num_nodes = num_gmns + num_lcs
    abits = address_bits(num_nodes)
    bits = int(msg.mtype)
    shift = HEADER_TYPE_BITS
    bits |= _flat_index(msg.src, num_gmns, num_lcs) << shift
    shift += abits
    bits |= _flat_index(msg.dst, num_gmns, num_lcs) << shift
    shift += abits
    bits |= msg.prio << shift
    shift += HEADER_PRIO_BITS
    bits |= (1 if msg.broadcast else 0) << shift
    words = []
    for _ in range(header_words(num_nodes)):
        words.append(bits & 0xFFFFFFFF)
        bits >>= WORD_BITS
    words.extend(msg.data)
    return tuple(words)


def decode_message(words, num_gmns: int, num_lcs: int) -> Message:
    num_nodes = num_gmns + num_lcs
    hwords = header_words(num_nodes)
    if len(words) < hwords:
        raise ProtocolError("short message: header truncated")
    bits = 0
    for i in range(hwords):
        bits |= words[i] << (WORD_BITS * i)
    abits = address_bits(num_nodes)
    mtype = MessageType(bits & ((1 << HEADER_TYPE_BITS) - 1))
    bits >>= HEADER_TYPE_BITS
    src = _unflat(bits & ((1 << abits) - 1) if abits else 0, num_gmns)
    bits >>= abits
    dst = _unflat(bits & ((1 << abits) - 1) if abits else 0, num_gmns)
    bits >>= abits
    prio = bits & ((1 << HEADER_PRIO_BITS) - 1)
    bits >>= HEADER_PRIO_BITS
    broadcast = bool(bits & 1)
    data = tuple(words[hwords:])
    return make_message(mtype, src, dst, data, prio, broadcast)


def format_trace_row(tick: int, msg: Message, num_nodes: int,
                     dst: Address = None) -> str:
    """One line of the optional message trace dump.

    `dst` overrides the header destination so broadcast deliveries can
    log the actual recipient of each fan-out copy.
    """
    return (f"{tick},{MESSAGE_NAMES[msg.mtype]},{msg.src},"
            f"{msg.dst if dst is None else dst},"
            f"{msg.prio},{int(msg.broadcast)},"
            f"{message_word_count(msg.mtype, num_nodes)}")
