"""64-bit DFI command word codec and command-stream text format.

Word layout (LSB first)::

    bits  0-5   beat0.ca        bit 13     beat1.cs
    bit   6     beat0.cs        bits 14-15 kind (00 CA, 01 READ, 10 WRITE, 11 reserved)
    bits  7-12  beat1.ca        bits 16-23 slot
    bits 24-39  hold            bits 40-63 reserved, must be zero

The CA beats sit in the low bits because the CA slice consumes them first.
``hold`` is the number of subsystem cycles the bridge stalls after issuing
the word before it pops the next one.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from enum import IntEnum

WORD_BITS = 64
WORD_MASK = (1 << WORD_BITS) - 1

CA_BITS = 6
BEAT0_CA_SHIFT = 0
BEAT0_CS_SHIFT = 6
BEAT1_CA_SHIFT = 7
BEAT1_CS_SHIFT = 13
KIND_SHIFT = 14
SLOT_SHIFT = 16
HOLD_SHIFT = 24
RESERVED_SHIFT = 40

CA_MASK = 0x3F
KIND_MASK = 0x3
SLOT_MASK = 0xFF
HOLD_MASK = 0xFFFF
RESERVED_MASK = WORD_MASK & ~((1 << RESERVED_SHIFT) - 1)

MAX_SLOT = 255
MAX_HOLD = 0xFFFF


class CommandKind(IntEnum):
    CA_ONLY = 0
    READ_CAPTURE = 1
    WRITE_FETCH = 2


KIND_RESERVED = 3

# Mnemonics of the textual field syntax used by the ``codec`` subcommand.
KIND_MNEMONIC = {
    CommandKind.CA_ONLY: "CA",
    CommandKind.READ_CAPTURE: "READ",
    CommandKind.WRITE_FETCH: "WRITE",
}
MNEMONIC_KIND = {v: k for k, v in KIND_MNEMONIC.items()}


class CmdWordError(ValueError):
    """Base class for codec and stream errors.

    ``line`` is filled in when the error was raised while parsing a stream.
    """

    line: int | None = None

    def with_line(self, line: int) -> "CmdWordError":
        self.line = line
        return self


class ReservedNonZero(CmdWordError):
    bits = (40, 63)

    def __init__(self, word: int):
        self.word = word
        super().__init__(f"reserved bits set (bits 40-63) in word 0x{word:016X}")


class ReservedKind(CmdWordError):
    bits = (14, 15)

    def __init__(self, word: int):
        self.word = word
        super().__init__(f"reserved kind 0b11 (bits 14-15) in word 0x{word:016X}")


class StreamSyntaxError(CmdWordError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class CaBeat:
    """One CA bus cycle: chip select plus the 6-bit command/address value."""

    cs: int = 0
    ca: int = 0

    def __post_init__(self):
        if self.cs not in (0, 1):
            raise ValueError(f"cs must be 0 or 1, got {self.cs}")
        if not 0 <= self.ca <= CA_MASK:
            raise ValueError(f"ca must be in 0..63, got {self.ca}")


@dataclass(frozen=True)
class DfiCommand:
    beat0: CaBeat = CaBeat()
    beat1: CaBeat = CaBeat()
    kind: CommandKind = CommandKind.CA_ONLY
    slot: int = 0
    hold: int = 0

    def __post_init__(self):
        if not 0 <= self.slot <= MAX_SLOT:
            raise ValueError(f"slot must be in 0..255, got {self.slot}")
        if not 0 <= self.hold <= MAX_HOLD:
            raise ValueError(f"hold must be in 0..65535, got {self.hold}")
        if type(self.kind) is not CommandKind:  # accept plain ints for kind
            object.__setattr__(self, "kind", CommandKind(self.kind))


def encode(cmd: DfiCommand) -> int:
    return (
        (cmd.beat0.ca << BEAT0_CA_SHIFT)
        | (cmd.beat0.cs << BEAT0_CS_SHIFT)
        | (cmd.beat1.ca << BEAT1_CA_SHIFT)
        | (cmd.beat1.cs << BEAT1_CS_SHIFT)
        | (int(cmd.kind) << KIND_SHIFT)
        | (cmd.slot << SLOT_SHIFT)
        | (cmd.hold << HOLD_SHIFT)
    )


def check_word(word: int) -> None:
    """Raise the decode error for ``word`` if it is not a valid command word."""
    if word & RESERVED_MASK:
        raise ReservedNonZero(word)
    if (word >> KIND_SHIFT) & KIND_MASK == KIND_RESERVED:
        raise ReservedKind(word)


def decode(word: int) -> DfiCommand:
    if not 0 <= word <= WORD_MASK:
        raise ValueError(f"not a 64-bit value: {word!r}")
    check_word(word)
    # the low 7 bits of each beat field are cs << 6 | ca
    return DfiCommand(
        beat0=_BEATS[(word >> BEAT0_CA_SHIFT) & 0x7F],
        beat1=_BEATS[(word >> BEAT1_CA_SHIFT) & 0x7F],
        kind=_KINDS[(word >> KIND_SHIFT) & KIND_MASK],
        slot=(word >> SLOT_SHIFT) & SLOT_MASK,
        hold=(word >> HOLD_SHIFT) & HOLD_MASK,
    )


_BEATS = [CaBeat(i >> 6, i & CA_MASK) for i in range(128)]
_KINDS = {k.value: k for k in CommandKind}


# -- text stream ------------------------------------------------------------

_HEX_WORD = re.compile(r"[0-9A-Fa-f]{16}")


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_stream(text: str) -> list[int]:
    """Parse the hex command-stream text format into validated words."""
    from . import _kernels

    words: list[int] = []
    lines: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw)
        if not body:
            continue
        if not _HEX_WORD.fullmatch(body):
            raise StreamSyntaxError(lineno, f"expected 16 hex digits, got {body!r}")
        words.append(int(body, 16))
        lines.append(lineno)
    bad = _kernels.first_invalid(words)
    if bad is not None:
        try:
            check_word(words[bad])
        except CmdWordError as exc:
            raise exc.with_line(lines[bad]) from None
    return words


def render_stream(words) -> str:
    return "".join(f"{w:016X}\n" for w in words)


def read_binary(data: bytes) -> list[int]:
    """Little-endian 8-byte words, no header."""
    if len(data) % 8:
        raise CmdWordError(f"binary stream length {len(data)} is not a multiple of 8")
    words = [w for (w,) in struct.iter_unpack("<Q", data)]
    from . import _kernels

    bad = _kernels.first_invalid(words)
    if bad is not None:
        try:
            check_word(words[bad])
        except CmdWordError as exc:
            raise exc.with_line(bad + 1) from None
    return words


def write_binary(words) -> bytes:
    return b"".join(struct.pack("<Q", w) for w in words)


# -- field syntax -------------------------------------------------------------


def format_command(cmd: DfiCommand) -> str:
    """Human-readable field syntax, e.g. ``READ slot=255 hold=3 ca0=cs1:0x16 ca1=cs0:0x00``."""
    return (
        f"{KIND_MNEMONIC[cmd.kind]} slot={cmd.slot} hold={cmd.hold} "
        f"ca0=cs{cmd.beat0.cs}:0x{cmd.beat0.ca:02x} ca1=cs{cmd.beat1.cs}:0x{cmd.beat1.ca:02x}"
    )


_FIELD_RE = re.compile(
    r"(?P<kind>[A-Za-z]+)\s+slot=(?P<slot>\d+)\s+hold=(?P<hold>\d+)\s+"
    r"ca0=cs(?P<cs0>[01]):(?P<ca0>0[xX][0-9A-Fa-f]+|\d+)\s+"
    r"ca1=cs(?P<cs1>[01]):(?P<ca1>0[xX][0-9A-Fa-f]+|\d+)"
)


def parse_command(text: str) -> DfiCommand:
    m = _FIELD_RE.fullmatch(text.strip())
    if not m:
        raise ValueError(f"malformed command {text.strip()!r}")
    kind = MNEMONIC_KIND.get(m["kind"].upper())
    if kind is None:
        raise ValueError(f"unknown kind {m['kind']!r}")
    return DfiCommand(
        beat0=CaBeat(int(m["cs0"]), int(m["ca0"], 0)),
        beat1=CaBeat(int(m["cs1"]), int(m["ca1"], 0)),
        kind=kind,
        slot=int(m["slot"]),
        hold=int(m["hold"]),
    )
