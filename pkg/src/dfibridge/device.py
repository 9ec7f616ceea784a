"""Behavioral LPDDR4X-like device: two-beat CA decode, timing scoreboard, storage.

CA opcode map.  A command starts with ``beat0.cs = 1``; ``beat0.cs = 0`` is a
deselect (DES) and carries nothing.  ``beat1.cs`` is ignored.

=======  ===========  =============================================
opcode   beat0.ca[5:3]  operands
=======  ===========  =============================================
NOP      000          ext latch <- beat0.ca[2:0] << 6 | beat1.ca
ACT      001          bank = beat0.ca[2:0], row = ext << 6 | beat1.ca
RD       010          bank = beat0.ca[2:0], col = beat1.ca
WR       011          bank = beat0.ca[2:0], col = beat1.ca
PRE      100          bank = beat0.ca[2:0]
MRW      101          reg = beat1.ca, value = ext << 3 | beat0.ca[2:0]
MRR      110          reg = beat1.ca
(rsvd)   111          -> UnknownOpcode
=======  ===========  =============================================

Nine operand bits per word are not enough for a 15-bit row or an 8-bit MR
value, so a NOP with operands loads a 9-bit extension latch that the next ACT
or MRW consumes (and clears).  This mirrors the multi-cycle ACT-1/ACT-2 and
MRW-1/MRW-2 pairs of real LPDDR4.

All timing is in PHY cycles; a command's timestamp is the PHY cycle of its
beat0.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import IntEnum

from .cmdword import CaBeat
from .phy import BURST_BEATS, N_LANES

N_BANKS = 8
N_ROWS = 1 << 15
N_COLS = 1 << 6
N_MODE_REGS = 32
EXT_BITS = 9

MR_INIT = 0  # bit0: initialization complete
MR_WL = 1
MR_RL = 2
MR_DQ_CAL = 15  # MRR returns DQ_CAL_PATTERN instead of the register value

INIT_DONE = 0x01


def _cal_pattern() -> int:
    p = 0
    for beat in range(BURST_BEATS):
        p |= (0xA5A5A5A5 if beat % 2 == 0 else 0x5A5A5A5A) << (N_LANES * beat)
    return p


DQ_CAL_PATTERN = _cal_pattern()


class Opcode(IntEnum):
    NOP = 0b000
    ACT = 0b001
    RD = 0b010
    WR = 0b011
    PRE = 0b100
    MRW = 0b101
    MRR = 0b110
    RSVD = 0b111


DES = "DES"
_OPCODES = list(Opcode)


@dataclass
class TimingParams:
    tRCD: int = 8
    tRP: int = 8
    tRAS: int = 18
    tCCD: int = 8
    RL: int = 14
    WL: int = 8

    def __post_init__(self):
        for name, value in vars(self).items():
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value}")


class DeviceError(Exception):
    pass


class TimingViolation(DeviceError):
    def __init__(self, kind: str, required: int, actual: int):
        super().__init__(f"{kind} violated: required {required}, actual {actual}")
        self.kind = kind
        self.required = required
        self.actual = actual


class IllegalCommand(DeviceError):
    pass


class UnknownOpcode(DeviceError):
    def __init__(self, opcode: int):
        super().__init__(f"unknown opcode 0b{opcode:03b}")
        self.opcode = opcode


@dataclass(frozen=True)
class DeviceCommand:
    op: Opcode | str
    bank: int = 0
    row: int = 0
    col: int = 0
    reg: int = 0
    value: int = 0

    @property
    def name(self) -> str:
        return self.op if isinstance(self.op, str) else self.op.name


def decode_ca(beat0: CaBeat, beat1: CaBeat, ext: int = 0) -> DeviceCommand:
    """Decode a beat pair given the current extension latch (no state change)."""
    if not beat0.cs:
        return DeviceCommand(DES)
    opcode = beat0.ca >> 3
    low = beat0.ca & 0x7
    if opcode == Opcode.RSVD:
        raise UnknownOpcode(opcode)
    op = _OPCODES[opcode]
    if op is Opcode.NOP:
        return DeviceCommand(op, value=(low << 6) | beat1.ca)
    if op is Opcode.ACT:
        return DeviceCommand(op, bank=low, row=((ext << 6) | beat1.ca) & (N_ROWS - 1))
    if op in (Opcode.RD, Opcode.WR):
        return DeviceCommand(op, bank=low, col=beat1.ca)
    if op is Opcode.PRE:
        return DeviceCommand(op, bank=low)
    if op is Opcode.MRW:
        return DeviceCommand(op, reg=beat1.ca, value=(ext << 3) | low)
    return DeviceCommand(op, reg=beat1.ca)


def ca_beats(op: Opcode, bank: int = 0, row: int = 0, col: int = 0, reg: int = 0,
             value: int = 0) -> list[tuple[CaBeat, CaBeat]]:
    """Beat pairs for one device command, including a NOP extension prefix when needed."""
    op = Opcode(op)
    pairs = []
    if op is Opcode.ACT:
        if row >> 6:
            pairs.append(_nop_ext(row >> 6))
        pairs.append((CaBeat(1, (op << 3) | bank), CaBeat(0, row & 0x3F)))
    elif op is Opcode.MRW:
        if value >> 3:
            pairs.append(_nop_ext(value >> 3))
        pairs.append((CaBeat(1, (op << 3) | (value & 7)), CaBeat(0, reg)))
    elif op in (Opcode.RD, Opcode.WR):
        pairs.append((CaBeat(1, (op << 3) | bank), CaBeat(0, col)))
    elif op is Opcode.PRE:
        pairs.append((CaBeat(1, (op << 3) | bank), CaBeat(0, 0)))
    elif op is Opcode.MRR:
        pairs.append((CaBeat(1, op << 3), CaBeat(0, reg)))
    elif op is Opcode.NOP:
        pairs.append(_nop_ext(value))
    else:
        raise ValueError(f"cannot encode {op!r}")
    return pairs


def _nop_ext(ext: int) -> tuple[CaBeat, CaBeat]:
    if ext >> EXT_BITS:
        raise ValueError(f"extension {ext} exceeds {EXT_BITS} bits")
    return CaBeat(1, (Opcode.NOP << 3) | (ext >> 6)), CaBeat(0, ext & 0x3F)


@dataclass
class BankState:
    active_row: int | None = None
    last_act: int | None = None
    last_pre: int | None = None
    last_rdwr: int | None = None


@dataclass(frozen=True)
class ReadReturn:
    """A burst leaving the device; ``issue_cycle`` is the RD/MRR PHY timestamp."""

    issue_cycle: int
    due: int
    data: int
    command: DeviceCommand


@dataclass(frozen=True)
class WriteLatch:
    issue_cycle: int
    due: int
    bank: int
    row: int
    col: int


@dataclass
class DeviceStats:
    accepted: int = 0
    timing_violations: int = 0
    illegal_commands: int = 0
    unknown_opcodes: int = 0
    bursts_read: int = 0
    bursts_written: int = 0
    writes_without_data: int = 0


class Device:
    def __init__(self, timing: TimingParams | None = None, preinit: bool = False,
                 stuck_in_reset: bool = False):
        self.timing = timing or TimingParams()
        self.stuck_in_reset = stuck_in_reset
        self.storage: dict[tuple[int, int, int], int] = {}
        self.stats = DeviceStats()
        self.in_reset = stuck_in_reset
        self._seq = 0
        self.reset()
        if preinit and not stuck_in_reset:
            self.mr[MR_INIT] = INIT_DONE

    def reset(self) -> None:
        """Power-on state: MR defaults, all banks idle, pipelines empty.

        Storage survives reset (DRAM contents are not cleared).
        """
        self.mr = [0] * N_MODE_REGS
        self.mr[MR_WL] = self.timing.WL
        self.mr[MR_RL] = self.timing.RL
        self.banks = [BankState() for _ in range(N_BANKS)]
        self.last_col: int | None = None
        self.ext = 0
        self._pending: list[tuple[int, int, object, int | None]] = []

    def set_reset(self, asserted: bool) -> None:
        if asserted:
            self.in_reset = True
            self.reset()
        elif not self.stuck_in_reset:
            self.in_reset = False

    @property
    def init_done(self) -> bool:
        return not self.in_reset and bool(self.mr[MR_INIT] & INIT_DONE)

    @property
    def read_latency(self) -> int:
        return self.mr[MR_RL]

    @property
    def write_latency(self) -> int:
        return self.mr[MR_WL]

    def quiescent(self) -> bool:
        return not self._pending

    def next_due(self) -> int | None:
        return self._pending[0][0] if self._pending else None

    # -- commands --------------------------------------------------------

    def apply_command(self, beat0: CaBeat, beat1: CaBeat, phy_cycle: int,
                      wdata: int | None = None) -> DeviceCommand:
        """Decode and apply one command; raises without changing state on rejection."""
        try:
            cmd = self._check(beat0, beat1, phy_cycle)
        except TimingViolation:
            self.stats.timing_violations += 1
            raise
        except UnknownOpcode:
            self.stats.unknown_opcodes += 1
            raise
        except IllegalCommand:
            self.stats.illegal_commands += 1
            raise
        self._commit(cmd, phy_cycle, wdata)
        return cmd

    def _check(self, beat0: CaBeat, beat1: CaBeat, t: int) -> DeviceCommand:
        cmd = decode_ca(beat0, beat1, self.ext)
        if cmd.op == DES:
            return cmd
        if self.in_reset:
            raise IllegalCommand(f"{cmd.name} while device is held in reset")
        op = cmd.op
        if op in (Opcode.MRW, Opcode.MRR):
            if cmd.reg >= N_MODE_REGS:
                raise IllegalCommand(f"mode register {cmd.reg} does not exist")
            if op is Opcode.MRW:
                if cmd.value > 0xFF:
                    raise IllegalCommand(f"MRW value {cmd.value} exceeds 8 bits")
                if cmd.reg in (MR_RL, MR_WL) and cmd.value < 1:
                    raise IllegalCommand("latency mode registers must be >= 1")
            return cmd
        if op is Opcode.NOP:
            return cmd
        if not self.init_done:
            raise IllegalCommand(f"{cmd.name} before initialization")
        bank = self.banks[cmd.bank]
        tp = self.timing
        if op is Opcode.ACT:
            if bank.active_row is not None:
                raise IllegalCommand(f"ACT to active bank {cmd.bank}")
            if bank.last_pre is not None and t - bank.last_pre < tp.tRP:
                raise TimingViolation("tRP", tp.tRP, t - bank.last_pre)
        elif op in (Opcode.RD, Opcode.WR):
            if bank.active_row is None:
                raise IllegalCommand(f"{cmd.name} to idle bank {cmd.bank}")
            if t - bank.last_act < tp.tRCD:
                raise TimingViolation("tRCD", tp.tRCD, t - bank.last_act)
            if self.last_col is not None and t - self.last_col < tp.tCCD:
                raise TimingViolation("tCCD", tp.tCCD, t - self.last_col)
        elif op is Opcode.PRE:
            if bank.active_row is not None and t - bank.last_act < tp.tRAS:
                raise TimingViolation("tRAS", tp.tRAS, t - bank.last_act)
        return cmd

    def _commit(self, cmd: DeviceCommand, t: int, wdata: int | None) -> None:
        op = cmd.op
        if op == DES:
            return
        self.stats.accepted += 1
        if op is Opcode.NOP:
            self.ext = cmd.value
        elif op is Opcode.ACT:
            b = self.banks[cmd.bank]
            b.active_row = cmd.row
            b.last_act = t
            self.ext = 0
        elif op is Opcode.PRE:
            b = self.banks[cmd.bank]
            if b.active_row is not None:
                b.active_row = None
                b.last_pre = t
        elif op is Opcode.RD:
            b = self.banks[cmd.bank]
            b.last_rdwr = t
            self.last_col = t
            addr = (cmd.bank, b.active_row, cmd.col)
            self._schedule(t + self.read_latency, ("RD", t, cmd, addr), None)
        elif op is Opcode.WR:
            b = self.banks[cmd.bank]
            b.last_rdwr = t
            self.last_col = t
            if wdata is None:
                self.stats.writes_without_data += 1
                wdata = 0
            addr = (cmd.bank, b.active_row, cmd.col)
            self._schedule(t + self.write_latency, ("WR", t, cmd, addr), wdata)
        elif op is Opcode.MRW:
            self.mr[cmd.reg] = cmd.value
            self.ext = 0
        elif op is Opcode.MRR:
            self._schedule(t + self.read_latency, ("MRR", t, cmd, None), None)

    def _schedule(self, due: int, what: tuple, data: int | None) -> None:
        self._seq += 1
        heapq.heappush(self._pending, (due, self._seq, what, data))

    # -- time ------------------------------------------------------------

    def step(self, phy_cycle: int) -> list[ReadReturn | WriteLatch]:
        """Retire every pipeline event due at or before ``phy_cycle``."""
        events: list[ReadReturn | WriteLatch] = []
        pending = self._pending
        while pending and pending[0][0] <= phy_cycle:
            due, _, (kind, t, cmd, addr), data = heapq.heappop(pending)
            if kind == "WR":
                self.burst_write(*addr, data)
                self.stats.bursts_written += 1
                events.append(WriteLatch(t, due, *addr))
            elif kind == "RD":
                self.stats.bursts_read += 1
                events.append(ReadReturn(t, due, self.burst_read(*addr), cmd))
            else:
                events.append(ReadReturn(t, due, self.mode_register_burst(cmd.reg), cmd))
        return events

    def mode_register_burst(self, reg: int) -> int:
        if reg == MR_DQ_CAL:
            return DQ_CAL_PATTERN
        return self.mr[reg]

    # -- storage -----------------------------------------------------------

    @staticmethod
    def _check_addr(bank: int, row: int, col: int) -> None:
        if not (0 <= bank < N_BANKS and 0 <= row < N_ROWS and 0 <= col < N_COLS):
            raise IndexError(f"address (bank={bank}, row={row}, col={col}) out of range")

    def burst_write(self, bank: int, row: int, col: int, data: int) -> None:
        self._check_addr(bank, row, col)
        self.storage[(bank, row, col)] = data

    def burst_read(self, bank: int, row: int, col: int) -> int:
        self._check_addr(bank, row, col)
        return self.storage.get((bank, row, col), 0)
