"""DFI bridge: command FIFO, 256 x 512-bit data buffer and the control unit."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum

from .cmdword import CmdWordError, CommandKind, DfiCommand, decode
from .trace import NULL_TRACE, Trace

DEFAULT_FIFO_DEPTH = 64
N_SLOTS = 256
SLOT_BITS = 512
SLOT_BYTES = SLOT_BITS // 8
SLOT_MASK = (1 << SLOT_BITS) - 1


class BridgeError(Exception):
    pass


class FifoFull(BridgeError):
    pass


class IndexOutOfRange(BridgeError, IndexError):
    pass


class SlotPending(BridgeError):
    """Firmware or DMA touched a slot whose read burst has not landed yet."""


class SlotBusy(BridgeError):
    """A ReadCapture targeted a slot that is already PendingRead."""


class CommandFifo:
    """Bounded FIFO of 64-bit words.

    Pushes are staged and become poppable after :meth:`commit`, which the
    kernel calls at the end of every cycle; ``occupancy`` counts staged
    entries so backpressure is exact.
    """

    def __init__(self, depth: int = DEFAULT_FIFO_DEPTH):
        if depth < 1:
            raise ValueError("FIFO depth must be >= 1")
        self.depth = depth
        self._q: deque[int] = deque()
        self._staged: list[int] = []

    @property
    def occupancy(self) -> int:
        return len(self._q) + len(self._staged)

    @property
    def full(self) -> bool:
        return self.occupancy >= self.depth

    @property
    def empty(self) -> bool:
        return not self._q and not self._staged

    @property
    def ready(self) -> int:
        """Number of committed (poppable) entries."""
        return len(self._q)

    def push(self, word: int) -> None:
        if word < 0 or word >> 64:
            raise ValueError(f"FIFO entries are 64 bits wide, got 0x{word:X}")
        if len(self._q) + len(self._staged) >= self.depth:
            raise FifoFull(f"FIFO full ({self.depth} entries)")
        self._staged.append(word)

    @property
    def settled(self) -> bool:
        """No pushes are waiting for the end of the cycle."""
        return not self._staged

    def commit(self) -> None:
        if self._staged:
            self._q.extend(self._staged)
            self._staged.clear()

    def pop(self) -> int:
        return self._q.popleft()


class SlotState(IntEnum):
    IDLE = 0
    PENDING_READ = 1
    VALID = 2


class DataBuffer:
    def __init__(self, n_slots: int = N_SLOTS):
        self.n_slots = n_slots
        self.payload = [0] * n_slots
        self.state = [SlotState.IDLE] * n_slots
        self.idle_reads = 0

    def _check(self, index: int) -> None:
        if not 0 <= index < self.n_slots:
            raise IndexOutOfRange(f"slot {index} outside 0..{self.n_slots - 1}")

    def slot_read(self, index: int) -> int:
        """Payload of a Valid slot; Idle slots read as zeros and bump ``idle_reads``."""
        self._check(index)
        st = self.state[index]
        if st is SlotState.PENDING_READ:
            raise SlotPending(f"slot {index} is pending a read burst")
        if st is SlotState.IDLE:
            self.idle_reads += 1
            return 0
        return self.payload[index]

    def slot_write(self, index: int, payload: int) -> None:
        self._check(index)
        if not 0 <= payload <= SLOT_MASK:
            raise ValueError("payload must fit in 512 bits")
        self.payload[index] = payload
        self.state[index] = SlotState.VALID

    def read_word(self, index: int, word: int, bits: int) -> int:
        """Word ``word`` of width ``bits`` (32 or 64) from a slot, LSB word first."""
        data = self.slot_read(index)
        return (data >> (word * bits)) & ((1 << bits) - 1)

    def write_word(self, index: int, word: int, bits: int, value: int) -> None:
        self._check(index)
        if self.state[index] is SlotState.PENDING_READ:
            raise SlotPending(f"slot {index} is pending a read burst")
        shift = word * bits
        mask = ((1 << bits) - 1) << shift
        base = self.payload[index] if self.state[index] is SlotState.VALID else 0
        self.payload[index] = (base & ~mask) | ((value << shift) & mask)
        self.state[index] = SlotState.VALID


@dataclass
class InFlight:
    kind: CommandKind
    slot: int
    issue_cycle: int
    due: int
    data: int | None = None


@dataclass(frozen=True)
class Issue:
    """One popped word as driven onto the PHY this cycle."""

    cycle: int
    word: int
    command: DfiCommand
    wdata: int | None = None


@dataclass
class BridgeStats:
    idle_cycles: int = 0
    held_cycles: int = 0
    issued_commands: int = 0
    issued_beats: int = 0
    decode_errors: int = 0
    slot_errors: int = 0
    capture_misses: int = 0
    uncaptured_returns: int = 0
    idle_fetches: int = 0
    bytes_read: int = 0
    first_issue: int | None = None


def latency_sys(phy_cycles: int) -> int:
    """Subsystem cycles that cover ``phy_cycles`` PHY cycles at the 1:2 ratio."""
    return (phy_cycles + 1) // 2


class Bridge:
    """The bridge control unit.

    ``read_latency``/``write_latency`` are in PHY cycles (the values firmware
    sees in BRIDGE_RL/BRIDGE_WL); capture and fetch events mature after the
    corresponding number of subsystem cycles.
    """

    def __init__(self, fifo: CommandFifo | None = None, buffer: DataBuffer | None = None,
                 read_latency: int = 14, write_latency: int = 8, trace: Trace = NULL_TRACE):
        self.fifo = fifo or CommandFifo()
        self.buffer = buffer or DataBuffer()
        self.read_latency = read_latency
        self.write_latency = write_latency
        self.trace = trace
        self.hold_remaining = 0
        self.in_flight: list[InFlight] = []
        self.stats = BridgeStats()

    def fifo_push(self, word: int) -> None:
        self.fifo.push(word)

    def quiescent(self) -> bool:
        return self.fifo.empty and self.hold_remaining == 0 and not self.in_flight

    @property
    def busy(self) -> bool:
        return self.hold_remaining > 0 or bool(self.in_flight)

    def next_due(self) -> int | None:
        return min((f.due for f in self.in_flight), default=None)

    def step(self, now: int) -> Issue | None:
        """Pop and issue at most one word; the data-side retire happens in :meth:`retire`."""
        st = self.stats
        tr = self.trace
        if self.hold_remaining > 0:
            self.hold_remaining -= 1
            st.held_cycles += 1
            if tr.enabled:
                tr.emit(now, 2 * now, "bridge", "HOLD", remaining=self.hold_remaining)
            return None
        if not self.fifo.ready:
            st.idle_cycles += 1
            if tr.enabled:
                tr.emit(now, 2 * now, "bridge", "IDLE")
            return None
        word = self.fifo.pop()
        try:
            cmd = decode(word)
        except CmdWordError as exc:
            st.decode_errors += 1
            st.idle_cycles += 1
            if tr.enabled:
                tr.emit(now, 2 * now, "bridge", "ERROR", word=f"{word:016X}", reason="decode",
                        error=str(exc))
            return None
        buf = self.buffer
        wdata = None
        if cmd.kind is CommandKind.READ_CAPTURE:
            if buf.state[cmd.slot] is SlotState.PENDING_READ:
                st.slot_errors += 1
                st.idle_cycles += 1
                if tr.enabled:
                    tr.emit(now, 2 * now, "bridge", "ERROR", word=f"{word:016X}", reason="slot",
                            error=f"slot {cmd.slot} busy")
                return None
            buf.state[cmd.slot] = SlotState.PENDING_READ
            self.in_flight.append(InFlight(cmd.kind, cmd.slot, now,
                                           now + latency_sys(self.read_latency)))
        elif cmd.kind is CommandKind.WRITE_FETCH:
            if buf.state[cmd.slot] is SlotState.VALID:
                wdata = buf.payload[cmd.slot]
            else:
                st.idle_fetches += 1
                wdata = 0
            self.in_flight.append(InFlight(cmd.kind, cmd.slot, now,
                                           now + latency_sys(self.write_latency)))
        self.hold_remaining = cmd.hold
        st.issued_commands += 1
        st.issued_beats += 2
        if st.first_issue is None:
            st.first_issue = now
        if tr.enabled:
            tr.emit(now, 2 * now, "bridge", "ISSUE", word=f"{word:016X}",
                    cmd=cmd.kind.name, slot=cmd.slot, hold=cmd.hold)
        return Issue(now, word, cmd, wdata)

    def capture(self, issue_cycle: int, data: int) -> None:
        """Attach a returned burst to the ReadCapture issued at ``issue_cycle``."""
        for f in self.in_flight:
            if f.issue_cycle == issue_cycle and f.kind is CommandKind.READ_CAPTURE:
                f.data = data
                return
        self.stats.uncaptured_returns += 1

    def retire(self, now: int) -> None:
        if not self.in_flight:
            return
        keep = []
        tr = self.trace
        for f in self.in_flight:
            if f.due > now:
                keep.append(f)
                continue
            if f.kind is CommandKind.READ_CAPTURE:
                if f.data is None:
                    self.stats.capture_misses += 1
                    self.buffer.state[f.slot] = SlotState.IDLE
                    if tr.enabled:
                        tr.emit(now, 2 * now + 1, "bridge", "CAPTURE_MISS", slot=f.slot)
                else:
                    self.buffer.payload[f.slot] = f.data
                    self.buffer.state[f.slot] = SlotState.VALID
                    self.stats.bytes_read += SLOT_BYTES
                    if tr.enabled:
                        tr.emit(now, 2 * now + 1, "bridge", "CAPTURE", slot=f.slot)
            elif tr.enabled:
                tr.emit(now, 2 * now + 1, "bridge", "FETCH", slot=f.slot)
        self.in_flight = keep
