"""Two DMA engines feeding the command FIFO and the data buffer.

Endpoints are plain addresses: SRAM regions, ``FIFO_PORT_LO`` for the command
FIFO (destination only) and ``DATABUF_APERTURE`` for data-buffer slots.
Each busy engine moves up to ``rate`` 64-bit words per subsystem cycle and
stalls (never drops) on a full FIFO or a pending slot.  Engines step in
fixed order 0 then 1, so engine 0 wins when both target the FIFO.
"""
from __future__ import annotations

from dataclasses import dataclass

from .bridge import CommandFifo, DataBuffer, SlotState
from .memmap import DATABUF_APERTURE, DATABUF_APERTURE_SIZE, FIFO_PORT_LO, SramModel
from .trace import NULL_TRACE, Trace

N_ENGINES = 2
WORD_BYTES = 8


class DmaError(Exception):
    pass


class EngineBusy(DmaError):
    pass


class InvalidDescriptor(DmaError, ValueError):
    pass


@dataclass(frozen=True)
class DmaDescriptor:
    src: int
    dst: int
    len_words64: int
    rate: int = 1


@dataclass
class DmaStatus:
    busy: bool = False
    transferred: int = 0
    stalled_cycles: int = 0


# endpoint kinds; memory endpoints are the SramModel itself
FIFO = "fifo"
SLOTS = "slots"


class DmaEngine:
    def __init__(self, index: int, fabric: "DmaFabric"):
        self.index = index
        self.fabric = fabric
        self.descriptor: DmaDescriptor | None = None
        self.status = DmaStatus()
        self._src = None
        self._dst = None

    @property
    def busy(self) -> bool:
        return self.status.busy

    def configure(self, d: DmaDescriptor) -> None:
        if self.status.busy:
            raise EngineBusy(f"DMA{self.index} is busy")
        self._src, self._dst = self.fabric.validate(d)
        self.descriptor = d
        self.status = DmaStatus(busy=True)

    def step(self) -> int:
        """Move up to ``rate`` words; returns the number moved this cycle."""
        st = self.status
        if not st.busy:
            return 0
        d = self.descriptor
        moved = 0
        while moved < d.rate and st.transferred < d.len_words64:
            off = st.transferred * WORD_BYTES
            src_addr = d.src + off
            dst_addr = d.dst + off
            if self._blocked(src_addr, dst_addr):
                st.stalled_cycles += 1
                break
            self._write(dst_addr, self._read(src_addr))
            st.transferred += 1
            moved += 1
        if st.transferred >= d.len_words64:
            st.busy = False
        return moved

    def _blocked(self, src_addr: int, dst_addr: int) -> bool:
        fab = self.fabric
        if self._dst == FIFO:
            if fab.fifo.full:
                return True
        elif self._dst == SLOTS and fab.buffer.state[fab.slot_of(dst_addr)] is SlotState.PENDING_READ:
            return True
        if self._src == SLOTS and fab.buffer.state[fab.slot_of(src_addr)] is SlotState.PENDING_READ:
            return True
        return False

    def _read(self, addr: int) -> int:
        if self._src == SLOTS:
            slot, word = self.fabric.slot_word(addr)
            return self.fabric.buffer.read_word(slot, word, 64)
        return self._src.read(addr, WORD_BYTES)

    def _write(self, addr: int, value: int) -> None:
        if self._dst == FIFO:
            self.fabric.fifo.push(value)
        elif self._dst == SLOTS:
            slot, word = self.fabric.slot_word(addr)
            self.fabric.buffer.write_word(slot, word, 64, value)
        else:
            self._dst.write(addr, WORD_BYTES, value)


class DmaFabric:
    """Both engines plus the endpoints they can reach."""

    def __init__(self, srams: list[SramModel], fifo: CommandFifo, buffer: DataBuffer,
                 trace: Trace = NULL_TRACE):
        self.srams = srams
        self.fifo = fifo
        self.buffer = buffer
        self.trace = trace
        self.engines = [DmaEngine(i, self) for i in range(N_ENGINES)]

    def slot_of(self, addr: int) -> int:
        return (addr - DATABUF_APERTURE) // 64

    def slot_word(self, addr: int) -> tuple[int, int]:
        off = addr - DATABUF_APERTURE
        return off // 64, (off % 64) // WORD_BYTES

    def _endpoint(self, addr: int, nbytes: int, role: str):
        if addr == FIFO_PORT_LO:
            return FIFO
        if DATABUF_APERTURE <= addr and addr + nbytes <= DATABUF_APERTURE + DATABUF_APERTURE_SIZE:
            return SLOTS
        for sram in self.srams:
            if sram.contains(addr, nbytes):
                return sram
        raise InvalidDescriptor(f"{role} range 0x{addr:08X}+{nbytes} is not a mapped DMA endpoint")

    def validate(self, d: DmaDescriptor):
        if d.len_words64 < 1:
            raise InvalidDescriptor("len_words64 must be >= 1")
        if d.rate < 1:
            raise InvalidDescriptor("rate must be >= 1")
        nbytes = d.len_words64 * WORD_BYTES
        src = self._endpoint(d.src, nbytes, "src")
        dst = self._endpoint(d.dst, nbytes, "dst")
        for ep, addr in ((src, d.src), (dst, d.dst)):
            if ep != FIFO and addr % WORD_BYTES:
                raise InvalidDescriptor(f"0x{addr:08X} is not 8-byte aligned")
        if src == FIFO:
            raise InvalidDescriptor("the command FIFO is not a DMA source")
        if isinstance(src, str) and isinstance(dst, str):
            raise InvalidDescriptor("at most one of src/dst may be a port")
        return src, dst

    def configure(self, engine: int, d: DmaDescriptor) -> None:
        if engine not in range(N_ENGINES):
            raise InvalidDescriptor(f"no DMA engine {engine}")
        self.engines[engine].configure(d)

    @property
    def busy(self) -> bool:
        for e in self.engines:
            if e.status.busy:
                return True
        return False

    def step(self, now: int) -> list[int]:
        """Step engine 0 then engine 1; returns words moved per engine."""
        moved = []
        tr = self.trace
        for e in self.engines:
            if not e.status.busy:
                moved.append(0)
                continue
            stalls = e.status.stalled_cycles
            n = e.step()
            moved.append(n)
            if tr.enabled:
                if n:
                    tr.emit(now, 2 * now, "dma", "XFER", engine=e.index, words=n,
                            done=not e.status.busy)
                if e.status.stalled_cycles != stalls:
                    tr.emit(now, 2 * now, "dma", "STALL", engine=e.index)
        return moved
