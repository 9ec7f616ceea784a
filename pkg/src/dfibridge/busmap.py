"""32-bit register-mapped control plane and SRAM windows.

This is the only interface the training firmware uses.  Besides ``read32``
and ``write32`` the bus carries the kernel's clock primitives (``wait`` and
``wait_until``) so firmware can let simulated time pass.

Register map (see ``memmap`` for the constants)::

    0x0000_0000  subsystem SRAM, 64 kB
    0x0001_0000  bridge SRAM A, 16 kB        0x0001_4000  bridge SRAM B, 16 kB
    0x0002_0000  BRIDGE_STATUS   RO  bit0 FIFO empty, bit1 FIFO full,
                                     bit2 busy (holding or bursts in flight),
                                     bits 8-23 occupancy
    0x0002_0004  FIFO_PORT_LO    WO  low half of a command word
    0x0002_0008  FIFO_PORT_HI    WO  high half; commits the push
    0x0002_000C  FIFO_DEPTH      RO
    0x0002_0010  DATABUF_COUNT   RO  = 256
    0x0002_0014  DATABUF_SLOT_STATE RO state of the selected slot (0 idle, 1 pending, 2 valid)
    0x0002_0018  DATABUF_SEL     RW  selected slot
    0x0002_001C  BRIDGE_RL       RW  read latency, PHY cycles
    0x0002_0020  BRIDGE_WL       RW  write latency, PHY cycles
    0x0002_0024  BRIDGE_ERRORS   RO  dropped words + capture misses
    0x0002_0040  DATABUF_WINDOW  RW  16 words of the selected slot, LSW first
    0x0003_0000 + 4*lane  DELAY_RD_LANE  RW 7-bit tap
    0x0003_0100 + 4*lane  DELAY_WR_LANE  RW 7-bit tap
    0x0004_0000, 0x0004_0100  DMA0/DMA1: SRC, DST, LEN, CTRL, STATUS,
                              TRANSFERRED, STALLED at +0x00..+0x18
    0x0005_0000  DEVICE_CTRL     bit0 reset (RW), bit1 init done (RO mirror)
    0x0005_0004  PHY_CTRL        bit0 ready (RW)
    0x0005_0008  DEVICE_ERRORS   RO  commands rejected by the device

No read has side effects.  FIFO pushes become visible to the bridge after
the next cycle boundary, and BRIDGE_STATUS reports the state as of the most
recently completed cycle.
"""
from __future__ import annotations

from typing import Callable

from . import memmap as mm
from .memmap import *  # noqa: F401,F403  (register addresses are part of this interface)
from .bridge import N_SLOTS, Bridge, IndexOutOfRange
from .device import Device
from .dma import DmaDescriptor, DmaFabric
from .phy import N_LANES, Direction, Phy


class BusError(Exception):
    def __init__(self, addr: int, message: str):
        super().__init__(f"0x{addr:08X}: {message}")
        self.addr = addr


class UnmappedAddress(BusError):
    pass


class UnalignedAccess(BusError):
    pass


class ReadOnlyRegister(BusError):
    pass


class PortSequenceError(BusError):
    """FIFO_PORT_HI without a preceding FIFO_PORT_LO, or two LO writes in a row."""


class WaitTimeout(Exception):
    pass


_MASK32 = 0xFFFF_FFFF


class Bus:
    def __init__(self, srams: list[mm.SramModel], bridge: Bridge, phy: Phy, dma: DmaFabric,
                 device: Device):
        self.srams = srams
        self.bridge = bridge
        self.phy = phy
        self.dma = dma
        self.device = device
        self.selected_slot = 0
        self._lo: int | None = None
        self._dma_regs = [{mm.DMA_SRC: 0, mm.DMA_DST: 0, mm.DMA_LEN: 0, mm.DMA_CTRL: 0}
                          for _ in dma.engines]
        self._status = 0
        self._advance: Callable[[int], int] | None = None
        self._readers: dict[int, Callable[[], int]] = {}
        self._writers: dict[int, Callable[[int], None]] = {}
        self._build()
        self.snapshot()

    # -- clock primitives -------------------------------------------------

    def attach_clock(self, advance: Callable[[int], int]) -> None:
        """``advance(n)`` lets between 1 and ``n`` cycles elapse and returns how many did.

        It may only take several cycles at once when none of them could change
        anything visible through the bus.
        """
        self._advance = advance

    def wait(self, cycles: int = 1) -> None:
        """Let ``cycles`` subsystem cycles elapse."""
        if self._advance is None:
            raise RuntimeError("bus has no clock attached")
        done = 0
        while done < cycles:
            done += self._advance(cycles - done)

    def wait_until(self, addr: int, mask: int, value: int, timeout: int = 100_000) -> int:
        """Step until ``read32(addr) & mask == value``; returns cycles waited."""
        if self._advance is None:
            raise RuntimeError("bus has no clock attached")
        waited = 0
        while self.read32(addr) & mask != value:
            if waited >= timeout:
                raise WaitTimeout(f"0x{addr:08X} & 0x{mask:X} != 0x{value:X} after {timeout} cycles")
            waited += self._advance(timeout - waited)
        return waited

    # -- status --------------------------------------------------------------

    def snapshot(self) -> None:
        """Latch BRIDGE_STATUS; the kernel calls this at the end of every cycle."""
        fifo = self.bridge.fifo
        occ = fifo.occupancy
        st = occ << mm.STATUS_OCC_SHIFT
        if occ == 0:
            st |= mm.STATUS_FIFO_EMPTY
        if occ >= fifo.depth:
            st |= mm.STATUS_FIFO_FULL
        if self.bridge.busy:
            st |= mm.STATUS_BUSY
        self._status = st

    # -- access --------------------------------------------------------------

    def _sram(self, addr: int) -> mm.SramModel | None:
        for s in self.srams:
            if s.base <= addr < s.end:
                return s
        return None

    def read32(self, addr: int) -> int:
        if addr & 3:
            raise UnalignedAccess(addr, "32-bit access must be word aligned")
        reader = self._readers.get(addr)
        if reader is not None:
            return reader()
        sram = self._sram(addr)
        if sram is not None:
            return sram.read(addr, 4)
        if addr in self._writers:
            return 0  # write-only register
        raise UnmappedAddress(addr, "unmapped")

    def write32(self, addr: int, value: int) -> None:
        if addr & 3:
            raise UnalignedAccess(addr, "32-bit access must be word aligned")
        if not 0 <= value <= _MASK32:
            raise ValueError(f"value {value!r} does not fit in 32 bits")
        writer = self._writers.get(addr)
        if writer is not None:
            writer(value)
            return
        sram = self._sram(addr)
        if sram is not None:
            sram.write(addr, 4, value)
            return
        if addr in self._readers:
            raise ReadOnlyRegister(addr, "register is read-only")
        raise UnmappedAddress(addr, "unmapped")

    # -- register table --------------------------------------------------

    def _build(self) -> None:
        r, w = self._readers, self._writers
        bridge, buf = self.bridge, self.bridge.buffer

        r[mm.BRIDGE_STATUS] = lambda: self._status
        w[mm.FIFO_PORT_LO] = self._write_lo
        w[mm.FIFO_PORT_HI] = self._write_hi
        r[mm.FIFO_DEPTH] = lambda: bridge.fifo.depth
        r[mm.DATABUF_COUNT] = lambda: buf.n_slots
        r[mm.DATABUF_SLOT_STATE] = lambda: int(buf.state[self.selected_slot])
        r[mm.DATABUF_SEL] = lambda: self.selected_slot
        w[mm.DATABUF_SEL] = self._select_slot
        r[mm.BRIDGE_RL] = lambda: bridge.read_latency
        w[mm.BRIDGE_RL] = lambda v: self._set_latency("read_latency", v)
        r[mm.BRIDGE_WL] = lambda: bridge.write_latency
        w[mm.BRIDGE_WL] = lambda v: self._set_latency("write_latency", v)
        r[mm.BRIDGE_ERRORS] = lambda: (bridge.stats.decode_errors + bridge.stats.slot_errors
                                       + bridge.stats.capture_misses) & _MASK32

        for i in range(mm.DATABUF_WINDOW_WORDS):
            a = mm.DATABUF_WINDOW + 4 * i
            r[a] = lambda i=i: buf.read_word(self.selected_slot, i, 32)
            w[a] = lambda v, i=i: buf.write_word(self.selected_slot, i, 32, v)

        for lane in range(N_LANES):
            for base, d in ((mm.DELAY_RD_BASE, Direction.READ), (mm.DELAY_WR_BASE, Direction.WRITE)):
                a = base + 4 * lane
                r[a] = lambda lane=lane, d=d: self.phy.get_delay(lane, d)
                w[a] = lambda v, lane=lane, d=d: self.phy.set_delay(lane, d, v)

        for e, base in enumerate(mm.DMA_BASE):
            for off in (mm.DMA_SRC, mm.DMA_DST, mm.DMA_LEN):
                r[base + off] = lambda e=e, off=off: self._dma_regs[e][off]
                w[base + off] = lambda v, e=e, off=off: self._dma_regs[e].__setitem__(off, v)
            r[base + mm.DMA_CTRL] = lambda e=e: self._dma_regs[e][mm.DMA_CTRL] & ~mm.DMA_CTRL_START
            w[base + mm.DMA_CTRL] = lambda v, e=e: self._dma_ctrl(e, v)
            r[base + mm.DMA_STATUS] = lambda e=e: int(self.dma.engines[e].status.busy)
            r[base + mm.DMA_TRANSFERRED] = lambda e=e: self.dma.engines[e].status.transferred & _MASK32
            r[base + mm.DMA_STALLED] = lambda e=e: self.dma.engines[e].status.stalled_cycles & _MASK32

        r[mm.DEVICE_CTRL] = self._device_ctrl
        w[mm.DEVICE_CTRL] = self._write_device_ctrl
        r[mm.PHY_CTRL] = lambda: mm.PHY_CTRL_READY if self.phy.ready else 0
        w[mm.PHY_CTRL] = self._write_phy_ctrl
        r[mm.DEVICE_ERRORS] = lambda: (self.device.stats.timing_violations
                                       + self.device.stats.illegal_commands
                                       + self.device.stats.unknown_opcodes) & _MASK32

    def _write_lo(self, value: int) -> None:
        if self._lo is not None:
            self._lo = None
            raise PortSequenceError(mm.FIFO_PORT_LO, "FIFO_PORT_LO written twice without HI")
        self._lo = value

    def _write_hi(self, value: int) -> None:
        if self._lo is None:
            raise PortSequenceError(mm.FIFO_PORT_HI, "FIFO_PORT_HI written without LO")
        word = (value << 32) | self._lo
        self._lo = None
        self.bridge.fifo_push(word)

    def _select_slot(self, value: int) -> None:
        if value >= N_SLOTS:
            raise IndexOutOfRange(f"slot {value} outside 0..{N_SLOTS - 1}")
        self.selected_slot = value

    def _set_latency(self, attr: str, value: int) -> None:
        if value < 1:
            raise ValueError("latency must be >= 1")
        setattr(self.bridge, attr, value)

    def _dma_ctrl(self, e: int, value: int) -> None:
        regs = self._dma_regs[e]
        regs[mm.DMA_CTRL] = value
        if value & mm.DMA_CTRL_START:
            rate = (value >> mm.DMA_CTRL_RATE_SHIFT) & mm.DMA_CTRL_RATE_MASK or 1
            self.dma.configure(e, DmaDescriptor(regs[mm.DMA_SRC], regs[mm.DMA_DST],
                                                regs[mm.DMA_LEN], rate))

    def _device_ctrl(self) -> int:
        v = mm.DEVICE_CTRL_RESET if self.device.in_reset else 0
        if self.device.init_done:
            v |= mm.DEVICE_CTRL_INIT_DONE
        return v

    def _write_device_ctrl(self, value: int) -> None:
        asserted = bool(value & mm.DEVICE_CTRL_RESET)
        if asserted:
            self.phy.ready = False
        self.device.set_reset(asserted)

    def _write_phy_ctrl(self, value: int) -> None:
        self.phy.ready = bool(value & mm.PHY_CTRL_READY)
