"""Address map constants and the SRAM model shared by the bus and the DMA engines."""
from __future__ import annotations

# Memories
SRAM_BASE = 0x0000_0000
SRAM_SIZE = 64 * 1024
BRIDGE_SRAM_A_BASE = 0x0001_0000
BRIDGE_SRAM_B_BASE = 0x0001_4000
BRIDGE_SRAM_SIZE = 16 * 1024

# Bridge block
BRIDGE_STATUS = 0x0002_0000
FIFO_PORT_LO = 0x0002_0004
FIFO_PORT_HI = 0x0002_0008
FIFO_DEPTH = 0x0002_000C
DATABUF_COUNT = 0x0002_0010
DATABUF_SLOT_STATE = 0x0002_0014
DATABUF_SEL = 0x0002_0018
BRIDGE_RL = 0x0002_001C
BRIDGE_WL = 0x0002_0020
BRIDGE_ERRORS = 0x0002_0024
DATABUF_WINDOW = 0x0002_0040
DATABUF_WINDOW_WORDS = 16

STATUS_FIFO_EMPTY = 1 << 0
STATUS_FIFO_FULL = 1 << 1
STATUS_BUSY = 1 << 2
STATUS_OCC_SHIFT = 8
STATUS_OCC_MASK = 0xFFFF

# PHY delay lines
DELAY_RD_BASE = 0x0003_0000
DELAY_WR_BASE = 0x0003_0100

# DMA descriptor blocks
DMA_BASE = (0x0004_0000, 0x0004_0100)
DMA_SRC = 0x00
DMA_DST = 0x04
DMA_LEN = 0x08
DMA_CTRL = 0x0C
DMA_STATUS = 0x10
DMA_TRANSFERRED = 0x14
DMA_STALLED = 0x18

DMA_CTRL_START = 1 << 0
DMA_CTRL_RATE_SHIFT = 8
DMA_CTRL_RATE_MASK = 0xFF
DMA_STATUS_BUSY = 1 << 0

# Data buffer as seen by the DMA engines: slot s, 64-bit word w at
# DATABUF_APERTURE + 64 * s + 8 * w.
DATABUF_APERTURE = 0x0006_0000
DATABUF_APERTURE_SIZE = 256 * 64

# Device / PHY control
DEVICE_CTRL = 0x0005_0000
PHY_CTRL = 0x0005_0004
DEVICE_ERRORS = 0x0005_0008

DEVICE_CTRL_RESET = 1 << 0
DEVICE_CTRL_INIT_DONE = 1 << 1
PHY_CTRL_READY = 1 << 0


def delay_rd_lane(lane: int) -> int:
    return DELAY_RD_BASE + 4 * lane


def delay_wr_lane(lane: int) -> int:
    return DELAY_WR_BASE + 4 * lane


class SramModel:
    def __init__(self, base: int, size_bytes: int, name: str = "sram"):
        self.base = base
        self.size_bytes = size_bytes
        self.name = name
        self.contents = bytearray(size_bytes)

    @property
    def end(self) -> int:
        return self.base + self.size_bytes

    def contains(self, addr: int, nbytes: int = 1) -> bool:
        return self.base <= addr and addr + nbytes <= self.end

    def read(self, addr: int, nbytes: int) -> int:
        off = addr - self.base
        return int.from_bytes(self.contents[off:off + nbytes], "little")

    def write(self, addr: int, nbytes: int, value: int) -> None:
        off = addr - self.base
        self.contents[off:off + nbytes] = value.to_bytes(nbytes, "little")

    def load(self, addr: int, data: bytes) -> None:
        if not self.contains(addr, len(data)):
            raise ValueError(f"{len(data)} bytes at 0x{addr:08X} do not fit in {self.name}")
        off = addr - self.base
        self.contents[off:off + len(data)] = data


__all__ = [name for name in dir() if name.isupper()] + [
    "SramModel", "delay_rd_lane", "delay_wr_lane"]
