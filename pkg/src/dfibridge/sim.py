"""Deterministic cycle-stepped kernel.

Per subsystem cycle ``n`` the kernel runs, in this fixed order:

1. DMA engines 0 then 1;
2. the bridge pops/issues at most one word;
3. two device PHY sub-cycles ``2n`` and ``2n+1``, the issued beat pair
   forming one device command stamped ``2n``;
4. commit: matured capture/fetch events retire, staged FIFO pushes become
   poppable, queued DMA plan entries arm, BRIDGE_STATUS is latched.

A word pushed during cycle ``n`` can therefore be popped in cycle ``n+1`` at
the earliest.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

from . import memmap as mm
from .bridge import SLOT_BYTES, Bridge, CommandFifo, DataBuffer
from .busmap import Bus
from .device import (DES, Device, DeviceError, ReadReturn, TimingParams, TimingViolation,
                     UnknownOpcode, decode_ca)
from .dma import DmaDescriptor, DmaFabric
from .phy import DelayConfig, Direction, LaneSkew, NotCalibrated, Phy, serialize_beats
from .trace import Trace

CLOCK_RATIO = 2


class ScenarioInvalid(ValueError):
    """Scenario rejected; ``errors`` lists ``(field, message)`` diagnostics."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{f}: {m}" for f, m in errors))


@dataclass
class ClockConfig:
    phy_mhz: float = 2133.0
    sys_mhz: float = 1066.5
    horizon: int = 10_000_000

    def __post_init__(self):
        if abs(self.phy_mhz - CLOCK_RATIO * self.sys_mhz) > 1e-9 * self.phy_mhz:
            raise ScenarioInvalid([("clock", "subsystem:PHY clock ratio must be 1:2")])
        if self.horizon < 0:
            raise ScenarioInvalid([("clock.horizon", "must be >= 0")])


@dataclass
class DmaPlanEntry:
    """One descriptor of a scenario DMA plan.

    An entry arms when its engine is idle and either ``chain`` is set and
    the previous entry has finished, or ``chain`` is clear and the cycle has
    reached ``start_cycle``.
    """

    engine: int
    descriptor: DmaDescriptor
    start_cycle: int = 0
    chain: bool = False
    armed: bool = False


@dataclass
class RunReport:
    cycles_run: int = 0
    phy_cycles: int = 0
    warmup_cycles: int = 0
    idle_cycles: int = 0
    idle_after_warmup: int = 0
    held_cycles: int = 0
    issued_commands: int = 0
    issued_beats: int = 0
    utilization: float = 0.0
    decode_errors: int = 0
    slot_errors: int = 0
    capture_misses: int = 0
    timing_violations: int = 0
    illegal_commands: int = 0
    unknown_opcodes: int = 0
    phy_errors: int = 0
    dma_stalled_cycles: int = 0
    bytes_read: int = 0
    bytes_written: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def run_errors(self) -> int:
        """Errors that make ``run`` exit with status 2."""
        return (self.decode_errors + self.slot_errors + self.timing_violations
                + self.illegal_commands + self.unknown_opcodes)


def utilization(issued_beats: int, cycles_run: int, warmup: int) -> float:
    window = cycles_run - warmup
    if window <= 0:
        return 0.0
    return issued_beats / (CLOCK_RATIO * window)


@dataclass
class SimConfig:
    timing: TimingParams = field(default_factory=TimingParams)
    delays: DelayConfig = field(default_factory=DelayConfig)
    skew: LaneSkew = field(default_factory=LaneSkew)
    clock: ClockConfig = field(default_factory=ClockConfig)
    fifo_depth: int = 64
    device_preinit: bool = False
    device_stuck_in_reset: bool = False
    phy_ready: bool = False
    corruption: str = "invert"
    seed: int = 0
    warmup_cycles: int | None = None
    trace: bool = True
    record_beats: bool = False


class Simulator:
    def __init__(self, config: SimConfig | None = None):
        cfg = config or SimConfig()
        self.config = cfg
        self.trace = Trace(enabled=cfg.trace)
        self.srams = [
            mm.SramModel(mm.SRAM_BASE, mm.SRAM_SIZE, "sram"),
            mm.SramModel(mm.BRIDGE_SRAM_A_BASE, mm.BRIDGE_SRAM_SIZE, "sram_a"),
            mm.SramModel(mm.BRIDGE_SRAM_B_BASE, mm.BRIDGE_SRAM_SIZE, "sram_b"),
        ]
        self.fifo = CommandFifo(cfg.fifo_depth)
        self.buffer = DataBuffer()
        self.bridge = Bridge(self.fifo, self.buffer, cfg.timing.RL, cfg.timing.WL, self.trace)
        self.phy = Phy(cfg.delays, cfg.skew, cfg.corruption, cfg.seed, ready=cfg.phy_ready)
        self.device = Device(cfg.timing, preinit=cfg.device_preinit,
                             stuck_in_reset=cfg.device_stuck_in_reset)
        self.dma = DmaFabric(self.srams, self.fifo, self.buffer, self.trace)
        self.bus = Bus(self.srams, self.bridge, self.phy, self.dma, self.device)
        self.bus.attach_clock(self.advance)
        self.cycle = 0
        self.plan: list[DmaPlanEntry] = []
        self.phy_errors = 0
        self.bytes_written = 0
        self._pre_warmup_idle = 0
        self.beats: list[tuple[int, object]] = []

    # -- scenario setup --------------------------------------------------

    def sram_for(self, addr: int) -> mm.SramModel:
        for s in self.srams:
            if s.base <= addr < s.end:
                return s
        raise ScenarioInvalid([("image", f"0x{addr:08X} is not inside an SRAM")])

    def load_image(self, addr: int, data: bytes) -> None:
        try:
            self.sram_for(addr).load(addr, data)
        except ValueError as exc:
            raise ScenarioInvalid([("image", str(exc))]) from None

    def preload_fifo(self, words) -> None:
        for w in words:
            self.fifo.push(w)
        self.fifo.commit()
        self.bus.snapshot()

    def add_dma(self, entry: DmaPlanEntry) -> None:
        self.dma.validate(entry.descriptor)
        self.plan.append(entry)
        self._arm_plan()

    def _arm_plan(self) -> None:
        prev_done = True
        engines = self.dma.engines
        for entry in self.plan:
            if not entry.armed:
                ready = prev_done if entry.chain else self.cycle >= entry.start_cycle
                if ready and not engines[entry.engine].busy:
                    self.dma.configure(entry.engine, entry.descriptor)
                    entry.armed = True
            eng = engines[entry.engine]
            prev_done = entry.armed and (not eng.busy or eng.descriptor is not entry.descriptor)

    # -- stepping ----------------------------------------------------------

    def quiescent(self) -> bool:
        return (self.bridge.quiescent() and not self.dma.busy and self.device.quiescent()
                and all(e.armed for e in self.plan))

    def step(self) -> None:
        n = self.cycle
        bridge = self.bridge
        device = self.device
        tr = self.trace

        if self.dma.busy:
            self.dma.step(n)

        idle_before = bridge.stats.idle_cycles
        issue = bridge.step(n)
        if bridge.stats.idle_cycles != idle_before and self.config.warmup_cycles is not None \
                and n < self.config.warmup_cycles:
            self._pre_warmup_idle += 1

        p0 = 2 * n
        if issue is not None:
            cmd = issue.command
            if self.config.record_beats:
                self.beats.extend(serialize_beats(cmd.beat0, cmd.beat1, n))
            if tr.enabled:
                tr.emit(n, p0, "phy", "BEAT", beat=0, cs=cmd.beat0.cs, ca=cmd.beat0.ca)
                tr.emit(n, p0 + 1, "phy", "BEAT", beat=1, cs=cmd.beat1.cs, ca=cmd.beat1.ca)
            wdata = None
            if issue.wdata is not None:
                try:
                    wdata = self.phy.transfer_burst(Direction.WRITE, issue.wdata)
                except NotCalibrated:
                    self.phy_errors += 1
                    if tr.enabled:
                        tr.emit(n, p0, "phy", "PHY_ERROR", error="not calibrated")
            self._device_events(n, p0)
            self._apply(n, p0, cmd.beat0, cmd.beat1, wdata)
            self._device_events(n, p0 + 1)
        elif device._pending:
            self._device_events(n, p0)
            self._device_events(n, p0 + 1)

        bridge.retire(n)
        self.fifo.commit()
        self.cycle = n + 1
        if self.plan:
            self._arm_plan()
        self.bus.snapshot()

    def _quiet_span(self, max_cycles: int) -> int:
        """How many cycles can pass with nothing but a bridge hold counting down."""
        bridge = self.bridge
        if bridge.hold_remaining == 0 or self.trace.enabled or self.dma.busy \
                or not self.fifo.settled or not all(e.armed for e in self.plan):
            return 0
        n = self.cycle
        k = min(max_cycles, bridge.hold_remaining)
        due = bridge.next_due()
        if due is not None:
            k = min(k, due - n)  # retire(m) acts on anything due at or before m
        p = self.device.next_due()
        if p is not None:
            k = min(k, p // 2 - n)  # cycle m handles device events up to PHY cycle 2m + 1
        return k

    def advance(self, max_cycles: int = 1) -> int:
        """Step one cycle, or skip a quiet stretch of at most ``max_cycles``.

        Skipping is only done with tracing off, and leaves every counter and
        every piece of state exactly where stepping would have left it.
        Returns the number of cycles that elapsed.
        """
        k = self._quiet_span(max_cycles)
        if k < 2:
            self.step()
            return 1
        bridge = self.bridge
        bridge.hold_remaining -= k
        bridge.stats.held_cycles += k
        self.cycle += k
        self.bus.snapshot()
        return k

    def _apply(self, n: int, t: int, beat0, beat1, wdata) -> None:
        tr = self.trace
        try:
            dc = self.device.apply_command(beat0, beat1, t, wdata)
        except DeviceError as exc:
            if tr.enabled:
                if isinstance(exc, TimingViolation):
                    # a rejected command leaves the latch alone, so this re-decode is exact
                    dc = decode_ca(beat0, beat1, self.device.ext)
                    tr.emit(n, t, "device", "VIOLATION", rule=exc.kind, op=dc.name,
                            bank=dc.bank, required=exc.required, actual=exc.actual)
                else:
                    kind = "UNKNOWN" if isinstance(exc, UnknownOpcode) else "ILLEGAL"
                    tr.emit(n, t, "device", kind, error=str(exc))
            return
        if tr.enabled and dc.op != DES:
            tr.emit(n, t, "device", "CMD", op=dc.name, bank=dc.bank, row=dc.row, col=dc.col,
                    reg=dc.reg, value=dc.value)

    def _device_events(self, n: int, p: int) -> None:
        device = self.device
        if not device._pending or device._pending[0][0] > p:
            return
        tr = self.trace
        for ev in device.step(p):
            if isinstance(ev, ReadReturn):
                try:
                    data = self.phy.transfer_burst(Direction.READ, ev.data)
                except NotCalibrated:
                    self.phy_errors += 1
                    if tr.enabled:
                        tr.emit(n, p, "phy", "PHY_ERROR", error="not calibrated")
                    continue
                if tr.enabled:
                    tr.emit(n, p, "device", "RDATA", issue=ev.issue_cycle)
                self.bridge.capture(ev.issue_cycle // CLOCK_RATIO, data)
            else:
                self.bytes_written += SLOT_BYTES
                if tr.enabled:
                    tr.emit(n, p, "device", "WLATCH", issue=ev.issue_cycle, bank=ev.bank,
                            row=ev.row, col=ev.col)

    def run(self, max_cycles: int | None = None) -> RunReport:
        """Step until quiescent or until the horizon; returns the report."""
        horizon = self.config.clock.horizon if max_cycles is None else max_cycles
        limit = self.cycle + horizon if max_cycles is not None else horizon
        while self.cycle < limit and not self.quiescent():
            self.advance(limit - self.cycle)
        return self.report()

    def report(self) -> RunReport:
        bs = self.bridge.stats
        ds = self.device.stats
        cycles = self.cycle
        if self.config.warmup_cycles is not None:
            warmup = min(self.config.warmup_cycles, cycles)
            idle_after = bs.idle_cycles - self._pre_warmup_idle
        else:
            warmup = bs.first_issue if bs.first_issue is not None else cycles
            idle_after = bs.idle_cycles - warmup
        return RunReport(
            cycles_run=cycles,
            phy_cycles=CLOCK_RATIO * cycles,
            warmup_cycles=warmup,
            idle_cycles=bs.idle_cycles,
            idle_after_warmup=idle_after,
            held_cycles=bs.held_cycles,
            issued_commands=bs.issued_commands,
            issued_beats=bs.issued_beats,
            utilization=utilization(bs.issued_beats, cycles, warmup),
            decode_errors=bs.decode_errors,
            slot_errors=bs.slot_errors,
            capture_misses=bs.capture_misses,
            timing_violations=ds.timing_violations,
            illegal_commands=ds.illegal_commands,
            unknown_opcodes=ds.unknown_opcodes,
            phy_errors=self.phy_errors,
            dma_stalled_cycles=sum(e.status.stalled_cycles for e in self.dma.engines),
            bytes_read=bs.bytes_read,
            bytes_written=self.bytes_written,
        )


def report_from_trace(records) -> RunReport:
    """Rebuild a RunReport from trace records (default warm-up window)."""
    r = RunReport()
    first_issue = None
    stalls = 0
    for rec in records:
        kind = rec["kind"]
        module = rec["module"]
        if module == "bridge":
            if kind == "ISSUE":
                r.issued_commands += 1
                if first_issue is None:
                    first_issue = rec["sys_cycle"]
            elif kind == "IDLE":
                r.idle_cycles += 1
            elif kind == "HOLD":
                r.held_cycles += 1
            elif kind == "ERROR":
                r.idle_cycles += 1
                if rec.get("reason") == "slot":
                    r.slot_errors += 1
                else:
                    r.decode_errors += 1
            elif kind == "CAPTURE":
                r.bytes_read += SLOT_BYTES
            elif kind == "CAPTURE_MISS":
                r.capture_misses += 1
        elif module == "device":
            if kind == "VIOLATION":
                r.timing_violations += 1
            elif kind == "ILLEGAL":
                r.illegal_commands += 1
            elif kind == "UNKNOWN":
                r.unknown_opcodes += 1
            elif kind == "WLATCH":
                r.bytes_written += SLOT_BYTES
        elif module == "phy" and kind == "PHY_ERROR":
            r.phy_errors += 1
        elif module == "dma" and kind == "STALL":
            stalls += 1
    r.cycles_run = r.issued_commands + r.idle_cycles + r.held_cycles
    r.phy_cycles = CLOCK_RATIO * r.cycles_run
    r.issued_beats = 2 * r.issued_commands
    r.warmup_cycles = first_issue if first_issue is not None else r.cycles_run
    r.idle_after_warmup = r.idle_cycles - r.warmup_cycles
    r.utilization = utilization(r.issued_beats, r.cycles_run, r.warmup_cycles)
    r.dma_stalled_cycles = stalls
    return r
