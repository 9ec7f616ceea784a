"""Training firmware: device initialization, read training, write leveling.

Everything here runs against the register map alone, the way software on
the subsystem core would.  The command-word layout and the device opcode
map are restated below as firmware-side constants instead of importing the
simulator's codec, so this package depends on nothing but ``busmap``.
"""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field

from .. import busmap as bm

N_LANES = 32
N_BANKS = 8
N_TAPS = 128
BURST_BEATS = 16
SLOT_WORDS = 16

# command word fields
_KIND_CA, _KIND_READ, _KIND_WRITE = 0, 1, 2
_MAX_HOLD = 0xFFFF

# device opcodes (beat0.ca[5:3])
_OP_NOP, _OP_ACT, _OP_RD, _OP_WR, _OP_PRE, _OP_MRW, _OP_MRR = range(7)

MR_INIT, MR_WL, MR_RL, MR_DQ_CAL = 0, 1, 2, 15
SLOT_VALID = 2


def _pattern(even: int, odd: int) -> int:
    p = 0
    for beat in range(BURST_BEATS):
        p |= (even if beat % 2 == 0 else odd) << (32 * beat)
    return p


DQ_CAL_PATTERN = _pattern(0xA5A5A5A5, 0x5A5A5A5A)
WRITE_PATTERN = _pattern(0x3C3CC3C3, 0xC3C33C3C)


def lane_bits(data: int, lane: int) -> int:
    """The 16 bits carried by ``lane`` (bit index 32 * beat + lane)."""
    v = 0
    for beat in range(BURST_BEATS):
        v |= ((data >> (32 * beat + lane)) & 1) << beat
    return v


class TrainingError(Exception):
    pass


class InitTimeout(TrainingError):
    def __init__(self, message: str, report: "InitReport"):
        super().__init__(message)
        self.report = report


class NoEyeFound(TrainingError):
    """No passing tap on ``lanes``; ``report`` holds the partial result."""

    def __init__(self, lanes: list[int], report: "TrainingReport"):
        self.lanes = lanes
        self.report = report
        super().__init__(f"no eye found on {report.direction} lanes {lanes}")


@dataclass
class FirmwareConfig:
    """Datasheet timing (PHY cycles) and firmware knobs."""

    tRCD: int = 8
    tRP: int = 8
    tRAS: int = 18
    tCCD: int = 8
    init_retries: int = 3
    reset_cycles: int = 4
    timeout: int = 100_000
    scratch: tuple[int, int, int] = (7, 0x7FFF, 0)
    read_slot: int = 0
    write_slot: int = 1
    verify_per_row: int = 2
    verify_slot_base: int = 64


@dataclass
class InitReport:
    steps: list[tuple[str, str]] = field(default_factory=list)
    attempts: int = 0
    cycles: int = 0
    ready: bool = False
    already_done: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["steps"] = [{"step": s, "status": st} for s, st in self.steps]
        return d


@dataclass
class LaneResult:
    lane: int
    pass_window: tuple[int, int] | None
    chosen_tap: int
    margin_taps: int
    converged: bool
    pass_bits: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass_window"] = list(self.pass_window) if self.pass_window else None
        return d


@dataclass
class TrainingReport:
    direction: str
    lanes: list[LaneResult] = field(default_factory=list)
    cycles: int = 0

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.lanes)

    @property
    def chosen_taps(self) -> list[int]:
        return [r.chosen_tap for r in self.lanes]

    @property
    def failed_lanes(self) -> list[int]:
        return [r.lane for r in self.lanes if not r.converged]

    def to_dict(self) -> dict:
        return {"direction": self.direction, "converged": self.converged, "cycles": self.cycles,
                "lanes": [r.to_dict() for r in self.lanes]}


def pass_window(passes: list[bool]) -> tuple[int, int] | None:
    """Longest run of passing taps; the lowest such run on ties."""
    best = None
    start = None
    for tap, ok in enumerate(list(passes) + [False]):
        if ok and start is None:
            start = tap
        elif not ok and start is not None:
            if best is None or tap - 1 - start > best[1] - best[0]:
                best = (start, tap - 1)
            start = None
    return best


def center_tap(window: tuple[int, int]) -> int:
    lo, hi = window
    return lo + (hi - lo) // 2


def _ceil_half(phy_cycles: int) -> int:
    return (phy_cycles + 1) // 2


class Scheduler:
    """Turn device commands into command words whose holds satisfy timing.

    Planned time is counted in subsystem cycles with every word issuing
    right after its predecessor's hold.  A batch is pushed into an empty,
    idle bridge, so it issues exactly as planned, shifted by a constant.
    :meth:`sync` moves planned time forward by the cycles that really
    elapsed, which keeps that shift from shrinking between batches.
    """

    def __init__(self, cfg: FirmwareConfig):
        self.rcd = _ceil_half(cfg.tRCD)
        self.rp = _ceil_half(cfg.tRP)
        self.ras = _ceil_half(cfg.tRAS)
        self.ccd = _ceil_half(cfg.tCCD)
        self.t = 0
        self.batch_start = 0
        self.last_act: dict[int, int] = {}
        self.last_pre: dict[int, int] = {}
        self.last_col: int | None = None
        self.words: list[list[int]] = []  # [cs0, ca0, ca1, kind, slot, hold]

    def __len__(self) -> int:
        return len(self.words)

    def _emit(self, earliest: int, ca0: int, ca1: int, kind: int = _KIND_CA,
              slot: int = 0, cs0: int = 1) -> int:
        if not self.words:
            self.batch_start = self.t
        gap = earliest - self.t
        if gap > 0:
            if not self.words:
                self.words.append([0, 0, 0, _KIND_CA, 0, 0])  # DES carries the wait
                gap -= 1
            while gap:
                prev = self.words[-1]
                add = min(gap, _MAX_HOLD - prev[5])
                prev[5] += add
                gap -= add
                if gap:
                    self.words.append([0, 0, 0, _KIND_CA, 0, 0])
                    gap -= 1
            self.t = earliest
        issue = self.t
        self.words.append([cs0, ca0, ca1, kind, slot, 0])
        self.t += 1
        return issue

    def nop_ext(self, ext: int) -> None:
        self._emit(self.t, (_OP_NOP << 3) | (ext >> 6), ext & 0x3F)

    def act(self, bank: int, row: int) -> None:
        if row >> 6:
            self.nop_ext(row >> 6)
        earliest = self.t
        if bank in self.last_pre:
            earliest = max(earliest, self.last_pre[bank] + self.rp)
        self.last_act[bank] = self._emit(earliest, (_OP_ACT << 3) | bank, row & 0x3F)

    def _col(self, op: int, bank: int, col: int, kind: int, slot: int) -> None:
        earliest = max(self.t, self.last_act[bank] + self.rcd)
        if self.last_col is not None:
            earliest = max(earliest, self.last_col + self.ccd)
        self.last_col = self._emit(earliest, (op << 3) | bank, col, kind, slot)

    def rd(self, bank: int, col: int, slot: int) -> None:
        self._col(_OP_RD, bank, col, _KIND_READ, slot)

    def wr(self, bank: int, col: int, slot: int) -> None:
        self._col(_OP_WR, bank, col, _KIND_WRITE, slot)

    def pre(self, bank: int) -> None:
        earliest = self.t
        if bank in self.last_act:
            earliest = max(earliest, self.last_act[bank] + self.ras)
        self.last_pre[bank] = self._emit(earliest, (_OP_PRE << 3) | bank, 0)

    def mrw(self, reg: int, value: int) -> None:
        if value >> 3:
            self.nop_ext(value >> 3)
        self._emit(self.t, (_OP_MRW << 3) | (value & 7), reg)

    def mrr(self, reg: int, slot: int) -> None:
        self._emit(self.t, _OP_MRR << 3, reg, _KIND_READ, slot)

    def take(self) -> list[int]:
        """Encoded words of the current batch; timing state is kept."""
        out = [pack_word(*w) for w in self.words]
        self.words = []
        return out

    def sync(self, elapsed: int) -> None:
        """The last batch was pushed ``elapsed`` cycles before the next one will be."""
        self.t = max(self.t, self.batch_start + elapsed)

    def reset_banks(self) -> None:
        self.last_act.clear()
        self.last_pre.clear()
        self.last_col = None


def pack_word(cs0: int, ca0: int, ca1: int, kind: int, slot: int, hold: int) -> int:
    """Firmware-side command word packer (beat1.cs is always 0)."""
    return ca0 | cs0 << 6 | ca1 << 7 | kind << 14 | slot << 16 | hold << 24


class Firmware:
    """Training sequences driven entirely through a :class:`busmap.Bus`."""

    def __init__(self, bus: bm.Bus, config: FirmwareConfig | None = None):
        self.bus = bus
        self.cfg = config or FirmwareConfig()
        self.sched = Scheduler(self.cfg)
        self.cycles = 0
        self.depth = bus.read32(bm.FIFO_DEPTH)

    # -- plumbing --------------------------------------------------------

    def _wait(self, n: int) -> None:
        self.bus.wait(n)
        self.cycles += n

    def drain(self) -> int:
        """Let the bridge run dry; returns the cycles that took."""
        self._wait(1)
        waited = self.bus.wait_until(bm.BRIDGE_STATUS, bm.STATUS_FIFO_EMPTY | bm.STATUS_BUSY,
                                     bm.STATUS_FIFO_EMPTY, self.cfg.timeout)
        self.cycles += waited
        return 1 + waited

    def submit(self) -> None:
        """Push the scheduled batch and wait until every burst has landed."""
        words = self.sched.take()
        if len(words) > self.depth:
            raise TrainingError(f"batch of {len(words)} words exceeds FIFO depth {self.depth}")
        bus = self.bus
        for w in words:
            bus.write32(bm.FIFO_PORT_LO, w & 0xFFFF_FFFF)
            bus.write32(bm.FIFO_PORT_HI, w >> 32)
        self.sched.sync(self.drain())

    def write_slot(self, slot: int, data: int) -> None:
        bus = self.bus
        bus.write32(bm.DATABUF_SEL, slot)
        for i in range(SLOT_WORDS):
            bus.write32(bm.DATABUF_WINDOW + 4 * i, (data >> (32 * i)) & 0xFFFF_FFFF)

    def read_slot(self, slot: int) -> int | None:
        """Slot payload, or None when the capture never landed."""
        bus = self.bus
        bus.write32(bm.DATABUF_SEL, slot)
        if bus.read32(bm.DATABUF_SLOT_STATE) != SLOT_VALID:
            return None
        data = 0
        for i in range(SLOT_WORDS):
            data |= bus.read32(bm.DATABUF_WINDOW + 4 * i) << (32 * i)
        return data

    def device_errors(self) -> int:
        return self.bus.read32(bm.DEVICE_ERRORS)

    # -- initialization --------------------------------------------------

    def initialize_device(self) -> InitReport:
        bus = self.bus
        rep = InitReport()
        start = self.cycles
        if bus.read32(bm.DEVICE_CTRL) & bm.DEVICE_CTRL_INIT_DONE \
                and bus.read32(bm.PHY_CTRL) & bm.PHY_CTRL_READY:
            rep.already_done = rep.ready = True
            rep.steps = [(s, "already-done") for s in ("reset", "mode-registers", "phy-ready")]
            return rep
        rl = bus.read32(bm.BRIDGE_RL)
        wl = bus.read32(bm.BRIDGE_WL)
        for attempt in range(1, self.cfg.init_retries + 1):
            rep.attempts = attempt
            bus.write32(bm.DEVICE_CTRL, bm.DEVICE_CTRL_RESET)
            self._wait(self.cfg.reset_cycles)
            bus.write32(bm.DEVICE_CTRL, 0)
            self._wait(1)
            rep.steps.append(("reset", "ok"))
            errors = self.device_errors()
            self.sched.reset_banks()
            self.sched.mrw(MR_RL, rl)
            self.sched.mrw(MR_WL, wl)
            self.sched.mrw(MR_INIT, 1)
            self.submit()
            done = bus.read32(bm.DEVICE_CTRL) & bm.DEVICE_CTRL_INIT_DONE
            if done and self.device_errors() == errors:
                rep.steps.append(("mode-registers", "ok"))
                bus.write32(bm.PHY_CTRL, bm.PHY_CTRL_READY)
                rep.steps.append(("phy-ready", "ok"))
                rep.ready = True
                rep.cycles = self.cycles - start
                return rep
            rep.steps.append(("mode-registers", "failed"))
        rep.cycles = self.cycles - start
        raise InitTimeout(f"device did not complete initialization after {rep.attempts} attempts",
                          rep)

    # -- training --------------------------------------------------------

    def _set_all(self, base: int, tap: int) -> None:
        write = self.bus.write32
        for lane in range(N_LANES):
            write(base + 4 * lane, tap)

    def _sweep(self, direction: str, base: int, probe) -> TrainingReport:
        start = self.cycles
        passes = [[False] * N_TAPS for _ in range(N_LANES)]
        for tap in range(N_TAPS):
            self._set_all(base, tap)
            ok = probe()
            for lane in range(N_LANES):
                passes[lane][tap] = ok[lane]
        rep = TrainingReport(direction)
        for lane in range(N_LANES):
            win = pass_window(passes[lane])
            bits = "".join("1" if p else "0" for p in passes[lane])
            if win is None:
                rep.lanes.append(LaneResult(lane, None, 0, 0, False, bits))
            else:
                tap = center_tap(win)
                rep.lanes.append(LaneResult(lane, win, tap, min(tap - win[0], win[1] - tap),
                                            True, bits))
            self.bus.write32(base + 4 * lane, rep.lanes[-1].chosen_tap)
        rep.cycles = self.cycles - start
        if not rep.converged:
            raise NoEyeFound(rep.failed_lanes, rep)
        return rep

    @staticmethod
    def _compare(got: int | None, expected: int) -> list[bool]:
        if got is None:
            return [False] * N_LANES
        # fold the 16 beats of the difference onto one 32-bit mask of failing lanes
        diff = got ^ expected
        bad = 0
        while diff:
            bad |= diff & 0xFFFF_FFFF
            diff >>= 32
        return [not (bad >> lane) & 1 for lane in range(N_LANES)]

    def read_training(self) -> TrainingReport:
        slot = self.cfg.read_slot

        def probe():
            self.sched.mrr(MR_DQ_CAL, slot)
            self.submit()
            return self._compare(self.read_slot(slot), DQ_CAL_PATTERN)

        return self._sweep("read", bm.DELAY_RD_BASE, probe)

    def write_leveling(self) -> TrainingReport:
        bank, row, col = self.cfg.scratch
        wslot, rslot = self.cfg.write_slot, self.cfg.read_slot
        self.write_slot(wslot, WRITE_PATTERN)
        self.sched.act(bank, row)
        self.submit()

        def probe():
            self.sched.wr(bank, col, wslot)
            self.sched.rd(bank, col, rslot)
            self.submit()
            return self._compare(self.read_slot(rslot), WRITE_PATTERN)

        try:
            return self._sweep("write", bm.DELAY_WR_BASE, probe)
        finally:
            self.sched.pre(bank)
            self.submit()

    def train(self) -> tuple[TrainingReport, TrainingReport]:
        """Read training first (it needs no write path), then write leveling."""
        return self.read_training(), self.write_leveling()

    # -- verification ----------------------------------------------------

    def _verify_shape(self) -> tuple[int, int]:
        """(banks, bursts per row) for one verify batch that fits the FIFO.

        A batch is a NOP+ACT pair per bank, a WR and a RD per burst, a PRE per
        bank, and possibly one leading DES.
        """
        per_row = max(1, self.cfg.verify_per_row)
        while per_row >= 1:
            banks = min(N_BANKS, (self.depth - 1) // (3 + 2 * per_row))
            if banks >= 1:
                return banks, per_row
            per_row -= 1
        raise TrainingError(f"FIFO depth {self.depth} is too small to verify the link")

    def verify_link(self, n_bursts: int, seed: int = 0) -> float:
        """Write then read back ``n_bursts`` random bursts; returns the pass ratio.

        Each batch opens a random row in distinct banks, writes and reads a
        few random columns there, and closes the rows again.
        """
        if n_bursts <= 0:
            return 1.0
        rng = random.Random(seed)
        n_banks, per_row = self._verify_shape()
        wbase = self.cfg.verify_slot_base
        rbase = wbase + n_banks * per_row
        passed = 0
        done = 0
        while done < n_bursts:
            k = min(n_banks * per_row, n_bursts - done)
            banks = rng.sample(range(N_BANKS), -(-k // per_row))
            rows = {b: rng.getrandbits(15) for b in banks}
            targets = []
            for i in range(k):
                bank = banks[i // per_row]
                used = {c for b, _, c, _ in targets if b == bank}
                while True:
                    col = rng.getrandbits(6)
                    if col not in used and (bank, rows[bank], col) != self.cfg.scratch:
                        break
                data = rng.getrandbits(512)
                self.write_slot(wbase + i, data)
                targets.append((bank, rows[bank], col, data))
            s = self.sched
            for bank in banks:
                s.act(bank, rows[bank])
            for i, (bank, _, col, _) in enumerate(targets):
                s.wr(bank, col, wbase + i)
            for i, (bank, _, col, _) in enumerate(targets):
                s.rd(bank, col, rbase + i)
            for bank in banks:
                s.pre(bank)
            self.submit()
            for i, (_, _, _, data) in enumerate(targets):
                if self.read_slot(rbase + i) == data:
                    passed += 1
            done += k
        return passed / n_bursts
