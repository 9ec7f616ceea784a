"""Scenario files.

A scenario is a TOML document.  Every section is optional; paths are
relative to the scenario file.  Comments start with ``#``::

    seed = 1
    horizon = 1_000_000        # subsystem cycles
    fifo_depth = 64
    warmup = 10                # omit for "until the first ISSUE"

    [clock]
    phy_mhz = 2133.0
    sys_mhz = 1066.5

    [timing]                   # PHY cycles
    tRCD = 8
    tRP = 8
    tRAS = 18
    tCCD = 8
    RL = 14
    WL = 8

    [phy]
    tap_ps = 10.0
    eye_half_width_ps = 60.0
    corruption = "invert"      # or "random" (seeded)
    ready = true

    [skews]                    # a number applies to every lane, a list gives 32 lanes
    read_ps = 250.0
    write_ps = [0.0, 10.0, ...]

    [delays]                   # initial taps, same shape as [skews]
    read = 0
    write = 0

    [device]
    preinit = true             # skip initialization (default for ``run``)
    stuck_in_reset = false

    [stream]                   # command words to issue
    path = "words.hex"         # hex text, or little-endian binary for *.bin
    mode = "dma"               # "dma": staged in SRAM and streamed; "preload": written to the FIFO
    rate = 1
    start_cycle = 0

    [[image]]                  # raw bytes placed in an SRAM before the run
    path = "data.bin"
    addr = 0x10000

    [[dma]]                    # explicit descriptors, armed at start_cycle
    engine = 0
    src = 0x0
    dst = 0x20004
    len = 100                  # 64-bit words
    rate = 1
    start_cycle = 0
    chain = false              # true: start when the previous entry finishes

    [output]
    trace = "run.trace.jsonl"
    report = "run.report.json"
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import memmap as mm
from .cmdword import CmdWordError, parse_stream, read_binary, write_binary
from .device import TimingParams
from .dma import DmaDescriptor, InvalidDescriptor
from .phy import N_LANES, DelayConfig, LaneSkew
from .sim import ClockConfig, DmaPlanEntry, ScenarioInvalid, SimConfig, Simulator

# Where a "dma" stream is staged, in order; later regions are chained.
STREAM_REGIONS = (
    (mm.SRAM_BASE, mm.SRAM_SIZE),
    (mm.BRIDGE_SRAM_A_BASE, mm.BRIDGE_SRAM_SIZE),
    (mm.BRIDGE_SRAM_B_BASE, mm.BRIDGE_SRAM_SIZE),
)

_TOP_KEYS = {"seed", "horizon", "fifo_depth", "warmup", "clock", "timing", "phy", "skews",
             "delays", "device", "stream", "image", "dma", "output"}


@dataclass
class StreamSpec:
    words: list[int]
    mode: str = "dma"
    rate: int = 1
    start_cycle: int = 0


@dataclass
class ScenarioConfig:
    source: Path | None = None
    seed: int = 0
    clock: ClockConfig = field(default_factory=ClockConfig)
    timing: TimingParams = field(default_factory=TimingParams)
    skew: LaneSkew = field(default_factory=LaneSkew)
    delays: DelayConfig = field(default_factory=DelayConfig)
    fifo_depth: int = 64
    warmup: int | None = None
    corruption: str = "invert"
    phy_ready: bool | None = None
    device_preinit: bool | None = None
    device_stuck_in_reset: bool = False
    stream: StreamSpec | None = None
    images: list[tuple[int, bytes]] = field(default_factory=list)
    dma: list[DmaPlanEntry] = field(default_factory=list)
    trace_out: Path | None = None
    report_out: Path | None = None

    def sim_config(self, *, preinit: bool, trace: bool) -> SimConfig:
        pre = preinit if self.device_preinit is None else self.device_preinit
        ready = pre if self.phy_ready is None else self.phy_ready
        return SimConfig(
            timing=self.timing,
            delays=DelayConfig(list(self.delays.read), list(self.delays.write), self.delays.tap_ps),
            skew=self.skew,
            clock=self.clock,
            fifo_depth=self.fifo_depth,
            device_preinit=pre,
            device_stuck_in_reset=self.device_stuck_in_reset,
            phy_ready=ready,
            corruption=self.corruption,
            seed=self.seed,
            warmup_cycles=self.warmup,
            trace=trace,
        )

    def build(self, *, preinit: bool = True, trace: bool = True) -> Simulator:
        """A fresh simulator with images, stream and DMA plan in place."""
        sim = Simulator(self.sim_config(preinit=preinit, trace=trace))
        for addr, data in self.images:
            sim.load_image(addr, data)
        if self.stream is not None:
            stage_stream(sim, self.stream)
        for entry in self.dma:
            sim.add_dma(DmaPlanEntry(entry.engine, entry.descriptor, entry.start_cycle,
                                     entry.chain))
        return sim


def stage_stream(sim: Simulator, stream: StreamSpec) -> None:
    if stream.mode == "preload":
        if len(stream.words) > sim.fifo.depth:
            raise ScenarioInvalid([("stream", f"{len(stream.words)} words do not fit a FIFO of "
                                              f"depth {sim.fifo.depth}; use mode = \"dma\"")])
        sim.preload_fifo(stream.words)
        return
    words = stream.words
    engine = 0
    first = True
    for base, size in STREAM_REGIONS:
        if not words:
            break
        chunk, words = words[:size // 8], words[size // 8:]
        sim.load_image(base, write_binary(chunk))
        desc = DmaDescriptor(base, mm.FIFO_PORT_LO, len(chunk), stream.rate)
        sim.add_dma(DmaPlanEntry(engine, desc, stream.start_cycle, chain=not first))
        engine ^= 1
        first = False
    if words:
        capacity = sum(size for _, size in STREAM_REGIONS) // 8
        raise ScenarioInvalid([("stream", f"stream exceeds the {capacity}-word SRAM capacity")])


class _Reader:
    """Pulls typed values out of the parsed document, collecting diagnostics."""

    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def err(self, where: str, msg: str) -> None:
        self.errors.append((where, msg))

    def get(self, table: dict, key: str, where: str, kind, default=None):
        if key not in table:
            return default
        v = table[key]
        ok = isinstance(v, kind) and not (kind is not bool and isinstance(v, bool))
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v, ok = float(v), True
        if not ok:
            self.err(f"{where}.{key}" if where else key,
                     f"expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
            return default
        return v

    def section(self, doc: dict, name: str, known: set[str]) -> dict:
        sec = doc.get(name, {})
        if not isinstance(sec, dict):
            self.err(name, "expected a table")
            return {}
        for k in sec:
            if k not in known:
                self.err(f"{name}.{k}", "unknown key")
        return sec

    def lanes(self, table: dict, key: str, where: str, default: float, cast):
        v = table.get(key, default)
        if isinstance(v, bool):
            self.err(f"{where}.{key}", "expected a number or a list of 32 numbers")
            return [cast(default)] * N_LANES
        if isinstance(v, (int, float)):
            return [cast(v)] * N_LANES
        if isinstance(v, list) and len(v) == N_LANES and all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            return [cast(x) for x in v]
        self.err(f"{where}.{key}", "expected a number or a list of 32 numbers")
        return [cast(default)] * N_LANES


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_stream(path: Path) -> list[int]:
    if path.suffix == ".bin":
        return read_binary(path.read_bytes())
    return parse_stream(path.read_text(encoding="utf-8"))


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file; raises ScenarioInvalid with field diagnostics."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioInvalid([("", "no such file")]) from None
    except OSError as exc:
        raise ScenarioInvalid([("", exc.strerror or str(exc))]) from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioInvalid([("", f"parse error: {exc}")]) from None
    return scenario_from_dict(doc, path.parent, source=path)


def scenario_from_dict(doc: dict, base: Path = Path("."), source: Path | None = None
                       ) -> ScenarioConfig:
    r = _Reader()
    sc = ScenarioConfig(source=source)
    for k in doc:
        if k not in _TOP_KEYS:
            r.err(k, "unknown key")

    sc.seed = r.get(doc, "seed", "", int, 0)
    sc.fifo_depth = r.get(doc, "fifo_depth", "", int, 64)
    if sc.fifo_depth < 1:
        r.err("fifo_depth", "must be >= 1")
    sc.warmup = r.get(doc, "warmup", "", int, None)
    if sc.warmup is not None and sc.warmup < 0:
        r.err("warmup", "must be >= 0")

    clk = r.section(doc, "clock", {"phy_mhz", "sys_mhz"})
    horizon = r.get(doc, "horizon", "", int, ClockConfig().horizon)
    try:
        sc.clock = ClockConfig(r.get(clk, "phy_mhz", "clock", float, 2133.0),
                               r.get(clk, "sys_mhz", "clock", float, 1066.5), horizon)
    except ScenarioInvalid as exc:
        r.errors.extend(exc.errors)

    tim = r.section(doc, "timing", set(TimingParams.__dataclass_fields__))
    try:
        sc.timing = TimingParams(**{k: r.get(tim, k, "timing", int, getattr(TimingParams(), k))
                                    for k in TimingParams.__dataclass_fields__})
    except ValueError as exc:
        r.err("timing", str(exc))

    phy = r.section(doc, "phy", {"tap_ps", "eye_half_width_ps", "corruption", "ready"})
    tap_ps = r.get(phy, "tap_ps", "phy", float, 10.0)
    eye = r.get(phy, "eye_half_width_ps", "phy", float, 60.0)
    sc.corruption = r.get(phy, "corruption", "phy", str, "invert")
    if sc.corruption not in ("invert", "random"):
        r.err("phy.corruption", f"must be \"invert\" or \"random\", got {sc.corruption!r}")
    sc.phy_ready = r.get(phy, "ready", "phy", bool, None)

    sk = r.section(doc, "skews", {"read_ps", "write_ps"})
    read_ps = r.lanes(sk, "read_ps", "skews", 0.0, float)
    write_ps = r.lanes(sk, "write_ps", "skews", 0.0, float) if "write_ps" in sk else None
    try:
        sc.skew = LaneSkew(read_ps, write_ps, eye)
    except ValueError as exc:
        r.err("skews", str(exc))

    dl = r.section(doc, "delays", {"read", "write"})
    try:
        sc.delays = DelayConfig(r.lanes(dl, "read", "delays", 0, int),
                                r.lanes(dl, "write", "delays", 0, int), tap_ps)
    except ValueError as exc:
        r.err("delays", str(exc))

    dev = r.section(doc, "device", {"preinit", "stuck_in_reset"})
    sc.device_preinit = r.get(dev, "preinit", "device", bool, None)
    sc.device_stuck_in_reset = r.get(dev, "stuck_in_reset", "device", bool, False)

    if "stream" in doc:
        st = r.section(doc, "stream", {"path", "mode", "rate", "start_cycle"})
        mode = r.get(st, "mode", "stream", str, "dma")
        if mode not in ("dma", "preload"):
            r.err("stream.mode", f"must be \"dma\" or \"preload\", got {mode!r}")
        rate = r.get(st, "rate", "stream", int, 1)
        if not 1 <= rate <= mm.DMA_CTRL_RATE_MASK:
            r.err("stream.rate", f"must be in 1..{mm.DMA_CTRL_RATE_MASK}")
        p = r.get(st, "path", "stream", str, None)
        if p is None:
            r.err("stream.path", "required")
        else:
            try:
                words = load_stream(_resolve(base, p))
                sc.stream = StreamSpec(words, mode, rate, r.get(st, "start_cycle", "stream", int, 0))
            except FileNotFoundError:
                r.err("stream.path", f"{p}: no such file")
            except CmdWordError as exc:
                msg = str(exc)
                if exc.line is not None:
                    msg = msg.removeprefix(f"line {exc.line}: ")
                    r.err("stream.path", f"{p}:{exc.line}: {msg}")
                else:
                    r.err("stream.path", f"{p}: {msg}")

    images = doc.get("image", [])
    if not isinstance(images, list):
        r.err("image", "expected an array of tables ([[image]])")
        images = []
    for i, im in enumerate(images):
        where = f"image[{i}]"
        addr = r.get(im, "addr", where, int, None)
        p = r.get(im, "path", where, str, None)
        if addr is None or p is None:
            r.err(where, "needs path and addr")
            continue
        try:
            sc.images.append((addr, _resolve(base, p).read_bytes()))
        except FileNotFoundError:
            r.err(f"{where}.path", f"{p}: no such file")

    plan = doc.get("dma", [])
    if not isinstance(plan, list):
        r.err("dma", "expected an array of tables ([[dma]])")
        plan = []
    for i, d in enumerate(plan):
        where = f"dma[{i}]"
        engine = r.get(d, "engine", where, int, 0)
        if engine not in (0, 1):
            r.err(f"{where}.engine", "must be 0 or 1")
            continue
        try:
            desc = DmaDescriptor(r.get(d, "src", where, int, 0), r.get(d, "dst", where, int, 0),
                                 r.get(d, "len", where, int, 0), r.get(d, "rate", where, int, 1))
        except (InvalidDescriptor, ValueError) as exc:
            r.err(where, str(exc))
            continue
        sc.dma.append(DmaPlanEntry(engine, desc, r.get(d, "start_cycle", where, int, 0),
                                   r.get(d, "chain", where, bool, False)))

    out = r.section(doc, "output", {"trace", "report"})
    t = r.get(out, "trace", "output", str, None)
    rp = r.get(out, "report", "output", str, None)
    sc.trace_out = _resolve(base, t) if t else None
    sc.report_out = _resolve(base, rp) if rp else None

    if r.errors:
        raise ScenarioInvalid(r.errors)
    # Descriptor checks against the memory map need a simulator; build one to surface them.
    try:
        sc.build(trace=False)
    except (InvalidDescriptor, ValueError) as exc:
        if isinstance(exc, ScenarioInvalid):
            raise
        raise ScenarioInvalid([("dma", str(exc))]) from None
    return sc
