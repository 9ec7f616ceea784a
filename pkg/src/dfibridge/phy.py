"""Per-lane delay lines, 1:2 beat serialization and the hard-window eye model.

A 512-bit burst is 32 lanes x 16 beats; bit ``32 * beat + lane`` belongs to
``lane``, beat 0 first.  A lane whose delay setting falls outside its eye
has its 16 bits inverted (or, in ``random`` corruption mode, a seeded random
non-empty subset of them flipped).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .cmdword import CaBeat

N_LANES = 32
BURST_BEATS = 16
BURST_BITS = N_LANES * BURST_BEATS
BURST_MASK = (1 << BURST_BITS) - 1
MAX_TAP = 127
N_TAPS = MAX_TAP + 1

DEFAULT_TAP_PS = 10.0
DEFAULT_EYE_HALF_WIDTH_PS = 60.0


def _lane_mask(lane: int) -> int:
    m = 0
    for beat in range(BURST_BEATS):
        m |= 1 << (N_LANES * beat + lane)
    return m


LANE_MASKS = tuple(_lane_mask(lane) for lane in range(N_LANES))


class Direction(str, Enum):
    READ = "read"
    WRITE = "write"


class PhyError(Exception):
    pass


class LaneOutOfRange(PhyError, IndexError):
    pass


class TapOutOfRange(PhyError, ValueError):
    pass


class NotCalibrated(PhyError):
    """Data transfer attempted before the readiness flag was set."""


@dataclass
class DelayConfig:
    read: list[int] = field(default_factory=lambda: [0] * N_LANES)
    write: list[int] = field(default_factory=lambda: [0] * N_LANES)
    tap_ps: float = DEFAULT_TAP_PS

    def __post_init__(self):
        if self.tap_ps <= 0:
            raise ValueError("tap_ps must be positive")
        for name in ("read", "write"):
            taps = getattr(self, name)
            if len(taps) != N_LANES:
                raise ValueError(f"{name} delays need {N_LANES} lanes, got {len(taps)}")
            for t in taps:
                _check_tap(t)

    def taps(self, direction: Direction) -> list[int]:
        return self.read if direction == Direction.READ else self.write


@dataclass
class LaneSkew:
    """Scenario ground truth: per-lane skew and the common eye half-width.

    ``write_ps`` defaults to the read skews when not given.
    """

    read_ps: list[float] = field(default_factory=lambda: [0.0] * N_LANES)
    write_ps: list[float] | None = None
    eye_half_width_ps: float = DEFAULT_EYE_HALF_WIDTH_PS

    def __post_init__(self):
        if self.write_ps is None:
            self.write_ps = list(self.read_ps)
        for name in ("read_ps", "write_ps"):
            vals = getattr(self, name)
            if len(vals) != N_LANES:
                raise ValueError(f"{name} needs {N_LANES} lanes, got {len(vals)}")
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} must be non-negative")
        if self.eye_half_width_ps <= 0:
            raise ValueError("eye_half_width_ps must be positive")

    def skew(self, lane: int, direction: Direction) -> float:
        vals = self.read_ps if direction == Direction.READ else self.write_ps
        return vals[lane]


def _check_lane(lane: int) -> None:
    if not 0 <= lane < N_LANES:
        raise LaneOutOfRange(f"lane {lane} outside 0..{N_LANES - 1}")


def _check_tap(taps: int) -> None:
    if not 0 <= taps <= MAX_TAP:
        raise TapOutOfRange(f"tap {taps} outside 0..{MAX_TAP}")


def set_delay(cfg: DelayConfig, lane: int, direction: Direction, taps: int) -> None:
    _check_lane(lane)
    _check_tap(taps)
    cfg.taps(direction)[lane] = taps


def lane_pass(lane: int, direction: Direction, cfg: DelayConfig, skew: LaneSkew) -> bool:
    _check_lane(lane)
    offset = skew.skew(lane, direction) - cfg.taps(direction)[lane] * cfg.tap_ps
    return abs(offset) <= skew.eye_half_width_ps


def failing_lanes(direction: Direction, cfg: DelayConfig, skew: LaneSkew) -> list[int]:
    return [lane for lane in range(N_LANES) if not lane_pass(lane, direction, cfg, skew)]


def serialize_beats(beat0: CaBeat, beat1: CaBeat, sys_cycle: int) -> list[tuple[int, CaBeat]]:
    """Two PHY-beat events for one subsystem cycle, beat0 first."""
    return [(2 * sys_cycle, beat0), (2 * sys_cycle + 1, beat1)]


class Phy:
    """Delay configuration, ground-truth skew and readiness flag of one PHY.

    ``corruption`` is ``"invert"`` (default, deterministic) or ``"random"``
    (seeded random bit flips on failing lanes).
    """

    def __init__(self, delays: DelayConfig | None = None, skew: LaneSkew | None = None,
                 corruption: str = "invert", seed: int = 0, ready: bool = False):
        if corruption not in ("invert", "random"):
            raise ValueError(f"unknown corruption mode {corruption!r}")
        self.delays = delays or DelayConfig()
        self.skew = skew or LaneSkew()
        self.corruption = corruption
        self.ready = ready
        self._rng = random.Random(seed)
        self._mask_cache: dict[Direction, int] = {}

    def set_delay(self, lane: int, direction: Direction, taps: int) -> None:
        set_delay(self.delays, lane, direction, taps)
        self._mask_cache.clear()

    def get_delay(self, lane: int, direction: Direction) -> int:
        _check_lane(lane)
        return self.delays.taps(direction)[lane]

    def fail_mask(self, direction: Direction) -> int:
        """OR of the lane masks of every failing lane in ``direction``."""
        direction = Direction(direction)
        mask = self._mask_cache.get(direction)
        if mask is None:
            mask = 0
            for lane in failing_lanes(direction, self.delays, self.skew):
                mask |= LANE_MASKS[lane]
            self._mask_cache[direction] = mask
        return mask

    def transfer_burst(self, direction: Direction, data: int) -> int:
        if not self.ready:
            raise NotCalibrated("PHY readiness flag is clear")
        mask = self.fail_mask(direction)
        if not mask:
            return data
        if self.corruption == "invert":
            return data ^ mask
        flips = 0
        for lane in range(N_LANES):
            lm = LANE_MASKS[lane]
            if mask & lm:
                bits = 0
                while not bits:
                    bits = self._rng.getrandbits(BURST_BEATS)
                for beat in range(BURST_BEATS):
                    if bits >> beat & 1:
                        flips |= 1 << (N_LANES * beat + lane)
        return data ^ flips


def transfer_burst(direction: Direction, data: int, cfg: DelayConfig, skew: LaneSkew,
                   ready: bool = True) -> int:
    """Stateless form of :meth:`Phy.transfer_burst` in ``invert`` mode."""
    if not ready:
        raise NotCalibrated("PHY readiness flag is clear")
    for lane in failing_lanes(direction, cfg, skew):
        data ^= LANE_MASKS[lane]
    return data
