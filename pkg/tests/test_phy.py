import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfibridge.cmdword import CaBeat
from dfibridge.phy import (LANE_MASKS, N_LANES, DelayConfig, Direction, LaneOutOfRange, LaneSkew,
                           NotCalibrated, Phy, TapOutOfRange, failing_lanes, lane_pass,
                           serialize_beats, set_delay, transfer_burst)


def skew_on(lane, ps, direction="read"):
    vals = [0.0] * N_LANES
    vals[lane] = ps
    return LaneSkew(vals, [0.0] * N_LANES) if direction == "read" else LaneSkew(
        [0.0] * N_LANES, vals)


def test_set_delay_examples():
    cfg = DelayConfig()
    set_delay(cfg, 0, Direction.READ, 0)
    assert cfg.read[0] == 0
    with pytest.raises(LaneOutOfRange):
        set_delay(cfg, 32, Direction.READ, 0)
    with pytest.raises(TapOutOfRange):
        set_delay(cfg, 0, Direction.READ, 128)
    set_delay(cfg, 5, Direction.WRITE, 127)
    assert cfg.write[5] == 127 and cfg.read[5] == 0


@pytest.mark.parametrize("skew,taps,ok", [(0, 0, True), (250, 25, True), (250, 95, False),
                                          (250, 19, True), (250, 18, False), (250, 31, True),
                                          (250, 32, False)])
def test_lane_pass_examples(skew, taps, ok):
    cfg = DelayConfig()
    cfg.read[0] = taps
    assert lane_pass(0, Direction.READ, cfg, skew_on(0, skew)) is ok


@given(st.floats(0, 2000), st.floats(1, 200))
def test_pass_window_contiguous(skew, half):
    sk = LaneSkew([skew] * N_LANES, eye_half_width_ps=half)
    passes = []
    for tap in range(128):
        cfg = DelayConfig([tap] * N_LANES)
        passes.append(lane_pass(7, Direction.READ, cfg, sk))
    changes = sum(passes[i] != passes[i + 1] for i in range(127))
    assert changes <= 2
    if any(passes):
        lo = passes.index(True)
        hi = 127 - passes[::-1].index(True)
        assert all(passes[lo:hi + 1])


def test_serialize_beats():
    b0, b1 = CaBeat(1, 3), CaBeat(0, 9)
    assert serialize_beats(b0, b1, 0) == [(0, b0), (1, b1)]
    assert serialize_beats(b0, b1, 5) == [(10, b0), (11, b1)]
    stream = [c for n in range(10) for c, _ in serialize_beats(b0, b1, n)]
    assert stream == list(range(20))


def test_lane_masks_match_bit_mapping():
    # independent index generation: lane 3 -> 3, 35, 67, ..., 483
    assert [i for i in range(512) if LANE_MASKS[3] >> i & 1] == list(range(3, 512, 32))
    total = 0
    for m in LANE_MASKS:
        assert bin(m).count("1") == 16
        assert not total & m
        total |= m
    assert total == (1 << 512) - 1


def test_transfer_intact_when_aligned():
    data = random.Random(1).getrandbits(512)
    p = Phy(ready=True)
    assert p.transfer_burst(Direction.READ, data) == data
    assert p.transfer_burst(Direction.WRITE, data) == data


def test_failing_lane_inverts_exactly_its_bits():
    p = Phy(skew=skew_on(3, 600), ready=True)
    data = random.Random(2).getrandbits(512)
    out = p.transfer_burst(Direction.READ, data)
    flipped = [i for i in range(512) if (out ^ data) >> i & 1]
    assert flipped == [32 * beat + 3 for beat in range(16)]
    assert p.transfer_burst(Direction.WRITE, data) == data
    assert transfer_burst(Direction.READ, data, p.delays, p.skew) == out


def test_not_calibrated():
    with pytest.raises(NotCalibrated):
        Phy().transfer_burst(Direction.READ, 0)
    with pytest.raises(NotCalibrated):
        transfer_burst(Direction.READ, 0, DelayConfig(), LaneSkew(), ready=False)


def test_set_delay_invalidates_mask():
    p = Phy(skew=skew_on(0, 250), ready=True)
    assert p.fail_mask(Direction.READ) == LANE_MASKS[0]
    p.set_delay(0, Direction.READ, 25)
    assert p.get_delay(0, Direction.READ) == 25
    assert p.fail_mask(Direction.READ) == 0


def test_random_corruption_is_seeded():
    sk = skew_on(4, 600)
    outs = []
    for _ in range(2):
        p = Phy(skew=sk, corruption="random", seed=11, ready=True)
        outs.append([p.transfer_burst(Direction.READ, 0) for _ in range(5)])
    assert outs[0] == outs[1]
    for o in outs[0]:
        assert o and not o & ~LANE_MASKS[4]
    with pytest.raises(ValueError):
        Phy(corruption="gaussian")


def test_failing_lanes_helper():
    sk = LaneSkew([0.0] * 30 + [700.0, 900.0])
    assert failing_lanes(Direction.READ, DelayConfig(), sk) == [30, 31]


@pytest.mark.parametrize("kw", [dict(read_ps=[0.0] * 31), dict(read_ps=[-1.0] * 32),
                                dict(eye_half_width_ps=0)])
def test_lane_skew_validation(kw):
    with pytest.raises(ValueError):
        LaneSkew(**kw)


def test_delay_config_validation():
    with pytest.raises(ValueError):
        DelayConfig(tap_ps=0)
    with pytest.raises(TapOutOfRange):
        DelayConfig(read=[200] * N_LANES)
