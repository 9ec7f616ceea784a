import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dfibridge.bridge import (N_SLOTS, Bridge, CommandFifo, DataBuffer, FifoFull, IndexOutOfRange,
                              SlotPending, SlotState, latency_sys)
from dfibridge.cmdword import CaBeat, CommandKind, DfiCommand, encode
from dfibridge.trace import Trace

P = random.Random(7).getrandbits(512)


def word(kind=CommandKind.CA_ONLY, slot=0, hold=0):
    return encode(DfiCommand(CaBeat(1, 0), CaBeat(0, 0), kind, slot, hold))


def loaded_bridge(words, **kw):
    b = Bridge(**kw)
    for w in words:
        b.fifo.push(w)
    b.fifo.commit()
    return b


def run(b, cycles):
    issues = []
    for n in range(cycles):
        iss = b.step(n)
        if iss:
            issues.append(iss)
        b.retire(n)
        b.fifo.commit()
    return issues


class TestFifo:
    def test_push_occupancy(self):
        f = CommandFifo()
        f.push(1)
        assert f.occupancy == 1 and f.ready == 0
        f.commit()
        assert f.ready == 1

    def test_capacity(self):
        f = CommandFifo(64)
        for i in range(64):
            f.push(i)
        assert f.full
        with pytest.raises(FifoFull):
            f.push(64)

    @given(st.lists(st.integers(0, 2**64 - 1), max_size=64))
    def test_fifo_order(self, ws):
        f = CommandFifo(64)
        for w in ws:
            f.push(w)
        f.commit()
        assert [f.pop() for _ in ws] == ws and f.empty

    def test_depth_validation(self):
        with pytest.raises(ValueError):
            CommandFifo(0)


class TestDataBuffer:
    def test_slot_bounds(self):
        buf = DataBuffer()
        assert buf.n_slots == N_SLOTS == 256
        with pytest.raises(IndexOutOfRange):
            buf.slot_read(256)
        with pytest.raises(IndexOutOfRange):
            buf.slot_write(300, P)
        buf.slot_write(255, P)

    def test_write_read(self):
        buf = DataBuffer()
        buf.slot_write(7, P)
        assert buf.slot_read(7) == P
        buf.slot_write(0, 0)
        assert buf.slot_read(0) == 0

    def test_pending_guard(self):
        buf = DataBuffer()
        buf.state[3] = SlotState.PENDING_READ
        with pytest.raises(SlotPending):
            buf.slot_read(3)
        with pytest.raises(SlotPending):
            buf.write_word(3, 0, 32, 1)

    def test_idle_reads_zero_and_count(self):
        buf = DataBuffer()
        assert buf.slot_read(9) == 0 and buf.idle_reads == 1

    def test_word_access(self):
        buf = DataBuffer()
        buf.slot_write(1, P)
        assert [buf.read_word(1, i, 32) for i in range(16)] == [
            (P >> (32 * i)) & 0xFFFFFFFF for i in range(16)]
        buf.write_word(2, 3, 64, 0x1122334455667788)
        assert buf.slot_read(2) == 0x1122334455667788 << 192
        with pytest.raises(ValueError):
            buf.slot_write(0, 1 << 512)


class TestControlUnit:
    def test_empty_fifo_idles(self):
        b = Bridge()
        assert b.step(0) is None and b.stats.idle_cycles == 1

    def test_back_to_back(self):
        b = loaded_bridge([word()] * 10)
        issues = run(b, 10)
        assert [i.cycle for i in issues] == list(range(10))
        assert b.stats.issued_beats == 20 and b.stats.idle_cycles == 0

    def test_hold_stalls_after_issue(self):
        b = loaded_bridge([word(hold=2), word()])
        issues = run(b, 4)
        assert [i.cycle for i in issues] == [0, 3]
        assert b.stats.held_cycles == 2

    def test_read_capture_latency(self):
        # RL 20 PHY cycles -> 10 subsystem cycles
        b = Bridge(read_latency=20)
        for _ in range(5):
            b.step(_)
        b.fifo.push(word(CommandKind.READ_CAPTURE, slot=4))
        b.fifo.commit()
        iss = b.step(5)
        assert iss.cycle == 5 and b.buffer.state[4] is SlotState.PENDING_READ
        b.capture(5, P)
        for n in range(6, 15):
            b.retire(n)
            assert b.buffer.state[4] is SlotState.PENDING_READ
        b.retire(15)
        assert b.buffer.state[4] is SlotState.VALID and b.buffer.slot_read(4) == P

    def test_capture_miss_returns_slot_to_idle(self):
        b = loaded_bridge([word(CommandKind.READ_CAPTURE, slot=1)])
        run(b, 20)
        assert b.stats.capture_misses == 1 and b.buffer.state[1] is SlotState.IDLE

    def test_decode_error_drops_word(self):
        b = loaded_bridge([1 << 63, word()], trace=Trace())
        issues = run(b, 2)
        assert b.stats.decode_errors == 1 and len(issues) == 1 and issues[0].cycle == 1
        assert [r["kind"] for r in b.trace][:1] == ["ERROR"]

    def test_busy_slot_is_an_error(self):
        b = loaded_bridge([word(CommandKind.READ_CAPTURE, slot=2)] * 2)
        run(b, 2)
        assert b.stats.slot_errors == 1

    def test_write_fetch_data(self):
        b = loaded_bridge([word(CommandKind.WRITE_FETCH, slot=3), word(CommandKind.WRITE_FETCH, 4)])
        b.buffer.slot_write(3, P)
        i1, i2 = run(b, 2)
        assert i1.wdata == P and i2.wdata == 0 and b.stats.idle_fetches == 1

    def test_latency_sys(self):
        assert [latency_sys(x) for x in (1, 2, 14, 15, 20)] == [1, 1, 7, 8, 10]

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=30))
    def test_one_pop_per_non_held_cycle(self, holds):
        b = loaded_bridge([word(hold=h) for h in holds])
        n = sum(holds) + len(holds) + 3
        run(b, n)
        st_ = b.stats
        assert st_.issued_commands == len(holds)
        assert st_.idle_cycles + st_.held_cycles + st_.issued_commands == n
        assert st_.held_cycles == sum(holds)
