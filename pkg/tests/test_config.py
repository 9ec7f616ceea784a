import pytest

from dfibridge import memmap as mm
from dfibridge.cmdword import encode, DfiCommand, render_stream, write_binary
from dfibridge.config import STREAM_REGIONS, load_scenario, scenario_from_dict
from dfibridge.sim import ScenarioInvalid

NOP = encode(DfiCommand())


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def fields(exc):
    return [f for f, _ in exc.value.errors]


def test_empty_document_defaults():
    sc = scenario_from_dict({})
    assert sc.seed == 0 and sc.fifo_depth == 64 and sc.stream is None
    cfg = sc.sim_config(preinit=True, trace=False)
    assert cfg.device_preinit and cfg.phy_ready
    cfg = sc.sim_config(preinit=False, trace=False)
    assert not cfg.device_preinit and not cfg.phy_ready


def test_full_document(tmp_path):
    (tmp_path / "w.hex").write_text(render_stream([NOP] * 4))
    (tmp_path / "img.bin").write_bytes(write_binary([NOP] * 2))
    p = write(tmp_path, """
seed = 9
horizon = 5000
fifo_depth = 16
warmup = 2
[clock]
phy_mhz = 1600
sys_mhz = 800
[timing]
tRCD = 10
[phy]
tap_ps = 5.0
eye_half_width_ps = 30
corruption = "random"
ready = false
[skews]
read_ps = 250
write_ps = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0,
            17.0, 18.0, 19.0, 20.0, 21.0, 22.0, 23.0, 24.0, 25.0, 26.0, 27.0, 28.0, 29.0, 30.0, 31.0, 32.0]
[delays]
read = 4
[device]
preinit = true
[stream]
path = "w.hex"
rate = 2
[[image]]
path = "img.bin"
addr = 0x10000
[[dma]]
engine = 1
src = 0x10000
dst = 0x20004
len = 2
start_cycle = 100
[output]
trace = "out/t.jsonl"
report = "out/r.json"
""")
    sc = load_scenario(p)
    assert (sc.seed, sc.clock.horizon, sc.fifo_depth, sc.warmup) == (9, 5000, 16, 2)
    assert sc.timing.tRCD == 10 and sc.timing.tRP == 8
    assert sc.skew.read_ps == [250.0] * 32 and sc.skew.write_ps[31] == 32.0
    assert sc.delays.read == [4] * 32 and sc.delays.tap_ps == 5.0
    assert sc.corruption == "random" and sc.phy_ready is False
    assert sc.stream.words == [NOP] * 4 and sc.stream.rate == 2
    assert sc.images == [(0x10000, write_binary([NOP] * 2))]
    assert sc.dma[0].engine == 1 and sc.dma[0].start_cycle == 100
    assert sc.trace_out == tmp_path / "out/t.jsonl"
    rep = sc.build(trace=False).run()
    assert rep.issued_commands == 6


def test_diagnostics_name_fields(tmp_path):
    p = write(tmp_path, 'seed = "x"\nbogus = 1\n[timing]\ntRCD = 0\n[skews]\nread_ps = [1, 2]\n'
                        '[phy]\ncorruption = "flip"\n[clock]\nphy_mhz = 1000.0\n')
    with pytest.raises(ScenarioInvalid) as ei:
        load_scenario(p)
    got = fields(ei)
    for f in ("seed", "bogus", "timing", "skews.read_ps", "phy.corruption", "clock"):
        assert f in got


def test_missing_and_unparsable(tmp_path):
    with pytest.raises(ScenarioInvalid) as ei:
        load_scenario(tmp_path / "none.toml")
    assert ei.value.errors == [("", "no such file")]
    with pytest.raises(ScenarioInvalid) as ei:
        load_scenario(write(tmp_path, "seed = \n"))
    assert "parse error" in ei.value.errors[0][1]


def test_stream_errors_report_line(tmp_path):
    (tmp_path / "w.hex").write_text("0000000000000000\n8000000000000000\n")
    p = write(tmp_path, '[stream]\npath = "w.hex"\n')
    with pytest.raises(ScenarioInvalid) as ei:
        load_scenario(p)
    (f, msg), = ei.value.errors
    assert f == "stream.path" and msg.startswith("w.hex:2")


def test_bad_descriptor_is_a_config_error(tmp_path):
    p = write(tmp_path, "[[dma]]\nsrc = 0xFFF00000\ndst = 0x20004\nlen = 4\n")
    with pytest.raises(ScenarioInvalid):
        load_scenario(p)


def test_preload_limited_to_fifo_depth(tmp_path):
    (tmp_path / "w.hex").write_text(render_stream([NOP] * 65))
    with pytest.raises(ScenarioInvalid):
        load_scenario(write(tmp_path, '[stream]\npath = "w.hex"\nmode = "preload"\n'))
    (tmp_path / "w.hex").write_text(render_stream([NOP] * 64))
    sc = load_scenario(write(tmp_path, '[stream]\npath = "w.hex"\nmode = "preload"\n'))
    assert sc.build(trace=False).run().issued_commands == 64


def test_stream_split_across_srams(tmp_path):
    capacity = sum(size for _, size in STREAM_REGIONS) // 8
    assert capacity == (mm.SRAM_SIZE + 2 * mm.BRIDGE_SRAM_SIZE) // 8
    (tmp_path / "w.bin").write_bytes(write_binary([NOP] * 9000))
    sc = load_scenario(write(tmp_path, '[stream]\npath = "w.bin"\n'))
    sim = sc.build(trace=False)
    assert [(e.engine, e.chain, e.descriptor.len_words64) for e in sim.plan] == \
        [(0, False, 8192), (1, True, 808)]
    rep = sim.run()
    assert rep.issued_commands == 9000 and rep.utilization == 1.0
    (tmp_path / "w.bin").write_bytes(write_binary([NOP] * (capacity + 1)))
    with pytest.raises(ScenarioInvalid):
        load_scenario(tmp_path / "s.toml")
