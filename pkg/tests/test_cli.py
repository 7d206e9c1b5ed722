import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from evkit import codec
from evkit.cli import run
from evkit.core import Annotation, Detection, Event, EventStream, SensorGeometry
from evkit.emulator import EmulatorParams, emulate
from evkit.mixer import GROUP_US
from evkit.sync import TickRecord, encode_tick_log

from conftest import random_stream


@pytest.fixture
def frame_dir(tmp_path, rng):
    d = tmp_path / "frames"
    d.mkdir()
    lines = ["index,t_us,path"]
    for i in range(3):
        img = rng.integers(0, 256, size=(8, 10), dtype=np.uint8)
        name = f"f{i:03d}.png"
        Image.fromarray(img, mode="L").save(d / name)
        lines.append(f"{i},{i * 33333},{name}")
    (d / "frames.csv").write_text("\n".join(lines) + "\n")
    return d


@pytest.fixture
def manifest(tmp_path):
    rows = ["id,domain,condition,duration_us,path"]
    for i in range(7):
        rows.append(f"r{i},real,day,{GROUP_US},/data/r{i}.evb")
        rows.append(f"s{i},synthetic,day,{GROUP_US},/data/s{i}.evb")
    path = tmp_path / "manifest.csv"
    path.write_text("\n".join(rows) + "\n")
    return path


def test_no_arguments_prints_usage(capsys):
    assert run([]) != 0
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand(capsys):
    assert run(["frobnicate"]) == 2


def test_emulate_matches_library_and_inspect(frame_dir, tmp_path, capsys):
    out = tmp_path / "events.evb"
    rc = run(["emulate", str(frame_dir), "-o", str(out),
              "--c-pos", "0.2", "--c-neg", "0.2", "--seed", "7"])
    assert rc == 0

    frames = []
    # library-level oracle over the same frames
    from evkit.cli import _load_frames

    frames = _load_frames(str(frame_dir))
    expected = emulate(frames, EmulatorParams(c_pos=0.2, c_neg=0.2, seed=7))
    with open(out, "rb") as fp:
        decoded = codec.read_events_evb(fp).stream
    assert decoded == expected

    rc = run(["inspect", str(out)])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["events"] == len(expected)


def test_emulate_deterministic_bytes(frame_dir, tmp_path):
    a, b = tmp_path / "a.evb", tmp_path / "b.evb"
    assert run(["emulate", str(frame_dir), "-o", str(a)]) == 0
    assert run(["emulate", str(frame_dir), "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_annotate(tmp_path):
    records = [TickRecord(tick_t=t, actor_id=1, class_id=1, x=5, y=5, w=10, h=10,
                          speed=2.0, distance=12.0) for t in (0, 33333, 66666)]
    records.append(TickRecord(tick_t=66666, actor_id=2, class_id=0, x=1, y=1,
                              w=4, h=8, speed=0.05, distance=5.0))
    ticks = tmp_path / "ticks.csv"
    ticks.write_bytes(encode_tick_log(records))
    out = tmp_path / "boxes.csv"
    assert run(["annotate", str(ticks), "-o", str(out), "--radius", "50"]) == 0
    rows = codec.decode_annotations(out.read_bytes())
    assert len(rows) == 3  # slow actor filtered out
    assert all(r.t % 33333 == 0 for r in rows)


def test_annotate_requires_radius(tmp_path, capsys):
    ticks = tmp_path / "ticks.csv"
    ticks.write_bytes(encode_tick_log([]))
    assert run(["annotate", str(ticks), "-o", str(tmp_path / "o.csv")]) == 2


def test_render_golden(tmp_path):
    geom = SensorGeometry(width=4, height=3)
    stream = EventStream.from_events(
        [Event(x=1, y=0, t=10, p=1), Event(x=2, y=2, t=40, p=-1)], geom)
    events = tmp_path / "e.evb"
    with open(events, "wb") as fp:
        codec.write_events_evb(stream, fp)
    out = tmp_path / "imgs"
    assert run(["render", str(events), "-o", str(out), "--window-us", "25",
                "--t0", "0"]) == 0
    ppm_files = sorted(out.glob("*.ppm"))
    assert len(ppm_files) == 2
    first = ppm_files[0].read_bytes()
    assert first.startswith(b"P6\n4 3\n255\n")
    body = first[len(b"P6\n4 3\n255\n"):]
    assert body[3:6] == bytes((0, 0, 255))   # (1, 0) positive -> blue
    second = ppm_files[1].read_bytes()[len(b"P6\n4 3\n255\n"):]
    assert second[(2 * 4 + 2) * 3:(2 * 4 + 2) * 3 + 3] == bytes((255, 0, 0))


def test_render_png(tmp_path, rng):
    stream = random_stream(rng, 50, width=16, height=12, t_max=1000)
    events = tmp_path / "e.evb"
    with open(events, "wb") as fp:
        codec.write_events_evb(stream, fp)
    out = tmp_path / "imgs"
    assert run(["render", str(events), "-o", str(out), "--window-us", "2000",
                "--format", "png"]) == 0
    assert list(out.glob("*.png"))


def test_mix_k1_fraction(manifest, capsys):
    assert run(["mix", str(manifest), "--k", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["fraction_real_exact"] == "1/7"
    assert doc["fraction_real"] == pytest.approx(0.142857, abs=1e-6)
    assert doc["total_seconds"] == 2331.0


def test_mix_capacity_error_exit_code(tmp_path, capsys):
    path = tmp_path / "m.csv"
    path.write_text("id,domain,condition,duration_us,path\n"
                    f"r0,real,day,{GROUP_US},/x\n")
    assert run(["mix", str(path), "--k", "3"]) == 4
    assert capsys.readouterr().err.startswith("error: mixer:")


def test_split(manifest, capsys):
    assert run(["split", str(manifest)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["validation"]["real_us"] == 360_000_000
    assert doc["test"]["synthetic_us"] == 160_000_000
    assert doc["validation"]["fraction_real_exact"] == "9/17"


def test_eval_and_gap(tmp_path, capsys):
    gts = [Annotation(t=0, x=0, y=0, w=10, h=10, class_id=0)]
    dets = [Detection(t=0, x=0, y=0, w=10, h=10, class_id=0, score=0.9)]
    gt_path = tmp_path / "gt.csv"
    det_path = tmp_path / "det.csv"
    gt_path.write_bytes(codec.encode_annotations(gts))
    det_path.write_bytes(codec.encode_detections(dets))

    assert run(["eval", str(gt_path), str(det_path), "--coco"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["mAP"] == 1.0

    results = tmp_path / "curve.csv"
    results.write_text("fraction_real,map\n0.0,0.0\n0.5,0.6\n1.0,1.2\n")
    out_points = tmp_path / "points.csv"
    assert run(["gap", str(results), "--points-csv", str(out_points)]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert fit["slope"] == pytest.approx(1.2, abs=1e-12)
    assert out_points.read_text().splitlines()[0] == "fraction_real,map"


def test_eval_bad_iou_list(tmp_path, capsys):
    gt_path = tmp_path / "gt.csv"
    det_path = tmp_path / "det.csv"
    gt_path.write_bytes(codec.encode_annotations([]))
    det_path.write_bytes(codec.encode_detections([]))
    assert run(["eval", str(gt_path), str(det_path), "--iou", "abc"]) == 2


def test_format_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.evb"
    bad.write_bytes(b"EVB2" + b"\x00" * 20)
    assert run(["inspect", str(bad)]) == 3
    assert capsys.readouterr().err.startswith("error: codec:")


def test_inspect_lenient_repairs(tmp_path, capsys):
    bad = tmp_path / "e.csv"
    bad.write_text("t_us,x,y,p\n20,0,0,1\n10,0,0,1\n")
    assert run(["inspect", str(bad)]) == 3
    capsys.readouterr()
    assert run(["inspect", str(bad), "--lenient"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["events"] == 2


def test_missing_file_is_io_error(tmp_path, capsys):
    assert run(["inspect", str(tmp_path / "absent.evb")]) == 3
