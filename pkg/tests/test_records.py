"""Trajectory record container and its delimited text format."""

from __future__ import annotations

import numpy as np
import pytest

from qtraj.records import FMT, TrajectoryRecord


def _record(rng, n_samples=5, n_elements=7, engine="mwls", **kw):
    shape = (n_samples, n_elements)
    fields = {
        name: rng.normal(size=shape)
        for name in ("x", "v", "rho", "Q", "V", "S", "logJ", "E")
    }
    fields["rho"] = np.abs(fields["rho"]) + 0.1
    fields["x"] = np.sort(fields["x"], axis=1)
    return TrajectoryRecord(
        engine=engine, t=np.linspace(0.0, 4.0, n_samples), **fields, **kw
    )


def test_round_trip_is_exact(tmp_path, rng):
    rec = _record(rng, notes=("phase wrapped to (-pi, pi]",))
    path = tmp_path / "rec.dat"
    rec.save(path)
    back = TrajectoryRecord.load(path)
    assert back.engine == "mwls"
    assert back.index_base == 1
    assert back.notes == ("phase wrapped to (-pi, pi]",)
    np.testing.assert_array_equal(back.t, rec.t)
    for name in ("x", "v", "rho", "Q", "V", "S", "logJ", "E"):
        np.testing.assert_array_equal(getattr(back, name), getattr(rec, name))


def test_save_is_byte_stable(tmp_path, rng):
    rec = _record(rng)
    a, b = tmp_path / "a.dat", tmp_path / "b.dat"
    rec.save(a)
    TrajectoryRecord.load(a).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_format_renders_full_precision():
    assert FMT % (1.0 / 3.0) == "0.33333333333333331"


def test_header_layout(tmp_path, rng):
    rec = _record(rng, n_samples=3, n_elements=4, engine="dvr", notes=("hello",))
    path = tmp_path / "rec.dat"
    rec.save(path)
    text = path.read_text()
    assert text.startswith("# qtraj trajectory record\n")
    assert "# engine = dvr\n" in text
    assert "# n_elements = 4\n" in text
    assert "# n_samples = 3\n" in text
    assert "# index_base = 1\n" in text
    assert "# note: hello\n" in text
    assert "# columns: index x v rho Q V S logJ E\n" in text
    assert text.count("# t = ") == 3
    first_row = [l for l in text.splitlines() if not l.startswith("#")][0]
    assert first_row.split()[0] == "1"


def test_nan_column_round_trips(tmp_path, rng):
    rec = _record(rng)
    rec.logJ = np.full_like(rec.logJ, np.nan)
    path = tmp_path / "rec.dat"
    rec.save(path)
    back = TrajectoryRecord.load(path)
    assert np.isnan(back.logJ).all()
    np.testing.assert_array_equal(back.x, rec.x)


def test_positions_at_interpolates_linearly(rng):
    rec = _record(rng, n_samples=5)
    mid = 0.5 * (rec.t[1] + rec.t[2])
    got = rec.positions_at([rec.t[0], mid, rec.t[-1]])
    np.testing.assert_allclose(got[0], rec.x[0], atol=1e-15)
    np.testing.assert_allclose(got[1], 0.5 * (rec.x[1] + rec.x[2]), atol=1e-15)
    np.testing.assert_allclose(got[2], rec.x[-1], atol=1e-15)
    assert got.shape == (3, rec.n_elements)


def test_positions_at_rejects_out_of_span(rng):
    rec = _record(rng)
    with pytest.raises(ValueError, match="outside recorded span"):
        rec.positions_at([rec.t[-1] + 1.0])


def test_shape_validation():
    t = np.linspace(0.0, 1.0, 3)
    good = np.zeros((3, 4))
    bad = np.zeros((3, 5))
    kw = {name: good for name in ("x", "v", "rho", "Q", "V", "S", "logJ", "E")}
    TrajectoryRecord(engine="mwls", t=t, **kw)
    with pytest.raises(ValueError, match="shape"):
        TrajectoryRecord(engine="mwls", t=t, **{**kw, "E": bad})
    with pytest.raises(ValueError, match="n_samples"):
        TrajectoryRecord(engine="mwls", t=np.zeros(2), **kw)


def test_load_rejects_malformed(tmp_path):
    stray = tmp_path / "stray.dat"
    stray.write_text("# qtraj trajectory record\n1 0 0 0 0 0 0 0 0\n")
    with pytest.raises(ValueError, match="before any"):
        TrajectoryRecord.load(stray)
    empty = tmp_path / "empty.dat"
    empty.write_text("# qtraj trajectory record\n")
    with pytest.raises(ValueError, match="no samples"):
        TrajectoryRecord.load(empty)


def test_custom_index_base_round_trips(tmp_path, rng):
    rec = _record(rng, index_base=0)
    path = tmp_path / "rec.dat"
    rec.save(path)
    first_row = [
        l for l in path.read_text().splitlines() if not l.startswith("#")
    ][0]
    assert first_row.split()[0] == "0"
    assert TrajectoryRecord.load(path).index_base == 0
