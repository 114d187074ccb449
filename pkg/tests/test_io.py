import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubalsr.io import (
    read_rows_csv,
    read_slice_csv,
    read_tns3,
    tns3_bytes,
    tns3_from_bytes,
    write_rows_csv,
    write_slice_csv,
    write_tns3,
)
from tubalsr.radiomap import RadioMap


def test_tns3_layout():
    t = np.arange(12, dtype=float).reshape(2, 3, 2)
    buf = tns3_bytes(t)
    assert buf[:4] == b"TNS3"
    assert struct.unpack("<3I", buf[4:16]) == (2, 3, 2)
    assert struct.unpack("<2d", buf[16:32]) == (0.0, 1.0)  # k fastest
    assert len(buf) == 16 + 8 * 12


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_tns3_round_trip(n1, n2, n3, seed):
    t = np.random.default_rng(seed).standard_normal((n1, n2, n3))
    assert np.array_equal(tns3_from_bytes(tns3_bytes(t)), t)


def test_tns3_errors(tmp_path):
    with pytest.raises(ValueError):
        tns3_from_bytes(b"TNS")
    with pytest.raises(ValueError):
        tns3_from_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ValueError):
        tns3_from_bytes(tns3_bytes(np.ones((2, 2, 2)))[:-8])
    write_tns3(tmp_path / "a.tns3", np.ones((1, 2, 3)))
    assert read_tns3(tmp_path / "a.tns3").shape == (1, 2, 3)


def test_slice_csv_round_trip(tmp_path, rng):
    t = rng.standard_normal((3, 4, 2))
    write_slice_csv(tmp_path / "s.csv", t, 1)
    assert np.array_equal(read_slice_csv(tmp_path / "s.csv")[:, :, 0], t[:, :, 1])
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        read_slice_csv(tmp_path / "bad.csv")


def test_rows_csv_round_trip(tmp_path):
    write_rows_csv(tmp_path / "r.csv", ["name", "value"], [("a", 0.1), ("b", np.float64(2.5))])
    header, rows = read_rows_csv(tmp_path / "r.csv")
    assert header == ["name", "value"] and rows == [["a", "0.1"], ["b", "2.5"]]


def test_radiomap_round_trip_and_geometry(tmp_path, rng):
    m = RadioMap(rng.uniform(-100, -20, size=(3, 4, 2)), origin=(1.0, 2.0), spacing=(0.5, 2.0))
    m.save(tmp_path / "m")
    back = RadioMap.load(tmp_path / "m")
    assert np.array_equal(back.tensor, m.tensor) and back.origin == (1.0, 2.0) and back.spacing == (0.5, 2.0)
    assert np.allclose(m.centers()[:2], [[1.25, 3.0], [1.25, 5.0]])
    assert np.array_equal(m.fingerprints()[5], m.tensor[1, 1])


def test_radiomap_validation(tmp_path):
    with pytest.raises(ValueError):
        RadioMap(np.full((2, 2, 1), 5.0))
    with pytest.raises(ValueError):
        RadioMap(np.full((2, 2, 1), -50.0), spacing=(0.0, 1.0))
    RadioMap(np.full((2, 2, 1), 5.0), units="none")
    m = RadioMap(np.full((2, 2, 1), -50.0))
    m.save(tmp_path / "m")
    write_tns3(tmp_path / "m.tns3", np.zeros((3, 2, 1)))
    with pytest.raises(ValueError):
        RadioMap.load(tmp_path / "m")
