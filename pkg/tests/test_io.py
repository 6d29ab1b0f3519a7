"""Round trips and corruption handling for the matrix file formats."""

import struct

import numpy as np
import pytest

from isolab import (
    load_matrix_bin,
    load_matrix_csv,
    save_matrix_bin,
    save_matrix_csv,
)
from isolab.io import MAGIC
from isolab.rng import derive


def test_csv_round_trip_exact(tmp_path):
    rng = derive(201)
    for shape in ((1, 1), (3, 7), (10, 2)):
        x = rng.standard_normal(shape) * 10.0 ** rng.integers(-150, 150)
        p = tmp_path / "m.csv"
        save_matrix_csv(x, p)
        y = load_matrix_csv(p)
        # %.17g is repr-exact for f64
        assert np.array_equal(x, y)


def test_csv_has_no_header(tmp_path):
    p = tmp_path / "m.csv"
    save_matrix_csv(np.array([[1.5, -2.0]]), p)
    assert p.read_text() == "1.5,-2\n"


def test_csv_load_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ValueError, match="line 2"):
        load_matrix_csv(p)
    p.write_text("1,x\n")
    with pytest.raises(ValueError, match="not a number"):
        load_matrix_csv(p)
    p.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_matrix_csv(p)


def test_save_rejects_non_matrix(tmp_path):
    with pytest.raises(ValueError):
        save_matrix_csv(np.ones(3), tmp_path / "v.csv")
    with pytest.raises(ValueError):
        save_matrix_bin(np.ones((2, 2, 2)), tmp_path / "v.bin")


def test_bin_round_trip(tmp_path):
    rng = derive(202)
    for shape in ((1, 1), (4, 4), (2, 9)):
        x = rng.standard_normal(shape)
        p = tmp_path / "m.bin"
        save_matrix_bin(x, p)
        assert np.array_equal(load_matrix_bin(p), x)


def test_bin_header_layout(tmp_path):
    p = tmp_path / "m.bin"
    save_matrix_bin(np.arange(6.0).reshape(2, 3), p)
    raw = p.read_bytes()
    assert raw[:4] == MAGIC
    rows, cols = struct.unpack("<II", raw[4:12])
    assert (rows, cols) == (2, 3)
    assert raw[12:16] == b"\x00" * 4  # reserved
    assert len(raw) == 16 + 6 * 8
    # payload is little-endian f64 row-major
    assert struct.unpack("<d", raw[16:24])[0] == 0.0
    assert struct.unpack("<d", raw[24:32])[0] == 1.0


def test_bin_corruption_errors(tmp_path):
    p = tmp_path / "m.bin"
    save_matrix_bin(np.ones((2, 2)), p)
    good = p.read_bytes()

    p.write_bytes(good[:10])
    with pytest.raises(ValueError, match="truncated header"):
        load_matrix_bin(p)

    p.write_bytes(b"XXXX" + good[4:])
    with pytest.raises(ValueError, match="bad magic"):
        load_matrix_bin(p)

    p.write_bytes(good[:-8])
    with pytest.raises(ValueError, match="truncated payload"):
        load_matrix_bin(p)

    p.write_bytes(good + b"\x00")
    with pytest.raises(ValueError, match="trailing bytes"):
        load_matrix_bin(p)
