"""
Test checkpoint files (CSV and binary)
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

import config
from field_checkpoint import (
    CheckpointWriter, field_records, load_checkpoint, load_checkpoint_binary, load_checkpoint_csv,
    save_checkpoint_binary, save_checkpoint_csv,
)
from lattice_field import Truncation, random_field
from rng_streams import stream


def _field():
    return random_field(Truncation(5), stream(21), amplitude=1.7, decay=0.5)


def test_records_cover_half_lattice():
    f = _field()
    records = field_records(f)
    assert len(records) == f.truncation.n_half
    assert records['kx'][0] == 0 and records['ky'][0] == 1
    assert np.all((records['kx'] > 0) | ((records['kx'] == 0) & (records['ky'] > 0)))


def test_binary_round_trip_is_bit_exact():
    f = _field()
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint_binary(f, Path(tmp) / "field.bin")
        g = load_checkpoint_binary(path)
    assert g.truncation == f.truncation
    assert np.array_equal(g.amplitudes, f.amplitudes)


def test_csv_round_trip_is_exact():
    f = _field()
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint_csv(f, Path(tmp) / "field.csv")
        text = path.read_text()
        g = load_checkpoint(path)
    assert text.startswith("# stoch-ns2d field checkpoint")
    assert f"# k_max = {f.k_max}" in text
    assert np.array_equal(g.amplitudes, f.amplitudes)


def test_csv_rejects_unknown_version():
    f = _field()
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint_csv(f, Path(tmp) / "field.csv")
        text = path.read_text().replace(
            f"format_version = {config.CHECKPOINT_VERSION}", "format_version = 99")
        path.write_text(text)
        with pytest.raises(ValueError):
            load_checkpoint_csv(path)


def test_binary_rejects_foreign_file():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "junk.bin"
        path.write_bytes(b"XXXX" + bytes(64))
        with pytest.raises(ValueError):
            load_checkpoint_binary(path)
        path.write_bytes(b"NS")
        with pytest.raises(ValueError):
            load_checkpoint_binary(path)


def test_writer_cadence():
    f = _field()
    with tempfile.TemporaryDirectory() as tmp:
        writer = CheckpointWriter(Path(tmp) / "ckpt", interval=3)
        written = [writer.maybe_write(step, f) for step in range(1, 10)]
        assert written == [False, False, True, False, False, True, False, False, True]
        assert [p.name for p in writer.written] == [
            "checkpoint_00000003.bin", "checkpoint_00000006.bin", "checkpoint_00000009.bin"]
        disabled = CheckpointWriter(Path(tmp) / "none", interval=0)
        assert not disabled.maybe_write(0, f)
        assert not (Path(tmp) / "none").exists()


if __name__ == "__main__":
    test_binary_round_trip_is_bit_exact()
    test_csv_round_trip_is_exact()
    test_writer_cadence()
    print("checkpoint tests passed")
