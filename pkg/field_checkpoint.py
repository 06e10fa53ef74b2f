"""
Field checkpoints
Stores the half-lattice of a vorticity field as CSV (readable) or as a raw
little-endian block (fast, bit-exact)
"""

import logging
import struct
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

import config
from lattice_field import Truncation, VorticityField, complete_from_half

logger = logging.getLogger(__name__)

RECORD_DTYPE = np.dtype([('kx', '<i4'), ('ky', '<i4'), ('re', '<f8'), ('im', '<f8')])
_HEADER = struct.Struct('<4sIII')  # magic, version, k_max, record count

PathLike = Union[str, Path]


def field_records(field: VorticityField) -> np.ndarray:
    """Half-lattice records (kx > 0, or kx = 0 and ky > 0) in row-major order."""
    trunc = field.truncation
    i, j = trunc.half_indices
    values = field.amplitudes[i, j]
    records = np.empty(len(i), dtype=RECORD_DTYPE)
    records['kx'] = i - trunc.k_max
    records['ky'] = j - trunc.k_max
    records['re'] = values.real
    records['im'] = values.imag
    return records


def field_from_records(k_max: int, records: np.ndarray) -> VorticityField:
    """Rebuild a field from half-lattice records, completing -k by conjugation."""
    trunc = Truncation(k_max)
    i, j = trunc.half_indices
    expected_kx = i - trunc.k_max
    expected_ky = j - trunc.k_max
    if len(records) != len(i):
        raise ValueError(f"checkpoint has {len(records)} records, expected {len(i)} for k_max={k_max}")
    if not (np.array_equal(records['kx'], expected_kx) and np.array_equal(records['ky'], expected_ky)):
        raise ValueError("checkpoint records are not in half-lattice order")
    half = np.asarray(records['re'], dtype=float) + 1j * np.asarray(records['im'], dtype=float)
    return VorticityField(trunc, complete_from_half(trunc, half))


def save_checkpoint_csv(field: VorticityField, path: PathLike) -> Path:
    """Write the human-readable checkpoint: header comments then kx,ky,re,im rows."""
    path = Path(path)
    frame = pd.DataFrame(field_records(field))
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write("# stoch-ns2d field checkpoint\n")
        f.write(f"# format_version = {config.CHECKPOINT_VERSION}\n")
        f.write(f"# k_max = {field.k_max}\n")
        frame.to_csv(f, index=False, float_format='%.17g')
    return path


def load_checkpoint_csv(path: PathLike) -> VorticityField:
    """Read a CSV checkpoint written by save_checkpoint_csv."""
    path = Path(path)
    header = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            if '=' in line:
                key, value = line[1:].split('=', 1)
                header[key.strip()] = value.strip()
    version = int(header.get('format_version', -1))
    if version != config.CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version} in {path}")
    k_max = int(header['k_max'])
    frame = pd.read_csv(path, comment='#', float_precision='round_trip')
    records = np.empty(len(frame), dtype=RECORD_DTYPE)
    for name in RECORD_DTYPE.names:
        records[name] = frame[name].to_numpy()
    return field_from_records(k_max, records)


def save_checkpoint_binary(field: VorticityField, path: PathLike) -> Path:
    """Write the binary checkpoint (header + little-endian records)."""
    path = Path(path)
    records = field_records(field)
    with open(path, 'wb') as f:
        f.write(_HEADER.pack(config.CHECKPOINT_MAGIC, config.CHECKPOINT_VERSION, field.k_max, len(records)))
        f.write(records.tobytes())
    return path


def load_checkpoint_binary(path: PathLike) -> VorticityField:
    """Read a binary checkpoint; amplitudes come back bit-identical."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path} is too short to be a checkpoint")
    magic, version, k_max, count = _HEADER.unpack_from(data)
    if magic != config.CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a field checkpoint")
    if version != config.CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version} in {path}")
    records = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=_HEADER.size)
    return field_from_records(k_max, records)


def load_checkpoint(path: PathLike) -> VorticityField:
    """Load either checkpoint form, chosen by file suffix."""
    path = Path(path)
    if path.suffix == '.csv':
        return load_checkpoint_csv(path)
    return load_checkpoint_binary(path)


class CheckpointWriter:
    """Writes binary checkpoints every `interval` steps into a directory"""

    def __init__(self, directory: PathLike, interval: int):
        self.directory = Path(directory)
        self.interval = int(interval)
        self.written: List[Path] = []

    @property
    def enabled(self) -> bool:
        return self.interval > 0

    def maybe_write(self, step: int, field: VorticityField) -> bool:
        """Write a checkpoint if `step` falls on the cadence"""
        if not self.enabled or step % self.interval != 0:
            return False
        self.directory.mkdir(parents=True, exist_ok=True)
        path = save_checkpoint_binary(field, self.directory / f"checkpoint_{step:08d}.bin")
        self.written.append(path)
        logger.debug(f"Checkpoint written: {path}")
        return True
