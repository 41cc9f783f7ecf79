"""Flat little-endian container of named 2-D float64 arrays.

Layout::

    magic            4 bytes
    header_count     int32, only when the header length is not fixed
    header           header_count x int32
    repeated until end of file:
        name_length  int32
        name         name_length bytes, UTF-8
        rows, cols   int32, int32
        values       rows x cols float64, row-major
"""

from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import CheckpointFormatError
from src.domain.interfaces import TensorStore

_INT = np.dtype("<i4")
_FLOAT = np.dtype("<f8")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.data)

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if size < 0 or end > len(self.data):
            raise CheckpointFormatError(f"{self.path}: truncated while reading {what}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def ints(self, count: int, what: str) -> List[int]:
        return [int(v) for v in np.frombuffer(self.take(count * _INT.itemsize, what), dtype=_INT)]


class BinaryTensorStore(TensorStore):
    """Bit-exact tensor container identified by a 4-byte magic."""

    def __init__(self, magic: bytes, header_fields: Optional[int] = None):
        """Initialize the store.

        Args:
            magic: Four-byte file signature, e.g. ``b"RLE1"``.
            header_fields: Fixed number of header integers written directly after
                the magic. ``None`` stores a length-prefixed header instead.
        """
        if len(magic) != 4:
            raise ValueError(f"magic must be 4 bytes, got {magic!r}")
        if header_fields is not None and header_fields < 0:
            raise ValueError(f"header_fields must be >= 0, got {header_fields}")
        self.magic = magic
        self.header_fields = header_fields

    def save(self, path: str, header: Sequence[int], tensors: Mapping[str, np.ndarray]) -> None:
        if self.header_fields is None:
            prefix = [len(header), *header]
        elif len(header) != self.header_fields:
            raise CheckpointFormatError(
                f"header has {len(header)} fields, {self.magic!r} files take {self.header_fields}"
            )
        else:
            prefix = list(header)
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        chunks = [self.magic, np.array(prefix, dtype=_INT).tobytes()]
        for name, values in tensors.items():
            array = np.asarray(values, dtype=np.float64)
            if array.ndim != 2:
                raise CheckpointFormatError(f"tensor '{name}' is not 2-D: shape {array.shape}")
            encoded = name.encode("utf-8")
            chunks.append(np.array([len(encoded)], dtype=_INT).tobytes())
            chunks.append(encoded)
            chunks.append(np.array(array.shape, dtype=_INT).tobytes())
            chunks.append(np.ascontiguousarray(array, dtype=_FLOAT).tobytes())
        target.write_bytes(b"".join(chunks))

    def load(self, path: str) -> Tuple[List[int], Dict[str, np.ndarray]]:
        """Read a container.

        Raises:
            FileNotFoundError: If the file does not exist.
            CheckpointFormatError: On a wrong magic or a truncated file.
        """
        reader = _Reader(Path(path).read_bytes(), path)
        magic = reader.take(4, "magic") if len(reader.data) >= 4 else reader.data
        if magic != self.magic:
            raise CheckpointFormatError(f"{path}: expected magic {self.magic!r}, found {magic!r}")
        if self.header_fields is None:
            (count,) = reader.ints(1, "header length")
        else:
            count = self.header_fields
        header = reader.ints(count, "header")

        tensors: Dict[str, np.ndarray] = {}
        while not reader.exhausted:
            (length,) = reader.ints(1, "tensor name length")
            try:
                name = reader.take(length, "tensor name").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CheckpointFormatError(f"{path}: tensor name is not UTF-8") from exc
            rows, cols = reader.ints(2, f"shape of '{name}'")
            if rows < 0 or cols < 0:
                raise CheckpointFormatError(f"{path}: negative shape for '{name}'")
            raw = reader.take(rows * cols * _FLOAT.itemsize, f"values of '{name}'")
            tensors[name] = np.frombuffer(raw, dtype=_FLOAT).astype(np.float64).reshape(rows, cols)
        return header, tensors
