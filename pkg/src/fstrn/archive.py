"""Binary tensor container used for checkpoints and dataset blobs.

Layout::

    b'FSTRN\\x01'                      magic
    uint32 little-endian               header length in bytes
    JSON header                        {"version", "meta", "tensors": [{name, shape, offset, length}]}
    zero padding                       up to the next 64-byte boundary
    payloads                           little-endian float32, each 64-byte aligned

Tensor offsets are relative to the first payload byte.
"""

from collections.abc import Mapping
import json
import logging
import os
from pathlib import Path
import struct
from typing import Any

import numpy as np

from .errors import FormatError

logger = logging.getLogger(__name__)


class TensorArchive:
    """Reads and writes one container file.

    Attributes:
        MAGIC (bytes): File signature
        VERSION (int): Header format version
        ALIGNMENT (int): Payload alignment in bytes
        DTYPE (str): On-disk element type
    """

    MAGIC = b'FSTRN\x01'
    VERSION = 1
    ALIGNMENT = 64
    DTYPE = '<f4'

    def __init__(self, path: Path | str) -> None:
        """Bind the archive to a file path."""
        self.path = Path(path)

    @classmethod
    def _aligned(cls, position: int) -> int:
        return -(-position // cls.ALIGNMENT) * cls.ALIGNMENT

    def write(self, meta: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> int:
        """Write metadata and tensors, replacing the file atomically.

        Args:
            meta: JSON-serialisable metadata stored in the header
            tensors: Arrays to store, in the given order

        Returns:
            Number of bytes written
        """
        manifest = []
        blobs = []
        offset = 0
        for name, array in tensors.items():
            blob = np.ascontiguousarray(array, dtype=self.DTYPE).tobytes()
            manifest.append({'name': name, 'shape': list(np.shape(array)), 'offset': offset, 'length': len(blob)})
            blobs.append((offset, blob))
            offset = self._aligned(offset + len(blob))

        header = json.dumps(
            {'version': self.VERSION, 'meta': dict(meta), 'tensors': manifest},
            sort_keys=True,
            separators=(',', ':'),
        ).encode()
        prefix = self.MAGIC + struct.pack('<I', len(header)) + header
        payload_start = self._aligned(len(prefix))

        buffer = bytearray(payload_start + offset)
        buffer[:len(prefix)] = prefix
        for start, blob in blobs:
            buffer[payload_start + start:payload_start + start + len(blob)] = blob
        # the payload region ends at the last blob, not at its alignment padding
        end = payload_start + (blobs[-1][0] + len(blobs[-1][1]) if blobs else 0)

        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + '.tmp')
        tmp.write_bytes(bytes(buffer[:end]))
        os.replace(tmp, self.path)
        logger.debug('Wrote %d tensors (%d bytes) to %s', len(blobs), end, self.path)
        return end

    def _validate_header(self, header: Any, header_offset: int) -> list[dict[str, Any]]:
        """Check header structure and return the tensor manifest.

        Raises:
            FormatError: If the version or any manifest entry is invalid
        """
        if not isinstance(header, dict) or not isinstance(header.get('tensors'), list):
            msg = 'Header is not a container manifest'
            raise FormatError(msg, header_offset)
        if header.get('version') != self.VERSION:
            msg = f'Unsupported container version {header.get("version")!r}, expected {self.VERSION}'
            raise FormatError(msg, header_offset)
        itemsize = np.dtype(self.DTYPE).itemsize
        for entry in header['tensors']:
            try:
                shape = [int(d) for d in entry['shape']]
                expected = int(np.prod(shape, dtype=np.int64)) * itemsize
                valid = (
                    isinstance(entry['name'], str)
                    and all(d >= 0 for d in shape)
                    and entry['length'] == expected
                    and entry['offset'] >= 0
                )
            except (KeyError, TypeError, ValueError):
                valid = False
            if not valid:
                msg = f'Invalid tensor manifest entry {entry!r}'
                raise FormatError(msg, header_offset)
        return header['tensors']

    def read(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        """Read metadata and tensors.

        Returns:
            Tuple of the metadata dictionary and a name-to-array dictionary (float32 copies)

        Raises:
            FormatError: On bad magic, version mismatch, malformed header or truncated payload;
                nothing is returned in that case
        """
        try:
            raw = self.path.read_bytes()
        except OSError as e:
            msg = f'Cannot read {self.path}: {e!s}'
            raise FormatError(msg, 0) from e

        if raw[:len(self.MAGIC)] != self.MAGIC:
            msg = f'Bad magic in {self.path.name}'
            raise FormatError(msg, 0)
        length_offset = len(self.MAGIC)
        if len(raw) < length_offset + 4:
            msg = 'Truncated header length'
            raise FormatError(msg, length_offset)
        (header_length,) = struct.unpack_from('<I', raw, length_offset)
        header_offset = length_offset + 4
        if header_offset + header_length > len(raw):
            msg = f'Header of {header_length} bytes runs past end of file'
            raise FormatError(msg, header_offset)
        try:
            header = json.loads(raw[header_offset:header_offset + header_length].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            position = getattr(e, 'pos', None) or getattr(e, 'start', 0)
            msg = f'Corrupt header: {e!s}'
            raise FormatError(msg, header_offset + position) from e

        entries = self._validate_header(header, header_offset)
        payload_start = self._aligned(header_offset + header_length)
        tensors: dict[str, np.ndarray] = {}
        for entry in entries:
            start = payload_start + entry['offset']
            if start + entry['length'] > len(raw):
                msg = f'Truncated payload for tensor {entry["name"]!r}'
                raise FormatError(msg, min(start, len(raw)))
            array = np.frombuffer(raw, dtype=self.DTYPE, count=entry['length'] // 4, offset=start)
            tensors[entry['name']] = array.reshape(entry['shape']).astype(np.float32)
        return header.get('meta', {}), tensors
