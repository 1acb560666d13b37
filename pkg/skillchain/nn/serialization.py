# Copyright 2025 The Skillchain Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Versioned binary container for named float64 arrays.

Layout, all integers little-endian:

    offset  size  field
    0       4     magic b"SKCH"
    4       2     format version (uint16)
    6       4     header length H (uint32)
    10      H     UTF-8 JSON header: {"arrays": [{"name", "shape",
                  "offset", "count"}, ...], "metadata": {...}}
    10+H    8*N   array payloads, float64 little-endian, in header order
    end-4   4     CRC-32 of every preceding byte (uint32)

The header is written with sorted keys and compact separators, so writing
the result of a load reproduces the original bytes.
"""

import json
import os
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from skillchain.errors import CheckpointError, CheckpointVersionError

MAGIC = b"SKCH"
FORMAT_VERSION = 1

_PREFIX = struct.Struct("<4sHI")
_CRC = struct.Struct("<I")


def dumps_arrays(
    arrays: Mapping[str, np.ndarray], metadata: Mapping[str, Any]
) -> bytes:
    entries = []
    payload = []
    offset = 0
    for name, array in arrays.items():
        data = np.ascontiguousarray(array, dtype="<f8")
        entries.append(
            {
                "name": name,
                "shape": list(data.shape),
                "offset": offset,
                "count": int(data.size),
            }
        )
        payload.append(data.tobytes())
        offset += data.size
    header = json.dumps(
        {"arrays": entries, "metadata": dict(metadata)},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    body = (
        _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header))
        + header
        + b"".join(payload)
    )
    return body + _CRC.pack(zlib.crc32(body))


def loads_arrays(
    blob: bytes,
) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Decodes a container.

    Raises:
        CheckpointError: on truncation, bad magic or checksum mismatch.
        CheckpointVersionError: if the format version is not supported.
    """
    if len(blob) < _PREFIX.size + _CRC.size:
        raise CheckpointError("Checkpoint is truncated.")
    magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError("Not a skillchain checkpoint (bad magic).")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"Checkpoint format version {version} needs migration to "
            f"version {FORMAT_VERSION}.",
            details={"found": version, "expected": FORMAT_VERSION},
        )
    body, crc = blob[: -_CRC.size], blob[-_CRC.size :]
    if zlib.crc32(body) != _CRC.unpack(crc)[0]:
        raise CheckpointError("Checkpoint checksum mismatch (truncated?).")
    start = _PREFIX.size
    try:
        header = json.loads(body[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt checkpoint header: {e}") from e
    payload = body[start + header_len :]
    if len(payload) % 8:
        raise CheckpointError("Checkpoint payload is truncated.")
    data = (
        np.frombuffer(payload, dtype="<f8") if payload else np.zeros(0)
    )
    arrays = {}
    for entry in header["arrays"]:
        lo, count = entry["offset"], entry["count"]
        if lo + count > data.size:
            raise CheckpointError(f"Array '{entry['name']}' is truncated.")
        arrays[entry["name"]] = (
            data[lo : lo + count]
            .astype(np.float64)
            .reshape(tuple(entry["shape"]))
        )
    return arrays, header["metadata"]


def save_arrays(
    path: os.PathLike,
    arrays: Mapping[str, np.ndarray],
    metadata: Mapping[str, Any],
) -> None:
    """Writes a container; the target only ever holds a complete file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps_arrays(arrays, metadata))
    os.replace(tmp, path)


def load_arrays(
    path: os.PathLike,
) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint '{path}' does not exist.")
    return loads_arrays(path.read_bytes())
