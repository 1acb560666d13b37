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

"""CSV and JSON file helpers shared by every exporter.

Every CSV starts with a header row in a fixed column order. Floats are
written with `repr`, so reading a file back yields the exact values.
"""

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from skillchain.errors import InputError


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_csv(
    path: os.PathLike,
    columns: Sequence[str],
    rows: Iterable[Mapping[str, Any]],
) -> int:
    """Writes `rows` under a header of `columns`; returns the row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
            count += 1
    return count


def read_csv(path: os.PathLike) -> List[Dict[str, str]]:
    """Reads a CSV written by this module as a list of string dicts.

    Raises:
        InputError: if the file is unreadable or has no header row.
    """
    try:
        with Path(path).open(newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                raise InputError(f"CSV '{path}' has no header row.")
            return list(reader)
    except OSError as e:
        raise InputError(f"Cannot read CSV '{path}': {e}") from e


def write_json(path: os.PathLike, payload: Any) -> None:
    """Writes JSON atomically with sorted keys.

    Each call stages the text in its own temporary file next to `path`, so
    concurrent writers to one path never share a staging file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    with tempfile.NamedTemporaryFile(
        "w",
        dir=path.parent,
        prefix=path.name + ".",
        suffix=".tmp",
        delete=False,
    ) as f:
        f.write(text)
    try:
        os.replace(f.name, path)
    except OSError:
        Path(f.name).unlink(missing_ok=True)
        raise


def read_json(path: os.PathLike) -> Any:
    return json.loads(Path(path).read_text())
