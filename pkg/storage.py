"""
CSV file storage for critmet results.

Every file starts with '#'-prefixed provenance lines (the resolved run
config), then one header row and the data rows; an optional trailing '#'
block carries fit summaries. No timestamps, so identical runs give
identical bytes.
"""

import csv
import logging
import math
import os
import tempfile
from typing import Iterable, Optional, Sequence

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '{:.12g}'


def _format(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float) or hasattr(value, 'dtype'):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return FLOAT_FORMAT.format(value)
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence], metadata: Optional[dict] = None,
              summary: Optional[dict] = None) -> str:
    """
    Write a result table atomically.

    Rows go to a temporary file in the target directory which is renamed into
    place once complete; on any failure the partial file is removed and the
    error re-raised.

    Args:
        path: destination file
        columns: header row
        rows: data rows, same length as columns
        metadata: written first as '# KEY=value' lines
        summary: written last as '# key: value' lines

    Returns:
        str: path written
    """
    directory = os.path.dirname(path) or '.'
    os.makedirs(directory, exist_ok=True)

    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.partial-', suffix='.csv')
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            for key, value in (metadata or {}).items():
                f.write(f"# {key}={value}\n")
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            n_rows = 0
            for row in rows:
                if len(row) != len(columns):
                    raise ValueError(f"row {n_rows} has {len(row)} fields, expected {len(columns)}")
                writer.writerow([_format(v) for v in row])
                n_rows += 1
            for key, value in (summary or {}).items():
                f.write(f"# {key}: {_format(value)}\n")
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        logger.error(f"Failed to write {path}; partial output removed")
        raise

    logger.info(f"Saved {n_rows} rows to {path}")
    return path


def read_csv(path: str):
    """
    Load a file written by write_csv.

    Returns:
        tuple: (metadata dict, columns list, rows as lists of strings, summary dict)
    """
    metadata, summary, rows = {}, {}, []
    columns = None
    with open(path, newline='') as f:
        for line in f:
            line = line.rstrip('\n')
            if line.startswith('# '):
                body = line[2:]
                if columns is None and '=' in body:
                    key, _, value = body.partition('=')
                    metadata[key] = value
                else:
                    key, _, value = body.partition(': ')
                    summary[key] = value
            elif columns is None:
                columns = next(csv.reader([line]))
            elif line:
                rows.append(next(csv.reader([line])))
    return metadata, columns, rows, summary


def remove_outputs(paths: Iterable[str]) -> None:
    """Delete already-written files of a failed command."""
    for path in paths:
        try:
            os.remove(path)
            logger.info(f"Removed partial output {path}")
        except FileNotFoundError:
            pass
