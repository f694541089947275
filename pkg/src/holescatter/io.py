"""Atomic file output and small structured-text helpers.

Nothing written here carries timestamps or host details, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import configparser
import io
import os
import tempfile


def atomic_write(path: str, text: str) -> str:
    """Write ``text`` to a sibling temporary file, then rename it over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def ini_text(sections: dict) -> str:
    """Render ``{section: {key: value}}`` as sectioned key-value text, in insertion order."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name, values in sections.items():
        cp[name] = {k: _scalar(v) for k, v in values.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _scalar(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ", ".join(_scalar(x) for x in v)
    return str(v)


def csv_text(header, rows) -> str:
    """Comma-separated text with one header line; floats use ``repr`` and NaN becomes empty."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append("" if v != v else repr(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
