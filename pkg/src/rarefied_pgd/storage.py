"""Deterministic .npz containers with a JSON header."""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def write_container(path, kind: str, header: dict, arrays: dict) -> None:
    """Write arrays plus a JSON header; byte-identical for identical inputs.

    ``numpy.savez`` stamps members with the current time, so the archive is
    assembled here with a fixed timestamp instead. The result still loads
    with ``numpy.load``.
    """
    head = dict(header, format=kind)
    members = {"header": np.array(json.dumps(head, sort_keys=True))}
    members.update(arrays)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(members):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(members[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def read_container(path, kind: str):
    """Return (header, arrays) after checking the container kind."""
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    try:
        header = json.loads(str(arrays.pop("header")))
    except (KeyError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: missing or invalid header") from exc
    if header.get("format") != kind:
        raise ValueError(f"{path}: expected a {kind} file, found {header.get('format')!r}")
    return header, arrays
