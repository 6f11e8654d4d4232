"""Audited file access and small text-format helpers.

Every file the pipeline reads or writes goes through these helpers so a phase
can prove which paths it touched; the compute phase's audit must never contain
the secret key.
"""
from __future__ import annotations

import contextvars
import json
import os
from contextlib import contextmanager
from pathlib import Path

_ACCESS_LOG: contextvars.ContextVar[tuple] = contextvars.ContextVar("hegwas_access_logs", default=())


@contextmanager
def audit_file_access():
    """Collect (mode, absolute path) pairs for every audited open in scope."""
    log: list[tuple[str, str]] = []
    token = _ACCESS_LOG.set(_ACCESS_LOG.get() + (log,))
    try:
        yield log
    finally:
        _ACCESS_LOG.reset(token)


def _note(mode: str, path) -> None:
    entry = (mode, str(Path(path).resolve()))
    for log in _ACCESS_LOG.get():
        log.append(entry)


def read_bytes(path) -> bytes:
    _note("read", path)
    return Path(path).read_bytes()


def write_bytes(path, data: bytes) -> None:
    _note("write", path)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def read_text(path) -> str:
    _note("read", path)
    return Path(path).read_text()


def write_text(path, text: str) -> None:
    _note("write", path)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def read_json(path) -> dict:
    return json.loads(read_text(path))


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_tsv(path, header: list[str], rows) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_format_cell(c) for c in row))
    write_text(path, "\n".join(lines) + "\n")


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    lines = read_text(path).splitlines()
    if not lines:
        return [], []
    header = lines[0].split("\t")
    return header, [line.split("\t") for line in lines[1:] if line]


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
