"""Manifests: config echo, outcome, and sha256 inventory of output files."""

from __future__ import annotations

import datetime as _dt
import hashlib
import os
from pathlib import Path
from typing import Iterable, Mapping

from . import __version__

MANIFEST_NAME = "manifest.txt"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


def write_manifest(
    directory: str | Path,
    info: Mapping[str, object],
    files: Iterable[str],
    blocks: Iterable[str] = (),
) -> Path:
    """Write manifest.txt listing ``files`` (relative to ``directory``) with checksums.

    ``info`` becomes a [run] block of key = value lines; each entry of
    ``blocks`` is appended verbatim (already formatted text sections).
    """
    directory = Path(directory)
    lines = ["[run]", f"code_version = {__version__}"]
    lines += [f"{k} = {v}" for k, v in info.items()]
    lines.append("")
    lines.append("[files]")
    for name in sorted(set(files)):
        lines.append(f"{name} = sha256:{sha256_file(directory / name)}")
    text = "\n".join(lines) + "\n"
    for block in blocks:
        text += "\n" + block.rstrip("\n") + "\n"
    path = directory / MANIFEST_NAME
    atomic_write_text(path, text)
    return path


def read_manifest(directory: str | Path) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    with open(Path(directory) / MANIFEST_NAME, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = sections.setdefault(line[1:-1], {})
                continue
            if current is None or "=" not in line:
                raise ValueError(f"malformed manifest line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            current[key] = value
    return sections


def verify_manifest(directory: str | Path) -> list[str]:
    """Names of listed files that are missing or whose checksum no longer matches."""
    directory = Path(directory)
    bad = []
    for name, value in read_manifest(directory).get("files", {}).items():
        path = directory / name
        expected = value.removeprefix("sha256:")
        if not path.exists() or sha256_file(path) != expected:
            bad.append(name)
    return bad
