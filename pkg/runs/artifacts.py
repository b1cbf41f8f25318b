"""
Artifact writing. Every file opens with the tool version, the config digest and
the command, and is moved into place only once fully written.
"""

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings
from rest_framework.renderers import JSONRenderer

from .serializers import MetaSerializer

logger = logging.getLogger(__name__)

TOOL = "infralab"


@dataclass(frozen=True)
class ArtifactMeta:
    command: str
    digest: str
    version: str = ""
    tool: str = TOOL

    def __post_init__(self):
        if not self.version:
            object.__setattr__(self, "version", settings.LAB_ARTIFACT_VERSION)

    @classmethod
    def for_config(cls, config) -> "ArtifactMeta":
        return cls(command=config.command, digest=config.digest)

    @property
    def header_line(self) -> str:
        return f"# {self.tool} {self.version} config-sha256={self.digest} command={self.command}"

    def as_dict(self) -> dict:
        return dict(MetaSerializer(self).data)


def atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "wb") as stream:
            stream.write(data)
        os.replace(temporary, path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise
    logger.info("Wrote %s (%s bytes)", path, len(data))
    return path


def render_csv(meta: ArtifactMeta, columns, rows) -> bytes:
    buffer = io.StringIO()
    buffer.write(meta.header_line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"Row has {len(row)} values for {len(columns)} columns.")
        writer.writerow(row)
    return buffer.getvalue().encode("utf-8")


def render_json(meta: ArtifactMeta, payload: dict) -> bytes:
    document = {"meta": meta.as_dict(), **payload}
    return JSONRenderer().render(document, renderer_context={"indent": 2}) + b"\n"


def write_csv(path, meta: ArtifactMeta, columns, rows) -> Path:
    return atomic_write(path, render_csv(meta, columns, rows))


def write_json(path, meta: ArtifactMeta, payload: dict) -> Path:
    return atomic_write(path, render_json(meta, payload))
