import json
import logging
import os

import numpy as np

logger = logging.getLogger("Container")

FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Base class for unreadable container files."""


class MalformedFile(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


def write_container(path, magic, header, sections):
    """
    Write magic + u16 version + u32 header length + JSON header + binary sections.

    Args:
        path (str): Output file
        magic (bytes): Four magic bytes
        header (dict): JSON-serialisable header (version is added)
        sections (list): numpy arrays written little-endian in order
    """
    header = dict(header, version=FORMAT_VERSION)
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(np.uint16(FORMAT_VERSION).astype("<u2").tobytes())
        f.write(np.uint32(len(encoded)).astype("<u4").tobytes())
        f.write(encoded)
        for section in sections:
            f.write(np.ascontiguousarray(section).tobytes())
    logger.debug(f"Wrote {magic.decode()} container to {path}")


class ContainerReader:
    """Sequential reader over the binary sections of a container."""

    def __init__(self, payload, path):
        self.payload = payload
        self.path = path
        self.offset = 0

    def read(self, dtype, count):
        dtype = np.dtype(dtype)
        size = dtype.itemsize * int(count)
        if count < 0 or self.offset + size > len(self.payload):
            raise MalformedFile(f"{self.path}: truncated section ({size} bytes wanted at {self.offset})")
        arr = np.frombuffer(self.payload, dtype=dtype, count=int(count), offset=self.offset)
        self.offset += size
        return arr.astype(dtype.newbyteorder("="))

    def finish(self):
        if self.offset != len(self.payload):
            raise MalformedFile(f"{self.path}: {len(self.payload) - self.offset} trailing bytes")


def read_container(path, magic):
    """
    Open a container and parse its header.

    Returns:
        tuple: (header dict, ContainerReader positioned at the first section)
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 10:
        raise MalformedFile(f"{path}: file too short")
    if blob[:4] != magic:
        raise MalformedFile(f"{path}: expected magic {magic!r}, found {blob[:4]!r}")
    version = int(np.frombuffer(blob, dtype="<u2", count=1, offset=4)[0])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    length = int(np.frombuffer(blob, dtype="<u4", count=1, offset=6)[0])
    if 10 + length > len(blob):
        raise MalformedFile(f"{path}: truncated header")
    try:
        header = json.loads(blob[10:10 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedFile(f"{path}: unreadable header: {e}") from e
    if not isinstance(header, dict):
        raise MalformedFile(f"{path}: header is not a JSON object")
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: header version {header.get('version')}")
    return header, ContainerReader(blob[10 + length:], path)
