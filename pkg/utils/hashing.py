"""
Content hashing for run manifests
Files and directories are hashed the way git hashes blobs and trees, so a
dataset directory hash matches `git hash-object` / `git write-tree` semantics.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict

from pydantic import BaseModel


def config_hash(config: Any) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)"""
    if isinstance(config, BaseModel):
        config = config.model_dump(mode="json")
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def git_tree_hash(directory: str) -> str:
    """Recursive tree hash; entries ordered as git orders them (directories compare with a trailing '/')"""
    entries = []
    for entry in os.scandir(directory):
        if entry.is_dir():
            entries.append((entry.name + "/", b"40000", entry.name, git_tree_hash(entry.path)))
        elif entry.is_file():
            entries.append((entry.name, b"100644", entry.name, git_blob_hash(Path(entry.path).read_bytes())))
    body = b"".join(
        mode + b" " + name.encode("utf-8") + b"\0" + bytes.fromhex(digest)
        for _, mode, name, digest in sorted(entries)
    )
    return hashlib.sha1(b"tree %d\0" % len(body) + body).hexdigest()


def content_hash(path: str) -> str:
    """Blob hash for a file, tree hash for a directory"""
    if os.path.isdir(path):
        return git_tree_hash(path)
    return git_blob_hash(Path(path).read_bytes())


def hash_inputs(paths: Dict[str, str]) -> Dict[str, str]:
    return {name: content_hash(path) for name, path in paths.items() if path and os.path.exists(path)}
