"""Content-addressed object store.

Layout: ``objects/<first-2-hex>/<digest>`` where digest is the SHA-256 of the
object bytes. Writes are atomic (temp file + rename) so concurrent writers of
identical content converge on a single object. Optional sidecar metadata is a
JSON file next to the object (``<digest>.meta.json``).
"""

from __future__ import annotations

import errno
import hashlib
import json
import os
import tempfile
from pathlib import Path

from .errors import StorageFull

DIGEST_LEN = 64  # sha-256, hex


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ContentStore:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.objects_dir = self.root / "objects"
        self.objects_dir.mkdir(parents=True, exist_ok=True)

    def object_path(self, digest: str) -> Path:
        if len(digest) != DIGEST_LEN or any(c not in "0123456789abcdef" for c in digest):
            raise ValueError(f"not a hex sha-256 digest: {digest!r}")
        return self.objects_dir / digest[:2] / digest

    def put(self, data: bytes, meta: dict | None = None) -> str:
        """Store bytes, return their digest. Idempotent for identical content."""
        digest = sha256_hex(data)
        path = self.object_path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            self._atomic_write(path, data)
        if meta is not None:
            self.put_meta(digest, meta)
        return digest

    def get(self, digest: str) -> bytes:
        path = self.object_path(digest)
        if not path.exists():
            raise KeyError(digest)
        return path.read_bytes()

    def exists(self, digest: str) -> bool:
        return self.object_path(digest).exists()

    def put_meta(self, digest: str, meta: dict) -> None:
        path = self.object_path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._atomic_write(
            path.with_name(path.name + ".meta.json"),
            json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8"),
        )

    def get_meta(self, digest: str) -> dict | None:
        path = self.object_path(digest).with_name(digest + ".meta.json")
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))

    def iter_objects(self):
        """Yield (digest, path) for every stored object, sidecars excluded."""
        for sub in sorted(self.objects_dir.iterdir()):
            if not sub.is_dir():
                continue
            for path in sorted(sub.iterdir()):
                if path.name.endswith(".meta.json"):
                    continue
                yield path.name, path

    def _atomic_write(self, path: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            try:
                os.write(fd, data)
                os.fsync(fd)
            finally:
                os.close(fd)
            os.replace(tmp, path)
        except OSError as e:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            if e.errno == errno.ENOSPC:
                raise StorageFull(str(path)) from e
            raise
