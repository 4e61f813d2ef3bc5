"""Durable project state in documented on-disk formats.

Layout under the project root:

    manifest        project manifest + human-readable registry (JSON)
    corpora/        one content-addressed directory per corpus
    datasets/       labeled datasets (records + sidecar manifest)
    models/         model artifacts (manifest.json + state blob)
    explanations/   explanation sets
    indexes/        phrase indexes
    themes/         theme documents
    reviews.log     append-only review log
    cache/          embedding response cache (not registered)

Payload directories are content-addressed (`<kind>/<hash12>-<name>/`); the
registry maps names to tree hashes. Writes land the payload first and
commit the registry last with an atomic rename, so a crash at any point
leaves either the old or the new entry intact, never a registered entry
whose bytes disagree with its hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import shutil
import time
import uuid
from pathlib import Path

from . import __version__
from .errors import ConflictError, IntegrityError, InvalidInput, NotFoundError

KINDS = ("corpora", "datasets", "models", "explanations", "indexes", "themes")
MANIFEST = "manifest"
REVIEWS_LOG = "reviews.log"

_SAFE_RE = re.compile(r"[^A-Za-z0-9._-]+")

# test seam: when set, called with a stage label at every commit point so
# crash-safety tests can abort mid-write deterministically
_FAULT_HOOK = None


def _fault(stage: str) -> None:
    if _FAULT_HOOK is not None:
        _FAULT_HOOK(stage)


def tree_hash(files: dict[str, bytes]) -> str:
    h = hashlib.sha256()
    for rel in sorted(files):
        h.update(rel.encode("utf-8"))
        h.update(b"\0")
        h.update(hashlib.sha256(files[rel]).digest())
        h.update(b"\n")
    return h.hexdigest()


def _safe_name(name: str) -> str:
    return _SAFE_RE.sub("_", name)[:80]


class Project:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.manifest_path = self.root / MANIFEST
        if not self.manifest_path.exists():
            raise NotFoundError(f"{self.root} is not a maskboard project (no manifest)")
        self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))

    # -- registry ---------------------------------------------------------

    def _entries(self, kind: str) -> dict:
        if kind not in KINDS:
            raise InvalidInput(f"unknown kind {kind!r}; known: {KINDS}")
        return self.manifest["entries"].setdefault(kind, {})

    def list_entries(self, kind: str) -> list[str]:
        return sorted(self._entries(kind))

    def has(self, kind: str, name: str) -> bool:
        return name in self._entries(kind)

    def meta(self, kind: str, name: str) -> dict:
        entry = self._entries(kind).get(name)
        if entry is None:
            raise NotFoundError(f"no {kind} entry named {name!r}")
        return dict(entry.get("meta", {}))

    def _write_manifest(self) -> None:
        _fault("registry_write")
        tmp = self.manifest_path.with_name(f".{MANIFEST}.{uuid.uuid4().hex}.tmp")
        data = json.dumps(self.manifest, ensure_ascii=False, sort_keys=True, indent=2)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        _fault("registry_rename")
        os.replace(tmp, self.manifest_path)

    # -- payloads ---------------------------------------------------------

    def put_tree(self, kind: str, name: str, files: dict[str, bytes],
                 meta: dict | None = None, replace: bool = False) -> str:
        """Store a payload directory; returns its content hash.

        Re-putting identical content is a no-op. A different payload under
        an existing name conflicts unless replace=True.
        """
        if not name:
            raise InvalidInput("entry name must be non-empty")
        if not files:
            raise InvalidInput("payload must contain at least one file")
        entries = self._entries(kind)
        digest = tree_hash(files)
        existing = entries.get(name)
        if existing is not None:
            if existing["hash"] == digest:
                if meta is not None and existing.get("meta") != meta:
                    existing["meta"] = dict(meta)
                    self._write_manifest()
                return digest
            if not replace:
                raise ConflictError(f"{kind}/{name} already exists with different content; pass replace=True")

        rel_dir = f"{kind}/{digest[:12]}-{_safe_name(name)}"
        final = self.root / rel_dir
        if not final.exists():
            tmp = self.root / kind / f".tmp-{uuid.uuid4().hex}"
            tmp.mkdir(parents=True)
            for rel in sorted(files):
                if rel.startswith(("/", ".")) or ".." in rel:
                    raise InvalidInput(f"bad payload file name {rel!r}")
                target = tmp / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                _fault(f"payload_write:{rel}")
                with open(target, "wb") as fh:
                    fh.write(files[rel])
                    fh.flush()
                    os.fsync(fh.fileno())
            _fault("payload_rename")
            os.replace(tmp, final)

        old_dir = existing["path"] if existing else None
        entries[name] = {
            "hash": digest,
            "path": rel_dir,
            "meta": dict(meta or {}),
            "created_at": int(time.time()),
        }
        self._write_manifest()
        if old_dir and old_dir != rel_dir:
            shutil.rmtree(self.root / old_dir, ignore_errors=True)
        return digest

    def get_tree(self, kind: str, name: str) -> dict[str, bytes]:
        """Read a payload back, verifying its registered content hash."""
        entry = self._entries(kind).get(name)
        if entry is None:
            raise NotFoundError(f"no {kind} entry named {name!r}")
        base = self.root / entry["path"]
        if not base.is_dir():
            raise IntegrityError(f"{kind}/{name}: payload directory {entry['path']} is missing")
        files: dict[str, bytes] = {}
        for path in sorted(base.rglob("*")):
            if path.is_file():
                files[str(path.relative_to(base))] = path.read_bytes()
        digest = tree_hash(files)
        if digest != entry["hash"]:
            raise IntegrityError(
                f"{kind}/{name}: content hash mismatch in {entry['path']} "
                f"(expected {entry['hash'][:12]}, got {digest[:12]})"
            )
        return files

    def put_bytes(self, kind: str, name: str, payload: bytes, filename: str = "data",
                  meta: dict | None = None, replace: bool = False) -> str:
        return self.put_tree(kind, name, {filename: payload}, meta=meta, replace=replace)

    def get_bytes(self, kind: str, name: str, filename: str = "data") -> bytes:
        files = self.get_tree(kind, name)
        if filename not in files:
            raise IntegrityError(f"{kind}/{name}: expected file {filename!r} not present")
        return files[filename]

    def delete_entry(self, kind: str, name: str) -> None:
        entries = self._entries(kind)
        entry = entries.pop(name, None)
        if entry is None:
            raise NotFoundError(f"no {kind} entry named {name!r}")
        self._write_manifest()
        shutil.rmtree(self.root / entry["path"], ignore_errors=True)

    def verify_all(self) -> int:
        """Integrity-check every registered entry; returns how many."""
        count = 0
        for kind in KINDS:
            for name in self.list_entries(kind):
                self.get_tree(kind, name)
                count += 1
        return count

    # -- review log -------------------------------------------------------

    @property
    def reviews_path(self) -> Path:
        return self.root / REVIEWS_LOG

    def replay_reviews(self):
        from .themes import replay_reviews

        return replay_reviews(self.reviews_path)

    @property
    def cache_dir(self) -> Path:
        return self.root / "cache" / "embeddings"


def init(path: str | Path, name: str | None = None) -> Project:
    """Create a project in an empty or absent directory."""
    root = Path(path)
    if root.exists() and any(root.iterdir()):
        raise InvalidInput(f"{root} exists and is not empty")
    root.mkdir(parents=True, exist_ok=True)
    for kind in KINDS:
        (root / kind).mkdir()
    (root / "cache").mkdir()
    manifest = {
        "name": name or root.name,
        "created_at": int(time.time()),
        "tool_version": __version__,
        "entries": {kind: {} for kind in KINDS},
    }
    tmp = root / f".{MANIFEST}.tmp"
    tmp.write_text(json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2), encoding="utf-8")
    os.replace(tmp, root / MANIFEST)
    return Project(root)


def load(path: str | Path) -> Project:
    return Project(path)
