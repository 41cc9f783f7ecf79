"""Run manifest components."""

from src.infrastructure.versioning.manifest_manager import ManifestManager, git_blob_sha1

__all__ = [
    "ManifestManager",
    "git_blob_sha1",
]
