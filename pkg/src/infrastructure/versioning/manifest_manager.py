"""Run manifests: configuration, seed, input hashes and outputs of one command."""

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence

MANIFEST_FILE = "manifest.json"


def git_blob_sha1(path: str) -> str:
    """SHA-1 of a file as git would hash it as a blob."""
    content = Path(path).read_bytes()
    digest = hashlib.sha1()
    digest.update(f"blob {len(content)}\0".encode("ascii"))
    digest.update(content)
    return digest.hexdigest()


class ManifestManager:
    """Creates and persists run manifests in a local output directory."""

    def create_manifest(
        self,
        command: str,
        config: Mapping[str, Any],
        seed: int,
        inputs: Sequence[str],
        outputs: Sequence[str],
        extra: Optional[Mapping[str, Any]] = None,
    ) -> Dict[str, Any]:
        """Create a manifest for one command invocation.

        Args:
            command: Command name, e.g. ``"train"``.
            config: Flat run configuration.
            seed: Seed the command ran with.
            inputs: Files the command read; each is hashed.
            outputs: Files the command wrote.
            extra: Command-specific fields (set sizes, vocabulary map, ...).

        Returns:
            Manifest dictionary. ``created_at`` is its only wall-time field.
        """
        now = datetime.now(timezone.utc)
        manifest: Dict[str, Any] = {
            "command": command,
            "created_at": now.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "seed": seed,
            "config": dict(config),
            "inputs": {path: git_blob_sha1(path) for path in inputs},
            "outputs": list(outputs),
        }
        if extra:
            manifest.update(extra)
        return manifest

    def save_manifest(self, out_dir: str, manifest: Dict[str, Any]) -> str:
        """Save manifest to ``out_dir/manifest.json``.

        Returns:
            Path of the written manifest.
        """
        target = Path(out_dir) / MANIFEST_FILE
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        return str(target)

    def load_manifest(self, out_dir: str) -> Optional[Dict[str, Any]]:
        """Load the manifest of ``out_dir``.

        Returns:
            Manifest dictionary or None if not found.
        """
        target = Path(out_dir) / MANIFEST_FILE
        if not target.exists():
            return None
        with open(target, encoding="utf-8") as f:
            return json.load(f)
