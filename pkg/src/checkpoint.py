"""
Checkpoint file format.

A checkpoint is a ZIP archive with the following structure:

    manifest.json   - CheckpointManifest: format version, arch_spec, weights hash
    weights.pt      - torch-serialized state_dict of the ModelBundle

The manifest carries the full ArchSpec, so loading needs no external
description of the network. The weights hash is checked on every load.
"""

import hashlib
import io
import json
import zipfile
import zlib
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import torch
from pydantic import BaseModel, Field, ValidationError

from .errors import ArchMismatchError, CheckpointIntegrityError
from .models import ArchSpec
from .network import ModelBundle

FORMAT_VERSION = 1


class CheckpointManifest(BaseModel):
    """Metadata stored alongside the weights."""

    format_version: int = Field(FORMAT_VERSION, description="Checkpoint layout version")
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    arch_spec: ArchSpec = Field(..., description="Network layout the weights belong to")
    weights_sha256: str = Field(..., description="SHA-256 of the weights.pt payload")


class CheckpointWriter:
    """Writes a ModelBundle to a checkpoint ZIP file."""

    def __init__(self, model: ModelBundle):
        self.model = model

    def write(self, output_path: str | Path) -> Path:
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)

        buffer = io.BytesIO()
        torch.save(self.model.state_dict(), buffer)
        weights = buffer.getvalue()
        manifest = CheckpointManifest(
            arch_spec=self.model.arch,
            weights_sha256=hashlib.sha256(weights).hexdigest(),
        )

        with zipfile.ZipFile(output_path, "w", zipfile.ZIP_DEFLATED) as zf:
            zf.writestr("manifest.json", json.dumps(manifest.model_dump(mode="json"), indent=2))
            zf.writestr("weights.pt", weights)
        return output_path


class CheckpointReader:
    """Reads a checkpoint ZIP file back into a ModelBundle."""

    def __init__(self, checkpoint_path: str | Path):
        self.checkpoint_path = Path(checkpoint_path)
        if not self.checkpoint_path.exists():
            raise FileNotFoundError(f"Checkpoint file not found: {self.checkpoint_path}")

    def read_manifest(self) -> CheckpointManifest:
        manifest, _ = self._read_payloads()
        return manifest

    def read(self, expected_arch: Optional[ArchSpec] = None) -> ModelBundle:
        """
        Rebuild the model.

        Raises:
            CheckpointIntegrityError: truncated/corrupt archive or hash mismatch
            ArchMismatchError: stored arch differs from expected_arch
        """
        manifest, weights = self._read_payloads()
        if hashlib.sha256(weights).hexdigest() != manifest.weights_sha256:
            raise CheckpointIntegrityError(f"weights hash mismatch in {self.checkpoint_path}")
        if manifest.format_version != FORMAT_VERSION:
            raise CheckpointIntegrityError(f"unsupported checkpoint format version {manifest.format_version}")
        if expected_arch is not None and expected_arch != manifest.arch_spec:
            raise ArchMismatchError(
                f"checkpoint arch {manifest.arch_spec.model_dump()} does not match "
                f"expected arch {expected_arch.model_dump()}"
            )

        state = torch.load(io.BytesIO(weights), map_location="cpu", weights_only=True)
        model = ModelBundle(manifest.arch_spec)
        model.load_state_dict(state, strict=True)
        return model

    def _read_payloads(self) -> tuple[CheckpointManifest, bytes]:
        try:
            with zipfile.ZipFile(self.checkpoint_path, "r") as zf:
                manifest = CheckpointManifest(**json.loads(zf.read("manifest.json")))
                weights = zf.read("weights.pt")
        except (zipfile.BadZipFile, KeyError, zlib.error, EOFError, ValueError, ValidationError) as e:
            raise CheckpointIntegrityError(f"corrupt or truncated checkpoint {self.checkpoint_path}: {e}") from e
        return manifest, weights


def save_checkpoint(model: ModelBundle, path: str | Path) -> Path:
    """Convenience function to save a model to a checkpoint file."""
    return CheckpointWriter(model).write(path)


def load_checkpoint(path: str | Path, expected_arch: Optional[ArchSpec] = None) -> ModelBundle:
    """Convenience function to load a model from a checkpoint file."""
    return CheckpointReader(path).read(expected_arch)
