"""Content-addressed eigenbasis cache on top of the ``BTQ1`` file format."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path

from .geometry import FourierSymbol
from .spectral import BasisFormatError, SpectralCluster, load_basis, save_basis

__all__ = ["cache_key", "EigenCache"]

log = logging.getLogger(__name__)


def cache_key(n: int, N: int, p: int, rank_E: int = 1, degree_E: int = 0,
              Phi: FourierSymbol | None = None, seed: int = 0) -> str:
    """sha256 over the exact inputs of one spectral solve."""
    payload = {
        "n": int(n),
        "N": int(N),
        "p": int(p),
        "rank_E": int(rank_E),
        "degree_E": int(degree_E),
        "Phi": Phi.digest() if Phi is not None and Phi.terms else None,
        "seed": int(seed),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class EigenCache:
    """Directory of ``<key>.btq`` files; ``rebuild`` ignores existing entries."""

    def __init__(self, root, policy: str = "reuse"):
        if policy not in ("reuse", "rebuild"):
            raise ValueError(f"unknown cache policy {policy!r}")
        self.root = Path(root)
        self.policy = policy

    def path(self, key: str) -> Path:
        return self.root / f"{key}.btq"

    def get(self, key: str, seed: int | None = None) -> SpectralCluster | None:
        if self.policy == "rebuild":
            return None
        path = self.path(key)
        if not path.exists():
            return None
        try:
            cluster = load_basis(path)
        except BasisFormatError as exc:
            log.warning("discarding corrupt cache entry %s: %s", path.name, exc)
            return None
        return replace(cluster, seed=seed)

    def put(self, key: str, cluster: SpectralCluster) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.path(key)
        save_basis(cluster, path)
        return path
