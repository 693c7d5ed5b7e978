"""Output directory confinement for squidsim.

Every artifact a command writes must resolve inside one output root; writes to
the same path are serialized so concurrent sweep entries cannot interleave.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable


@dataclass(frozen=True)
class OutputViolation(Exception):
    reason: str
    path: str

    def __str__(self) -> str:
        return f"{self.reason}: {self.path}"


@dataclass(frozen=True)
class OutputSandbox:
    root: Path
    _locks: Dict[Path, threading.Lock] = field(default_factory=dict, compare=False, repr=False)
    _guard: threading.Lock = field(default_factory=threading.Lock, compare=False, repr=False)

    @staticmethod
    def create(root: str | Path) -> "OutputSandbox":
        root_path = Path(root)
        if root_path.exists() and not root_path.is_dir():
            raise OutputViolation("Output root is not a directory", str(root_path))
        root_path.mkdir(parents=True, exist_ok=True)
        return OutputSandbox(root=root_path.resolve(strict=True))

    def resolve(self, candidate: str | Path) -> Path:
        candidate_str = str(candidate)
        path = Path(candidate)
        if path.is_absolute():
            raise OutputViolation("Absolute artifact paths are not allowed", candidate_str)

        normalized = Path(os.path.normpath(str(self.root / path)))
        if not self._is_within_root(normalized):
            raise OutputViolation("Path escapes output directory", str(normalized))

        self._reject_symlinks(normalized)
        return normalized.resolve(strict=False)

    def write_text(self, relative: str | Path, content: str) -> Path:
        target = self.resolve(relative)
        with self._lock_for(target):
            target.parent.mkdir(parents=True, exist_ok=True)
            # LF line endings on every platform.
            with target.open("w", encoding="utf-8", newline="\n") as handle:
                handle.write(content)
        return target

    def relative(self, target: Path) -> str:
        return Path(target).relative_to(self.root).as_posix()

    def _lock_for(self, target: Path) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(target, threading.Lock())

    def _reject_symlinks(self, target: Path) -> None:
        for current in self._existing_parents(target):
            if current.is_symlink():
                raise OutputViolation("Symbolic links are not allowed", str(current))

    def _existing_parents(self, target: Path) -> Iterable[Path]:
        current = target
        while True:
            if current.exists() or current.is_symlink():
                yield current
            if current == self.root or current.parent == current:
                break
            current = current.parent

    def _is_within_root(self, target: Path) -> bool:
        try:
            root_norm = os.path.normcase(str(self.root))
            target_norm = os.path.normcase(str(target))
            return os.path.commonpath([root_norm, target_norm]) == root_norm
        except ValueError:
            return False
