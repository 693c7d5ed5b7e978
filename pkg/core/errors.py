"""Shared exception base for squidsim numerics."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SimulationError(Exception):
    message: str

    def __str__(self) -> str:
        return self.message
