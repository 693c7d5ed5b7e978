"""Physical constants in the squidsim unit system.

Energies are carried in eV, flux in webers, time in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import scipy.constants as pyc


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = pyc.hbar / pyc.e  # eV·s
    planck_h: float = pyc.h / pyc.e  # eV·s
    boltzmann: float = pyc.k / pyc.e  # eV/K
    # h/2e; the symbolic ħ/2e sometimes quoted for Φ₀ does not match 2.07e-15 Wb.
    flux_quantum: float = pyc.h / (2.0 * pyc.e)  # Wb
    electronvolt: float = pyc.e  # J per eV

    @property
    def hbar_si(self) -> float:
        return self.hbar * self.electronvolt


CONSTANTS = PhysicalConstants()
