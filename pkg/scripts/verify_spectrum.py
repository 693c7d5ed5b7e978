#!/usr/bin/env python3
import sys
import time
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.config_parser import load_config
from core.experiments import REFERENCE_GAUSSIAN, prepare_spectrum
from core.state_prep import captured_profile, make_gaussian


def main():
    config_path = Path(__file__).parent.parent / "configs" / "default.toml"
    print(f"Verifying reference spectrum from {config_path}...")

    start_time = time.time()
    setup = prepare_spectrum(load_config(config_path))
    elapsed = time.time() - start_time

    energies = setup.basis.energies
    splitting = energies[1] - energies[0]
    ratio = (energies[3] - energies[2]) / splitting
    captured = captured_profile(make_gaussian(REFERENCE_GAUSSIAN, setup.grid), setup.basis)[3]
    checks = [
        ("minimum x", setup.geometry.minima_x[1], abs(setup.geometry.minima_x[1] / 0.35 - 1) <= 1e-5),
        ("barrier eV", setup.geometry.barrier_height, abs(setup.geometry.barrier_height / 0.055274 - 1) <= 1e-5),
        ("E2 eV", energies[2], abs(energies[2] / -0.02316 - 1) <= 0.02),
        ("E1-E0 eV", splitting, 2e-7 <= splitting <= 2e-6),
        ("(E3-E2)/(E1-E0)", ratio, 50 <= ratio <= 200),
        ("capture 0-3", captured, 0.95 <= captured <= 0.99),
    ]
    success = all(ok for _, _, ok in checks)

    for name, value, ok in checks:
        print(f"{'OK  ' if ok else 'FAIL'} {name}: {value:.6e}")
    print(f"C = {setup.capacitance:.6e} F ({elapsed:.2f}s)")

    date = time.strftime("%Y-%m-%d")
    result_path = Path("result") / f"{date}_spectrum_verification.md"
    result_path.parent.mkdir(parents=True, exist_ok=True)
    with open(result_path, "w", encoding="utf-8") as f:
        f.write("# Verification Result: reference spectrum\n\n")
        f.write(f"**Date**: {date}\n")
        f.write(f"**Status**: {'SUCCESS' if success else 'FAILED'}\n\n")
        f.write("## Details\n")
        f.write(f"- **Calibrated C**: {setup.capacitance:.6e} F\n")
        f.write(f"- **Elapsed Time**: {elapsed:.2f}s\n")
        for name, value, ok in checks:
            f.write(f"- **{name}**: {value:.6e} ({'ok' if ok else 'out of band'})\n")
    print(f"Result saved to {result_path}")
    return 0 if success else 1


if __name__ == "__main__":
    sys.exit(main())
