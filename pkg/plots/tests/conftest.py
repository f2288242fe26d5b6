import os
import subprocess
import sys

import pytest

EXPERIMENTS = [
    "linear_quadratic",
    "linear_quartic",
    "linear_sextic",
    "fpk_quadratic",
    "fpk_quartic",
    "fpk_sextic",
    "porous",
    "keller_segel",
]


def run_wgf(args):
    proc = subprocess.run(
        ["wgf", *args], capture_output=True, text=True
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"wgf {' '.join(args)} failed ({proc.returncode}):\n"
            f"{proc.stdout}\n{proc.stderr}"
        )
    return proc.stdout


@pytest.fixture(scope="session")
def desk_artifacts(tmp_path_factory):
    """Desk-scale CSVs for every experiment plus one sweep, via the CLI."""
    root = tmp_path_factory.mktemp("desk")
    paths = {}
    for name in EXPERIMENTS:
        out = root / name
        run_wgf(["run", name, "--desk-scale", "--out", str(out)])
        paths[name] = out
    sweep_out = root / "sweep"
    run_wgf([
        "sweep-n", "linear_quartic", "--desk-scale",
        "--n-list", "8,16,32,64", "--subsets", "b,both",
        "--out", str(sweep_out),
    ])
    paths["sweep"] = sweep_out
    return paths
