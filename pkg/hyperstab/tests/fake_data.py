from pathlib import Path

import numpy as np

from hyperstab.solver.grid import ComponentProfile, InitialData
from hyperstab.system_model import BoundaryCoupling, HyperbolicSystem, SpeedProfile

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

BUMP = (0.0, 0.0, 1.0, -2.0, 1.0)  # x^2 (1-x)^2
MID_BUMP = (0.0, 0.0, 1.0, -6.0, 13.0, -12.0, 4.0)  # x^2 (1-2x)^2 (1-x)^2

B_K1M1 = [[0.8]]
B_K1M2 = [[1.0, 2.0]]
B_K2M1 = [[0.5], [1.0]]
B_K2M2 = [[1.0, 2.0], [3.0, 4.0]]
QUADRATIC_K1M2 = [[[0.0, 0.0], [0.0, 1.0]]]  # v2^2 in the only row


def make_system(k, m, speeds, matrix, quadratic=None, y_max=0.0) -> HyperbolicSystem:
    """speeds: one tuple of ascending polynomial coefficients per family."""
    return HyperbolicSystem(
        k=k,
        m=m,
        speeds=tuple(SpeedProfile(base=tuple(s)) for s in speeds),
        coupling=BoundaryCoupling(
            matrix=np.array(matrix, dtype=float),
            quadratic=None if quadratic is None else np.array(quadratic, dtype=float),
        ),
        y_max=y_max,
    )


K1M1 = make_system(1, 1, [(1.0,), (1.0,)], B_K1M1)
K1M2 = make_system(1, 2, [(1.0,), (1.0,), (2.0,)], B_K1M2)
K2M1 = make_system(2, 1, [(2.0,), (1.0,), (1.0,)], B_K2M1)
# Leftward speeds 1 + x and 3 + x.
K1M2_RAMPED = make_system(1, 2, [(1.0,), (1.0, 1.0), (3.0, 1.0)], B_K1M2)

SINE_K1M1 = InitialData(components=(ComponentProfile(sine=(0.8,)), ComponentProfile(sine=(1.0,))))
SINE_K1M2 = InitialData(
    components=(
        ComponentProfile(sine=(1.0,)),
        ComponentProfile(sine=(0.0, 1.0)),
        ComponentProfile(sine=(1.0,)),
    )
)
BUMP_K1M2 = InitialData(
    components=(
        ComponentProfile(poly=BUMP),
        ComponentProfile(poly=MID_BUMP),
        ComponentProfile(poly=BUMP),
    )
)
BUMP_K2M1 = InitialData(components=tuple(ComponentProfile(poly=BUMP) for _ in range(3)))

MINIMAL_YAML = """
k: 1
m: 1
speeds:
- coefficients: [1.0]
- coefficients: [1.0]
coupling:
  matrix: [[0.8]]
"""

ZERO_K_YAML = """
k: 0
m: 1
speeds:
- coefficients: [1.0]
coupling:
  matrix: [[0.8]]
"""

SHAPE_MISMATCH_YAML = """
k: 1
m: 2
speeds:
- coefficients: [1.0]
- coefficients: [1.0]
- coefficients: [2.0]
coupling:
  matrix: [[1.0, 2.0, 3.0]]
"""

FULL_YAML = """
name: full
k: 1
m: 2
speeds:
- coefficients: [1.0]
  state_coupling: [0.05, 0.0, 0.0]
- coefficients: [1.0, 0.5]
- coefficients: [2.0]
y_max: 0.01
coupling:
  matrix: [[1.0, 2.0]]
  quadratic: [[[0.0, 0.0], [0.0, 1.0]]]
initial:
- poly: [0.0, 0.0, 0.01, -0.02, 0.01]
- sine: [0.0, 0.01]
- samples: [0.0, 0.001, 0.0]
feedback: nonlinear
numerics: {nx: 101, cfl: 0.5, solver: characteristic, cadence: 2}
lyapunov: {q: [1.0, 2.0], Lambda: [1.5], gamma: 4.0, kappa: 3.0}
horizon: 2.25
delta: 0.1
epsilon: 0.5
snapshots: [0.5, 1.0]
output_dir: out
seed: 7
"""
