"""Dimensional basin parameters and the nondimensional numbers they imply."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple


@dataclass(frozen=True)
class PhysicalParameters:
    """SI inputs for a wind-driven basin.

    ``f0`` is carried for completeness only: the constant part of the
    Coriolis parameter drops out of the streamfunction equation.
    """

    tau0: float         # wind-stress amplitude [N/m^2]
    rho: float          # density [kg/m^3]
    depth: float        # fluid depth H [m]
    beta: float         # Coriolis gradient [1/(m s)]
    length: float       # basin width L [m]
    viscosity: float    # eddy viscosity A [m^2/s]
    f0: float = 1e-4    # reference Coriolis parameter [1/s]

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"physical parameter {f.name} must be positive, got {value!r}")


class Scales(NamedTuple):
    U: float            # Sverdrup velocity [m/s]
    Ro: float
    Re: float
    time_scale: float   # L / U [s]
    psi_scale: float    # U L [m^2/s]


def nondimensionalize(p: PhysicalParameters) -> Scales:
    U = p.tau0 / (p.rho * p.depth * p.beta * p.length)
    Ro = U / (p.beta * p.length ** 2)
    Re = U * p.length / p.viscosity
    return Scales(U, Ro, Re, p.length / U, U * p.length)
