"""Hardware-impairment specification and construction of the true arrays."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .arraymodel import REFERENCE_COUPLING, ArrayModel, CouplingSpec, coupling_from_decay, coupling_matrix, impaired_array

KINDS = ("none", "spacing", "coupling", "decay")


@dataclass(frozen=True)
class ImpairmentSpec:
    """``sigma_lambda`` is in metres; ``zeta`` only applies to kind ``decay``."""

    kind: str = "none"
    sigma_lambda: float = 0.0
    coupling: CouplingSpec = REFERENCE_COUPLING
    zeta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"impairment kind must be one of {KINDS}")
        if self.sigma_lambda < 0:
            raise ValueError("sigma_lambda must be non-negative")
        if self.kind == "spacing" and self.sigma_lambda == 0:
            raise ValueError("spacing impairment needs sigma_lambda > 0")
        if self.kind == "decay" and (self.zeta is None or not self.zeta < 0):
            raise ValueError("decay impairment needs zeta < 0")

    @property
    def random(self) -> bool:
        return self.kind == "spacing"

    def true_array(self, n_tx: int, wavelength: float, rng: Optional[np.random.Generator] = None) -> ArrayModel:
        if self.kind == "spacing":
            return impaired_array(n_tx, wavelength, rng, self.sigma_lambda)
        if self.kind == "coupling":
            return ArrayModel.ideal(n_tx, wavelength).with_coupling(coupling_matrix(self.coupling, n_tx))
        if self.kind == "decay":
            return ArrayModel.ideal(n_tx, wavelength).with_coupling(
                coupling_from_decay(self.zeta, n_tx, self.coupling))
        return ArrayModel.ideal(n_tx, wavelength)

    def true_arrays(self, n_bs: int, n_tx: int, wavelength: float,
                    rng: Optional[np.random.Generator] = None) -> List[ArrayModel]:
        """One manufactured array per BS."""
        return [self.true_array(n_tx, wavelength, rng) for _ in range(n_bs)]
