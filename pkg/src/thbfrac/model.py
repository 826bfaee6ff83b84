"""Phase-field model catalogue: material parameters, degradation function and
the dissipation-density coefficient table for AT1/AT2 of second/fourth order.

The crack surface density is written in the common form

    c_d * d^beta + c_g * |grad d|^2 + c_l * (lap d)^2

with (c_d, c_g, c_l) per model family/order (lengths in mm):

    AT2, order II :  beta=2, ( 1/(2 l0),      l0/2,     0          )
    AT2, order IV :  beta=2, ( 1/(2 l0),      l0/4,     l0^3/32    )
    AT1, order II :  beta=1, ( 3/(8 l0),      3 l0/8,   0          )
    AT1, order IV :  beta=1, ( 1/(c_r l0),    l0/c_r,   r l0^3/c_r )

with the fourth-order AT1 normalization c_r = 4.4485 and r = 1. The AT1-IV
coefficients are fixed by that normalization: the 1D profile minimizing
d + l0^2 |d'|^2 + r l0^4 (d'')^2 dissipates exactly c_r * l0 per unit crack
area for c_r = 4.4485 (the variant with a half gradient weight would need
c_r = 4.055 and is not what the quoted constant normalizes).
"""

from __future__ import annotations

from dataclasses import dataclass, field


AT1_RHO = 1.0
AT1_C_RHO = 4.4485


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic elastic constants plus fracture parameters (kN, mm).

    Plane strain is assumed; the 2D bulk modulus is the unique value for
    which the volumetric/deviatoric split reproduces the undamaged isotropic
    energy: K2d = lambda + mu.
    """

    E: float = 210.0          # Young's modulus [kN/mm^2]
    nu: float = 0.3           # Poisson ratio
    Gc: float = 2.7e-3        # toughness [kN/mm]
    l0: float = 0.015         # internal length [mm]
    eta: float = 1e-8         # residual stiffness

    def __post_init__(self):
        if not (self.E > 0 and 0 <= self.nu < 0.5 and self.Gc > 0
                and self.l0 > 0 and 0 < self.eta < 1e-2):
            raise ValueError("invalid material parameters")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def K2d(self) -> float:
        return self.lam + self.mu


@dataclass(frozen=True)
class ModelSpec:
    """Which dissipation functional: family 'at1'|'at2', order 2|4."""

    family: str = "at2"
    order: int = 2
    rho: float = AT1_RHO
    c_rho: float = AT1_C_RHO

    def __post_init__(self):
        if self.family not in ("at1", "at2"):
            raise ValueError("family must be 'at1' or 'at2'")
        if self.order not in (2, 4):
            raise ValueError("order must be 2 or 4")

    @property
    def beta(self) -> int:
        return 1 if self.family == "at1" else 2

    def coefficients(self, l0: float) -> tuple[float, float, float]:
        """(c_d, c_g, c_l) of the dissipation density for internal length l0."""
        if self.family == "at2":
            if self.order == 2:
                return 1.0 / (2 * l0), l0 / 2.0, 0.0
            return 1.0 / (2 * l0), l0 / 4.0, l0 ** 3 / 32.0
        if self.order == 2:
            return 3.0 / (8 * l0), 3.0 * l0 / 8.0, 0.0
        return (1.0 / (self.c_rho * l0), l0 / self.c_rho,
                self.rho * l0 ** 3 / self.c_rho)

    @property
    def label(self) -> str:
        return f"{self.family}-order{self.order}"


def degradation(d, eta: float = 1e-8):
    """Stiffness multiplier (1-d)^2 + eta (monotone on [0,1])."""
    return (1.0 - d) ** 2 + eta


def degradation_derivative(d):
    return -2.0 * (1.0 - d)


def dissipation_density(spec: ModelSpec, l0: float, d, grad_sq, lap):
    """Crack surface density per unit area (multiply by Gc for energy).

    ``grad_sq`` is |grad d|^2 and ``lap`` the Laplacian of d.
    """
    c_d, c_g, c_l = spec.coefficients(l0)
    return c_d * d ** spec.beta + c_g * grad_sq + c_l * lap ** 2
