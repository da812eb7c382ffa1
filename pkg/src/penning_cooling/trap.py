"""Penning trap frequencies and axial mode structure of small ion crystals.

All frequencies are ordinary (cyclic) frequencies in Hz. Nothing in this
module uses angular frequencies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

CA40_MASS = 39.9625909 * constants.atomic_mass
ELEMENTARY_CHARGE = constants.e
WAVELENGTH_729 = 729e-9


class TrapStabilityError(ValueError):
    """Raised when a trap or crystal configuration has no stable solution."""


@dataclass(frozen=True)
class TrapConfig:
    magnetic_field: float
    axial_frequency: float
    ion_mass: float = CA40_MASS
    ion_charge: float = ELEMENTARY_CHARGE
    wavelength: float = WAVELENGTH_729

    def __post_init__(self):
        for name in ("ion_mass", "ion_charge", "wavelength"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.magnetic_field < 0 or self.axial_frequency < 0:
            raise ValueError("magnetic_field and axial_frequency must be non-negative")

    @classmethod
    def from_cyclotron_frequency(cls, cyclotron: float, axial_frequency: float, **kw) -> "TrapConfig":
        """Build a config whose cyclotron frequency is exactly `cyclotron`."""
        mass = kw.get("ion_mass", CA40_MASS)
        charge = kw.get("ion_charge", ELEMENTARY_CHARGE)
        field_ = 2 * math.pi * mass * cyclotron / charge
        return cls(magnetic_field=field_, axial_frequency=axial_frequency, **kw)

    @property
    def cyclotron(self) -> float:
        return cyclotron_frequency(self)


def cyclotron_frequency(cfg: TrapConfig) -> float:
    """Free-particle cyclotron frequency qB/(2 pi M) in Hz."""
    return cfg.ion_charge * cfg.magnetic_field / (2 * math.pi * cfg.ion_mass)


def radial_frequencies(cfg: TrapConfig) -> tuple[float, float]:
    """Modified-cyclotron and magnetron frequencies ``(nu_plus, nu_minus)``."""
    nu_c = cyclotron_frequency(cfg)
    radicand = nu_c**2 / 4 - cfg.axial_frequency**2 / 2
    if radicand < 0:
        raise TrapStabilityError(
            f"unstable trap: nu_c^2/4 - nu_z^2/2 = {radicand:.6g} Hz^2 < 0"
        )
    root = math.sqrt(radicand)
    return nu_c / 2 + root, nu_c / 2 - root


def effective_radial_frequency(rotation: float, cfg: TrapConfig) -> float:
    """Radial confinement frequency seen in the frame rotating at `rotation`.

    Maximal at half the cyclotron frequency and symmetric about it.
    """
    nu_c = cyclotron_frequency(cfg)
    radicand = rotation * (nu_c - rotation) - cfg.axial_frequency**2 / 2
    if radicand < 0:
        # exact zero at the boundary can come out as -1e-9 from rounding
        scale = max(rotation * nu_c, cfg.axial_frequency**2, 1.0)
        if radicand > -1e-12 * scale:
            return 0.0
        raise TrapStabilityError(
            f"rotation frequency {rotation:.6g} Hz gives no radial confinement"
        )
    return math.sqrt(radicand)


def tilt_frequency(rotation: float, cfg: TrapConfig) -> float:
    nu_eff = effective_radial_frequency(rotation, cfg)
    if nu_eff > cfg.axial_frequency:
        raise TrapStabilityError(
            f"nu_eff = {nu_eff:.6g} Hz exceeds nu_z; a planar crystal is not stable"
        )
    return math.sqrt(cfg.axial_frequency**2 - nu_eff**2)


@dataclass(frozen=True)
class RotationEstimate:
    primary: float
    secondary: float


def rotation_from_tilt(tilt: float, cfg: TrapConfig) -> RotationEstimate:
    """Invert the tilt-mode frequency for the crystal rotation frequency.

    ``nu_r (nu_c - nu_r) = nu_z^2 - nu_tilt^2 + nu_z^2 / 2`` has two roots placed
    symmetrically about nu_c / 2. The lower one (close to the magnetron
    frequency) is returned as ``primary``.
    """
    nu_z = cfg.axial_frequency
    if not 0 < tilt <= nu_z:
        raise TrapStabilityError(f"tilt frequency must lie in (0, nu_z], got {tilt:.6g} Hz")
    nu_c = cyclotron_frequency(cfg)
    product = 1.5 * nu_z**2 - tilt**2
    disc = nu_c**2 / 4 - product
    if disc < 0:
        raise TrapStabilityError("no rotation frequency reproduces this tilt frequency")
    root = math.sqrt(disc)
    lower = nu_c / 2 - root
    # stable, but cancellation-prone: recompute the small root from the product
    if lower > 0:
        lower = product / (nu_c / 2 + root)
    return RotationEstimate(primary=lower, secondary=nu_c - lower)


class Geometry(str, enum.Enum):
    AXIAL_STRING = "string"
    PLANAR = "planar"


class ModeLabel(str, enum.Enum):
    COM = "COM"
    BREATHING = "Breathing"
    TILT = "Tilt"


@dataclass(frozen=True)
class CrystalConfig:
    ion_count: int
    geometry: Geometry = Geometry.AXIAL_STRING
    rotation_frequency: float | None = None

    def __post_init__(self):
        if self.ion_count not in (1, 2, 3):
            raise ValueError(f"ion_count must be 1, 2 or 3, got {self.ion_count}")
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        if self.geometry is Geometry.PLANAR and self.ion_count > 1:
            if self.rotation_frequency is None:
                raise ValueError("planar crystals need a rotation frequency")


@dataclass(frozen=True)
class AxialMode:
    label: ModeLabel
    frequency: float
    eta: float
    # per-ion Lamb-Dicke magnitudes; participation holds the displacement signs
    lamb_dicke: tuple[float, ...]
    participation: tuple[int, ...] = field(default=())

    def signed_lamb_dicke(self) -> np.ndarray:
        return np.asarray(self.lamb_dicke) * np.asarray(self.participation)


@dataclass(frozen=True)
class ModeSet:
    trap: TrapConfig
    crystal: CrystalConfig
    modes: tuple[AxialMode, ...]

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return len(self.modes)

    def __getitem__(self, i):
        return self.modes[i]

    @property
    def frequencies(self) -> tuple[float, ...]:
        return tuple(m.frequency for m in self.modes)

    @property
    def etas(self) -> tuple[float, ...]:
        return tuple(m.eta for m in self.modes)


def single_ion_lamb_dicke(trap: TrapConfig, frequency: float | None = None) -> float:
    """eta_0 = sqrt(h / (2 M nu)) / lambda."""
    nu = trap.axial_frequency if frequency is None else frequency
    return math.sqrt(constants.h / (2 * trap.ion_mass * nu)) / trap.wavelength


def check_crystal(trap: TrapConfig, crystal: CrystalConfig) -> None:
    """Raise TrapStabilityError if the crystal cannot exist in this trap."""
    nu_plus, nu_minus = radial_frequencies(trap)
    if crystal.ion_count == 1:
        return
    nu_z = trap.axial_frequency
    nu_r = crystal.rotation_frequency
    if crystal.geometry is Geometry.PLANAR:
        if not nu_minus < nu_r < nu_plus:
            raise TrapStabilityError(
                f"rotation frequency {nu_r:.6g} Hz outside ({nu_minus:.6g}, {nu_plus:.6g}) Hz"
            )
        if effective_radial_frequency(nu_r, trap) >= nu_z:
            raise TrapStabilityError("nu_eff >= nu_z: the crystal forms a string, not a plane")
    else:
        if nu_r is None:
            nu_r = cyclotron_frequency(trap) / 2
        elif not nu_minus < nu_r < nu_plus:
            raise TrapStabilityError(
                f"rotation frequency {nu_r:.6g} Hz outside ({nu_minus:.6g}, {nu_plus:.6g}) Hz"
            )
        if effective_radial_frequency(nu_r, trap) <= nu_z:
            raise TrapStabilityError("nu_eff <= nu_z: an axial string is not stable")


def lamb_dicke_parameters(trap: TrapConfig, crystal: CrystalConfig) -> dict[ModeLabel, float]:
    """Per-ion Lamb-Dicke parameter of each axial mode (COM, breathing, tilt)."""
    eta0 = single_ion_lamb_dicke(trap)
    n = crystal.ion_count
    if n == 1:
        return {ModeLabel.COM: eta0}
    eta_com = eta0 / math.sqrt(n)
    if crystal.geometry is Geometry.AXIAL_STRING:
        if n != 2:
            raise ValueError("only one- and two-ion strings are supported")
        return {ModeLabel.COM: eta_com, ModeLabel.BREATHING: eta0 / math.sqrt(2 * math.sqrt(3))}
    # tilt taken equal to COM; no correction formula available
    return {ModeLabel.COM: eta_com, ModeLabel.TILT: eta_com}


def mode_set(trap: TrapConfig, crystal: CrystalConfig) -> ModeSet:
    check_crystal(trap, crystal)
    nu_z = trap.axial_frequency
    n = crystal.ion_count
    etas = lamb_dicke_parameters(trap, crystal)
    com = AxialMode(ModeLabel.COM, nu_z, etas[ModeLabel.COM],
                    (etas[ModeLabel.COM],) * n, (1,) * n)
    if n == 1:
        return ModeSet(trap, crystal, (com,))
    if crystal.geometry is Geometry.AXIAL_STRING:
        eta_b = etas[ModeLabel.BREATHING]
        breathing = AxialMode(ModeLabel.BREATHING, math.sqrt(3) * nu_z, eta_b,
                              (eta_b, eta_b), (1, -1))
        return ModeSet(trap, crystal, (com, breathing))

    nu_tilt = tilt_frequency(crystal.rotation_frequency, trap)
    eta_t = etas[ModeLabel.TILT]
    if n == 2:
        tilt = AxialMode(ModeLabel.TILT, nu_tilt, eta_t, (eta_t, eta_t), (1, -1))
        return ModeSet(trap, crystal, (com, tilt))
    # three ions on a triangle: orthonormal out-of-plane vectors orthogonal to COM
    # rotated within the degenerate pair so that every ion takes part in both modes
    a = np.array([2.0, -1.0, -1.0]) / math.sqrt(6)
    b = np.array([0.0, 1.0, -1.0]) / math.sqrt(2)
    vectors = ((a + b) / math.sqrt(2), (a - b) / math.sqrt(2))
    tilts = []
    for v in vectors:
        per_ion = eta_t * math.sqrt(n) * v
        tilts.append(AxialMode(ModeLabel.TILT, nu_tilt, eta_t,
                               tuple(float(abs(x)) for x in per_ion),
                               tuple(int(np.sign(x)) for x in per_ion)))
    return ModeSet(trap, crystal, (com, *tilts))
