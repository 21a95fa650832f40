"""Underwater optical wireless channel model.

Attenuation of seawater as absorption + scattering (chlorophyll-driven
Haltrin-style coefficient model), a point-to-point link budget for a
diverging beam, and inversion of the link budget into a range estimate
via the principal branch of the Lambert W function.

Core pieces:
  - AttenuationTable / WaterPreset: config-file data (packaged defaults)
  - WaterModel: wavelength + chlorophyll with derived a/s/e coefficients
  - absorption_coefficient / scattering_coefficient: spectral model
  - OpticalLink, received_power: link budget
  - lambert_w0, estimate_range: range inversion with optional Gaussian
    ranging noise

All distances in meters, wavelengths in nanometers, powers in watts,
angles in radians, coefficients in 1/m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

# Acid absorption strengths (m^2/mg) of the chlorophyll-coupled model.
FULVIC_ABSORPTION = 35.959
HUMIC_ABSORPTION = 18.828

# Chlorophyll validity range of the coefficient model (mg/m^3).
CHLOROPHYLL_MAX = 12.0
REFERENCE_CHLOROPHYLL = 1.0

# Visible band covered by the packaged attenuation table (nm).
WAVELENGTH_MIN = 400.0
WAVELENGTH_MAX = 700.0

_TWO_PI = 2.0 * math.pi


class WaterConfigError(ValueError):
    """Malformed water table / preset file; message carries the line number."""


# ---------------------------------------------------------------------------
# config-file data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttenuationTable:
    """Wavelength-indexed pure-water and chlorophyll absorption curves.

    ``pure_water`` and ``chlorophyll`` are sampled on ``wavelengths_nm``
    (both 1/m) and evaluated by linear interpolation.  ``kappa_f`` and
    ``kappa_h`` are the spectral slopes (1/nm) of the fulvic / humic acid
    terms; they live in the same config file so the whole spectral model
    is a versioned data artifact rather than code constants.
    """

    wavelengths_nm: np.ndarray
    pure_water: np.ndarray
    chlorophyll: np.ndarray
    kappa_f: float
    kappa_h: float

    def pure_water_at(self, wavelength_nm: float) -> float:
        return float(np.interp(wavelength_nm, self.wavelengths_nm, self.pure_water))

    def chlorophyll_at(self, wavelength_nm: float) -> float:
        return float(np.interp(wavelength_nm, self.wavelengths_nm, self.chlorophyll))


@dataclass(frozen=True)
class WaterPreset:
    """Named bulk water type with fixed absorption/scattering (1/m)."""

    name: str
    absorption: float
    scattering: float

    @property
    def extinction(self) -> float:
        return self.absorption + self.scattering


def _config_lines(text: str):
    """Yield (line_number, stripped_line) skipping blanks and comments."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def load_attenuation_table(path: Optional[Path] = None) -> AttenuationTable:
    """Parse an attenuation table file.

    Format: optional ``key = value`` constant lines, one header line
    ``lambda_nm,b_w,b_cl``, then comma-separated numeric rows.  Blank
    lines and ``#`` comments are ignored.  Raises WaterConfigError with
    the offending line number on any malformed content.
    """
    if path is None:
        text = resources.files("uowlab.data").joinpath("water_attenuation.csv").read_text()
        source = "<packaged water_attenuation.csv>"
    else:
        text = Path(path).read_text()
        source = str(path)

    constants = {}
    header_seen = False
    rows = []
    for lineno, line in _config_lines(text):
        if not header_seen and "=" in line:
            key, _, value = line.partition("=")
            try:
                constants[key.strip()] = float(value)
            except ValueError:
                raise WaterConfigError(
                    f"{source}:{lineno}: bad constant line {line!r}") from None
            continue
        if not header_seen:
            if line.replace(" ", "") != "lambda_nm,b_w,b_cl":
                raise WaterConfigError(
                    f"{source}:{lineno}: expected header 'lambda_nm,b_w,b_cl', got {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise WaterConfigError(f"{source}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            rows.append(tuple(float(p) for p in parts))
        except ValueError:
            raise WaterConfigError(f"{source}:{lineno}: non-numeric value in {line!r}") from None

    if not header_seen:
        raise WaterConfigError(f"{source}: missing 'lambda_nm,b_w,b_cl' header line")
    if len(rows) < 2:
        raise WaterConfigError(f"{source}: need at least two table rows")
    for key in ("kappa_f", "kappa_h"):
        if key not in constants:
            raise WaterConfigError(f"{source}: missing constant {key!r}")

    data = np.asarray(rows, dtype=float)
    order = np.argsort(data[:, 0])
    return AttenuationTable(
        wavelengths_nm=data[order, 0],
        pure_water=data[order, 1],
        chlorophyll=data[order, 2],
        kappa_f=constants["kappa_f"],
        kappa_h=constants["kappa_h"],
    )


def load_water_presets(path: Optional[Path] = None) -> dict[str, WaterPreset]:
    """Parse the named water presets file (header ``name,absorption,scattering``)."""
    if path is None:
        text = resources.files("uowlab.data").joinpath("water_presets.csv").read_text()
        source = "<packaged water_presets.csv>"
    else:
        text = Path(path).read_text()
        source = str(path)

    header_seen = False
    presets: dict[str, WaterPreset] = {}
    for lineno, line in _config_lines(text):
        if not header_seen:
            if line.replace(" ", "") != "name,absorption,scattering":
                raise WaterConfigError(
                    f"{source}:{lineno}: expected header 'name,absorption,scattering'")
            header_seen = True
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise WaterConfigError(f"{source}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            preset = WaterPreset(parts[0], float(parts[1]), float(parts[2]))
        except ValueError:
            raise WaterConfigError(f"{source}:{lineno}: non-numeric value in {line!r}") from None
        if preset.absorption < 0 or preset.scattering < 0:
            raise WaterConfigError(f"{source}:{lineno}: coefficients must be non-negative")
        presets[preset.name] = preset
    if not header_seen:
        raise WaterConfigError(f"{source}: missing 'name,absorption,scattering' header line")
    return presets


_DEFAULT_TABLE: Optional[AttenuationTable] = None
_DEFAULT_PRESETS: Optional[dict[str, WaterPreset]] = None


def default_attenuation_table() -> AttenuationTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_attenuation_table()
    return _DEFAULT_TABLE


def default_water_presets() -> dict[str, WaterPreset]:
    global _DEFAULT_PRESETS
    if _DEFAULT_PRESETS is None:
        _DEFAULT_PRESETS = load_water_presets()
    return _DEFAULT_PRESETS


# ---------------------------------------------------------------------------
# water model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaterModel:
    """Water column description with derived attenuation coefficients.

    ``extinction`` is always ``absorption + scattering`` exactly; the
    factories below are the supported ways to build a consistent value.

    Attributes:
        wavelength_nm: Operating wavelength (nm).
        chlorophyll: Chlorophyll concentration C_e (mg/m^3), in [0, 12].
        reference_chlorophyll: Normalizing concentration C_e0 (mg/m^3).
        absorption: Absorption coefficient (1/m).
        scattering: Scattering coefficient (1/m).
        extinction: Total attenuation, absorption + scattering (1/m).
    """

    wavelength_nm: float
    chlorophyll: float
    reference_chlorophyll: float
    absorption: float
    scattering: float
    extinction: float

    def __post_init__(self):
        if self.absorption < 0:
            raise ValueError(f"absorption must be >= 0, got {self.absorption}")
        if self.scattering < 0:
            raise ValueError(f"scattering must be >= 0, got {self.scattering}")
        if self.extinction != self.absorption + self.scattering:
            raise ValueError("extinction must equal absorption + scattering exactly")

    @classmethod
    def from_chlorophyll(
        cls,
        wavelength_nm: float,
        chlorophyll: float,
        reference_chlorophyll: float = REFERENCE_CHLOROPHYLL,
        table: Optional[AttenuationTable] = None,
    ) -> "WaterModel":
        """Derive coefficients from wavelength and chlorophyll concentration."""
        _check_spectral_domain(wavelength_nm, chlorophyll)
        table = table if table is not None else default_attenuation_table()
        absorption = _absorption(wavelength_nm, chlorophyll, reference_chlorophyll, table)
        scattering = _scattering(wavelength_nm, chlorophyll, reference_chlorophyll)
        return cls(
            wavelength_nm=wavelength_nm,
            chlorophyll=chlorophyll,
            reference_chlorophyll=reference_chlorophyll,
            absorption=absorption,
            scattering=scattering,
            extinction=absorption + scattering,
        )

    @classmethod
    def from_coefficients(
        cls,
        absorption: float,
        scattering: float,
        wavelength_nm: float = 532.0,
        chlorophyll: float = 0.0,
    ) -> "WaterModel":
        """Build a model from explicit bulk coefficients (preset-style)."""
        return cls(
            wavelength_nm=wavelength_nm,
            chlorophyll=chlorophyll,
            reference_chlorophyll=REFERENCE_CHLOROPHYLL,
            absorption=absorption,
            scattering=scattering,
            extinction=absorption + scattering,
        )

    @classmethod
    def preset(cls, name: str) -> "WaterModel":
        """Look up one of the named water types (pure_sea, clear_ocean, ...)."""
        presets = default_water_presets()
        if name not in presets:
            raise KeyError(f"unknown water preset {name!r}; have {sorted(presets)}")
        p = presets[name]
        return cls.from_coefficients(p.absorption, p.scattering)


def _check_spectral_domain(wavelength_nm: float, chlorophyll: float) -> None:
    if not WAVELENGTH_MIN <= wavelength_nm <= WAVELENGTH_MAX:
        raise ValueError(
            f"wavelength_nm must be within [{WAVELENGTH_MIN:.0f}, {WAVELENGTH_MAX:.0f}] nm, "
            f"got {wavelength_nm}")
    if not 0.0 <= chlorophyll <= CHLOROPHYLL_MAX:
        raise ValueError(
            f"chlorophyll must be within [0, {CHLOROPHYLL_MAX:.0f}] mg/m^3, got {chlorophyll}")


# ---------------------------------------------------------------------------
# spectral coefficient model
# ---------------------------------------------------------------------------

def fulvic_concentration(chlorophyll: float, reference: float = REFERENCE_CHLOROPHYLL) -> float:
    """Fulvic acid concentration (mg/m^3) driven by chlorophyll."""
    return 1.74098 * chlorophyll * math.exp(0.12327 * chlorophyll / reference)


def humic_concentration(chlorophyll: float, reference: float = REFERENCE_CHLOROPHYLL) -> float:
    """Humic acid concentration (mg/m^3) driven by chlorophyll."""
    return 0.19334 * chlorophyll * math.exp(0.12343 * chlorophyll / reference)


def small_particle_concentration(chlorophyll: float,
                                 reference: float = REFERENCE_CHLOROPHYLL) -> float:
    """Small suspended particle concentration (g/m^3)."""
    return 0.01739 * chlorophyll * math.exp(0.11631 * chlorophyll / reference)


def large_particle_concentration(chlorophyll: float,
                                 reference: float = REFERENCE_CHLOROPHYLL) -> float:
    """Large suspended particle concentration (g/m^3)."""
    return 0.76284 * chlorophyll * math.exp(0.03092 * chlorophyll / reference)


def pure_water_scattering(wavelength_nm: float) -> float:
    """Rayleigh-like scattering of pure water, 0.005826 (400/lambda)^4.322 (1/m)."""
    return 0.005826 * (400.0 / wavelength_nm) ** 4.322


def small_particle_scattering(wavelength_nm: float) -> float:
    """Specific scattering of small particles, 1.151302 (400/lambda)^1.7 (m^2/g)."""
    return 1.151302 * (400.0 / wavelength_nm) ** 1.7


def large_particle_scattering(wavelength_nm: float) -> float:
    """Specific scattering of large particles, 0.341074 (400/lambda)^0.3 (m^2/g)."""
    return 0.341074 * (400.0 / wavelength_nm) ** 0.3


def _absorption(wavelength_nm, chlorophyll, reference, table: AttenuationTable) -> float:
    acids = (
        FULVIC_ABSORPTION
        * fulvic_concentration(chlorophyll, reference)
        * math.exp(-table.kappa_f * wavelength_nm)
        + HUMIC_ABSORPTION
        * humic_concentration(chlorophyll, reference)
        * math.exp(-table.kappa_h * wavelength_nm)
    )
    return table.pure_water_at(wavelength_nm) + table.chlorophyll_at(wavelength_nm) + acids


def _scattering(wavelength_nm, chlorophyll, reference) -> float:
    return (
        pure_water_scattering(wavelength_nm)
        + small_particle_scattering(wavelength_nm)
        * small_particle_concentration(chlorophyll, reference)
        + large_particle_scattering(wavelength_nm)
        * large_particle_concentration(chlorophyll, reference)
    )


def absorption_coefficient(water: WaterModel,
                           table: Optional[AttenuationTable] = None) -> float:
    """Absorption coefficient (1/m) at the model's wavelength and chlorophyll.

    Sum of pure-water and chlorophyll curves from the attenuation table
    plus the exponential fulvic/humic acid terms.  Raises ValueError when
    wavelength or chlorophyll leave the model's validity domain.
    """
    _check_spectral_domain(water.wavelength_nm, water.chlorophyll)
    table = table if table is not None else default_attenuation_table()
    return _absorption(water.wavelength_nm, water.chlorophyll,
                       water.reference_chlorophyll, table)


def scattering_coefficient(water: WaterModel) -> float:
    """Scattering coefficient (1/m): pure water plus particle terms."""
    _check_spectral_domain(water.wavelength_nm, water.chlorophyll)
    return _scattering(water.wavelength_nm, water.chlorophyll,
                       water.reference_chlorophyll)


# ---------------------------------------------------------------------------
# link budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpticalLink:
    """Geometry and hardware of one directed optical link.

    Attributes:
        tx_power: Transmit optical power (W), > 0.
        tx_efficiency: Transmitter optical efficiency, (0, 1].
        rx_efficiency: Receiver optical efficiency, (0, 1].
        rx_aperture: Receiver aperture area (m^2), > 0.
        divergence: Transmitter divergence angle (rad), (0, pi].
        incidence: Angle between beam axis and receiver normal (rad), [0, pi/2).
        distance: Transmitter-receiver separation (m).
    """

    tx_power: float
    tx_efficiency: float
    rx_efficiency: float
    rx_aperture: float
    divergence: float
    incidence: float = 0.0
    distance: float = 1.0

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError(f"tx_power must be > 0, got {self.tx_power}")
        for field_name in ("tx_efficiency", "rx_efficiency"):
            value = getattr(self, field_name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{field_name} must be in (0, 1], got {value}")
        if self.rx_aperture <= 0:
            raise ValueError(f"rx_aperture must be > 0, got {self.rx_aperture}")
        if not 0.0 < self.divergence <= math.pi:
            raise ValueError(f"divergence must be in (0, pi], got {self.divergence}")
        if not 0.0 <= self.incidence < math.pi / 2:
            raise ValueError(f"incidence must be in [0, pi/2), got {self.incidence}")


def received_power(link: OpticalLink, water: WaterModel) -> float:
    """Received power (W) of a diverging beam through attenuating water.

    P_r = P_t dt dr exp(-e d / cos(theta)) * B_r cos(theta)
          / (2 pi d^2 (1 - cos(theta_0)))

    Strictly decreasing in distance and in the extinction coefficient.
    """
    if link.distance <= 0:
        raise ValueError(f"distance must be > 0, got {link.distance}")
    cos_inc = math.cos(link.incidence)
    geom = 1.0 - math.cos(link.divergence)
    if geom <= 0.0:
        raise ValueError("divergence of 0 makes the beam footprint degenerate")
    attenuation = math.exp(-water.extinction * link.distance / cos_inc)
    return (
        link.tx_power * link.tx_efficiency * link.rx_efficiency
        * attenuation
        * link.rx_aperture * cos_inc
        / (_TWO_PI * link.distance ** 2 * geom)
    )


# ---------------------------------------------------------------------------
# Lambert W and range inversion
# ---------------------------------------------------------------------------

def lambert_w0(x: float, tol: float = 1e-14, max_iter: int = 50) -> float:
    """Principal branch of the Lambert W function for x >= -1/e.

    Halley iteration seeded from a log-based initial guess; converges
    quadratically on the non-negative arguments used by the range
    inversion.  Satisfies w * exp(w) = x to ~1e-14 relative.
    """
    if x < -math.exp(-1.0):
        raise ValueError(f"lambert_w0 requires x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0
    if x > 0:
        w = math.log1p(x)
        # refine the large-argument seed so Halley starts close
        if x > math.e:
            lx = math.log(x)
            w = lx - math.log(lx)
    else:
        # small negative arguments: series seed w ~ x (1 - x)
        w = x * (1.0 - x)
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= tol * (1.0 + abs(w)):
            return w
    return w


def estimate_range(
    measured_power: float,
    link: OpticalLink,
    water: WaterModel,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Invert the link budget into a range estimate (m).

    d = (2 cos(theta) / e) * W0( (e / (2 cos(theta)))
          * sqrt( P_t dt dr B_r cos(theta) / (P_r 2 pi (1 - cos(theta_0))) ) )

    The divergence-angle cosine is carried inside the W argument so that
    the inversion is exact: with noise_sigma = 0 this is the inverse of
    received_power for every admissible geometry.  When noise_sigma > 0
    an additive zero-mean Gaussian error from ``rng`` models ranging
    noise.  ``link.distance`` is ignored (it is the unknown).
    """
    if measured_power <= 0:
        raise ValueError(f"measured_power must be > 0, got {measured_power}")
    if water.extinction <= 0:
        raise ValueError("range inversion needs a strictly positive extinction")
    cos_inc = math.cos(link.incidence)
    geom = 1.0 - math.cos(link.divergence)
    if geom <= 0.0:
        raise ValueError("divergence of 0 makes the beam footprint degenerate")
    ratio = (
        link.tx_power * link.tx_efficiency * link.rx_efficiency
        * link.rx_aperture * cos_inc
        / (measured_power * _TWO_PI * geom)
    )
    scale = water.extinction / (2.0 * cos_inc)
    argument = scale * math.sqrt(ratio)
    assert argument >= 0.0, "link-budget inversion argument went negative"
    distance = lambert_w0(argument) / scale
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        distance += noise_sigma * rng.standard_normal()
    return distance
