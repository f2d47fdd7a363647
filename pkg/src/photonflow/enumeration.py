"""Analytic path enumeration for the correlation setups.

Expected per-pulse coincidence probabilities obtained by enumerating the ways
photons can reach the two detectors: through the plain splitter (purity setup)
or through the two arms of the delay-matched interferometer (the four path
combinations of a consecutive-pulse photon pair).  These expressions are used
to calibrate the companion-photon probability from a target central-peak
ratio, and to build the correction coefficients that the visibility estimator
inverts.  Detector efficiencies cancel in all area ratios but are accepted for
completeness.
"""

from __future__ import annotations

from dataclasses import dataclass

from scipy.optimize import brentq

from .core import ConfigError


@dataclass(frozen=True)
class HbtExpectation:
    """Per-pulse click and coincidence probabilities in the splitter setup."""

    central: float  # P(d1 and d2 click in the same pulse)
    side: float  # P(d1 at pulse i, d2 at pulse i+k), k != 0, leading order
    click1: float
    click2: float

    @property
    def g2(self) -> float:
        return self.central / self.side


def hbt_expected(
    p_emit: float,
    p_multi: float,
    r: float = 0.5,
    t: float = 0.5,
    surv_signal: float = 1.0,
    surv_multi: float = 1.0,
    eff1: float = 1.0,
    eff2: float = 1.0,
) -> HbtExpectation:
    """Expected areas for a splitter with reflectance r (to detector 1).

    ``surv_signal``/``surv_multi`` are the per-photon survival probabilities
    of any stage between the emitter and the splitter (e.g. conversion and
    filtering, which differ for the spectrally offset companion).
    """
    if r + t > 1.0 + 1e-12:
        raise ConfigError("splitter must have R + T <= 1")
    q2 = p_emit * p_multi  # joint probability of a signal+companion pair
    a1, a2 = surv_signal * r * eff1, surv_signal * t * eff2
    b1, b2 = surv_multi * r * eff1, surv_multi * t * eff2

    central = q2 * (a1 * b2 + a2 * b1)
    # expected tag counts per pulse (linear, so efficiencies cancel in ratios)
    click1 = p_emit * a1 + q2 * b1
    click2 = p_emit * a2 + q2 * b2
    return HbtExpectation(central=central, side=click1 * click2, click1=click1, click2=click2)


def calibrate_p_multi(
    target_g2: float,
    p_emit: float,
    r: float = 0.5,
    t: float = 0.5,
    surv_signal: float = 1.0,
    surv_multi: float = 1.0,
) -> float:
    """Companion probability that yields the target central-peak ratio.

    The measured ratio is a property of areas, not a per-pulse probability;
    to leading order it is 2 p_multi / p_emit, and this solves the exact
    enumeration expression instead.
    """
    if target_g2 == 0:
        return 0.0
    if not 0 < target_g2 < 1:
        raise ConfigError("target g2 must be in [0, 1)")

    def deficit(p_multi: float) -> float:
        return hbt_expected(p_emit, p_multi, r, t, surv_signal, surv_multi).g2 - target_g2

    hi = min(1.0, p_emit)
    if deficit(hi) < 0:
        raise ConfigError(f"target g2 {target_g2} not reachable with p_emit {p_emit}")
    return float(brentq(deficit, 1e-15, hi, xtol=1e-15))


def hom_pair_central(
    r1: float, t1: float, r2: float, t2: float, m_eff: float
) -> float:
    """Central coincidence probability for one consecutive-pulse photon pair.

    The pair meets at the output splitter only on the long/short path
    combination (probability r1*t1); the coincidence probability there
    carries the two-photon interference term.
    """
    if min(r1, t1, r2, t2) < 0 or r1 + t1 > 1 + 1e-12 or r2 + t2 > 1 + 1e-12:
        raise ConfigError("splitter fractions must be non-negative with R + T <= 1")
    if not 0.0 <= m_eff <= 1.0:
        raise ConfigError("effective overlap must be in [0, 1]")
    return r1 * t1 * (r2**2 + t2**2 - 2.0 * r2 * t2 * m_eff)


def hom_cluster_areas(
    r1: float, t1: float, r2: float, t2: float, m_eff: float
) -> dict[int, float]:
    """Expected areas of the central five-peak cluster, one photon per pulse.

    Keys are the peak lags in repetition periods; values are per-pulse
    coincidence probabilities for unit emission and detection.  Peaks at
    |lag| >= 2 all equal the far-peak product value.
    """
    alpha1 = t1 * r2 + r1 * t2  # single-photon click probability factors
    alpha2 = t1 * t2 + r1 * r2
    far = alpha1 * alpha2
    return {
        -2: far,
        -1: (t1**2 + r1**2) * r2 * t2 + r1 * t1 * r2**2,
        0: hom_pair_central(r1, t1, r2, t2, m_eff),
        1: (t1**2 + r1**2) * r2 * t2 + r1 * t1 * t2**2,
        2: far,
    }


@dataclass(frozen=True)
class VisibilityModel:
    """Normalized-area model of the central interferometer peak.

    With areas normalized to a far side peak, the cross-polarized central
    area is c_two_photon + d_multi * g2 and the co-polarized one replaces the
    two-photon term with its interference-suppressed value.
    """

    c_two_photon: float
    d_multi: float
    kappa: float  # 2 r2 t2 / (r2^2 + t2^2), depth factor of the interference term

    def forward(self, overlap: float, g2: float, epsilon: float) -> tuple[float, float]:
        """(a_perp, a_par) normalized central areas for the given ground truth."""
        m_eff = (1.0 - epsilon) ** 2 * overlap
        a_perp = self.c_two_photon + self.d_multi * g2
        a_par = self.c_two_photon * (1.0 - self.kappa * m_eff) + self.d_multi * g2
        return a_perp, a_par

    def invert(self, a_perp: float, a_par: float, g2: float, epsilon: float) -> float:
        """Overlap estimate from measured normalized areas (exact model inverse)."""
        denom = (a_perp - self.d_multi * g2) * self.kappa * (1.0 - epsilon) ** 2
        if denom <= 0:
            raise ConfigError("visibility correction denominator is not positive")
        return (a_perp - a_par) / denom


def visibility_model(
    r2: float, t2: float, r1: float = 0.5, t1: float = 0.5
) -> VisibilityModel:
    """Correction coefficients from the path enumeration, far-peak normalized."""
    alpha1 = t1 * r2 + r1 * t2
    alpha2 = t1 * t2 + r1 * r2
    far = alpha1 * alpha2
    if far <= 0:
        raise ConfigError("degenerate splitter ratios")
    return VisibilityModel(
        c_two_photon=r1 * t1 * (r2**2 + t2**2) / far,
        d_multi=(t1**2 + r1**2) * r2 * t2 / far,
        kappa=2.0 * r2 * t2 / (r2**2 + t2**2),
    )
