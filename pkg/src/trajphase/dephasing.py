"""Closed forms for the precessing qubit under dephasing or decay.

Everything here is an analytic reference: the spiral of the shifted no-jump
path, its geometric phase over one precession period, the survival
probability, the ensemble-mean overlap of the diffusive unraveling, and the
matching dynamical phase. The numeric modules are tested against these.
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np

from .lindblad import LindbladModel, ShiftSet
from .operators import BlochAngles, Operator, OperatorSchedule

# Below this fraction of omega, f * strength is treated as exactly zero and
# the analytic limits are returned.
ZERO_PRODUCT_CUTOFF = 1e-12


def _qubit_model(omega: float, channel: np.ndarray, strength: float) -> LindbladModel:
    ham = Operator(np.array([[0.5 * omega, 0.0], [0.0, -0.5 * omega]], dtype=complex))
    return LindbladModel(
        OperatorSchedule.constant(ham),
        (OperatorSchedule.constant(Operator(channel)),),
        strength,
    )


def dephasing_model(omega: float, strength: float) -> LindbladModel:
    """Precessing qubit with a single dephasing channel sigma_z."""
    return _qubit_model(omega, np.diag([1.0 + 0j, -1.0]), strength)


def decay_model(omega: float, strength: float) -> LindbladModel:
    """Precessing qubit decaying toward |1> via sigma_x - i sigma_y."""
    return _qubit_model(omega, np.array([[0.0, 0.0], [2.0, 0.0]], dtype=complex), strength)


@dataclasses.dataclass(frozen=True)
class DephasingParams:
    """Parameters of the dephasing scenario: precession rate, coupling
    strength, real channel shift, and the initial Bloch angles."""

    omega: float
    strength: float
    shift: float
    theta0: float
    phi0: float = 0.0

    def __post_init__(self) -> None:
        if self.omega <= 0:
            raise ValueError("omega must be positive; it sets the cycle period")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        if not -1e-12 <= self.theta0 <= math.pi + 1e-12:
            raise ValueError("theta0 must lie in [0, pi]")
        object.__setattr__(self, "theta0", min(max(self.theta0, 0.0), math.pi))

    @property
    def period(self) -> float:
        """One azimuthal cycle, 2 pi / omega."""
        return 2.0 * math.pi / self.omega

    def as_model(self) -> LindbladModel:
        return dephasing_model(self.omega, self.strength)

    def as_shifts(self) -> ShiftSet:
        return ShiftSet.constants([self.shift])

    def initial_state(self) -> BlochAngles:
        return BlochAngles(self.theta0, self.phi0)


def closed_form_no_jump_phase(p: DephasingParams) -> float:
    """Geometric phase of the shifted no-jump path over one period.

    Single-valued real-log expression; the f * strength -> 0 limit is
    -pi * (1 - cos(theta0)).
    """
    product = p.shift * p.strength
    if abs(product) < ZERO_PRODUCT_CUTOFF * p.omega:
        return -math.pi * (1.0 - math.cos(p.theta0))
    exponent = 4.0 * math.pi * product / p.omega
    c2 = math.cos(0.5 * p.theta0) ** 2
    s2 = math.sin(0.5 * p.theta0) ** 2
    terms = []
    if c2 > 0.0:
        terms.append(exponent + math.log(c2))
    if s2 > 0.0:
        terms.append(-exponent + math.log(s2))
    log_sum = terms[0] if len(terms) == 1 else float(np.logaddexp(terms[0], terms[1]))
    return -math.pi + (p.omega / (4.0 * product)) * log_sum


def no_jump_phase_correction(p: DephasingParams) -> float:
    """Leading deviation of the no-jump phase from the closed-system value:
    2 pi^2 * (f * strength / omega) * sin^2(theta0)."""
    ratio = p.shift * p.strength / p.omega
    if abs(ratio) > 0.1:
        warnings.warn(
            "first-order correction evaluated outside its validity range "
            f"(|f * strength / omega| = {abs(ratio):.3g} > 0.1)",
            RuntimeWarning,
            stacklevel=2,
        )
    return 2.0 * math.pi**2 * ratio * math.sin(p.theta0) ** 2


def bloch_spiral(p: DephasingParams, t: float) -> BlochAngles:
    """Bloch angles of the shifted no-jump path at time t:
    tan(theta/2) = exp(-2 f strength t) * tan(theta0/2), phi = phi0 + omega t."""
    decay = math.exp(-2.0 * p.shift * p.strength * t)
    theta = 2.0 * math.atan2(decay * math.sin(0.5 * p.theta0), math.cos(0.5 * p.theta0))
    return BlochAngles(theta, p.phi0 + p.omega * t)


def closed_form_survival(p: DephasingParams, total_time: float) -> float:
    """No-jump branch probability of the shifted dephasing path:
    exp(-strength T (1 + f^2)) * (cos^2(theta0/2) e^{2 f strength T}
    + sin^2(theta0/2) e^{-2 f strength T}); cosh on the equator."""
    u = 2.0 * p.shift * p.strength * total_time
    c2 = math.cos(0.5 * p.theta0) ** 2
    s2 = math.sin(0.5 * p.theta0) ** 2
    if s2 < 1e-300:
        log_mix = u
    elif c2 < 1e-300:
        log_mix = -u
    else:
        log_mix = float(np.logaddexp(math.log(c2) + u, math.log(s2) - u))
    return math.exp(-p.strength * total_time * (1.0 + p.shift**2) + log_mix)


def decay_equivalent_model(p: DephasingParams) -> LindbladModel:
    """Decay model whose no-jump ray path equals the shifted dephasing one.

    The matching decay strength is -f * strength, so only f <= 0 yields a
    physical (nonnegative-strength) model; for f > 0 the equivalence is
    formal and no model is constructible.
    """
    rate = -p.shift * p.strength
    if rate < 0:
        raise ValueError(
            "decay equivalent needs -f * strength >= 0; "
            f"got f = {p.shift:g} with strength {p.strength:g}"
        )
    return decay_model(p.omega, rate)


def closed_form_overlap_phase(p: DephasingParams, total_time: float) -> float:
    """Argument of the ensemble-mean overlap of the diffusive unraveling,
    tracked continuously from t = 0.

    The mean overlap is <phi0| exp[-i (omega/2 + i f strength) t sigma_z]
    |phi0> up to a positive factor. The principal-value form
    -arctan[((tanh(f strength T) + cos theta0) / (1 + tanh(f strength T)
    cos theta0)) * tan(omega T / 2)] folds into (-pi/2, pi/2); tracking in t
    keeps multi-period runs unfolded.
    """
    if total_time == 0.0:
        return 0.0
    c2 = math.cos(0.5 * p.theta0) ** 2
    s2 = math.sin(0.5 * p.theta0) ** 2
    if s2 < 1e-300:
        return -0.5 * p.omega * total_time
    if c2 < 1e-300:
        return 0.5 * p.omega * total_time
    rate = p.shift * p.strength
    # Keep per-sample rotation well under pi/2.
    steps = max(256, int(math.ceil(2.0 * total_time * (abs(p.omega) + abs(rate)))))
    t = np.linspace(0.0, total_time, steps + 1)
    # Common positive factor exp(-|rate| t) keeps both exponents <= 0.
    z = c2 * np.exp((rate - abs(rate)) * t - 0.5j * p.omega * t) + s2 * np.exp(
        (-rate - abs(rate)) * t + 0.5j * p.omega * t
    )
    increments = np.angle(z[1:] * np.conj(z[:-1]))
    return float(np.sum(increments))


def closed_form_dynamical_phase(p: DephasingParams, total_time: float) -> float:
    """Dynamical term of the averaged phase. The populations are constant
    under dephasing, so the integral is (omega T / 2) * cos(theta0)."""
    return 0.5 * p.omega * total_time * math.cos(p.theta0)
