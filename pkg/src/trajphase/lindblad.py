"""Lindblad models, master-equation integration, and channel symmetries.

The master equation used throughout:

    d rho / dt = -i [H(t), rho]
                 + strength * sum_m ( L_m rho L_m^dag
                                      - (L_m^dag L_m rho + rho L_m^dag L_m) / 2 )

with hbar = 1, dimensionless channel operators L_m, and a single nonnegative
coupling strength multiplying every channel. Shifting a channel by a complex
scalar, L_m -> L_m - f_m(t), leaves the equation in Lindblad form: expanding
the dissipator shows the whole effect regroups into the Hamiltonian part,

    H -> K = H - (i * strength / 2) * sum_m (conj(f_m) L_m - f_m L_m^dag),

so the physical evolution is unchanged exactly when every conj(f_m) L_m is
Hermitian ("hidden" shifts). `apply_shift` returns the model with shifted
channels (the Hamiltonian field stays as supplied; the regrouped K is
available via `shifted_hamiltonian`).
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Sequence, Union

import numpy as np

from .operators import (
    Operator,
    OperatorSchedule,
    ScalarSchedule,
    combine_schedules,
    identity,
    is_hermitian,
)

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
# Eigenvalues below this are integrator blow-up, not roundoff.
POSITIVITY_HARD_TOL = 1e-6

DEFAULT_DENSITY_STEPS = 4096


class IntegrationError(RuntimeError):
    """Master-equation integration violated a density-matrix invariant."""


@dataclasses.dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace matrix. Construction checks Hermiticity and
    trace; positive semidefiniteness is checked by validate()."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if np.max(np.abs(arr - arr.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian within 1e-10")
        if abs(np.trace(arr).real - 1.0) > TRACE_TOL or abs(np.trace(arr).imag) > TRACE_TOL:
            raise ValueError("density matrix trace differs from 1 beyond 1e-10")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def validate(self, positivity_tol: float = POSITIVITY_TOL) -> None:
        """Raise if any eigenvalue sits below -positivity_tol."""
        low = float(np.min(np.linalg.eigvalsh(self.entries)))
        if low < -positivity_tol:
            raise ValueError(f"density matrix has eigenvalue {low} < -{positivity_tol}")

    @classmethod
    def from_pure(cls, amplitudes) -> "DensityMatrix":
        vec = np.asarray(
            getattr(amplitudes, "amplitudes", amplitudes), dtype=complex
        ).reshape(-1)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError("cannot build a density matrix from the zero vector")
        vec = vec / norm
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)


def _as_operator_schedule(value: Union[Operator, OperatorSchedule]) -> OperatorSchedule:
    if isinstance(value, OperatorSchedule):
        return value
    return OperatorSchedule.constant(value)


def _as_scalar_schedule(value: Union[complex, ScalarSchedule]) -> ScalarSchedule:
    if isinstance(value, ScalarSchedule):
        return value
    return ScalarSchedule.constant(value)


@dataclasses.dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian schedule plus dimensionless channels and one coupling
    strength. strength = 0 is a closed system."""

    hamiltonian: OperatorSchedule
    lindblads: tuple[OperatorSchedule, ...]
    strength: float

    def __post_init__(self) -> None:
        ham = _as_operator_schedule(self.hamiltonian)
        chans = tuple(_as_operator_schedule(c) for c in self.lindblads)
        if self.strength < 0:
            raise ValueError("coupling strength must be nonnegative")
        for c in chans:
            if c.dim != ham.dim:
                raise ValueError("channel dimension differs from the Hamiltonian's")
        object.__setattr__(self, "hamiltonian", ham)
        object.__setattr__(self, "lindblads", chans)
        object.__setattr__(self, "strength", float(self.strength))

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim


@dataclasses.dataclass(frozen=True, eq=False)
class ShiftSet:
    """One complex scalar schedule per channel."""

    shifts: tuple[ScalarSchedule, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "shifts", tuple(_as_scalar_schedule(s) for s in self.shifts)
        )

    @classmethod
    def constants(cls, values: Sequence[complex]) -> "ShiftSet":
        return cls(tuple(ScalarSchedule.constant(v) for v in values))

    def __len__(self) -> int:
        return len(self.shifts)


def _check_channel_count(model: LindbladModel, shifts: ShiftSet) -> None:
    if len(shifts) != len(model.lindblads):
        raise ValueError(
            f"{len(shifts)} shifts supplied for {len(model.lindblads)} channels"
        )


class _Terms:
    """Per-cell cache of Hamiltonian and channel matrices for a model."""

    def __init__(self, model: LindbladModel) -> None:
        self.model = model
        self.h_values = [v.entries for v in model.hamiltonian.values]
        self.channel_values = []
        for chan in model.lindblads:
            triples = []
            for v in chan.values:
                l = v.entries
                ld = l.conj().T
                triples.append((l, ld, ld @ l))
            self.channel_values.append(triples)

    def at(self, t: float):
        ham = self.h_values[
            0 if self.model.hamiltonian.is_constant else self.model.hamiltonian._index(t)
        ]
        chans = [
            vals[0 if sched.is_constant else sched._index(t)]
            for sched, vals in zip(self.model.lindblads, self.channel_values)
        ]
        return ham, chans


def _rhs_matrix(ham, chans, strength, rho):
    out = -1j * (ham @ rho - rho @ ham)
    for l, ld, ldl in chans:
        out = out + strength * (l @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def lindblad_rhs(model: LindbladModel, rho: Union[DensityMatrix, np.ndarray], t: float = 0.0) -> Operator:
    """Right-hand side of the master equation at time t (traceless Hermitian)."""
    arr = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    ham, chans = _Terms(model).at(t)
    return Operator(_rhs_matrix(ham, chans, model.strength, arr))


def evolve_density(
    model: LindbladModel,
    rho0: DensityMatrix,
    total_time: float,
    steps: int = DEFAULT_DENSITY_STEPS,
) -> list[tuple[float, DensityMatrix]]:
    """Integrate the master equation with fixed-step RK4.

    Returns the density matrix on the full uniform grid including both
    endpoints. Every grid state is checked against the density-matrix
    invariants; positivity violations worse than roundoff abort with the
    offending step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if total_time < 0:
        raise ValueError("total_time must be >= 0")
    for sched in (model.hamiltonian, *model.lindblads):
        if not sched.covers(0.0, total_time):
            raise ValueError("a model schedule does not cover [0, total_time]")
    terms = _Terms(model)
    dt = total_time / steps
    rho = rho0.entries.copy()
    out = [(0.0, rho0)]
    lam = model.strength
    for k in range(steps):
        t = k * dt
        h1, c1 = terms.at(t)
        k1 = _rhs_matrix(h1, c1, lam, rho)
        h2, c2 = terms.at(t + 0.5 * dt)
        k2 = _rhs_matrix(h2, c2, lam, rho + 0.5 * dt * k1)
        k3 = _rhs_matrix(h2, c2, lam, rho + 0.5 * dt * k2)
        h4, c4 = terms.at(t + dt)
        k4 = _rhs_matrix(h4, c4, lam, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        # Re-symmetrize to keep roundoff from accumulating a skew part.
        rho = 0.5 * (rho + rho.conj().T)
        t_next = (k + 1) * dt
        try:
            state = DensityMatrix(rho)
        except ValueError as exc:
            raise IntegrationError(f"step {k + 1} (t = {t_next:g}): {exc}") from exc
        low = float(np.min(np.linalg.eigvalsh(rho)))
        if low < -POSITIVITY_HARD_TOL:
            raise IntegrationError(
                f"step {k + 1} (t = {t_next:g}): eigenvalue {low} below -{POSITIVITY_HARD_TOL}"
            )
        if low < -POSITIVITY_TOL:
            warnings.warn(
                f"density eigenvalue {low} at step {k + 1} is beyond roundoff",
                RuntimeWarning,
                stacklevel=2,
            )
        out.append((t_next, state))
    return out


def apply_shift(model: LindbladModel, shifts: ShiftSet) -> LindbladModel:
    """Shift every channel, L_m -> L_m - f_m(t) * identity.

    The Hamiltonian field is returned as supplied: the master equation of the
    shifted model regroups exactly into Hamiltonian `shifted_hamiltonian`
    with the original dissipator, so storing K as well would double-count.
    """
    _check_channel_count(model, shifts)
    one = identity(model.dim)
    new_channels = []
    for chan, f in zip(model.lindblads, shifts.shifts):
        new_channels.append(
            combine_schedules(lambda lv, fv: lv - complex(fv) * one, chan, f)
        )
    return LindbladModel(model.hamiltonian, tuple(new_channels), model.strength)


def shifted_hamiltonian(model: LindbladModel, shifts: ShiftSet) -> OperatorSchedule:
    """Hermitian Hamiltonian K generating the shifted model's unitary part:

        K(t) = H(t) - (i * strength / 2) * sum_m (conj(f_m) L_m - f_m L_m^dag)
    """
    _check_channel_count(model, shifts)
    lam = model.strength
    count = len(model.lindblads)

    def build(ham: Operator, *rest) -> Operator:
        total = ham.entries
        for lv, fv in zip(rest[:count], rest[count:]):
            f = complex(fv)
            l = lv.entries
            total = total - 0.5j * lam * (np.conj(f) * l - f * l.conj().T)
        return Operator(total)

    return combine_schedules(build, model.hamiltonian, *model.lindblads, *shifts.shifts)


def _probe_times(*schedules) -> list[float]:
    times = {0.0}
    for s in schedules:
        if not s.is_constant:
            n = len(s.values)
            times.update(k * s.cell for k in range(n))
            times.add(n * s.cell * (1.0 - 1e-12))
    return sorted(times)


def shift_is_hidden(model: LindbladModel, shifts: ShiftSet, tol: float = 1e-12) -> bool:
    """True when every conj(f_m(t)) L_m(t) is Hermitian on the schedule grid,
    i.e. when the shift leaves the master equation unchanged."""
    _check_channel_count(model, shifts)
    for chan, f in zip(model.lindblads, shifts.shifts):
        for t in _probe_times(chan, f):
            value = np.conj(complex(f.value_at(t))) * chan.value_at(t).entries
            if not is_hermitian(value, tol):
                return False
    return True


def apply_unitary_mixing(model: LindbladModel, mixing: np.ndarray) -> LindbladModel:
    """Recombine channels, L_m -> sum_n V[m, n] L_n, for unitary V."""
    v = np.asarray(mixing, dtype=complex)
    count = len(model.lindblads)
    if v.shape != (count, count):
        raise ValueError(f"mixing matrix must be {count} x {count}, got {v.shape}")
    if np.max(np.abs(v @ v.conj().T - np.eye(count))) > 1e-10:
        raise ValueError("mixing matrix is not unitary within 1e-10")
    new_channels = []
    for m in range(count):
        row = v[m]

        def build(*vals, row=row) -> Operator:
            total = row[0] * vals[0].entries
            for coeff, op in zip(row[1:], vals[1:]):
                total = total + coeff * op.entries
            return Operator(total)

        new_channels.append(combine_schedules(build, *model.lindblads))
    return LindbladModel(model.hamiltonian, tuple(new_channels), model.strength)


def zero_point_shift(model: LindbladModel, offset: Union[float, ScalarSchedule]) -> LindbladModel:
    """Shift the energy zero point, H(t) -> H(t) - h(t) * identity (h real)."""
    sched = _as_scalar_schedule(offset)
    for value in sched.values:
        if abs(complex(value).imag) > 1e-14:
            raise ValueError("zero-point offset must be real-valued")
    one = identity(model.dim)

    def build(ham: Operator, hv) -> Operator:
        return ham - complex(hv).real * one

    new_h = combine_schedules(build, model.hamiltonian, sched)
    return LindbladModel(new_h, model.lindblads, model.strength)
