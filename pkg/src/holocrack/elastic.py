"""Plane elasticity through complex potentials, with a straight internal crack.

Every field routine here is vectorised: coordinates may be scalars or
arrays of complex numbers, and returned quantities broadcast accordingly.
Holomorphic functions travel as :class:`HoloJet` triples (value, first and
second complex derivative) so that stresses, which need second derivatives
of the potentials, can be assembled without symbolic differentiation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import OnCrackError, TipSingularity

TIP_GUARD = 1e-12
FACE_OFFSET = 1e-7


class PlaneCondition(str, enum.Enum):
    PLANE_STRAIN = "plane_strain"
    PLANE_STRESS = "plane_stress"


@dataclass(frozen=True)
class ElasticMaterial:
    """Isotropic material given by its Lamé parameters."""

    lam: float
    mu: float
    plane_condition: PlaneCondition = PlaneCondition.PLANE_STRAIN

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError(f"Lamé parameters must be positive, got {self.lam}, {self.mu}")
        object.__setattr__(self, "plane_condition", PlaneCondition(self.plane_condition))

    @property
    def lam_eff(self) -> float:
        """Effective first Lamé parameter of the 2D reduction."""
        if self.plane_condition is PlaneCondition.PLANE_STRAIN:
            return self.lam
        return 2.0 * self.lam * self.mu / (self.lam + 2.0 * self.mu)

    @property
    def kappa(self) -> float:
        return kolosov_constant(self)

    def to_dict(self):
        return {"lambda": self.lam, "mu": self.mu, "plane_condition": self.plane_condition.value}

    @classmethod
    def from_dict(cls, data):
        return cls(data["lambda"], data["mu"], PlaneCondition(data.get("plane_condition", "plane_strain")))


def kolosov_constant(material: ElasticMaterial) -> float:
    lam = material.lam_eff
    return (lam + 3.0 * material.mu) / (lam + material.mu)


@dataclass(frozen=True)
class HoloJet:
    """Value and first two complex derivatives of a holomorphic function.

    ``d2`` is ``None`` when the producer does not propagate second
    derivatives (the second KM potential only needs its first derivative).
    """

    value: np.ndarray
    d1: np.ndarray
    d2: Optional[np.ndarray] = None

    def reflected(self) -> "HoloJet":
        """Jet of ``conj(g(conj z))`` at z, given the jet of g at ``conj z``."""
        d2 = None if self.d2 is None else np.conj(self.d2)
        return HoloJet(np.conj(self.value), np.conj(self.d1), d2)


HolomorphicSupplier = Callable[[np.ndarray], HoloJet]


class PolynomialSupplier:
    """``g(z) = sum_k c_k (z / scale)**k`` as a holomorphic supplier."""

    def __init__(self, coeffs, scale: float = 1.0):
        self.coeffs = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        self.scale = float(scale)

    def __call__(self, z) -> HoloJet:
        x = np.asarray(z, dtype=complex) / self.scale
        c = self.coeffs
        # Horner for the value and both derivatives
        v = np.zeros_like(x)
        d1 = np.zeros_like(x)
        d2 = np.zeros_like(x)
        for ck in c[::-1]:
            d2 = d2 * x + 2.0 * d1
            d1 = d1 * x + v
            v = v * x + ck
        return HoloJet(v, d1 / self.scale, d2 / self.scale**2)

    def __repr__(self):
        return f"PolynomialSupplier({self.coeffs.tolist()}, scale={self.scale})"


class ExpSupplier:
    """``g(z) = amplitude * exp(rate * z)``."""

    def __init__(self, amplitude=1.0, rate=1.0):
        self.amplitude = complex(amplitude)
        self.rate = complex(rate)

    def __call__(self, z) -> HoloJet:
        e = self.amplitude * np.exp(self.rate * np.asarray(z, dtype=complex))
        return HoloJet(e, self.rate * e, self.rate**2 * e)


def zero_supplier(z) -> HoloJet:
    zeros = np.zeros_like(np.asarray(z, dtype=complex))
    return HoloJet(zeros, zeros, zeros)


# Named closed-form suppliers for fixtures and quick experiments.
CLOSED_FORM_SUPPLIERS = {
    "zero": lambda: zero_supplier,
    "one": lambda: PolynomialSupplier([1.0]),
    "identity": lambda: PolynomialSupplier([0.0, 1.0]),
    "square": lambda: PolynomialSupplier([0.0, 0.0, 1.0]),
    "exp": lambda: ExpSupplier(),
}


def closed_form_supplier(name: str) -> HolomorphicSupplier:
    return CLOSED_FORM_SUPPLIERS[name]()


@dataclass(frozen=True)
class CrackGeometry:
    """Straight crack of half length ``half_length`` centred at ``center``.

    ``angle`` is the anticlockwise rotation of the crack line with respect to
    the global x axis.
    """

    half_length: float
    center: complex = 0j
    angle: float = 0.0

    def __post_init__(self):
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        object.__setattr__(self, "center", complex(self.center))
        # canonical angle in (-pi, pi]
        ang = float(np.angle(np.exp(1j * self.angle)))
        if ang == -np.pi:
            ang = np.pi
        object.__setattr__(self, "angle", ang)

    @property
    def rotation(self) -> complex:
        return np.exp(1j * self.angle)

    def to_local(self, z):
        return np.conj(self.rotation) * (np.asarray(z, dtype=complex) - self.center)

    def to_global(self, zhat):
        return self.center + self.rotation * np.asarray(zhat, dtype=complex)

    @property
    def tips(self):
        """(z_plus, z_minus) in global coordinates."""
        d = self.half_length * self.rotation
        return self.center + d, self.center - d

    def face_point(self, xhat, side: int, eps: Optional[float] = None):
        """Global coordinate just above (side=+1) or below (side=-1) the crack."""
        if eps is None:
            eps = FACE_OFFSET * self.half_length
        return self.to_global(np.asarray(xhat, dtype=float) + 1j * side * eps)


@dataclass
class FieldState:
    sxx: np.ndarray
    syy: np.ndarray
    sxy: np.ndarray
    ux: np.ndarray
    uy: np.ndarray

    def traction(self, normal):
        """Traction vector ``sigma . n`` for a unit normal given as complex ``nx + i ny``."""
        n = np.asarray(normal, dtype=complex)
        nx, ny = n.real, n.imag
        return self.sxx * nx + self.sxy * ny, self.sxy * nx + self.syy * ny

    def stress_array(self):
        return np.stack([self.sxx, self.syy, self.sxy], axis=-1)


@dataclass
class StrainTensor:
    exx: np.ndarray
    eyy: np.ndarray
    exy: np.ndarray

    def as_array(self):
        return np.stack(np.broadcast_arrays(self.exx, self.eyy, self.exy), axis=-1)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])


def km_fields(phi: HoloJet, psi: HoloJet, z, material: ElasticMaterial) -> FieldState:
    """Stresses and displacements from the KM potentials and their derivatives."""
    z = np.asarray(z, dtype=complex)
    zbar = np.conj(z)
    a = 2.0 * phi.d1
    b = zbar * phi.d2 + psi.d1
    disp = (material.kappa * phi.value - z * np.conj(phi.d1) - np.conj(psi.value)) / (2.0 * material.mu)
    return FieldState(
        sxx=np.real(a - b),
        syy=np.real(a + b),
        sxy=np.imag(b),
        ux=np.real(disp),
        uy=np.imag(disp),
    )


def stress_to_strain(state: FieldState, material: ElasticMaterial) -> StrainTensor:
    lam, mu = material.lam_eff, material.mu
    tr = (state.sxx + state.syy) / (2.0 * (mu + lam))
    return StrainTensor(
        exx=(state.sxx - lam * tr) / (2.0 * mu),
        eyy=(state.syy - lam * tr) / (2.0 * mu),
        exy=state.sxy / (2.0 * mu),
    )


def strain_to_stress(strain: StrainTensor, material: ElasticMaterial):
    """Constitutive law; returns (sxx, syy, sxy)."""
    lam, mu = material.lam_eff, material.mu
    tr = strain.exx + strain.eyy
    return (2 * mu * strain.exx + lam * tr, 2 * mu * strain.eyy + lam * tr, 2 * mu * strain.exy)


def _check_off_crack(zhat, a):
    zhat = np.asarray(zhat, dtype=complex)
    near_tip = (np.abs(zhat - a) < TIP_GUARD * a) | (np.abs(zhat + a) < TIP_GUARD * a)
    if np.any(near_tip):
        raise TipSingularity(f"evaluation within {TIP_GUARD}*a of a crack tip")
    on_cut = (zhat.imag == 0.0) & (np.abs(zhat.real) < a)
    if np.any(on_cut):
        raise OnCrackError("evaluation exactly on the crack; pass an explicit side offset")
    return zhat


def branch_sqrt_product(zhat, a: float) -> HoloJet:
    """Jet of ``sqrt(z - a) * sqrt(z + a)`` with principal-branch factors.

    The product is continuous everywhere except across the segment [-a, a]
    and behaves like z at infinity.
    """
    zhat = _check_off_crack(zhat, a)
    f = np.sqrt(zhat - a) * np.sqrt(zhat + a)
    return HoloJet(f, zhat / f, -(a * a) / f**3)


def local_potentials_from_jets(chi, chi_refl, gamma, gamma_refl, a, zhat):
    """Crack-enriched local potentials from supplier jets.

    ``chi`` and ``gamma`` are jets at ``zhat``; ``chi_refl`` and ``gamma_refl``
    are jets of the same functions at ``conj(zhat)``, from which the doubly
    conjugated functions are formed.
    """
    f = branch_sqrt_product(zhat, a)
    chic = chi_refl.reflected()
    gamc = gamma_refl.reflected()
    phi_hat = HoloJet(
        chi.value * f.value + gamma.value,
        chi.d1 * f.value + chi.value * f.d1 + gamma.d1,
        chi.d2 * f.value + 2.0 * chi.d1 * f.d1 + chi.value * f.d2 + gamma.d2,
    )
    omega_hat = HoloJet(
        chic.value * f.value - gamc.value,
        chic.d1 * f.value + chic.value * f.d1 - gamc.d1,
        chic.d2 * f.value + 2.0 * chic.d1 * f.d1 + chic.value * f.d2 - gamc.d2,
    )
    return phi_hat, omega_hat


def crack_local_potentials(chi: HolomorphicSupplier, gamma: HolomorphicSupplier, a: float, zhat):
    zhat = _check_off_crack(zhat, a)
    zc = np.conj(zhat)
    return local_potentials_from_jets(chi(zhat), chi(zc), gamma(zhat), gamma(zc), a, zhat)


def _globalize(phi_hat: HoloJet, omega_hat: HoloJet, crack: CrackGeometry, zhat):
    e = crack.rotation
    eb = np.conj(e)
    lever = eb * zhat + np.conj(crack.center)
    phi = HoloJet(e * phi_hat.value, phi_hat.d1, eb * phi_hat.d2)
    psi = HoloJet(
        eb * omega_hat.value - lever * phi_hat.d1,
        eb * (eb * omega_hat.d1 - eb * phi_hat.d1 - lever * phi_hat.d2),
    )
    return phi, psi


def global_potentials(chi, gamma, crack: CrackGeometry, z):
    """Global KM potentials (phi, psi) of the crack-enriched representation.

    ``psi.d2`` is not propagated (it would need third derivatives of the
    suppliers and no field formula uses it).
    """
    zhat = crack.to_local(z)
    phi_hat, omega_hat = crack_local_potentials(chi, gamma, crack.half_length, zhat)
    return _globalize(phi_hat, omega_hat, crack, zhat)


def fields_from_jets(chi, chi_refl, gamma, gamma_refl, crack, material, z) -> FieldState:
    """Fields at global ``z`` from supplier jets already evaluated at the local point.

    Fields are real-linear in the jets, which is what the collocation and
    training operators exploit.
    """
    z = np.asarray(z, dtype=complex)
    zhat = crack.to_local(z)
    phi_hat, omega_hat = local_potentials_from_jets(chi, chi_refl, gamma, gamma_refl, crack.half_length, zhat)
    phi, psi = _globalize(phi_hat, omega_hat, crack, zhat)
    return km_fields(phi, psi, z, material)


def evaluate_fields(chi, gamma, crack: CrackGeometry, material: ElasticMaterial, z) -> FieldState:
    z = np.asarray(z, dtype=complex)
    phi, psi = global_potentials(chi, gamma, crack, z)
    return km_fields(phi, psi, z, material)


def local_stress(chi, gamma, crack: CrackGeometry, material: ElasticMaterial, zhat) -> FieldState:
    """Fields expressed in the crack frame, at local coordinate ``zhat``."""
    zhat = np.asarray(zhat, dtype=complex)
    phi_hat, omega_hat = crack_local_potentials(chi, gamma, crack.half_length, zhat)
    psi_hat = HoloJet(
        omega_hat.value - zhat * phi_hat.d1,
        omega_hat.d1 - phi_hat.d1 - zhat * phi_hat.d2,
    )
    return km_fields(phi_hat, psi_hat, zhat, material)
