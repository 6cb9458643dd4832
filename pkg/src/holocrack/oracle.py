"""Polynomial least-squares collocation solver for the cracked plate.

The auxiliary functions of the crack-enriched representation are expanded
in monomials of ``zhat / L``. Because the fields are real-linear in the
coefficients, imposing the boundary conditions at collocation points gives
an overdetermined real linear system. This solver shares nothing with the
networks and serves as the reference for target data and cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .boundary import BoundarySet, Segment, bc_values, boundary_uniform
from .elastic import (
    CrackGeometry,
    ElasticMaterial,
    FieldState,
    PolynomialSupplier,
    evaluate_fields,
    stress_to_strain,
    zero_supplier,
)
from .errors import IllConditioned
from .sensors import SensorArray

COND_LIMIT = 1e12


@dataclass(frozen=True)
class OracleConfig:
    degree: int = 10
    collocation_count: int = 800
    side_offset: float = 1e-7
    regularization: float = 1e-10

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.collocation_count < 4 * (self.degree + 1):
            raise ValueError("collocation_count must be at least 4*(degree+1)")
        if self.regularization < 0:
            raise ValueError("regularization must be nonnegative")

    def to_dict(self):
        return {"degree": self.degree, "collocation_count": self.collocation_count,
                "side_offset": self.side_offset, "regularization": self.regularization}


# Generator for target data: deliberately much richer than any in-loop evaluator.
TARGET_CONFIG = OracleConfig(degree=14, collocation_count=1600)


@dataclass
class LinearSystem:
    """Real collocation system ``matrix @ x ~ rhs``.

    Unknown ordering: for k = 0..degree, (Re c_k, Im c_k) of chi, then the
    same for gamma. ``gauge`` flags the unknowns that only produce rigid
    motion (pinned to zero when no displacement condition is present).
    """

    matrix: np.ndarray
    rhs: np.ndarray
    degree: int
    length_scale: float
    gauge: np.ndarray


@dataclass
class OracleSolution:
    chi_coeffs: np.ndarray
    gamma_coeffs: np.ndarray
    residual_norm: float
    relative_residual: float
    length_scale: float = 1.0

    @property
    def degree(self) -> int:
        return len(self.chi_coeffs) - 1

    def suppliers(self):
        return (PolynomialSupplier(self.chi_coeffs, self.length_scale),
                PolynomialSupplier(self.gamma_coeffs, self.length_scale))

    @classmethod
    def zero(cls, degree: int, length_scale: float = 1.0) -> "OracleSolution":
        z = np.zeros(degree + 1, dtype=complex)
        return cls(z, z.copy(), 0.0, 0.0, length_scale)


def _unit_supplier(degree, k, unit, scale):
    c = np.zeros(degree + 1, dtype=complex)
    c[k] = unit
    return PolynomialSupplier(c, scale)


def assemble_system(crack: CrackGeometry, material: ElasticMaterial, points: BoundarySet,
                    cfg: OracleConfig, length_scale: float = 1.0) -> LinearSystem:
    d = cfg.degree
    n = len(points)
    cols = []
    for which in ("chi", "gamma"):
        for k in range(d + 1):
            for unit in (1.0, 1j):
                basis = _unit_supplier(d, k, unit, length_scale)
                if which == "chi":
                    state = evaluate_fields(basis, zero_supplier, crack, material, points.z)
                else:
                    state = evaluate_fields(zero_supplier, basis, crack, material, points.z)
                cols.append(bc_values(state, points).reshape(2 * n))
    matrix = np.stack(cols, axis=1)
    rhs = points.target.reshape(2 * n).astype(float)
    gauge = np.zeros(matrix.shape[1], dtype=bool)
    if points.n_displacement == 0:
        off = 2 * (d + 1)
        gauge[off] = gauge[off + 1] = True  # constant gamma: translation
        if d >= 1:
            gauge[off + 3] = True  # imaginary linear gamma: rotation
    return LinearSystem(matrix, rhs, d, float(length_scale), gauge)


def solve(system: LinearSystem, cfg: OracleConfig) -> OracleSolution:
    """Column-equilibrated least squares, minimum norm, with optional ridge."""
    A = system.matrix
    b = system.rhs
    free = ~system.gauge
    Af = A[:, free]
    norms = np.linalg.norm(Af, axis=0)
    norms[norms == 0] = 1.0
    As = Af / norms
    if cfg.regularization > 0:
        m = As.shape[1]
        As_aug = np.vstack([As, np.sqrt(cfg.regularization) * np.eye(m)])
        b_aug = np.concatenate([b, np.zeros(m)])
        y, *_ = np.linalg.lstsq(As_aug, b_aug, rcond=None)
    else:
        sv = np.linalg.svd(As, compute_uv=False)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        if cond > COND_LIMIT:
            raise IllConditioned(f"condition number {cond:.3g} exceeds {COND_LIMIT:g}; lower the degree or add ridge")
        y, *_ = np.linalg.lstsq(As, b, rcond=None)
    x = np.zeros(A.shape[1])
    x[free] = y / norms
    res = float(np.linalg.norm(A @ x - b))
    bn = float(np.linalg.norm(b))
    d = system.degree
    c = x[0::2] + 1j * x[1::2]
    return OracleSolution(c[: d + 1].copy(), c[d + 1:].copy(), res, res / bn if bn > 0 else res, system.length_scale)


def solve_plate(crack: CrackGeometry, material: ElasticMaterial, segments: list[Segment],
                cfg: OracleConfig = OracleConfig(), length_scale: float = 1.0) -> OracleSolution:
    points = boundary_uniform(segments, cfg.collocation_count)
    return solve(assemble_system(crack, material, points, cfg, length_scale), cfg)


def oracle_fields(solution: OracleSolution, crack: CrackGeometry, material: ElasticMaterial, z) -> FieldState:
    chi, gamma = solution.suppliers()
    return evaluate_fields(chi, gamma, crack, material, z)


def sif_at_tip(solution: OracleSolution, crack: CrackGeometry, tip_sign: int = 1):
    """Stress intensity factors (K_I, K_II) at the tip ``zhat = tip_sign * a``.

    Each tip uses its own frame with the x axis pointing away from the crack.
    Near a tip the enriched potential behaves like ``chi(+-a) * sqrt(2a r)``,
    giving ``K_I - i K_II = 2 sqrt(pi a) chi(+-a)``.
    """
    if tip_sign not in (1, -1):
        raise ValueError("tip_sign must be +1 or -1")
    chi, _ = solution.suppliers()
    a = crack.half_length
    k = 2.0 * np.sqrt(np.pi * a) * complex(chi(tip_sign * a).value)
    return float(k.real), float(-k.imag)


def rms_strain(strains: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.asarray(strains) ** 2)))


def generate_sensor_data(crack: CrackGeometry, sensors, material: ElasticMaterial, boundary: list[Segment],
                         cfg: OracleConfig = TARGET_CONFIG, noise_std: float = 0.0, rng=None,
                         length_scale: float = 1.0, provenance: Optional[dict] = None) -> SensorArray:
    """Synthetic measurements at ``sensors`` from a high-order oracle solve.

    Noise is i.i.d. Gaussian per strain component with standard deviation
    ``noise_std`` times the rms of the clean strain components.
    """
    locations = np.asarray(sensors, dtype=complex)
    sol = solve_plate(crack, material, boundary, cfg, length_scale)
    strain = stress_to_strain(oracle_fields(sol, crack, material, locations), material).as_array()
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        strain = strain + rng.normal(0.0, noise_std * rms_strain(strain), size=strain.shape)
    tip_p, tip_m = crack.tips
    prov = {
        "generator": "polynomial-collocation",
        "oracle": cfg.to_dict(),
        "noise_std": noise_std,
        "relative_residual": sol.relative_residual,
        "true_crack": {"tip_plus": [tip_p.real, tip_p.imag], "tip_minus": [tip_m.real, tip_m.imag]},
    }
    prov.update(provenance or {})
    return SensorArray(locations, strain, material=material, half_side=length_scale, provenance=prov)
