"""Central tolerance record shared by every check."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    # smooth closed-form identities (jet arithmetic is exact to rounding)
    identity: float = 1e-9
    # engine value vs closed form
    engine_vs_closed_form: float = 1e-8
    # optimization-based scans
    scan: float = 1e-6
    # tensor index symmetries and first Bianchi, relative
    tensor_symmetry: float = 1e-9
    # frame orthonormality
    orthonormal: float = 1e-10
    # ODE residuals of the cylinder profiles
    ode_residual: float = 1e-10
    # nonnegativity of torus-sphere scans
    nonneg_scan: float = 1e-8
    # gauss equation on slices
    gauss: float = 1e-8
    # finite-difference Hessian block checks
    hessian_cross: float = 1e-5
    hessian_xblock: float = 1e-4
    # metric variation derivative vs its trace formula, relative
    metric_variation: float = 1e-5
    # R0 direction alignment: |<dir, d_r>| >= 1 - r0_alignment
    r0_alignment: float = 1e-6
    # shape operator constant, brute-force oracle vs analytic reduction
    shape_operator: float = 1e-6
    # Gram-Schmidt pivot used when completing frames
    gram_schmidt_pivot: float = 1e-8
    # relative threshold below which a plane counts as degenerate
    degenerate_plane: float = 1e-14
    # zero-set membership, |dF| below this
    zero_set: float = 1e-10

    def override(self, **changes) -> "Tolerances":
        known = {f.name for f in fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT = Tolerances()
