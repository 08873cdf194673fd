"""Guided diffusion sampling of point clouds with zeroth-order oracle guidance."""

from ._ogdiff import (
    InvalidParameter,
    NonFiniteInput,
    OgdError,
    RingSpec,
    Schedule,
    ShapeMismatch,
    Testbed,
    ToyPotential,
    clean_recompose,
    force_rms,
    forward_diffuse,
    gradcheck,
    measure,
    parse_gradient_file,
    parse_xyz,
    posterior_mean,
    project_zero_cog,
    projection_coeffs,
    radius_of_gyration,
    sample,
    spsa_gradient,
    t0_estimate,
    write_xyz,
)

MODES = ("unguided", "oracle", "noisy", "clean", "bilevel-noisy", "bilevel-clean", "evolutionary")

__all__ = [name for name in dir() if not name.startswith("_")]
