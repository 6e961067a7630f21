"""Gamma-calculus, curvature-dimension checks and operator transformations."""

import json as _json

from ._core import (
    DiffusionOperator,
    Expr,
    TransformSpec,
    apply_L,
    best_k,
    bonnet_myers_check,
    check_be,
    conformal_kprime,
    conformal_ricci_identity,
    degenerate_plane,
    dim_gamma,
    gamma,
    gamma2,
    hessian,
    hessian_matrix,
    kprime_drift,
    kprime_general,
    kprime_time_change,
    laplace_beltrami,
    lichnerowicz_check,
    mms_kprime,
    parse,
    poincare_ball,
    ricci_form_matrix,
    ricci_infimum_oracle,
    ricci_n,
    spectral_gap,
    spectrum,
    sphere_radial,
    transform_operator,
    verify_transform_bound,
    wrong_constants_falsifier,
)
from ._core import run_job as _run_job

__version__ = "0.1.0"


def run_job(command, job, seed=None, tol=None):
    """Run a CLI job given as a dict or JSON text; returns (exit_code, report, csv)."""
    text = job if isinstance(job, str) else _json.dumps(job)
    code, report, csv = _run_job(command, text, seed, tol)
    return code, _json.loads(report), csv
