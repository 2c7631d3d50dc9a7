"""(mu, eta) region sweeps for the single-block example."""

from __future__ import annotations

import math

import numpy as np

from .incoherence import (BOUNDARY_BAND, SingularBlockError, block_example_instance, example_region_closed_form,
                          example_region_margin, lasso_incoherence, mri_min_slack, pairwise_incoherence,
                          pwi_mri_threshold)

REGION_COLUMNS = ("mu", "eta", "lasso_ok", "lasso_closed", "mri_closed", "mri_direct", "pwi_ok", "pwi_mri_ok",
                  "psd_ok", "boundary")


def default_axes(r: int, resolution: int):
    """Cell centres over ``mu in [-1/(r-1), 1]`` and ``eta in [-1, 1]``."""
    lo = -1.0 / (r - 1)
    mu = lo + (np.arange(resolution) + 0.5) * (1.0 - lo) / resolution
    eta = -1.0 + (np.arange(resolution) + 0.5) * 2.0 / resolution
    return mu, eta


def region_row(mu: float, eta: float, r: int, spread: float) -> dict:
    """Closed forms next to direct checks on the assembled ``(r + 1) x (r + 1)`` matrix.

    ``lasso_ok`` and ``mri_direct`` test the assembled matrix; ``lasso_closed`` and
    ``mri_closed`` are the closed-form regions.  ``boundary`` marks cells within
    the band of either MRI boundary, where closed and direct may differ.
    """
    a, supp, psd_ok = block_example_instance(mu, eta, r)
    slack = mri_min_slack(a, supp, spread, 0.0)
    try:
        lasso_ok = lasso_incoherence(a, supp) <= 1.0
    except SingularBlockError:
        lasso_ok = False
    pw = pairwise_incoherence(a)
    closed_margin = example_region_margin(mu, eta, r, spread)
    return {
        "mu": float(mu),
        "eta": float(eta),
        "lasso_ok": bool(lasso_ok),
        "lasso_closed": example_region_closed_form(mu, eta, r, spread, "lasso"),
        "mri_closed": example_region_closed_form(mu, eta, r, spread, "mri"),
        "mri_direct": bool(slack > 0),
        "pwi_ok": bool(pw <= 1.0 / (3 * r)),
        "pwi_mri_ok": bool(pw < pwi_mri_threshold(r, spread, 0.0)) if math.isfinite(spread) else False,
        "psd_ok": bool(psd_ok),
        "boundary": bool(min(abs(slack), abs(closed_margin)) < BOUNDARY_BAND),
    }


def region_table(r: int, spread: float, mu_values, eta_values) -> list:
    if r < 2:
        raise ValueError("r must be >= 2")
    return [region_row(float(m), float(e), r, spread) for m in mu_values for e in eta_values]
