"""Cross-entropy search for importance-sampling tilts.

Each iteration draws scenarios under the current proposal, simulates
them, and re-weights event hits by their likelihood ratio.  Because the
proposals are exponentially tilted exponentials, the KL-optimal update
has closed form: the new tilt is the weighted mean of (mean - sample)
over hits.  Tilts start at zero (the untilted surrogate family) and are
clamped to keep every proposal mean strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import AvConfig, classify_events, simulate
from .scenario import ProposalParams, ScenarioModel, scenario_stream, stream_namespace

__all__ = [
    "CeZeroHitError",
    "CeIterate",
    "CeState",
    "weighted_tilt_update",
    "ce_update",
    "ce_search",
]

CE_EVENTS = ("conflict", "crash")


class CeZeroHitError(RuntimeError):
    """The search saw no event hits for several consecutive iterations."""


@dataclass(frozen=True)
class CeIterate:
    """Proposal after one iteration, with that iteration's hit count."""

    iteration: int
    vartheta_r: float
    vartheta_ttc: float
    hits: int
    n: int


@dataclass(frozen=True)
class CeState:
    """Final search state; ``history`` has one entry per iteration."""

    iteration: int
    params: ProposalParams
    n_per_iter: int
    event_hits: int
    history: tuple[CeIterate, ...]
    lambda_r: float
    lambda_ttc_cap: float


def weighted_tilt_update(x, lam, weights, lam_cap: float, margin: float = 0.01) -> float:
    """Closed-form tilt update: weighted mean of (lam - x), clamped below lam_cap.

    ``lam`` may be a scalar or a per-sample array (the inverse-TTC mean
    depends on each sample's lead speed).  The clamp keeps a safety
    margin of ``margin * lam_cap`` inside the validity region.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = float(w.sum())
    if not total > 0:
        raise ValueError("all weights are zero; no information to update the tilt")
    vartheta = float(np.sum(w * (lam - x)) / total)
    return min(vartheta, (1.0 - margin) * lam_cap)


def ce_update(
    r_inv,
    ttc_inv,
    lam_ttc,
    weights,
    lambda_r: float,
    lambda_ttc_cap: float,
    margin: float = 0.01,
) -> tuple[float, float]:
    """One cross-entropy update for both tilts from a weighted batch."""
    vr = weighted_tilt_update(r_inv, lambda_r, weights, lambda_r, margin)
    vt = weighted_tilt_update(ttc_inv, lam_ttc, weights, lambda_ttc_cap, margin)
    return vr, vt


def ce_search(
    model: ScenarioModel,
    plant_cfg: AvConfig,
    bin_name: str,
    event: str,
    n_per_iter: int,
    iterations: int,
    seed: int,
    label: str | None = None,
    margin: float = 0.01,
    max_zero_iters: int = 3,
) -> CeState:
    """Iterate the closed-form update on simulated batches.

    An iteration without hits leaves the proposal unchanged; after
    ``max_zero_iters`` consecutive empty iterations the search aborts
    with :class:`CeZeroHitError` rather than keep burning samples on an
    unreachable event.
    """
    if event not in CE_EVENTS:
        raise ValueError(f"event must be one of {CE_EVENTS}, got {event!r}")
    if n_per_iter < 1 or iterations < 1:
        raise ValueError("n_per_iter and iterations must be >= 1")
    b = model.bin_named(bin_name)
    lam_r = model.r_inv_exp_mean
    lam_cap = model.min_lambda_ttc_in(b)
    ns = stream_namespace(label if label is not None else f"ce/{event}/{bin_name}")

    params = ProposalParams(0.0, 0.0, bin_name)
    history: list[CeIterate] = []
    zero_run = 0
    hits = 0
    for it in range(1, iterations + 1):
        r_inv = np.empty(n_per_iter)
        ttc_inv = np.empty(n_per_iter)
        lam_ttc = np.empty(n_per_iter)
        w = np.empty(n_per_iter)
        hits = 0
        for j in range(n_per_iter):
            rng = scenario_stream(seed, (it - 1) * n_per_iter + j, ns)
            s = model.sample_scenario(b, rng, params)
            rec = classify_events(simulate(s, plant_cfg), plant_cfg)
            hit = rec.crash if event == "crash" else rec.conflict
            r_inv[j] = s.r_inv
            ttc_inv[j] = s.ttc_inv
            lam_ttc[j] = model.lambda_ttc(s.v_l)
            w[j] = s.likelihood if hit else 0.0
            hits += int(hit)
        if hits == 0:
            zero_run += 1
            if zero_run >= max_zero_iters:
                raise CeZeroHitError(
                    f"{event}/{bin_name}: no hits in {max_zero_iters} consecutive "
                    f"iterations of {n_per_iter} samples (stopped at iteration {it} "
                    f"with tilts vartheta_r={params.vartheta_r}, "
                    f"vartheta_ttc={params.vartheta_ttc}); the event may be "
                    f"unreachable from the current proposal or n_per_iter too small"
                )
        else:
            zero_run = 0
            vr, vt = ce_update(r_inv, ttc_inv, lam_ttc, w, lam_r, lam_cap, margin)
            params = ProposalParams(vr, vt, bin_name)
            model.validate_proposal(params)
        history.append(
            CeIterate(it, params.vartheta_r, params.vartheta_ttc, hits, n_per_iter)
        )
    return CeState(
        iteration=iterations,
        params=params,
        n_per_iter=n_per_iter,
        event_hits=hits,
        history=tuple(history),
        lambda_r=lam_r,
        lambda_ttc_cap=lam_cap,
    )
