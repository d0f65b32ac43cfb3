"""End-to-end experiment orchestration and report writing.

The estimation loop draws scenarios in fixed-size batches, each scenario
on its own counter-based stream, so results are byte-identical no matter
how many workers execute the batches.  Batches merge in index order and
the stopping rule is evaluated at batch boundaries only; with several
workers some batches past the stopping point may be computed and
discarded, which changes nothing in the output.

Report files carry no timestamps: rerunning the same config and seed
must reproduce them exactly.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import __version__
from .config import ExperimentConfig, config_digest
from .cross_entropy import CeState, ce_search
from .estimation import (
    MILE_M,
    EstimatorAccumulator,
    injury_probability,
    merge,
    relative_half_width,
    required_n_cmc,
)
from .plant import classify_events, simulate
from .scenario import ProposalParams, ScenarioSample, derive_kinematics, scenario_stream, stream_namespace

__all__ = [
    "EstimateRow",
    "RunReport",
    "run_experiment",
    "run_search",
    "search_to_dict",
    "write_outputs",
    "write_search_outputs",
    "render_summary",
]

_MAX_TRACE_FILES = 20  # per (event, bin, mode) combination when tracing is on


@dataclass(frozen=True)
class EstimateRow:
    """One estimate with its accounting, as it appears in the report."""

    event: str
    bin_name: str
    mode: str
    estimate: float
    ci_lo: float
    ci_hi: float
    rel_half_width: float | None
    sample_variance: float
    n: int
    converged: bool
    distance_m: float
    d_acc_mi: float
    n_nature: int | None
    n_nature_source: str  # "actual-cmc", "predicted" or "unavailable"
    d_nature_mi: float | None
    r_acc: float | None
    vartheta_r: float | None  # tilts used; None for crude Monte Carlo
    vartheta_ttc: float | None


@dataclass
class RunReport:
    cfg: ExperimentConfig
    rows: list[EstimateRow]
    ce: dict[str, CeState]
    convergence: dict[str, list[tuple[int, float, float | None, float]]]
    scenario_logs: dict[str, list[tuple]] | None = None

    @property
    def config_hash(self) -> str:
        return config_digest(self.cfg.resolved)

    def to_dict(self) -> dict:
        return {
            "provenance": {
                "config_hash": self.config_hash,
                "seed": self.cfg.seed,
                "version": __version__,
            },
            "resolved_config": self.cfg.resolved,
            "rows": [
                {
                    "event": r.event,
                    "bin": r.bin_name,
                    "mode": r.mode,
                    "estimate": r.estimate,
                    "ci_lo": r.ci_lo,
                    "ci_hi": r.ci_hi,
                    "rel_half_width": r.rel_half_width,
                    "sample_variance": r.sample_variance,
                    "n": r.n,
                    "converged": r.converged,
                    "distance_m": r.distance_m,
                    "d_acc_mi": r.d_acc_mi,
                    "n_nature": r.n_nature,
                    "n_nature_source": r.n_nature_source,
                    "d_nature_mi": r.d_nature_mi,
                    "r_acc": r.r_acc,
                    "vartheta_r": r.vartheta_r,
                    "vartheta_ttc": r.vartheta_ttc,
                }
                for r in self.rows
            ],
            "ce": {key: _ce_state_dict(st) for key, st in self.ce.items()},
            "convergence": {
                key: [[n, est, lr, var] for (n, est, lr, var) in rows]
                for key, rows in self.convergence.items()
            },
        }


def _ce_event_for(event: str) -> str:
    # Injured-occupant rates reuse the crash tilts: injuries are crashes
    # weighted by severity, so the crash proposal already covers them.
    return "crash" if event == "injury" else event


def _warm_params(cfg: ExperimentConfig, event: str, bin_name: str) -> ProposalParams | None:
    p = cfg.warm_start.get(event, {}).get(bin_name)
    if p is None and event == "injury":
        p = cfg.warm_start.get("crash", {}).get(bin_name)
    return p


def _indicator(cfg: ExperimentConfig, event: str, trace) -> float:
    rec = classify_events(trace, cfg.plant)
    if event == "conflict":
        return 1.0 if rec.conflict else 0.0
    if event == "crash":
        return 1.0 if rec.crash else 0.0
    return injury_probability(rec.delta_v, cfg.injury)


def _estimate_combo(
    cfg: ExperimentConfig,
    event: str,
    bin_name: str,
    mode: str,
    params: ProposalParams | None,
    keep_log: bool,
):
    """Batched estimation for one (event, bin, mode); see module docstring."""
    b = cfg.model.bin_named(bin_name)
    ns = stream_namespace(f"estimate/{event}/{bin_name}/{mode}")
    n_batches = math.ceil(cfg.n_cap / cfg.check_every)

    def run_batch(k: int):
        start = k * cfg.check_every
        count = min(cfg.check_every, cfg.n_cap - start)
        acc = EstimatorAccumulator()
        log = [] if keep_log else None
        for i in range(start, start + count):
            rng = scenario_stream(cfg.seed, i, ns)
            s = cfg.model.sample_scenario(b, rng, params)
            trace = simulate(s, cfg.plant)
            ind = _indicator(cfg, event, trace)
            acc.update(ind, s.likelihood, trace.distance_m)
            if keep_log:
                log.append(
                    (i, s.v_l, s.r_inv, s.ttc_inv, s.likelihood, trace.outcome,
                     trace.min_range, trace.delta_v)
                )
        return acc, log

    total = EstimatorAccumulator()
    conv: list[tuple[int, float, float | None, float]] = []
    logs: list[tuple] = []
    converged = False

    def absorb(acc_k, log_k) -> bool:
        nonlocal total
        total = merge(total, acc_k)
        if keep_log:
            logs.extend(log_k)
        if total.n < 2:
            return False
        lr = relative_half_width(total, cfg.confidence)
        conv.append((total.n, total.mean(), lr, total.sample_variance()))
        return total.n >= cfg.min_samples and lr is not None and lr < cfg.confidence.beta

    if cfg.workers == 1:
        for k in range(n_batches):
            if absorb(*run_batch(k)):
                converged = True
                break
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            futures = {}
            submitted = 0
            while submitted < min(cfg.workers, n_batches):
                futures[submitted] = ex.submit(run_batch, submitted)
                submitted += 1
            done = 0
            while done < n_batches:
                acc_k, log_k = futures.pop(done).result()
                done += 1
                if absorb(acc_k, log_k):
                    converged = True
                    break
                if submitted < n_batches:
                    futures[submitted] = ex.submit(run_batch, submitted)
                    submitted += 1
            # Batches submitted past the stopping point finish and are dropped.
    return total, conv, converged, logs


def _build_row(
    cfg: ExperimentConfig,
    event: str,
    bin_name: str,
    mode: str,
    acc: EstimatorAccumulator,
    converged: bool,
    params: ProposalParams | None,
    cmc_acc: EstimatorAccumulator | None,
) -> EstimateRow:
    m = acc.mean()
    s = math.sqrt(acc.sample_variance())
    hw = cfg.confidence.z_alpha * s / math.sqrt(acc.n)
    d_acc_mi = acc.distance_m / MILE_M

    if mode == "cmc":
        n_nature, source = acc.n, "actual-cmc"
    elif cmc_acc is not None:
        n_nature, source = cmc_acc.n, "actual-cmc"
    elif 0.0 < m < 1.0:
        n_nature, source = required_n_cmc(m, cfg.confidence), "predicted"
    else:
        n_nature, source = None, "unavailable"

    d_nature_mi = None if n_nature is None else cfg.r_lc * n_nature
    r_acc = None
    if d_nature_mi is not None and d_acc_mi > 0.0:
        r_acc = d_nature_mi / d_acc_mi

    return EstimateRow(
        event=event,
        bin_name=bin_name,
        mode=mode,
        estimate=m,
        ci_lo=max(0.0, m - hw),
        ci_hi=m + hw,
        rel_half_width=relative_half_width(acc, cfg.confidence),
        sample_variance=acc.sample_variance(),
        n=acc.n,
        converged=converged,
        distance_m=acc.distance_m,
        d_acc_mi=d_acc_mi,
        n_nature=n_nature,
        n_nature_source=source,
        d_nature_mi=d_nature_mi,
        r_acc=r_acc,
        vartheta_r=None if params is None else params.vartheta_r,
        vartheta_ttc=None if params is None else params.vartheta_ttc,
    )


def run_search(cfg: ExperimentConfig) -> dict[str, CeState]:
    """Cross-entropy search only, for every requested (event, bin)."""
    results: dict[str, CeState] = {}
    for event in cfg.events:
        ce_ev = _ce_event_for(event)
        for bin_name in cfg.bins:
            key = f"{ce_ev}/{bin_name}"
            if key not in results:
                results[key] = ce_search(
                    cfg.model, cfg.plant, bin_name, ce_ev,
                    cfg.ce_n_per_iter[ce_ev], cfg.ce_iterations, cfg.seed,
                )
    return results


def run_experiment(
    cfg: ExperimentConfig, do_ce: bool = True, verbose_traces: bool = False
) -> RunReport:
    """Search (unless warm-started or disabled) then estimate every combination."""
    ce_results: dict[str, CeState] = {}
    if "is" in cfg.modes and do_ce:
        for event in cfg.events:
            ce_ev = _ce_event_for(event)
            for bin_name in cfg.bins:
                key = f"{ce_ev}/{bin_name}"
                if _warm_params(cfg, event, bin_name) is None and key not in ce_results:
                    ce_results[key] = ce_search(
                        cfg.model, cfg.plant, bin_name, ce_ev,
                        cfg.ce_n_per_iter[ce_ev], cfg.ce_iterations, cfg.seed,
                    )

    rows: list[EstimateRow] = []
    convergence: dict[str, list] = {}
    scenario_logs: dict[str, list] | None = {} if verbose_traces else None
    for event in cfg.events:
        for bin_name in cfg.bins:
            accs = {}
            flags = {}
            tilts = {}
            for mode in cfg.modes:
                params = None
                if mode == "is":
                    params = _warm_params(cfg, event, bin_name)
                    if params is None:
                        state = ce_results.get(f"{_ce_event_for(event)}/{bin_name}")
                        if state is not None:
                            params = state.params
                        else:
                            params = ProposalParams(0.0, 0.0, bin_name)
                    cfg.model.validate_proposal(params)
                acc, conv, ok, logs = _estimate_combo(
                    cfg, event, bin_name, mode, params, verbose_traces
                )
                key = f"{event}/{bin_name}/{mode}"
                convergence[key] = conv
                if scenario_logs is not None:
                    scenario_logs[key] = logs
                accs[mode] = acc
                flags[mode] = ok
                tilts[mode] = params
            cmc_acc = accs.get("cmc") if flags.get("cmc") else None
            for mode in cfg.modes:
                rows.append(
                    _build_row(cfg, event, bin_name, mode, accs[mode], flags[mode],
                               tilts[mode], cmc_acc)
                )
    return RunReport(
        cfg=cfg, rows=rows, ce=ce_results, convergence=convergence,
        scenario_logs=scenario_logs,
    )


def _ce_state_dict(st: CeState) -> dict:
    return {
        "lambda_r": st.lambda_r,
        "lambda_ttc_cap": st.lambda_ttc_cap,
        "vartheta_r": st.params.vartheta_r,
        "vartheta_ttc": st.params.vartheta_ttc,
        "event_hits": st.event_hits,
        "n_per_iter": st.n_per_iter,
        "history": [
            [h.iteration, h.vartheta_r, h.vartheta_ttc, h.hits, h.n] for h in st.history
        ],
    }


def search_to_dict(cfg: ExperimentConfig, results: dict[str, CeState]) -> dict:
    return {
        "provenance": {
            "config_hash": config_digest(cfg.resolved),
            "seed": cfg.seed,
            "version": __version__,
        },
        "resolved_config": cfg.resolved,
        "ce": {key: _ce_state_dict(st) for key, st in results.items()},
    }


def write_search_outputs(d: dict, out_dir: str) -> None:
    """Write the tilt summary, search.json and per-search history CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    prov = d["provenance"]
    lines = [
        "cross-entropy search",
        f"config   sha256:{prov['config_hash']}",
        f"seed     {prov['seed']}",
        f"version  {prov['version']}",
        "",
    ]
    for key, st in d["ce"].items():
        lines.append(
            f"{key:<16} vartheta_r={st['vartheta_r']:.6g} "
            f"vartheta_ttc={st['vartheta_ttc']:.6g} "
            f"hits={st['event_hits']}/{st['n_per_iter']} "
            f"iterations={len(st['history'])}"
        )
    lines.append("")
    _write(os.path.join(out_dir, "summary.txt"), "\n".join(lines))
    _write(
        os.path.join(out_dir, "search.json"),
        json.dumps(d, sort_keys=True, indent=2) + "\n",
    )
    _write_ce_csvs(d, out_dir)


def _write_ce_csvs(d: dict, out_dir: str) -> None:
    for key, st in d["ce"].items():
        name = "ce_history_" + key.replace("/", "_") + ".csv"
        text = "iteration,vartheta_r,vartheta_ttc,hits,n\n" + "".join(
            f"{it},{_csv_cell(vr)},{_csv_cell(vt)},{hits},{n}\n"
            for it, vr, vt, hits, n in st["history"]
        )
        _write(os.path.join(out_dir, name), text)


def _fmt(x, width: int = 12) -> str:
    if x is None:
        return "-".rjust(width)
    if isinstance(x, bool):
        return ("yes" if x else "NO").rjust(width)
    if isinstance(x, int):
        return str(x).rjust(width)
    return f"{x:.6g}".rjust(width)


def render_summary(d: dict) -> str:
    """Human-readable summary from a report dictionary."""
    prov = d["provenance"]
    conf = d["resolved_config"]["confidence"]
    lines = [
        "accelerated-evaluation run",
        f"config   sha256:{prov['config_hash']}",
        f"seed     {prov['seed']}",
        f"version  {prov['version']}",
        "",
        f"estimates (confidence {(1.0 - conf['alpha']) * 100:.4g}%, "
        f"target relative half-width {conf['beta']:.4g}):",
    ]
    header = (
        f"{'event':<9}{'bin':<8}{'mode':<5}"
        + "".join(
            h.rjust(12)
            for h in ("estimate", "ci_lo", "ci_hi", "rel_hw", "n", "conv",
                      "D_nat_mi", "D_acc_mi", "r_acc", "n_nature")
        )
        + "  source"
    )
    lines.append(header)
    for r in d["rows"]:
        lines.append(
            f"{r['event']:<9}{r['bin']:<8}{r['mode']:<5}"
            + _fmt(r["estimate"]) + _fmt(r["ci_lo"]) + _fmt(r["ci_hi"])
            + _fmt(r["rel_half_width"]) + _fmt(r["n"]) + _fmt(r["converged"])
            + _fmt(r["d_nature_mi"]) + _fmt(r["d_acc_mi"]) + _fmt(r["r_acc"])
            + _fmt(r["n_nature"]) + f"  {r['n_nature_source']}"
        )
    if d["ce"]:
        lines += ["", "cross-entropy tilts:"]
        for key in d["ce"]:
            st = d["ce"][key]
            lines.append(
                f"{key:<16} vartheta_r={st['vartheta_r']:.6g} "
                f"vartheta_ttc={st['vartheta_ttc']:.6g} "
                f"hits={st['event_hits']}/{st['n_per_iter']} "
                f"iterations={len(st['history'])}"
            )
    lines.append("")
    return "\n".join(lines)


def _csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_outputs(d: dict, out_dir: str, report: RunReport | None = None) -> None:
    """Write summary, machine-readable report, and CSV logs into ``out_dir``.

    When a live :class:`RunReport` with scenario logs is supplied, also
    write per-scenario CSVs and re-simulated traces for the first
    event-positive tests of each combination.
    """
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "summary.txt"), render_summary(d))
    _write(
        os.path.join(out_dir, "report.json"),
        json.dumps(d, sort_keys=True, indent=2) + "\n",
    )
    for key, rows in d["convergence"].items():
        name = "convergence_" + key.replace("/", "_") + ".csv"
        text = "n,estimate,rel_half_width,sample_variance\n" + "".join(
            f"{n},{_csv_cell(est)},{_csv_cell(lr)},{_csv_cell(var)}\n"
            for n, est, lr, var in rows
        )
        _write(os.path.join(out_dir, name), text)
    _write_ce_csvs(d, out_dir)
    if report is not None and report.scenario_logs:
        _write_scenario_logs(report, out_dir)


def _write_scenario_logs(report: RunReport, out_dir: str) -> None:
    cfg = report.cfg
    for key, rows in report.scenario_logs.items():
        name = "scenarios_" + key.replace("/", "_") + ".csv"
        text = "index,v_l,r_inv,ttc_inv,likelihood,outcome,min_range,delta_v\n" + "".join(
            f"{i},{_csv_cell(v_l)},{_csv_cell(r_inv)},{_csv_cell(ttc_inv)},"
            f"{_csv_cell(lik)},{outcome},{_csv_cell(mr)},{_csv_cell(dv)}\n"
            for i, v_l, r_inv, ttc_inv, lik, outcome, mr, dv in rows
        )
        _write(os.path.join(out_dir, name), text)
        trace_dir = os.path.join(out_dir, "traces", key.replace("/", "_"))
        picked = [r for r in rows if r[5] != "none"][:_MAX_TRACE_FILES]
        if picked:
            os.makedirs(trace_dir, exist_ok=True)
        for i, v_l, r_inv, ttc_inv, _lik, _outcome, _mr, _dv in picked:
            rdot, v0, r0 = derive_kinematics(v_l, r_inv, ttc_inv)
            s = ScenarioSample(
                v_l=v_l, r_inv=r_inv, ttc_inv=ttc_inv, r0=r0, rdot=rdot, v0=v0,
                likelihood=1.0,
            )
            trace = simulate(s, cfg.plant, record=True)
            text = "t,r,v,a_cmd,a,mode\n" + "".join(
                f"{_csv_cell(st.t)},{_csv_cell(st.r)},{_csv_cell(st.v)},"
                f"{_csv_cell(st.a_cmd)},{_csv_cell(st.a)},{st.mode}\n"
                for st in trace.states
            )
            _write(os.path.join(trace_dir, f"{i:06d}.csv"), text)
