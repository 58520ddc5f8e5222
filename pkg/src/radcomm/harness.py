"""Monte-Carlo runner, parameter sweeps and CSV/JSON emission, plus the CLI.

Every output is a pure function of the configuration and the requested
grid: trial ``k`` always draws its channels from ``(cfg.seed, k)``, so
sweeps are paired across values.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from radcomm.baselines import comm_absent_optimum, greedy_report, greedy_search, waterfill_comm
from radcomm.joint_design import solve_joint
from radcomm.metrics import (
    PowerAllocation,
    SolveReport,
    Status,
    comm_throughput,
    constraint_violations,
    radar_sinr,
)
from radcomm.scenario import (
    ChannelRealization,
    ConfigError,
    Constraints,
    SystemConfig,
    generate_channels,
    grouped_profile,
    load_config,
    to_flat_dict,
)
from radcomm.unilateral_design import unilateral_report

METHODS = ("joint", "unilateral", "greedy", "comm_absent")
CSV_HEADER = ("trial", "method", "sweep_param", "sweep_value", "sinr_linear", "sinr_db",
              "throughput", "outer_iters", "status")
SWEEP_PARAMS = {"pr": "P_r", "pc": "P_c", "kappa": "kappa"}
STATUS_INVALID = "constraint_violation"

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else float("nan")


@dataclass(frozen=True)
class ExperimentRecord:
    """One (trial, method) outcome, optionally tagged with sweep coordinates."""

    trial_index: int
    method: str
    sinr_linear: float
    sinr_db: float
    throughput: float
    outer_iters: int
    status: str
    sweep_coordinates: dict = field(default_factory=dict)
    allocation: Optional[PowerAllocation] = field(default=None, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in (Status.CONVERGED.value, Status.MAX_ITERS.value)

    def sort_key(self):
        return (tuple(self.sweep_coordinates.values()), self.trial_index, self.method)


def normalize_methods(methods: Iterable[str]) -> list:
    out = []
    for m in methods:
        name = m.strip().replace("-", "_")
        if name not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if name not in out:
            out.append(name)
    if not out:
        raise ConfigError("no methods requested")
    return out


def _solve(method: str, ch: ChannelRealization, cons: Constraints, cfg: SystemConfig) -> SolveReport:
    if method == "joint":
        return solve_joint(ch, cons, cfg)
    if method == "unilateral":
        return unilateral_report(ch, cons, cfg)
    if method == "greedy":
        return greedy_report(ch, cons, cfg)
    return comm_absent_optimum(ch, cons, cfg)


def make_record(trial: int, method: str, report: SolveReport, ch: ChannelRealization,
                cons: Constraints, coords: Optional[dict] = None) -> ExperimentRecord:
    """Turn a solver report into a record, re-checking the allocation first."""
    status = report.status.value
    alloc = report.allocation
    if alloc is not None:
        viol = constraint_violations(ch, alloc, cons, check_throughput=(method != "comm_absent"))
        if viol:
            status = STATUS_INVALID
    sinr = float(report.sinr)
    return ExperimentRecord(
        trial_index=trial, method=method, sinr_linear=sinr, sinr_db=_db(sinr),
        throughput=float(report.throughput), outer_iters=int(report.outer_iters), status=status,
        sweep_coordinates=dict(coords or {}), allocation=alloc)


def _trial_records(args):
    cfg, trial, methods, coords = args
    ch = generate_channels(cfg, trial)
    cons = cfg.resolved_constraints()
    out = []
    for m in methods:
        try:
            report = _solve(m, ch, cons, cfg)
        except Exception as exc:  # recorded, never fatal for the batch
            out.append(ExperimentRecord(trial, m, float("nan"), float("nan"), float("nan"), 0,
                                        f"error: {type(exc).__name__}: {exc}", dict(coords)))
            continue
        out.append(make_record(trial, m, report, ch, cons, coords))
    return out


def _execute(jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_trial_records, jobs))
    else:
        chunks = [_trial_records(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=ExperimentRecord.sort_key)


def run_trials(cfg: SystemConfig, methods: Iterable[str] = METHODS, workers: int = 1,
               coords: Optional[dict] = None) -> list:
    """``cfg.trials`` Monte-Carlo trials, one record per (trial, method)."""
    methods = normalize_methods(methods)
    jobs = [(cfg, k, methods, dict(coords or {})) for k in range(cfg.trials)]
    return _execute(jobs, workers)


def sweep(cfg: SystemConfig, param: str, values: Sequence[float], methods: Iterable[str] = METHODS,
          workers: int = 1) -> list:
    """Re-run the trials with ``param`` (``P_r``, ``P_c`` or ``kappa``) set to each value."""
    param = SWEEP_PARAMS.get(param, param)
    if param not in SWEEP_PARAMS.values():
        raise ConfigError(f"cannot sweep {param!r}; choose one of P_r, P_c, kappa")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one value")
    methods = normalize_methods(methods)
    jobs = []
    for v in values:
        sub = cfg.with_updates(**{param: float(v)})
        jobs += [(sub, k, methods, {param: float(v)}) for k in range(cfg.trials)]
    return _execute(jobs, workers)


def contour_grid(cfg: SystemConfig, pr_values: Sequence[float], pc_values: Sequence[float],
                 methods: Iterable[str] = METHODS, workers: int = 1) -> list:
    """Full (P_r, P_c) Cartesian product of Monte-Carlo runs."""
    if len(pr_values) == 0 or len(pc_values) == 0:
        raise ConfigError("contour grids must be nonempty")
    methods = normalize_methods(methods)
    jobs = []
    for pr in pr_values:
        for pc in pc_values:
            sub = cfg.with_updates(P_r=float(pr), P_c=float(pc))
            coords = {"P_r": float(pr), "P_c": float(pc)}
            jobs += [(sub, k, methods, coords) for k in range(cfg.trials)]
    return _execute(jobs, workers)


# ---------------------------------------------------------------- summaries

def summarize(records: Iterable[ExperimentRecord]) -> list:
    """Per (coordinates, method) averages over successful trials.

    Infeasible and failed trials are counted but excluded from the means.
    """
    groups: dict = {}
    for r in records:
        key = (tuple(r.sweep_coordinates.items()), r.method)
        groups.setdefault(key, []).append(r)
    rows = []
    for (coords, method), recs in groups.items():
        good = [r for r in recs if r.ok and r.sinr_linear > 0]
        lin = np.array([r.sinr_linear for r in good])
        db = np.array([r.sinr_db for r in good])
        rows.append({
            "coordinates": dict(coords),
            "method": method,
            "trials": len(recs),
            "successful": len(good),
            "infeasible": sum(r.status == Status.INFEASIBLE.value for r in recs),
            "failed": sum(not r.ok and r.status != Status.INFEASIBLE.value for r in recs),
            "mean_sinr_linear": float(lin.mean()) if good else float("nan"),
            "mean_sinr_db": float(db.mean()) if good else float("nan"),
            "mean_throughput": float(np.mean([r.throughput for r in good])) if good else float("nan"),
        })
    return rows


def mean_db(records: Iterable[ExperimentRecord], method: str, **coords) -> float:
    vals = [r.sinr_db for r in records
            if r.method == method and r.ok and r.sinr_linear > 0
            and all(r.sweep_coordinates.get(k) == v for k, v in coords.items())]
    return float(np.mean(vals)) if vals else float("nan")


# ---------------------------------------------------------------- CSV / JSON

def _fmt(x: float) -> str:
    return repr(float(x))


def records_to_csv(records: Iterable[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(records, key=ExperimentRecord.sort_key):
        w.writerow([
            r.trial_index, r.method,
            ";".join(r.sweep_coordinates.keys()),
            ";".join(_fmt(v) for v in r.sweep_coordinates.values()),
            _fmt(r.sinr_linear), _fmt(r.sinr_db), _fmt(r.throughput), r.outer_iters, r.status,
        ])
    return buf.getvalue()


def records_from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for row in reader:
        trial, method, sp, sv, lin, db, thr, outer, status = row
        keys = sp.split(";") if sp else []
        vals = [float(v) for v in sv.split(";")] if sv else []
        out.append(ExperimentRecord(int(trial), method, float(lin), float(db), float(thr),
                                    int(outer), status, dict(zip(keys, vals))))
    return out


def write_csv(path, records) -> None:
    Path(path).write_text(records_to_csv(records))


def read_csv(path) -> list:
    return records_from_csv(Path(path).read_text())


def _json_float(x: float):
    return x if math.isfinite(x) else None


def records_to_json(cfg: SystemConfig, records: Iterable[ExperimentRecord]) -> str:
    """Archival document: the flat config, the records and their summary."""
    recs = sorted(records, key=ExperimentRecord.sort_key)
    body = {
        "config": to_flat_dict(cfg),
        "records": [{
            "trial": r.trial_index, "method": r.method, "sweep_coordinates": r.sweep_coordinates,
            "sinr_linear": _json_float(r.sinr_linear), "sinr_db": _json_float(r.sinr_db),
            "throughput": _json_float(r.throughput), "outer_iters": r.outer_iters, "status": r.status,
        } for r in recs],
        "summary": [{k: (_json_float(v) if isinstance(v, float) else v) for k, v in row.items()}
                    for row in summarize(recs)],
    }
    return json.dumps(body, indent=2, sort_keys=True)


# ---------------------------------------------------------------- grouped profile

PROFILE_HEADER = ("method", "subcarrier", "group", "p_r", "p_c", "sinr_linear", "sinr_db", "throughput")


@dataclass
class ProfileTable:
    """Per-subcarrier allocations of several designs on one channel profile."""

    profile: ChannelRealization
    n_per_group: int
    allocations: dict
    sinr: dict
    throughput: dict
    greedy_assignment: np.ndarray

    def group_of(self, n: int) -> int:
        return n // self.n_per_group + 1

    def group_power(self, method: str, groups: Sequence[int], system: str = "c") -> float:
        alloc = self.allocations[method]
        vec = alloc.p_c if system == "c" else alloc.p_r
        idx = np.arange(self.profile.n) // self.n_per_group + 1
        return float(vec[np.isin(idx, groups)].sum())

    def rows(self):
        for method, alloc in self.allocations.items():
            for n in range(self.profile.n):
                yield (method, n, self.group_of(n), float(alloc.p_r[n]), float(alloc.p_c[n]),
                       self.sinr[method], _db(self.sinr[method]), self.throughput[method])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for row in self.rows():
            w.writerow([row[0], row[1], row[2]] + [_fmt(v) for v in row[3:]])
        return buf.getvalue()


class InfeasibleInstance(RuntimeError):
    pass


def allocation_profile(profile: ChannelRealization, cons: Constraints, cfg: SystemConfig,
                       n_per_group: Optional[int] = None) -> ProfileTable:
    """Run every design on one deterministic profile.

    The ``waterfill`` entry is the comm-only waterfilling baseline with the
    radar silent. Raises :class:`InfeasibleInstance` if the throughput floor
    is unreachable.
    """
    cons = cons.resolved(profile.n)
    if n_per_group is None:
        if profile.n % 4:
            raise ValueError("profile length must be a multiple of 4 groups")
        n_per_group = profile.n // 4
    reports = {
        "greedy": greedy_report(profile, cons, cfg),
        "unilateral": unilateral_report(profile, cons, cfg),
        "joint": solve_joint(profile, cons, cfg),
        "comm_absent": comm_absent_optimum(profile, cons, cfg),
    }
    for m, rep in reports.items():
        if rep.allocation is None:
            raise InfeasibleInstance(f"{m}: throughput floor {cons.throughput_floor} unreachable")
    allocs = {m: rep.allocation for m, rep in reports.items()}
    allocs["waterfill"] = PowerAllocation(np.zeros(profile.n), waterfill_comm(profile, cons))
    _, u = greedy_search(profile, cons)
    return ProfileTable(
        profile=profile, n_per_group=n_per_group, allocations=allocs,
        sinr={m: radar_sinr(profile, a) for m, a in allocs.items()},
        throughput={m: comm_throughput(profile, a) for m, a in allocs.items()},
        greedy_assignment=u,
    )


# ---------------------------------------------------------------- CLI

def _float_list(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}") from exc
    if not vals:
        raise ConfigError("empty value list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radcomm",
                                     description="Radar/communication power allocation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, methods=True):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--json", help="optional archival JSON path")
        if methods:
            p.add_argument("--methods", default="joint,unilateral,greedy,comm-absent")
            p.add_argument("--workers", type=int, default=1)
        return p

    common(sub.add_parser("run", help="Monte-Carlo trials at one operating point"))
    p = common(sub.add_parser("sweep", help="sweep P_r, P_c or kappa"))
    p.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument("--values", required=True)
    p = common(sub.add_parser("contour", help="(P_r, P_c) grid"))
    p.add_argument("--pr", required=True)
    p.add_argument("--pc", required=True)
    p = common(sub.add_parser("profile", help="per-subcarrier allocations on the grouped profile"),
               methods=False)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--per-group", type=int, default=32)
    p.add_argument("--high", type=float, default=1.0)
    p.add_argument("--low", type=float, default=0.1)
    return parser


def _emit(args, cfg, records) -> int:
    write_csv(args.out, records)
    if args.json:
        Path(args.json).write_text(records_to_json(cfg, records))
    for row in summarize(records):
        coords = " ".join(f"{k}={v:g}" for k, v in row["coordinates"].items())
        print(f"{coords} {row['method']}: mean {row['mean_sinr_db']:.3f} dB "
              f"({row['successful']}/{row['trials']} ok, {row['infeasible']} infeasible)".strip())
    single = cfg.trials == 1 and len({tuple(r.sweep_coordinates.items()) for r in records}) == 1
    if single and any(r.status == Status.INFEASIBLE.value for r in records):
        return EXIT_INFEASIBLE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "profile":
            if args.groups != 4:
                raise ConfigError("the grouped profile has exactly 4 groups")
            prof = grouped_profile(args.per_group, args.high, args.low)
            table = allocation_profile(prof, cfg.constraints, cfg, n_per_group=args.per_group)
            Path(args.out).write_text(table.to_csv())
            if args.json:
                Path(args.json).write_text(json.dumps({
                    "config": to_flat_dict(cfg),
                    "sinr_db": {m: _json_float(_db(s)) for m, s in table.sinr.items()},
                    "throughput": table.throughput,
                }, indent=2, sort_keys=True))
            for m, s in table.sinr.items():
                print(f"{m}: {_db(s):.3f} dB, throughput {table.throughput[m]:.3f}")
            return EXIT_OK
        methods = normalize_methods(args.methods.split(","))
        if args.command == "run":
            records = run_trials(cfg, methods, workers=args.workers)
        elif args.command == "sweep":
            records = sweep(cfg, SWEEP_PARAMS[args.param], _float_list(args.values), methods,
                            workers=args.workers)
        else:
            records = contour_grid(cfg, _float_list(args.pr), _float_list(args.pc), methods,
                                   workers=args.workers)
        return _emit(args, cfg, records)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleInstance as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
