"""Command line entry point: ``polyshare {eval,simulate,bench}``.

Reports are CSV files plus key=value lines on stdout; ``simulate`` and
``bench`` also render a PNG next to their CSV when ``--out`` is given.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import random
import sys
import time
from importlib import resources
from pathlib import Path

from polyshare.harness.session import collect_metrics, open_session
from polyshare.modring import FixedPointFormat, decode
from polyshare.plant import PlantModel, SimConfig, run_closed_loop
from polyshare.polyctrl import (
    N_PARTY,
    SCHEMES,
    THREE_PARTY,
    encode_state,
    evaluate_plaintext,
    evaluate_secure,
    load_law,
    plan_evaluation,
    quantize_law,
)

log = logging.getLogger("polyshare")

DEFAULT_LAW = "cubic_plant.json"


@dataclasses.dataclass
class RunConfig:
    scheme: str
    fmt: FixedPointFormat
    law_path: str
    sim: SimConfig
    transport: str
    seed: int | None
    out: Path | None
    share_constants: bool
    zero_mode: str


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _fmt_number(x) -> str:
    return format(float(x), ".10g")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--law", help="law definition (JSON); default: the shipped cubic plant law")
    common.add_argument("--scheme", choices=SCHEMES, default=THREE_PARTY)
    common.add_argument("--beta", type=int, help="radix (overrides the law file)")
    common.add_argument("--xpost", type=int, help="fractional digits (overrides the law file)")
    common.add_argument("--upre", type=int, help="integer digits of the result (overrides the law file)")
    common.add_argument("--seed", type=int, default=0, help="randomness seed; -1 uses the system CSPRNG")
    common.add_argument("--transport", choices=("in-memory", "framed-stream"), default="in-memory")
    common.add_argument("--out", type=Path, help="directory for CSV reports and figures")
    common.add_argument("--share-constants", action="store_true",
                        help="split constant terms over the servers instead of handing them to the collector")
    common.add_argument("--zero-sharing-mode", choices=("communication", "correlated-randomness"),
                        default="communication")
    common.add_argument("--steps", type=int, default=2000)
    common.add_argument("--ts", type=float, default=1.0, help="sample period [s]")

    p = argparse.ArgumentParser(prog="polyshare", description="Secret-shared polynomial control.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", parents=[common], help="one secure evaluation at a given state")
    ev.add_argument("--state", type=_floats, default=(1.0, 1.0), help="comma separated, e.g. 1,1")
    ev.add_argument("--inject-fault", action="store_true", help="corrupt one share to exercise the detector")

    sim = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    sim.add_argument("--x0", type=_floats, default=(2.0, -2.0))
    sim.add_argument("--substeps", type=int, default=10)
    sim.add_argument("--box", type=float, default=6.0)
    sim.add_argument("--T", type=float, default=1000.0, help="plant time scaling")

    bench = sub.add_parser("bench", parents=[common], help="operation and message counts for both schemes")
    bench.add_argument("--states", type=int, default=20, help="random states per scheme")
    return p


def make_config(args) -> tuple[RunConfig, object]:
    if args.law:
        lf = load_law(args.law)
        law_path = args.law
    else:
        with resources.as_file(resources.files("polyshare.laws") / DEFAULT_LAW) as path:
            lf = load_law(path)
        law_path = DEFAULT_LAW
    fmt = FixedPointFormat(
        beta=args.beta if args.beta is not None else lf.fmt.beta,
        x_post=args.xpost if args.xpost is not None else lf.fmt.x_post,
        u_pre=args.upre if args.upre is not None else lf.fmt.u_pre,
        degree_d=lf.fmt.degree_d,
    )
    sim = SimConfig(ts=args.ts, steps=args.steps, substeps=getattr(args, "substeps", 10),
                    x0=tuple(getattr(args, "x0", (2.0, -2.0))), box=getattr(args, "box", 6.0))
    cfg = RunConfig(args.scheme, fmt, law_path, sim, args.transport, None if args.seed == -1 else args.seed,
                    args.out, args.share_constants, args.zero_sharing_mode)
    return cfg, lf.law


def _emit(lines: list[tuple[str, object]], out=None) -> None:
    out = out or sys.stdout
    for k, v in lines:
        print(f"{k}={v}", file=out)


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _metric_rows(metrics, scheme: str) -> list[dict]:
    return [{"scheme": scheme, **r} for r in metrics.rows()]


def cmd_eval(cfg: RunConfig, law, state, inject_fault: bool = False) -> int:
    qlaw = quantize_law(law, cfg.fmt)
    plan = plan_evaluation(qlaw, cfg.scheme, share_constants=cfg.share_constants, zero_mode=cfg.zero_mode)
    x = encode_state(state, cfg.fmt)
    with open_session(plan, transport=cfg.transport, seed=cfg.seed, inject_fault=inject_fault) as session:
        u_sec = evaluate_secure(qlaw, plan, x, session)
        metrics = collect_metrics(session)
    u_ref = evaluate_plaintext(qlaw, x)
    match = u_sec == u_ref
    _emit([
        ("scheme", cfg.scheme),
        ("law", cfg.law_path),
        ("modulus", cfg.fmt.Q),
        ("state", ",".join(_fmt_number(decode(s, cfg.fmt)) for s in x)),
        ("u_secure", _fmt_number(decode(u_sec, cfg.fmt))),
        ("u_plaintext", _fmt_number(decode(u_ref, cfg.fmt))),
        ("match", str(match).lower()),
        ("servers", plan.pool_size),
    ])
    buf = io.StringIO()
    rows = _metric_rows(metrics, cfg.scheme)
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())
    if cfg.out:
        cfg.out.mkdir(parents=True, exist_ok=True)
        _write_rows(cfg.out / "eval_metrics.csv", rows)
    return 0 if match else 1


def cmd_simulate(cfg: RunConfig, law, model: PlantModel = PlantModel()) -> int:
    traj = run_closed_loop(law, cfg.fmt, cfg.scheme, cfg.sim, seed=cfg.seed, model=model, transport=cfg.transport,
                           zero_mode=cfg.zero_mode, share_constants=cfg.share_constants)
    last = traj.rows[-1]
    finite_u = [abs(r.u_decoded) for r in traj.rows if r.u_decoded == r.u_decoded]
    _emit([
        ("scheme", cfg.scheme),
        ("steps", len(traj.rows) - 1),
        ("diverged", str(traj.diverged).lower()),
        ("x_final", f"{_fmt_number(last.x1)},{_fmt_number(last.x2)}"),
        ("max_abs_u", _fmt_number(max(finite_u, default=0.0))),
    ])
    if cfg.out:
        from polyshare.plotting import plot_trajectory

        cfg.out.mkdir(parents=True, exist_ok=True)
        traj.write_csv(cfg.out / "trajectory.csv")
        if traj.step_metrics:
            traj.write_step_metrics(cfg.out / "step_metrics.csv")
        plot_trajectory(traj, cfg.out / "trajectory.png")
    return 2 if traj.diverged else 0


def bench_rows(cfg: RunConfig, law, n_states: int) -> tuple[list[dict], list[tuple[str, object]]]:
    """Run both schemes on the same random states; per-step counts per role."""
    qlaw = quantize_law(law, cfg.fmt)
    rng = random.Random(cfg.seed if cfg.seed is not None else 0)
    states = [encode_state([rng.uniform(-6, 6) for _ in range(qlaw.n_x)], cfg.fmt) for _ in range(n_states)]
    rows: list[dict] = []
    checks: list[tuple[str, object]] = []
    for scheme in (THREE_PARTY, N_PARTY):
        plan = plan_evaluation(qlaw, scheme, share_constants=cfg.share_constants, zero_mode=cfg.zero_mode)
        with open_session(plan, transport=cfg.transport, seed=cfg.seed) as session:
            t0 = time.perf_counter()
            for x in states:
                if evaluate_secure(qlaw, plan, x, session) != evaluate_plaintext(qlaw, x):
                    raise RuntimeError(f"{scheme}: secure result differs from the plaintext oracle")
            wall = (time.perf_counter() - t0) / max(n_states, 1)
            metrics = collect_metrics(session)
        for r in metrics.rows():
            row = {"scheme": scheme, "role": r["role"]}
            for k in ("adds", "muls", "draws", "messages", "bytes"):
                row[k] = r[k] // n_states if r[k] % n_states == 0 else r[k] / n_states
            row["wall_time_us"] = round(wall * 1e6, 1) if r["role"] == "total" else ""
            rows.append(row)
        s2s = sum(1 for e in session.log if 1 <= e.sender <= 254 and 1 <= e.receiver <= 254 and e.kind == "reshare")
        checks += [
            (f"{scheme}.servers", plan.pool_size),
            (f"{scheme}.circular_rounds_per_step", plan.circular_rounds()),
            (f"{scheme}.reshare_frames_per_step", s2s // max(n_states, 1)),
            (f"{scheme}.server_to_server_frames", sum(1 for e in session.log if 1 <= e.sender <= 254
                                                      and 1 <= e.receiver <= 254)),
        ]
    return rows, checks


def cmd_bench(cfg: RunConfig, law, n_states: int = 20) -> int:
    rows, checks = bench_rows(cfg, law, n_states)
    _emit([("states", n_states), ("law", cfg.law_path)] + checks)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())
    print("# wall_time_us is machine-specific; all other columns are exact counts per control step")
    if cfg.out:
        from polyshare.plotting import plot_bench

        cfg.out.mkdir(parents=True, exist_ok=True)
        _write_rows(cfg.out / "bench.csv", rows)
        plot_bench(rows, cfg.out / "bench.png")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg, law = make_config(args)
    if args.command == "eval":
        return cmd_eval(cfg, law, args.state, args.inject_fault)
    if args.command == "simulate":
        return cmd_simulate(cfg, law, PlantModel(args.T))
    return cmd_bench(cfg, law, args.states)


if __name__ == "__main__":
    sys.exit(main())
