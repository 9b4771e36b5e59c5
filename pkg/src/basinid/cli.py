"""Command-line harness.

Verbs:
  run            execute an experiment manifest and write result artifacts
  indicate       assign new states to the basins of a finished run
  dump-plot      render a repeat's stored trajectories to plot-ready CSV
  verify-theorem check the exact risk-separation bounds on a finite chain

Exit codes: 0 success, 1 validation error, 2 pipeline failure,
3 threshold/verification miss.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import BasinIdError
from .manifest import manifest_from_json
from .net import load_params
from .oracle import chain_from_json, verify_theorem1
from .pipeline import CandidateSet, PartitionResult, indicate
from .rng import derive_seed
from .runner import check_acceptance, dump_plot_csv, run_manifest

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PIPELINE = 2
EXIT_THRESHOLD = 3


def _cmd_run(args) -> int:
    try:
        manifest = manifest_from_json(args.manifest)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    outdir = args.out or manifest.output_dir or f"runs/{manifest.name}"
    try:
        results = run_manifest(manifest, outdir, workers=args.workers)
    except BasinIdError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    agg = results["aggregate"]
    print(
        f"{manifest.name}: ARI {agg['ari']['mean']} +/- {agg['ari']['std']}, "
        f"NMI {agg['nmi']['mean']} +/- {agg['nmi']['std']}, "
        f"basins {agg['num_basins']['mean']} +/- {agg['num_basins']['std']}, "
        f"failures {agg['failures']}"
    )
    if agg["failures"]:
        return EXIT_PIPELINE
    misses = check_acceptance(manifest, results)
    if misses:
        for m in misses:
            print(f"threshold miss: {m}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def _load_partition(repeat_dir: Path) -> PartitionResult:
    with open(repeat_dir / "partition.json") as fh:
        meta = json.load(fh)
    risk = np.array(
        [[np.nan if v is None else v for v in row] for row in meta["risk_matrix"]]
    )
    classifier = None
    if meta.get("checkpoint"):
        classifier = load_params(repeat_dir / meta["checkpoint"])
    data = np.load(repeat_dir / "endpoints.npz")
    eval_endpoints = {
        int(key[3:]): data[key] for key in data.files if key.startswith("ep_")
    }
    candidates = CandidateSet(states=data["candidates"], provenance=meta["provenance"])
    return PartitionResult(
        labels=[int(v) for v in meta["labels"]],
        num_basins=int(meta["num_basins"]),
        risk_matrix=risk,
        merged_pairs=[tuple(p) for p in meta["merged_pairs"]],
        classifier=classifier,
        candidates=candidates,
        eval_endpoints=eval_endpoints,
    )


def _read_points(path: Path):
    points = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                points.append((lineno, [float(v) for v in fields]))
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ValueError(f"line {lineno}: non-numeric value")
    return points


def _cmd_indicate(args) -> int:
    repeat_dir = Path(args.run_dir)
    try:
        manifest = manifest_from_json(repeat_dir.parent / "manifest.json")
        partition = _load_partition(repeat_dir)
        points = _read_points(Path(args.points))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    kernel = manifest.build_kernel()
    rows = []
    for i, (lineno, coords) in enumerate(points):
        if len(coords) != kernel.dim:
            print(
                f"error: line {lineno}: point has dimension {len(coords)}, kernel needs {kernel.dim}",
                file=sys.stderr,
            )
            return EXIT_VALIDATION
        try:
            basin = indicate(
                partition, kernel, manifest.nbi, np.asarray(coords),
                derive_seed(args.seed, i),
            )
        except BasinIdError as exc:
            print(f"pipeline error: line {lineno}: {exc}", file=sys.stderr)
            return EXIT_PIPELINE
        rows.append((i, basin))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("index,basin\n")
        for i, basin in rows:
            out.write(f"{i},{basin}\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _cmd_dump_plot(args) -> int:
    target = Path(args.run_dir)
    repeat_dirs = (
        [target]
        if (target / "plot_trajectories.npz").exists()
        else sorted(target.glob("repeat_*"))
    )
    if not repeat_dirs:
        print(f"error: no repeat artifacts under {target}", file=sys.stderr)
        return EXIT_VALIDATION
    for rep in repeat_dirs:
        try:
            out = dump_plot_csv(rep)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(out)
    return EXIT_OK


def _cmd_verify_theorem(args) -> int:
    try:
        chain = chain_from_json(args.chain)
        report = verify_theorem1(chain, args.t_star, args.horizon)
    except (OSError, ValueError, json.JSONDecodeError, BasinIdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(
        f"delta={report.delta:.6g} epsilon={report.epsilon:.6g} "
        f"same-well floor={report.same_floor:.6g}"
    )
    for w in report.assumption_warnings:
        print(f"assumption: {w}")
    for pc in report.pairs:
        kind = "same " if pc.same_well else "cross"
        rel = ">=" if pc.same_well else "<="
        status = "ok" if pc.ok else "VIOLATION"
        print(
            f"{kind} pair ({pc.x0},{pc.x1}): risk={pc.risk:.6g} {rel} bound={pc.bound:.6g} [{status}]"
        )
    return EXIT_OK if report.ok else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basinid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment manifest")
    p_run.add_argument("manifest", help="manifest JSON path")
    p_run.add_argument("--out", help="output directory (overrides the manifest)")
    p_run.add_argument("--workers", type=int, default=None, help="parallel repeats (default: NBI_WORKERS or 1)")
    p_run.set_defaults(func=_cmd_run)

    p_ind = sub.add_parser("indicate", help="assign new states to basins")
    p_ind.add_argument("run_dir", help="repeat artifact directory (contains partition.json)")
    p_ind.add_argument("points", help="CSV of states, one per row")
    p_ind.add_argument("--out", help="output CSV path (default stdout)")
    p_ind.add_argument("--seed", type=int, default=0, help="seed for indicator simulations")
    p_ind.set_defaults(func=_cmd_indicate)

    p_plot = sub.add_parser("dump-plot", help="write plot-ready trajectory CSVs")
    p_plot.add_argument("run_dir", help="run output directory or a single repeat directory")
    p_plot.set_defaults(func=_cmd_dump_plot)

    p_thm = sub.add_parser("verify-theorem", help="check risk bounds on a finite chain")
    p_thm.add_argument("chain", help="chain JSON (P, wells, cores)")
    p_thm.add_argument("--t-star", type=int, required=True, dest="t_star")
    p_thm.add_argument("--horizon", type=int, required=True, help="basin-partition horizon T")
    p_thm.set_defaults(func=_cmd_verify_theorem)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
