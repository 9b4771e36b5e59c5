"""Manifest execution: repeats, artifact files, and aggregate results.

Per repeat the runner discovers candidates, refines them, evaluates the
partition against the manifest's analytic ground truth, and writes a
self-contained artifact directory. Repeats use sub-seeds derived from the
master seed, so results are independent of execution order and the number
of workers; result files carry no timestamps, making reruns byte-identical.
"""

from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import simulate_batch
from .errors import BasinIdError
from .manifest import ExperimentManifest, plot_projection, resolve_rule
from .metrics import ari, nmi
from .net import save_params
from .pipeline import PartitionResult, discover_candidates, refine
from .rng import derive_seed

_REPEAT_TAG = 100
_DISCOVERY_TAG = 0
_REFINE_TAG = 1
_PLOT_TAG = 2


@dataclass
class RepeatRecord:
    repeat: int
    seed: int
    num_candidates: int
    num_basins: int
    ari: float
    nmi: float
    error: str | None = None


def _json_risk(risk: np.ndarray):
    return [[None if not np.isfinite(v) else v for v in row] for row in risk.tolist()]


def _write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _dump_endpoint_csv(path: Path, partition: PartitionResult, truth_fn, project) -> None:
    """One row per held-out endpoint: candidate, predicted basin, true label,
    projected coordinates."""
    with open(path, "w") as fh:
        first = next(iter(partition.eval_endpoints.values()))
        k_cols = project(first[:1]).shape[1]
        header = "candidate,predicted_label,true_label," + ",".join(
            f"c{i}" for i in range(k_cols)
        )
        fh.write(header + "\n")
        for cand in sorted(partition.eval_endpoints):
            pts = partition.eval_endpoints[cand]
            coords = project(pts)
            truths = truth_fn(pts)
            pred = partition.labels[cand]
            for row in range(pts.shape[0]):
                cs = ",".join(repr(float(v)) for v in coords[row])
                fh.write(f"{cand},{pred},{int(truths[row])},{cs}\n")


def run_repeat(manifest: ExperimentManifest, repeat: int, outdir: Path) -> RepeatRecord:
    seed = derive_seed(manifest.seed, _REPEAT_TAG, repeat)
    kernel = manifest.build_kernel()
    truth_fn = resolve_rule(manifest)
    project = plot_projection(kernel)
    rep_dir = outdir / f"repeat_{repeat:03d}"
    rep_dir.mkdir(parents=True, exist_ok=True)

    try:
        candidates = discover_candidates(
            kernel, manifest.nbi.discovery, derive_seed(seed, _DISCOVERY_TAG)
        )
        partition = refine(candidates, kernel, manifest.nbi, derive_seed(seed, _REFINE_TAG))
        truth = truth_fn(candidates.states)
        record = RepeatRecord(
            repeat=repeat,
            seed=seed,
            num_candidates=len(candidates),
            num_basins=partition.num_basins,
            ari=ari(partition.labels, truth),
            nmi=nmi(partition.labels, truth),
        )
    except BasinIdError as exc:
        return RepeatRecord(
            repeat=repeat, seed=seed, num_candidates=0, num_basins=0,
            ari=0.0, nmi=0.0, error=str(exc),
        )

    checkpoint = None
    if partition.classifier is not None:
        checkpoint = "classifier.bin"
        save_params(partition.classifier, rep_dir / checkpoint)
    _write_json(
        rep_dir / "partition.json",
        {
            "labels": partition.labels,
            "num_basins": partition.num_basins,
            "risk_matrix": _json_risk(partition.risk_matrix),
            "merged_pairs": [[i, j, r] for i, j, r in partition.merged_pairs],
            "checkpoint": checkpoint,
            "candidates": partition.candidates.states.tolist(),
            "provenance": partition.candidates.provenance,
            "truth_labels": [int(t) for t in truth],
            "ari": record.ari,
            "nmi": record.nmi,
            "seed": seed,
        },
    )
    np.savez_compressed(
        rep_dir / "endpoints.npz",
        candidates=partition.candidates.states,
        **{f"ep_{i}": ep for i, ep in partition.eval_endpoints.items()},
    )
    if partition.eval_endpoints:
        _dump_endpoint_csv(rep_dir / "endpoints.csv", partition, truth_fn, project)
    _save_plot_trajectories(manifest, kernel, partition, truth_fn, project, seed, rep_dir)
    return record


def _save_plot_trajectories(manifest, kernel, partition, truth_fn, project, seed, rep_dir) -> None:
    """Full trajectories for a subset of candidates, projected and strided,
    for the plot dump."""
    plot = manifest.plot
    if plot.trajectories_per_candidate < 1:
        return
    take = min(len(partition.candidates), plot.max_candidates)
    stride = max(1, plot.step_stride)
    coords, traj_ids, steps, pred, true = [], [], [], [], []
    tid = 0
    for i in range(take):
        batch = simulate_batch(
            kernel,
            partition.candidates.states[i],
            manifest.nbi.horizon,
            plot.trajectories_per_candidate,
            derive_seed(seed, _PLOT_TAG, partition.candidates.sim_key(i)),
            store="full",
        )
        for t in range(batch.count):
            path = batch.states[t, ::stride]
            proj = project(path)
            coords.append(proj)
            steps.append(np.arange(0, batch.horizon + 1, stride))
            traj_ids.append(np.full(proj.shape[0], tid))
            pred.append(np.full(proj.shape[0], partition.labels[i]))
            true.append(np.full(proj.shape[0], int(truth_fn(path[-1:])[0])))
            tid += 1
    np.savez_compressed(
        rep_dir / "plot_trajectories.npz",
        coords=np.concatenate(coords),
        trajectory=np.concatenate(traj_ids),
        step=np.concatenate(steps),
        predicted=np.concatenate(pred),
        true=np.concatenate(true),
    )


def dump_plot_csv(rep_dir) -> Path:
    """Render a repeat's stored plot trajectories to CSV.

    Columns: trajectory, step, c0..c{k-1} (projected coordinates),
    predicted_label, true_label.
    """
    rep_dir = Path(rep_dir)
    src = rep_dir / "plot_trajectories.npz"
    if not src.exists():
        raise FileNotFoundError(f"no plot trajectories stored under {rep_dir}")
    data = np.load(src)
    coords = data["coords"]
    out = rep_dir / "plot_data.csv"
    with open(out, "w") as fh:
        fh.write(
            "trajectory,step,"
            + ",".join(f"c{i}" for i in range(coords.shape[1]))
            + ",predicted_label,true_label\n"
        )
        for row in range(coords.shape[0]):
            cs = ",".join(repr(float(v)) for v in coords[row])
            fh.write(
                f"{int(data['trajectory'][row])},{int(data['step'][row])},{cs},"
                f"{int(data['predicted'][row])},{int(data['true'][row])}\n"
            )
    return out


def _repeat_worker(args):
    manifest_data, repeat, outdir = args
    from .manifest import manifest_from_json

    manifest = manifest_from_json(manifest_data)
    return run_repeat(manifest, repeat, Path(outdir))


def run_manifest(manifest: ExperimentManifest, outdir, workers: int | None = None) -> dict:
    """Execute all repeats and write results.json; returns the results dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "manifest.json", manifest.raw or {})

    if workers is None:
        workers = int(os.environ.get("NBI_WORKERS", "1"))
    t0 = time.monotonic()
    if workers > 1 and manifest.num_repeats > 1:
        jobs = [(manifest.raw, r, str(outdir)) for r in range(manifest.num_repeats)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_repeat_worker, jobs))
    else:
        records = [run_repeat(manifest, r, outdir) for r in range(manifest.num_repeats)]
    elapsed = time.monotonic() - t0
    print(f"[{manifest.name}] {manifest.num_repeats} repeats in {elapsed:.1f}s", file=sys.stderr)

    ok = [r for r in records if r.error is None]
    aris = [r.ari for r in ok]
    nmis = [r.nmi for r in ok]
    basins = [r.num_basins for r in ok]

    def stats(values):
        if not values:
            return {"mean": None, "std": None}
        arr = np.asarray(values, dtype=np.float64)
        std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
        return {"mean": float(np.mean(arr)), "std": std}

    results = {
        "name": manifest.name,
        "seed": manifest.seed,
        "num_repeats": manifest.num_repeats,
        "repeats": [
            {
                "repeat": r.repeat,
                "seed": r.seed,
                "num_candidates": r.num_candidates,
                "num_basins": r.num_basins,
                "ari": r.ari,
                "nmi": r.nmi,
                "error": r.error,
            }
            for r in records
        ],
        "aggregate": {
            "ari": stats(aris),
            "nmi": stats(nmis),
            "num_basins": stats(basins),
            "failures": len(records) - len(ok),
        },
    }
    _write_json(outdir / "results.json", results)
    return results


def check_acceptance(manifest: ExperimentManifest, results: dict) -> list[str]:
    """Evaluate the manifest's optional acceptance thresholds; returns a list
    of human-readable misses (empty when everything passed)."""
    misses = []
    acc = manifest.acceptance
    agg = results["aggregate"]
    if "min_mean_ari" in acc:
        got = agg["ari"]["mean"]
        if got is None or got < acc["min_mean_ari"]:
            misses.append(f"mean ARI {got} < required {acc['min_mean_ari']}")
    if "min_mean_nmi" in acc:
        got = agg["nmi"]["mean"]
        if got is None or got < acc["min_mean_nmi"]:
            misses.append(f"mean NMI {got} < required {acc['min_mean_nmi']}")
    if "num_basins_range" in acc:
        lo, hi = acc["num_basins_range"]
        got = agg["num_basins"]["mean"]
        if got is None or not lo <= got <= hi:
            misses.append(f"mean basins {got} outside [{lo}, {hi}]")
    if results["aggregate"]["failures"]:
        misses.append(f"{results['aggregate']['failures']} repeats failed")
    return misses
