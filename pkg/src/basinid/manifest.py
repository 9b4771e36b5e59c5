"""Experiment manifests: JSON configs that fully determine a pipeline run.

A manifest names a kernel (through the kernel registry), the pipeline
configuration, a ground-truth labeling rule for evaluation, the number of
repeats, and a master seed. Everything downstream is derived from these, so
a manifest plus seed determines every output byte.

Ground-truth rules are analytic per landscape: nearest ring radius, nearest
mixture mean, nearest helix tube, or the sign of the alignment with the
planted signal. For embedded landscapes the rule is applied to the
projection onto the structured subspace.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .energies import AugmentedEnergy, DoubleRing, GaussianMixture, Helix
from .net import TrainConfig
from .pipeline import DiscoveryConfig, NbiConfig
from .samplers import MalaKernel, PhaseRetrievalKernel, kernel_from_spec


@dataclass
class PlotConfig:
    trajectories_per_candidate: int = 4
    step_stride: int = 10
    max_candidates: int = 12


@dataclass
class ExperimentManifest:
    name: str
    seed: int
    num_repeats: int
    kernel_spec: dict
    nbi: NbiConfig
    ground_truth: str
    output_dir: str | None = None
    plot: PlotConfig = field(default_factory=PlotConfig)
    acceptance: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_repeats < 1:
            raise ValueError("num_repeats must be >= 1")

    def build_kernel(self):
        return kernel_from_spec(self.kernel_spec)


def manifest_from_json(source) -> ExperimentManifest:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    try:
        nbi_raw = dict(data["nbi"])
        discovery = DiscoveryConfig(**nbi_raw.pop("discovery"))
        train = TrainConfig(**nbi_raw.pop("train", {}))
        for key in ("trunk_hidden", "head_hidden"):
            if key in nbi_raw:
                nbi_raw[key] = tuple(nbi_raw[key])
        nbi = NbiConfig(discovery=discovery, train=train, **nbi_raw)
        manifest = ExperimentManifest(
            name=data["name"],
            seed=int(data["seed"]),
            num_repeats=int(data["num_repeats"]),
            kernel_spec=data["kernel"],
            nbi=nbi,
            ground_truth=data["ground_truth"],
            output_dir=data.get("output_dir"),
            plot=PlotConfig(**data.get("plot", {})),
            acceptance=data.get("acceptance", {}),
            raw=data,
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid manifest: {exc}") from exc
    manifest.build_kernel()  # fail early on unresolvable kernel specs
    resolve_rule(manifest)
    return manifest


def _structured_projection(kernel):
    """Returns (project, low_energy_or_none). ``project`` maps ambient states
    to the coordinates the ground-truth rule is defined on."""
    if isinstance(kernel, MalaKernel) and isinstance(kernel.energy, AugmentedEnergy):
        emb = kernel.energy.embedding
        return (lambda x: emb.project(np.atleast_2d(x))), kernel.energy.low
    if isinstance(kernel, MalaKernel):
        return (lambda x: np.atleast_2d(np.asarray(x, dtype=np.float64))), kernel.energy
    return (lambda x: np.atleast_2d(np.asarray(x, dtype=np.float64))), None


def resolve_rule(manifest: ExperimentManifest):
    """Analytic ground-truth labeler for the manifest's landscape:
    states (m, D) -> integer labels (m,)."""
    kernel = manifest.build_kernel()
    rule = manifest.ground_truth
    project, low = _structured_projection(kernel)

    if rule == "ring-radius":
        if not isinstance(low, DoubleRing):
            raise ValueError("ring-radius rule needs a double-ring energy")
        radii = low.radii

        def label(states):
            r = np.linalg.norm(project(states), axis=-1)
            return np.argmin(np.abs(r[:, None] - radii[None, :]), axis=-1)

        return label

    if rule == "nearest-mean":
        if not isinstance(low, GaussianMixture):
            raise ValueError("nearest-mean rule needs a Gaussian-mixture energy")
        means = low.means

        def label(states):
            u = project(states)
            d = np.linalg.norm(u[:, None, :] - means[None, :, :], axis=-1)
            return np.argmin(d, axis=-1)

        return label

    if rule == "nearest-tube":
        if not isinstance(low, Helix):
            raise ValueError("nearest-tube rule needs a helix energy")

        def label(states):
            return np.argmin(low.tube_distances(project(states)), axis=-1)

        return label

    if rule == "alignment-sign":
        if not isinstance(kernel, PhaseRetrievalKernel):
            raise ValueError("alignment-sign rule needs a phase-retrieval kernel")
        truth = kernel.truth

        def label(states):
            return (np.atleast_2d(states) @ truth > 0).astype(int)

        return label

    raise ValueError(f"unknown ground-truth rule {rule!r}")


def plot_projection(kernel):
    """Coordinates used in plot dumps: the structured-subspace projection for
    embedded landscapes, raw coordinates otherwise."""
    project, _ = _structured_projection(kernel)
    return project
