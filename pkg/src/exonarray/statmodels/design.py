"""Sum-contrast design matrices for the splicing and expression models.

Column blocks, in order: intercept, probeset, treatment, probeset x
treatment (splicing models only), replicate, replicate x treatment.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import SingleProbesetForAnosva

MODELS = ("anosva_probe", "anosva_probeset", "de_probe")
NUISANCE = ("replicate", "replicate:treatment")


@dataclass(frozen=True)
class Observation:
    probe: int
    probeset: str
    treatment: str
    replicate: str


@dataclass(frozen=True)
class DesignSpec:
    model: str
    probesets: tuple
    treatments: tuple
    replicates: tuple
    observations: tuple

    @property
    def n_probesets(self):
        return len(self.probesets)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")


def sum_contrast(n_levels):
    """Rows are levels; level k < K-1 is the unit vector, the last level is -1."""
    if n_levels < 1:
        raise ValueError("a factor needs at least one level")
    m = np.zeros((n_levels, n_levels - 1))
    m[: n_levels - 1] = np.eye(n_levels - 1)
    m[n_levels - 1] = -1.0
    return m


def _coded(levels, values):
    pos = {lev: k for k, lev in enumerate(levels)}
    return sum_contrast(len(levels))[[pos[v] for v in values]]


def _interaction(a, b, a_name, b_name):
    cols = []
    labels = []
    for j in range(b.shape[1]):
        for i in range(a.shape[1]):
            cols.append(a[:, i] * b[:, j])
            labels.append((f"{a_name}:{b_name}", (i, j)))
    mat = np.column_stack(cols) if cols else np.zeros((a.shape[0], 0))
    return mat, labels


def build_design(spec):
    """Return ``(X, labels)``; ``labels[k]`` is ``(term, level indices)``."""
    interaction = spec.model in ("anosva_probe", "anosva_probeset")
    if interaction and spec.n_probesets < 2:
        raise SingleProbesetForAnosva(
            f"{spec.model} needs at least 2 probesets, got {spec.n_probesets}")
    obs = spec.observations
    n = len(obs)
    ps = _coded(spec.probesets, [o.probeset for o in obs])
    tr = _coded(spec.treatments, [o.treatment for o in obs])
    rep = _coded(spec.replicates, [o.replicate for o in obs])

    blocks = [np.ones((n, 1)), ps, tr]
    labels = [("intercept", ())]
    labels += [("probeset", (i,)) for i in range(ps.shape[1])]
    labels += [("treatment", (j,)) for j in range(tr.shape[1])]
    if interaction:
        mat, lab = _interaction(ps, tr, "probeset", "treatment")
        blocks.append(mat)
        labels += [("interaction", key) for _, key in lab]
    blocks.append(rep)
    labels += [("replicate", (i,)) for i in range(rep.shape[1])]
    mat, lab = _interaction(rep, tr, "replicate", "treatment")
    blocks.append(mat)
    labels += [("replicate:treatment", key) for _, key in lab]
    return np.hstack(blocks), labels
