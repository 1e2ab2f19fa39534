"""Synthetic hierarchical classification task.

Classes are Gaussian clusters grouped under super-classes: leaf means are
drawn around their super-class mean, so siblings sit closer together than
classes from different groups.  The emitted taxonomy mirrors the grouping
under a short single-child trunk (``entity -> level_1 -> super -> leaf``),
which keeps sibling Wu-Palmer similarity above the usual 0.7 threshold and
cross-group similarity below it.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from os import PathLike
from typing import Optional

import numpy as np

from ..errors import InvalidShape, ParseError
from ..taxonomy import Taxonomy, load_taxonomy

ROOT = "entity"


@dataclass
class SyntheticTask:
    x: np.ndarray  # (N, D)
    y: np.ndarray  # (N,)
    class_count: int
    taxonomy: Taxonomy
    seed: Optional[int] = None
    class_means: Optional[np.ndarray] = None  # generating means, when known
    super_of: Optional[np.ndarray] = None  # super-class index per class

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def empirical_means(self) -> np.ndarray:
        return np.stack([self.x[self.y == c].mean(axis=0) for c in range(self.class_count)])

    def feature_range(self) -> tuple[float, float]:
        return float(self.x.min()), float(self.x.max())

    def sibling_groups(self) -> dict:
        """Super-class name -> member class ids, read from the taxonomy."""
        groups = {}
        for label in range(self.class_count):
            node = self.taxonomy.node_of(label)
            for p in self.taxonomy.parents[node]:
                groups.setdefault(p, []).append(label)
        return {k: sorted(v) for k, v in sorted(groups.items())}


def leaf_name(c: int) -> str:
    return f"class_{c:02d}"


def super_name(s: int) -> str:
    return f"super_{s:02d}"


def build_taxonomy(class_count: int, n_super: int, trunk: int = 1) -> Taxonomy:
    per = class_count // n_super
    chain = [ROOT] + [f"level_{k}" for k in range(1, trunk + 1)]
    edges = list(zip(chain[1:], chain[:-1]))
    for s in range(n_super):
        edges.append((super_name(s), chain[-1]))
        for c in range(s * per, (s + 1) * per):
            edges.append((leaf_name(c), super_name(s)))
    return load_taxonomy(edges, [(c, leaf_name(c)) for c in range(class_count)])


def generate_task(seed: int = 1, class_count: int = 16, dim: int = 32, n_super: int = 4,
                  samples_per_class: int = 40, super_spread: float = 1.0, leaf_spread: float = 0.35,
                  noise: float = 0.3, trunk: int = 1) -> SyntheticTask:
    """Draw a Gaussian-cluster dataset with a two-level class hierarchy.

    Class ``c`` belongs to super-class ``c // (class_count // n_super)``.
    """
    if class_count < 4 or dim < 2 or n_super < 1 or class_count % n_super:
        raise InvalidShape(f"need C >= 4, D >= 2 and n_super dividing C; got C={class_count}, "
                           f"D={dim}, n_super={n_super}")
    if samples_per_class < 20:
        raise InvalidShape("need at least 20 samples per class")
    rng = np.random.default_rng(seed)
    per = class_count // n_super
    super_means = rng.normal(0.0, super_spread, size=(n_super, dim))
    super_of = np.repeat(np.arange(n_super), per)
    means = super_means[super_of] + rng.normal(0.0, leaf_spread, size=(class_count, dim))
    y = np.repeat(np.arange(class_count), samples_per_class)
    x = means[y] + rng.normal(0.0, noise, size=(len(y), dim))
    return SyntheticTask(x, y, class_count, build_taxonomy(class_count, n_super, trunk),
                         seed, means, super_of)


def default_epsilon(task: SyntheticTask, scale: float = 0.5) -> float:
    """``scale`` times the median, over classes, of the Euclidean distance
    from a class mean to its nearest other class mean."""
    mu = task.empirical_means()
    d = np.linalg.norm(mu[:, None, :] - mu[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    return float(scale * np.median(d.min(axis=1)))


# -- file format -------------------------------------------------------------

def format_task(task: SyntheticTask, header: Optional[str] = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label"] + [f"x_{k}" for k in range(task.feature_dim)])
    for label, row in zip(task.y, task.x):
        w.writerow([int(label)] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_task(task: SyntheticTask, path: str | PathLike, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_task(task, header))


def read_task(path: str | PathLike, taxonomy: Taxonomy) -> SyntheticTask:
    """Read ``label,x_0..x_{D-1}`` CSV; the class count comes from the
    taxonomy's label map."""
    with open(path, encoding="utf-8") as fh:
        numbered = [(k, ln) for k, ln in enumerate(fh, start=1)
                    if ln.strip() and not ln.lstrip().startswith("#")]
    if not numbered:
        raise ParseError("empty task file", str(path))
    rows = zip((k for k, _ in numbered), csv.reader(ln for _, ln in numbered))
    first, header = next(rows)
    if not header or header[0] != "label":
        raise ParseError("header must start with 'label'", str(path), first)
    d = len(header) - 1
    xs, ys = [], []
    for k, row in rows:
        if len(row) != d + 1:
            raise ParseError(f"expected {d + 1} fields, got {len(row)}", str(path), k)
        try:
            ys.append(int(row[0]))
            xs.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), str(path), k) from None
    if not ys:
        raise ParseError("task file has no samples", str(path))
    c = len(taxonomy.label_map)
    y = np.array(ys, dtype=int)
    if y.min() < 0 or y.max() >= c:
        raise ParseError(f"labels must lie in 0..{c - 1}", str(path))
    return SyntheticTask(np.array(xs), y, c, taxonomy)
