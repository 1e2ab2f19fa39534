"""Class hierarchy and Wu-Palmer semantic similarity.

A :class:`Taxonomy` is a rooted DAG of hypernym edges plus a map from
integer class labels to nodes.  Depth follows the usual Wu-Palmer
convention: the root has depth 1 and every other node sits one below its
shallowest parent.

On a tree ``wup_similarity`` lies in ``(0, 1]`` and reaches 1 only for
identical nodes.  On a general DAG a node's shortest root path can bypass
one of its ancestors, so the ratio may exceed 1 for such pairs; the
formula is applied as-is rather than clamped.
"""

from __future__ import annotations

import io
from collections import defaultdict, deque
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    MultipleRoots,
    NoRoot,
    ParseError,
    TaxonomyError,
    UnknownNode,
    UnmappedLabel,
)

LABELS_SENTINEL = "#labels"


@dataclass(frozen=True)
class Taxonomy:
    nodes: frozenset
    parents: dict  # node -> tuple of parent nodes, sorted
    root: str
    label_map: dict  # label id -> node
    _depth: dict = field(repr=False, compare=False)
    _ancestors: dict = field(repr=False, compare=False)

    def node_of(self, label: int) -> str:
        try:
            return self.label_map[label]
        except KeyError:
            raise UnmappedLabel(f"label {label!r} is not mapped to a node") from None

    @property
    def labels(self) -> list[int]:
        return sorted(self.label_map)

    def children(self) -> dict:
        kids = defaultdict(list)
        for child, ps in self.parents.items():
            for p in ps:
                kids[p].append(child)
        return {k: sorted(v) for k, v in kids.items()}

    def edges(self) -> list[tuple[str, str]]:
        return sorted((c, p) for c, ps in self.parents.items() for p in ps)


def load_taxonomy(
    edge_list: Iterable[tuple[str, str]],
    label_map: Iterable[tuple[int, str]],
) -> Taxonomy:
    """Build and validate a taxonomy from ``(child, parent)`` edges and
    ``(label_id, node)`` pairs."""
    edge_list = [(str(c), str(p)) for c, p in edge_list]
    if not edge_list:
        raise TaxonomyError("edge list is empty")

    parent_sets = defaultdict(set)
    nodes = set()
    for child, parent in edge_list:
        nodes.add(child)
        nodes.add(parent)
        parent_sets[child].add(parent)
    parents = {n: tuple(sorted(parent_sets.get(n, ()))) for n in nodes}

    _check_acyclic(nodes, parents)

    roots = sorted(n for n in nodes if not parents[n])
    if not roots:
        raise NoRoot("no parentless node found")
    if len(roots) > 1:
        raise MultipleRoots(f"found {len(roots)} roots: {roots[:5]}")
    root = roots[0]

    lmap = {}
    for label, node in label_map:
        label = int(label)
        node = str(node)
        if node not in nodes:
            raise UnmappedLabel(f"label {label} refers to unknown node {node!r}")
        if label in lmap and lmap[label] != node:
            raise TaxonomyError(f"label {label} mapped to both {lmap[label]!r} and {node!r}")
        lmap[label] = node

    depths = _depths(nodes, parents, root)
    ancestors = _ancestor_sets(nodes, parents)
    return Taxonomy(frozenset(nodes), parents, root, lmap, depths, ancestors)


def _check_acyclic(nodes, parents):
    # iterative DFS with colours; recursion would overflow on deep chains
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(nodes, WHITE)
    for start in sorted(nodes):
        if colour[start] != WHITE:
            continue
        stack = [(start, iter(parents[start]))]
        colour[start] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
            elif colour[nxt] == GREY:
                raise CycleDetected(f"cycle through {nxt!r}")
            elif colour[nxt] == WHITE:
                colour[nxt] = GREY
                stack.append((nxt, iter(parents[nxt])))


def _depths(nodes, parents, root):
    kids = defaultdict(list)
    for child, ps in parents.items():
        for p in ps:
            kids[p].append(child)
    # BFS from the root gives 1 + shortest root path, i.e. the min-parent rule
    depth = {root: 1}
    queue = deque([root])
    while queue:
        n = queue.popleft()
        for c in kids[n]:
            if c not in depth:
                depth[c] = depth[n] + 1
                queue.append(c)
    return depth


def _ancestor_sets(nodes, parents):
    anc = {}
    # BFS depth order is not a valid processing order on DAGs
    for n in _topological(nodes, parents):
        s = {n}
        for p in parents[n]:
            s |= anc[p]
        anc[n] = frozenset(s)
    return anc


def _topological(nodes, parents):
    indeg = {n: len(parents[n]) for n in nodes}
    kids = defaultdict(list)
    for child, ps in parents.items():
        for p in ps:
            kids[p].append(child)
    ready = deque(sorted(n for n in nodes if indeg[n] == 0))
    out = []
    while ready:
        n = ready.popleft()
        out.append(n)
        for c in kids[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return out


def depth(t: Taxonomy, n: str) -> int:
    try:
        return t._depth[n]
    except KeyError:
        raise UnknownNode(f"unknown node {n!r}") from None


def ancestors(t: Taxonomy, n: str) -> frozenset:
    """All ancestors of ``n``, including ``n`` itself."""
    try:
        return t._ancestors[n]
    except KeyError:
        raise UnknownNode(f"unknown node {n!r}") from None


def lowest_common_subsumer(t: Taxonomy, a: str, b: str) -> str:
    """Deepest common ancestor of two nodes; ties go to the smallest node id."""
    common = ancestors(t, a) & ancestors(t, b)
    # the root is always common, so this is never empty
    return min(common, key=lambda n: (-t._depth[n], n))


def wup_similarity(t: Taxonomy, a: int, b: int) -> float:
    """Wu-Palmer similarity between two class labels."""
    na, nb = t.node_of(a), t.node_of(b)
    if na == nb:
        return 1.0
    lcs = lowest_common_subsumer(t, na, nb)
    return 2.0 * t._depth[lcs] / (t._depth[na] + t._depth[nb])


def pairwise_wup_matrix(t: Taxonomy, labels: Sequence[int]) -> np.ndarray:
    nodes = [t.node_of(lab) for lab in labels]
    n = len(nodes)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if nodes[i] == nodes[j]:
                s = 1.0
            else:
                lcs = lowest_common_subsumer(t, nodes[i], nodes[j])
                s = 2.0 * t._depth[lcs] / (t._depth[nodes[i]] + t._depth[nodes[j]])
            out[i, j] = out[j, i] = s
    return out


# -- file format -------------------------------------------------------------

def parse_taxonomy(text: str, path=None) -> Taxonomy:
    """Parse the tab-separated edge/label format.

    Edge lines are ``child<TAB>parent``; after a ``#labels`` line, lines are
    ``label_id<TAB>node_id``.  Blank lines and other ``#`` lines are skipped.
    """
    edges, labels = [], []
    in_labels = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if not stripped:
            continue
        if stripped == LABELS_SENTINEL:
            in_labels = True
            continue
        if stripped.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError("expected two tab-separated fields", path, lineno)
        if in_labels:
            try:
                labels.append((int(parts[0]), parts[1]))
            except ValueError:
                raise ParseError(f"label id {parts[0]!r} is not an integer", path, lineno) from None
        else:
            edges.append((parts[0], parts[1]))
    if not edges:
        raise ParseError("no edges found", path)
    return load_taxonomy(edges, labels)


def read_taxonomy(path: str | PathLike) -> Taxonomy:
    with open(path, encoding="utf-8") as fh:
        return parse_taxonomy(fh.read(), path=str(path))


def format_taxonomy(t: Taxonomy, header: str | None = None) -> str:
    lines = []
    if header:
        lines.append(f"# {header}")
    lines += [f"{c}\t{p}" for c, p in t.edges()]
    lines.append(LABELS_SENTINEL)
    lines += [f"{lab}\t{t.label_map[lab]}" for lab in t.labels]
    return "\n".join(lines) + "\n"


def write_taxonomy(t: Taxonomy, path: str | PathLike, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_taxonomy(t, header))


def read_wordnet_hierarchy(isa_path: str | PathLike, synsets_path: str | PathLike) -> Taxonomy:
    """Taxonomy from ImageNet-style WordNet files.

    ``isa_path`` holds ``parent_wnid child_wnid`` pairs, one per line.
    ``synsets_path`` lists one synset per line (``wnid [words ...]``); the
    0-based line index is the class label.  Only ancestors of the listed
    synsets are kept.
    """
    parents = {}
    with open(isa_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError("expected 'parent child'", str(isa_path), lineno)
            parents.setdefault(parts[1], set()).add(parts[0])
    labels = []
    with open(synsets_path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                labels.append((len(labels), parts[0]))
    keep = set()
    stack = [n for _, n in labels]
    while stack:
        n = stack.pop()
        if n not in keep:
            keep.add(n)
            stack.extend(parents.get(n, ()))
    edges = [(c, p) for c in sorted(keep) for p in sorted(parents.get(c, ()))]
    if not edges:
        raise ParseError("no hierarchy edges reach the listed synsets", str(isa_path))
    return load_taxonomy(edges, labels)
