"""Interaction lists: Lists 1, 2, 3 close/far, 4 close/far.

For a target box b (a box owning conventional targets or QBX centers):

  List 1        leaf boxes among descendants-of-or-self and boxes adjacent
                to b; evaluated directly.
  List 2        children of the 2-colleagues of b's parent that are
                2-well-separated from b; mediated multipole -> local.
  List 3        non-adjacent descendants of the 2-colleagues whose
                intermediate ancestors within that set are all adjacent
                to b.  Split into 'far' (box adequately separated from
                TCR(b), subtree source count >= nmpole: multipole is
                evaluated directly at targets / translated to QBX locals)
                and 'close' (leaf boxes evaluated directly).
  List 4        coarser-or-equal boxes adjacent to the parent but not b,
                plus same-level non-adjacent 2-colleagues.  Split into
                'far' (TCR(b) adequately separated: source particles form
                a local expansion at b) and 'close' (direct), with close
                boxes re-examined for promotion at every child level.

Lists are stored as flattened per-box ranges over shared index arrays.
``verify_partition`` checks the load-bearing property: relative to any
target box, every source is accounted for exactly once across the direct
sets, the List-3-far multipoles, and the ancestor chain's List 2 /
List 4 far contributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import CENTERS, SOURCES, TARGETS, Octree


@dataclass
class _Csr:
    starts: np.ndarray
    flat: np.ndarray

    def get(self, b: int) -> np.ndarray:
        return self.flat[self.starts[b]:self.starts[b + 1]]


def _freeze(lists_by_box):
    starts = np.zeros(len(lists_by_box) + 1, dtype=np.int64)
    for b, lst in enumerate(lists_by_box):
        starts[b + 1] = starts[b] + len(lst)
    flat = np.empty(starts[-1], dtype=np.int64)
    for b, lst in enumerate(lists_by_box):
        flat[starts[b]:starts[b + 1]] = lst
    return _Csr(starts=starts, flat=flat)


@dataclass
class InteractionLists:
    nmpole: float
    target_boxes: np.ndarray         # boxes owning targets or centers
    target_or_ancestor: np.ndarray   # bool flags per box
    list1: _Csr
    list2: _Csr
    list3far: _Csr
    list3close: _Csr
    list4far: _Csr
    list4close: _Csr

    def pair_counts(self, tree: Octree) -> dict:
        """Per-list interaction pair counts (source particles x targets are
        counted by the cost model; here boxes-pairs only)."""
        return {
            "list1_pairs": int(self.list1.starts[-1]),
            "list2_pairs": int(self.list2.starts[-1]),
            "list3far_pairs": int(self.list3far.starts[-1]),
            "list3close_pairs": int(self.list3close.starts[-1]),
            "list4far_pairs": int(self.list4far.starts[-1]),
            "list4close_pairs": int(self.list4close.starts[-1]),
        }


def _descendant_leaves(tree: Octree, b: int):
    out = []
    stack = [b]
    while stack:
        x = stack.pop()
        if tree.is_leaf(x):
            out.append(x)
        else:
            stack.extend(tree.child_lists[x])
    return out


def compute_lists(tree: Octree, nmpole: float) -> InteractionLists:
    nb = tree.n_boxes
    is_target_box = np.zeros(nb, dtype=bool)
    for b in range(nb):
        is_target_box[b] = (tree.owned_count(b, TARGETS) > 0
                            or tree.owned_count(b, CENTERS) > 0)
    target_or_anc = is_target_box.copy()
    for b in range(nb - 1, 0, -1):
        if target_or_anc[b]:
            target_or_anc[tree.parents[b]] = True

    subtree_src = np.array([tree.subtree_count(b, SOURCES) for b in range(nb)])
    owned_src = np.array([tree.owned_count(b, SOURCES) for b in range(nb)])

    l1 = [[] for _ in range(nb)]
    l2 = [[] for _ in range(nb)]
    l3f = [[] for _ in range(nb)]
    l3c = [[] for _ in range(nb)]
    l4f = [[] for _ in range(nb)]
    l4c = [[] for _ in range(nb)]

    # List 4 close state propagates parent -> child, so walk in level order
    # (boxes are already stored level-contiguously via the BFS build, but
    # DFS-safe: parents always have smaller ids).
    l4close_state = [None] * nb

    for b in range(nb):
        if not target_or_anc[b]:
            continue
        parent = int(tree.parents[b])

        # ---- List 2 -------------------------------------------------
        if parent >= 0:
            for t in tree.knear_colleagues(parent, 2):
                for d in tree.child_lists[t]:
                    if _well_separated(tree, d, b, 2):
                        l2[b].append(d)

        # ---- List 4 (unsplit) ----------------------------------------
        l4_own = []
        w = parent
        while w >= 0:
            for d in tree.knear_colleagues(w, 2):
                if owned_src[d] > 0 and tree.adjacent(d, parent) \
                        and not tree.adjacent(d, b):
                    l4_own.append(d)
            w = int(tree.parents[w])
        for d in tree.knear_colleagues(b, 2):
            if owned_src[d] > 0 and not tree.adjacent(d, b):
                l4_own.append(d)
        l4_own = sorted(set(l4_own))

        # ---- List 4 close/far ----------------------------------------
        inherited = l4close_state[parent] if parent >= 0 else []
        close_here = []
        for d in l4_own:
            if tree.tcr_sep_from_box(b, d):
                l4f[b].append(d)
            else:
                close_here.append(d)
        for d in inherited:
            if tree.tcr_sep_from_box(b, d):
                l4f[b].append(d)
            else:
                close_here.append(d)
        l4close_state[b] = close_here
        if is_target_box[b]:
            l4c[b] = sorted(close_here)
        l4f[b] = sorted(set(l4f[b]))

        if not is_target_box[b]:
            continue

        # ---- List 1 (adjacency pruning covers descendants of b too) ---
        seen = set()
        stack = [0]
        while stack:
            d = stack.pop()
            if not tree.adjacent(d, b):
                continue
            if tree.is_leaf(d):
                seen.add(d)
            else:
                stack.extend(tree.child_lists[d])
        l1[b] = sorted(seen)

        # ---- List 3 and its close/far split --------------------------
        frontier = []      # List 3 proper: first non-adjacent boxes
        for t in tree.knear_colleagues(b, 2):
            stack = list(tree.child_lists[t])
            while stack:
                d = stack.pop()
                if tree.adjacent(d, b):
                    stack.extend(tree.child_lists[d])
                else:
                    frontier.append(d)
        for e in frontier:
            stack = [e]
            while stack:
                d = stack.pop()
                if tree.box_sep_from_tcr(d, b):
                    # List 3 far candidate: largest separated box on its chain
                    if subtree_src[d] >= nmpole:
                        if subtree_src[d] > 0:
                            l3f[b].append(d)
                    else:
                        for leaf in _descendant_leaves(tree, d):
                            l3c[b].append(leaf)
                elif tree.is_leaf(d):
                    l3c[b].append(d)
                else:
                    stack.extend(tree.child_lists[d])
        l3f[b] = sorted(l3f[b])
        l3c[b] = sorted(l3c[b])

    return InteractionLists(
        nmpole=nmpole,
        target_boxes=np.flatnonzero(is_target_box),
        target_or_ancestor=target_or_anc,
        list1=_freeze(l1),
        list2=_freeze(l2),
        list3far=_freeze(l3f),
        list3close=_freeze(l3c),
        list4far=_freeze(l4f),
        list4close=_freeze(l4c),
    )


def _well_separated(tree: Octree, a: int, b: int, k: int) -> bool:
    # same-level boxes that are not k-colleagues
    da = np.abs(tree.icoords[a] - tree.icoords[b]).max()
    return int(da) > k


@dataclass
class PartitionReport:
    n_boxes_checked: int
    n_violations: int
    details: list

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def verify_partition(tree: Octree, lists: InteractionLists,
                     max_details: int = 20) -> PartitionReport:
    """Exactly-once accounting of every source relative to every target box:
    direct lists contribute owned sources, List 3 far contributes subtree
    sources, and the ancestor chain contributes List 2 subtrees plus
    List 4 far owned sources."""
    ns = tree.points[SOURCES].shape[0]
    nviol = 0
    details = []
    checked = 0
    for b in lists.target_boxes:
        b = int(b)
        checked += 1
        count = np.zeros(ns, dtype=np.int64)
        for d in lists.list1.get(b):
            count[tree.owned_slice(d, SOURCES)] += 1
        for d in lists.list3close.get(b):
            count[tree.owned_slice(d, SOURCES)] += 1
        for d in lists.list4close.get(b):
            count[tree.owned_slice(d, SOURCES)] += 1
        for d in lists.list3far.get(b):
            count[tree.subtree_slice(d, SOURCES)] += 1
        w = b
        while w >= 0:
            for d in lists.list2.get(w):
                count[tree.subtree_slice(d, SOURCES)] += 1
            for d in lists.list4far.get(w):
                count[tree.owned_slice(d, SOURCES)] += 1
            w = int(tree.parents[w])
        bad = np.flatnonzero(count != 1)
        if bad.shape[0]:
            nviol += bad.shape[0]
            if len(details) < max_details:
                details.append({
                    "box": b,
                    "missing": [int(i) for i in bad[count[bad] == 0][:8]],
                    "duplicated": [int(i) for i in bad[count[bad] > 1][:8]],
                })
    return PartitionReport(n_boxes_checked=checked, n_violations=nviol,
                           details=details)
