"""Octree construction with sized QBX-ball targets.

Thresholded particles are sources, conventional targets, and QBX centers;
QBX targets are associated with a center and never owned by boxes.  A box
owning more than nmax thresholded particles is subdivided; sources and
conventional targets always transfer to the child containing them, while
a center whose ball B_2(r_c, c) does not fit inside the child's target
confinement region stays in the parent.  The root cube covers all
particles and every expansion ball.

Box regions are tracked with exact integer lattice coordinates per level,
so adjacency and colleague queries are free of floating-point ties.
Particle indices are permuted into depth-first order per class, making
every subtree a contiguous index range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT3 = math.sqrt(3.0)

SOURCES = 0
TARGETS = 1
CENTERS = 2


class TreeDepthError(RuntimeError):
    pass


@dataclass(frozen=True)
class TreeParams:
    nmax: int
    t_f: float = 0.9
    max_depth: int = 30

    def __post_init__(self):
        if self.nmax < 1:
            raise ValueError("nmax must be positive")
        if self.t_f < 0:
            raise ValueError("t_f must be nonnegative")


@dataclass
class Octree:
    root_center: np.ndarray
    root_half_width: float
    t_f: float
    # per-box structure (level order)
    centers: np.ndarray          # (B, 3)
    half_widths: np.ndarray      # (B,)
    levels: np.ndarray           # (B,)
    parents: np.ndarray          # (B,)  -1 for root
    child_lists: list            # list of lists of box ids
    icoords: np.ndarray          # (B, 3) integer lattice coords at own level
    # ownership: per class, particles permuted to DFS order
    perms: list                  # [class] -> permutation old index -> position
    owned_start: np.ndarray      # (B, 3) per class
    owned_end: np.ndarray
    subtree_start: np.ndarray    # (B, 3)
    subtree_end: np.ndarray
    # original particle coordinates, permuted
    points: list                 # [class] -> (n, 3)
    center_radii: np.ndarray     # permuted QBX ball radii
    _level_maps: list = field(default_factory=list, repr=False)

    # -- basic queries ------------------------------------------------

    @property
    def n_boxes(self) -> int:
        return self.centers.shape[0]

    @property
    def n_levels(self) -> int:
        return int(self.levels.max()) + 1

    def is_leaf(self, b: int) -> bool:
        return not self.child_lists[b]

    def owned_count(self, b: int, cls: int) -> int:
        return int(self.owned_end[b, cls] - self.owned_start[b, cls])

    def owned_slice(self, b: int, cls: int) -> slice:
        return slice(int(self.owned_start[b, cls]), int(self.owned_end[b, cls]))

    def subtree_count(self, b: int, cls: int) -> int:
        return int(self.subtree_end[b, cls] - self.subtree_start[b, cls])

    def subtree_slice(self, b: int, cls: int) -> slice:
        return slice(int(self.subtree_start[b, cls]), int(self.subtree_end[b, cls]))

    def tcr(self, b: int):
        """Target confinement region: l2 ball of radius sqrt(3)|b|(1+t_f)."""
        return self.centers[b], SQRT3 * self.half_widths[b] * (1.0 + self.t_f)

    def _build_level_maps(self):
        self._level_maps = [dict() for _ in range(self.n_levels)]
        for b in range(self.n_boxes):
            self._level_maps[self.levels[b]][tuple(self.icoords[b])] = b

    def knear_colleagues(self, b: int, k: int):
        """Same-level boxes contained in the l-infinity ball of radius
        |b|(1+2k), i.e. integer offsets at most k per axis."""
        if not self._level_maps:
            self._build_level_maps()
        lvl = int(self.levels[b])
        ix, iy, iz = (int(c) for c in self.icoords[b])
        lo = 0
        hi = (1 << lvl) - 1
        out = []
        lm = self._level_maps[lvl]
        for dx in range(max(lo, ix - k), min(hi, ix + k) + 1):
            for dy in range(max(lo, iy - k), min(hi, iy + k) + 1):
                for dz in range(max(lo, iz - k), min(hi, iz + k) + 1):
                    bb = lm.get((dx, dy, dz))
                    if bb is not None:
                        out.append(bb)
        return out

    def adjacent(self, a: int, b: int) -> bool:
        """Closed box regions intersect (share volume, face, edge or corner)."""
        la, lb = int(self.levels[a]), int(self.levels[b])
        if la > lb:
            a, b = b, a
            la, lb = lb, la
        s = 1 << (lb - la)
        for ax in range(3):
            ia = int(self.icoords[a][ax])
            ib = int(self.icoords[b][ax])
            if ib + 1 < ia * s or ib > (ia + 1) * s:
                return False
        return True

    # -- separation predicates ('adequately separated') ---------------

    def box_sep_from_tcr(self, a: int, b: int) -> bool:
        """a < TCR(b): l2 distance from center(a) to the TCR boundary of b
        (positive outside) is at least 3|a|."""
        c_b, rho = self.tcr(b)
        dist = float(np.linalg.norm(self.centers[a] - c_b)) - rho
        return dist >= 3.0 * self.half_widths[a]

    def tcr_sep_from_box(self, a: int, b: int) -> bool:
        """TCR(a) < b via the sufficient l-infinity check: l-inf distance
        from center(a) to the boundary of box b at least 3|a|(1+t_f)."""
        dist = float(np.max(np.abs(self.centers[a] - self.centers[b]))) \
            - self.half_widths[b]
        return dist >= 3.0 * self.half_widths[a] * (1.0 + self.t_f)

    def tcr_sep_from_box_exact(self, a: int, b: int) -> bool:
        """Exact l2 form of TCR(a) < b (used to cross-check the shortcut)."""
        delta = np.abs(self.centers[a] - self.centers[b]) - self.half_widths[b]
        if np.all(delta <= 0):
            return False
        dist = float(np.linalg.norm(np.maximum(delta, 0.0)))
        return dist >= 3.0 * self.half_widths[a] * (1.0 + self.t_f)

    def prec_checks(self, a: int, b: int):
        return {"a_prec_tcr_b": self.box_sep_from_tcr(a, b),
                "tcr_a_prec_b": self.tcr_sep_from_box(a, b)}

    # -- debug dump ----------------------------------------------------

    def dump(self, fobj):
        for b in range(self.n_boxes):
            cx, cy, cz = (float(v) for v in self.centers[b])
            fobj.write(
                f"{b} {self.levels[b]} {cx!r} {cy!r} {cz!r} "
                f"{float(self.half_widths[b])!r} {self.parents[b]} "
                f"{self.owned_count(b, SOURCES)} {self.owned_count(b, TARGETS)} "
                f"{self.owned_count(b, CENTERS)}\n")


def _root_cube(points_by_class, radii):
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for pts in points_by_class:
        if pts.shape[0]:
            lo = np.minimum(lo, pts.min(axis=0))
            hi = np.maximum(hi, pts.max(axis=0))
    if radii.shape[0]:
        ctr = points_by_class[CENTERS]
        lo = np.minimum(lo, (ctr - radii[:, None]).min(axis=0))
        hi = np.maximum(hi, (ctr + radii[:, None]).max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise ValueError("tree build requires at least one particle")
    center = 0.5 * (lo + hi)
    half = 0.5 * float((hi - lo).max())
    if half == 0.0:
        half = 1.0
    half *= 1.0 + 1e-9
    return center, half


def build_tree(sources: np.ndarray, conventional_targets: np.ndarray,
               qbx_centers: np.ndarray, qbx_radii: np.ndarray,
               params: TreeParams) -> Octree:
    sources = np.asarray(sources, dtype=np.float64).reshape(-1, 3)
    conventional_targets = np.asarray(conventional_targets,
                                      dtype=np.float64).reshape(-1, 3)
    qbx_centers = np.asarray(qbx_centers, dtype=np.float64).reshape(-1, 3)
    qbx_radii = np.asarray(qbx_radii, dtype=np.float64).reshape(-1)
    pts = [sources, conventional_targets, qbx_centers]

    root_center, root_half = _root_cube(pts, qbx_radii)

    # growable per-box records
    centers = [root_center]
    half_widths = [root_half]
    levels = [0]
    parents = [-1]
    icoords = [(0, 0, 0)]
    children = [[]]
    owned = [[list(range(pts[c].shape[0])) for c in range(3)]]

    tf1 = 1.0 + params.t_f
    queue = [0]
    while queue:
        b = queue.pop(0)
        count = sum(len(owned[b][c]) for c in range(3))
        if count <= params.nmax:
            continue
        hw = half_widths[b] * 0.5
        ctr = centers[b]
        # plan transfers: octant = (x >= cx) + 2 (y >= cy) + 4 (z >= cz)
        plan = [[[] for _ in range(3)] for _ in range(8)]
        stuck_centers = []
        child_ctr = {}

        def octant_center(o):
            if o not in child_ctr:
                off = np.array([hw if o & 1 else -hw,
                                hw if o & 2 else -hw,
                                hw if o & 4 else -hw])
                child_ctr[o] = ctr + off
            return child_ctr[o]

        for c in (SOURCES, TARGETS):
            for i in owned[b][c]:
                p = pts[c][i]
                o = (p[0] >= ctr[0]) + 2 * (p[1] >= ctr[1]) + 4 * (p[2] >= ctr[2])
                plan[o][c].append(i)
        tcr_child = SQRT3 * hw * tf1
        for i in owned[b][CENTERS]:
            p = pts[CENTERS][i]
            o = (p[0] >= ctr[0]) + 2 * (p[1] >= ctr[1]) + 4 * (p[2] >= ctr[2])
            if np.linalg.norm(p - octant_center(o)) + qbx_radii[i] <= tcr_child:
                plan[o][CENTERS].append(i)
            else:
                stuck_centers.append(i)

        n_transfer = sum(len(plan[o][c]) for o in range(8) for c in range(3))
        if n_transfer == 0:
            continue   # only confinement-stuck centers remain: stays a leaf
        if levels[b] >= params.max_depth:
            raise TreeDepthError(
                f"box {b} at depth cap {params.max_depth} still owns "
                f"{count} > nmax={params.nmax} thresholded particles")

        owned[b] = [[], [], stuck_centers]
        ix, iy, iz = icoords[b]
        for o in range(8):
            if not any(plan[o][c] for c in range(3)):
                continue   # prune empty children
            cid = len(centers)
            centers.append(octant_center(o))
            half_widths.append(hw)
            levels.append(levels[b] + 1)
            parents.append(b)
            icoords.append((2 * ix + (1 if o & 1 else 0),
                            2 * iy + (1 if o & 2 else 0),
                            2 * iz + (1 if o & 4 else 0)))
            children.append([])
            owned.append(plan[o])
            children[b].append(cid)
            queue.append(cid)

    n_boxes = len(centers)

    # DFS numbering: owned particles first, then children, per class
    owned_start = np.zeros((n_boxes, 3), dtype=np.int64)
    owned_end = np.zeros((n_boxes, 3), dtype=np.int64)
    subtree_start = np.zeros((n_boxes, 3), dtype=np.int64)
    subtree_end = np.zeros((n_boxes, 3), dtype=np.int64)
    order = [[] for _ in range(3)]
    stack = [(0, False)]
    post = []
    while stack:
        b, done = stack.pop()
        if done:
            post.append(b)
            continue
        for c in range(3):
            subtree_start[b, c] = len(order[c])
            owned_start[b, c] = len(order[c])
            order[c].extend(owned[b][c])
            owned_end[b, c] = len(order[c])
        stack.append((b, True))
        for ch in reversed(children[b]):
            stack.append((ch, False))
    for b in post:
        for c in range(3):
            end = owned_end[b, c]
            for ch in children[b]:
                end = max(end, subtree_end[ch, c])
            subtree_end[b, c] = end

    perms = []
    new_pts = []
    for c in range(3):
        idx = np.asarray(order[c], dtype=np.int64)
        perm = np.empty(pts[c].shape[0], dtype=np.int64)
        perm[idx] = np.arange(idx.shape[0])
        perms.append(perm)
        new_pts.append(pts[c][idx] if idx.shape[0] else pts[c])
    radii_perm = qbx_radii[np.asarray(order[CENTERS], dtype=np.int64)] \
        if qbx_radii.shape[0] else qbx_radii

    return Octree(
        root_center=root_center,
        root_half_width=root_half,
        t_f=params.t_f,
        centers=np.asarray(centers),
        half_widths=np.asarray(half_widths),
        levels=np.asarray(levels, dtype=np.int64),
        parents=np.asarray(parents, dtype=np.int64),
        child_lists=children,
        icoords=np.asarray(icoords, dtype=np.int64),
        perms=perms,
        owned_start=owned_start,
        owned_end=owned_end,
        subtree_start=subtree_start,
        subtree_end=subtree_end,
        points=new_pts,
        center_radii=radii_perm,
    )
