"""Rooted binary trees over dyadic cuboids and the aggregation queries built
on them: split points, control trees, encapsulations, forests from sorted
cuboid lists, and lp-compressed norm queries over marked cuboids.
"""

import numpy as np

from .dyadic import DyadicCuboid, cuboid_compare, least_common_dyadic_ancestor, interleave
from .lpcalc import compress_norms


class BTreeNode:
    __slots__ = ("parent", "children", "cuboid", "mus", "original", "anc", "count")

    def __init__(self, cuboid=None, mus=None):
        self.parent = None
        self.children = []
        self.cuboid = cuboid
        self.mus = mus
        self.original = False
        self.anc = None       # smallest original node containing this one
        self.count = 0

    def add_child(self, node):
        if len(self.children) >= 2:
            raise ValueError("BTree nodes have at most two children")
        node.parent = self
        self.children.append(node)

    @property
    def is_leaf(self):
        return not self.children


class BTree:
    """A rooted finite tree with at most two children per node."""

    def __init__(self, root):
        self.root = root

    def nodes(self):
        out, stack = [], [self.root]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(x.children)
        return out

    def size(self):
        return len(self.nodes())


def _fill_counts(root):
    order = []
    stack = [root]
    while stack:
        x = stack.pop()
        order.append(x)
        stack.extend(x.children)
    for x in reversed(order):
        x.count = 1 + sum(c.count for c in x.children)
    return root.count


def btree1_split(tree: BTree) -> BTreeNode:
    """A non-root node whose descendant and non-descendant counts are both at
    most (9/10) of the tree size.  Ties between children go to the first."""
    total = _fill_counts(tree.root)
    if total < 2:
        raise ValueError("btree1_split requires at least two nodes")
    x = tree.root
    while x.count > 0.9 * total:
        x = max(x.children, key=lambda c: c.count)  # first child wins ties
    return x


class ControlNode:
    __slots__ = ("go", "stay", "x_root", "x_split", "x_indicated", "singleton",
                 "mus", "bt_nodes")

    def __init__(self):
        self.go = None
        self.stay = None
        self.x_root = None
        self.x_split = None
        self.x_indicated = None
        self.singleton = False
        self.mus = None
        self.bt_nodes = None

    @property
    def is_leaf(self):
        return self.go is None


class ControlTree:
    def __init__(self, root):
        self.root = root

    def nodes(self):
        out, stack = [], [self.root]
        while stack:
            x = stack.pop()
            out.append(x)
            if x.go is not None:
                stack.append(x.go)
                stack.append(x.stay)
        return out

    def size(self):
        return len(self.nodes())

    def depth(self):
        best, stack = 0, [(self.root, 1)]
        while stack:
            x, d = stack.pop()
            best = max(best, d)
            if x.go is not None:
                stack.append((x.go, d + 1))
                stack.append((x.stay, d + 1))
        return best


def make_control_tree(tree: BTree, mode="paperback", p=None) -> ControlTree:
    """Build the control tree: 2#T - 1 nodes, depth O(log #T).

    mode 'paperback' keeps all markings except subtree contents; 'hybrid'
    additionally attaches lp-compressed functionals per node (requires each
    tree node to carry `mus`); 'deluxe' retains the subtree node sets (debug
    and tests only - linear-space bounds do not apply to it).
    """
    if mode == "hybrid" and p is None:
        raise ValueError("hybrid mode needs the exponent p")

    def build(root):
        t = BTree(root)
        total = _fill_counts(root)
        xi = ControlNode()
        xi.x_root = root
        if total == 1:
            xi.singleton = True
            xi.x_indicated = root
            if mode == "hybrid":
                xi.mus = np.atleast_2d(np.asarray(root.mus, dtype=float))
            if mode == "deluxe":
                xi.bt_nodes = frozenset([root])
            return xi, [root]
        xs = btree1_split(t)
        if mode == "hybrid":
            all_mus = []
            stack = [root]
            members = []
            while stack:
                v = stack.pop()
                members.append(v)
                stack.extend(v.children)
            for v in members:
                if v.mus is not None:
                    all_mus.append(np.atleast_2d(np.asarray(v.mus, dtype=float)))
            stacked = np.vstack(all_mus) if all_mus else np.zeros((1, 1))
            xi.mus = compress_norms(stacked, p)
        # detach the split node
        xs.parent.children.remove(xs)
        xs.parent = None
        go, go_members = build(xs)
        stay, stay_members = build(root)
        xi.go, xi.stay = go, stay
        xi.x_split = xs
        if mode == "deluxe":
            xi.bt_nodes = frozenset(go_members) | frozenset(stay_members)
        return xi, go_members + stay_members

    root, _ = build(tree.root)
    return ControlTree(root)


def encapsulate(ct: ControlTree, Q: DyadicCuboid):
    """CT nodes whose subtrees partition {x in T : Q_x inside Q}."""
    out = []
    xi = ct.root
    while True:
        if xi.is_leaf:
            qx = xi.x_indicated.cuboid
            if Q.contains(qx):
                out.append(xi)
            return out
        qs = xi.x_split.cuboid
        if qs.contains(Q):
            # includes qs == Q: all candidates lie among the descendants
            xi = xi.go
        elif Q.contains(qs):
            out.append(xi.go)
            xi = xi.stay
        elif Q.disjoint(qs):
            xi = xi.stay
        else:
            raise AssertionError("dyadic cuboids must nest or be disjoint")


def adprocess_query(ct: ControlTree, Q: DyadicCuboid, p, D):
    """D functionals whose lp mass matches the mass over nodes inside Q."""
    segs = encapsulate(ct, Q)
    if not segs:
        return np.zeros((D, D))
    stacked = np.vstack([s.mus for s in segs])
    return compress_norms(stacked, p)


def make_forest(cuboids, istart=0, iend=None):
    """For strictly increasing cuboids, the maximal elements in positions
    [istart, iend] and, per position, the smallest strictly containing cuboid
    in range (-1 when maximal).  Returns (maximal_indices, parent, order_ok)."""
    if iend is None:
        iend = len(cuboids) - 1
    parent = {}
    maximal = []
    stack = []  # indices of currently open (containing) cuboids
    prev = None
    for i in range(istart, iend + 1):
        q = cuboids[i]
        if prev is not None and cuboid_compare(prev, q) >= 0:
            raise ValueError("cuboid list is not strictly increasing")
        prev = q
        while stack and not cuboids[stack[-1]].contains(q):
            stack.pop()
        if stack:
            parent[i] = stack[-1]
        else:
            parent[i] = -1
            maximal.append(i)
        stack.append(i)
    return maximal, parent


def fill_in_gaps(Qhat: DyadicCuboid, cuboids):
    """DTree rooted at Qhat whose leaf set is exactly the given pairwise
    disjoint sorted cuboids; every node is a leaf, a parent of a leaf, or has
    two children."""
    for q in cuboids:
        if not Qhat.contains(q):
            raise ValueError("cuboid outside the root")
    root = BTreeNode(Qhat)
    if len(cuboids) == 1 and cuboids[0] == Qhat:
        return BTree(root)
    stack = [(root, 0, len(cuboids) - 1)]
    while stack:
        node, i0, i1 = stack.pop()
        if i1 - i0 + 1 <= 2:
            for i in range(i0, i1 + 1):
                node.add_child(BTreeNode(cuboids[i]))
            continue
        anc = least_common_dyadic_ancestor(cuboids[i0], cuboids[i1])
        lo, hi = anc.bisect()
        # binary search for the split between lo- and hi-contained cuboids
        a, b = i0, i1
        while a < b:
            mid = (a + b) // 2
            if lo.contains(cuboids[mid]):
                a = mid + 1
            else:
                b = mid
        j = a - 1  # last index in the lesser child
        for sub, lo_i, hi_i in ((lo, i0, j), (hi, j + 1, i1)):
            if lo_i == hi_i and cuboids[lo_i] == sub:
                node.add_child(BTreeNode(cuboids[lo_i]))
                continue
            child = BTreeNode(sub)
            node.add_child(child)
            stack.append((child, lo_i, hi_i))
    return BTree(root)


def make_dtree(cuboids):
    """DTree containing every given cuboid as a node, marked original, each
    node marked with its smallest strictly containing original (or None)."""
    import functools
    order = sorted(range(len(cuboids)),
                   key=functools.cmp_to_key(lambda i, j: cuboid_compare(cuboids[i], cuboids[j])))
    sorted_cubs = [cuboids[i] for i in order]
    for a, b in zip(sorted_cubs, sorted_cubs[1:]):
        if a == b:
            raise ValueError("cuboids must be distinct")
    # super-root strictly containing everything; lives in a one-bit-extended
    # frame so a strict container exists even above the full unit frame
    anc = sorted_cubs[0]
    for q in sorted_cubs[1:]:
        anc = least_common_dyadic_ancestor(anc, q)
    t = anc.t + 1
    q00 = DyadicCuboid((anc.start >> t) << t, t, anc.n, anc.bits + 1)
    nodes = {q00: BTreeNode(q00)}
    maximal, parent = make_forest(sorted_cubs)
    parent_map = {}
    for i, q in enumerate(sorted_cubs):
        nodes[q] = BTreeNode(q)
        nodes[q].original = True
    for i, q in enumerate(sorted_cubs):
        par = q00 if parent[i] == -1 else sorted_cubs[parent[i]]
        parent_map.setdefault(par, []).append(q)
        nodes[q].anc = None if parent[i] == -1 else nodes[sorted_cubs[parent[i]]]
    # splice gap-filler trees between each node and its (sorted) children
    roots = [q00]
    while roots:
        par_cub = roots.pop()
        par_node = nodes[par_cub]
        kids = parent_map.get(par_cub, [])
        if not kids:
            continue
        roots.extend(kids)
        kid_set = set(kids)
        filler_anc = par_node if par_node.original else par_node.anc
        sub = fill_in_gaps(par_cub, kids)
        stack = [(sub.root, par_node)]
        while stack:
            fnode, real_parent = stack.pop()
            for ch in fnode.children:
                if ch.cuboid in kid_set:
                    real = nodes[ch.cuboid]
                else:
                    real = BTreeNode(ch.cuboid)
                    real.anc = filler_anc
                    nodes.setdefault(ch.cuboid, real)
                real_parent.add_child(real)
                stack.append((ch, real))
    tree = BTree(nodes[q00])
    return tree, nodes


class MarkedNormsIndex:
    """Query structure: per dyadic cuboid Q, D functionals whose lp mass is
    comparable to the mass of all marked-cuboid functionals inside Q."""

    def __init__(self, cuboids, mu_lists, p, D):
        self.p = p
        self.D = D
        comp = []
        for mus in mu_lists:
            mus = np.atleast_2d(np.asarray(mus, dtype=float))
            comp.append(compress_norms(mus, p) if len(mus) else np.zeros((D, D)))
        tree, nodes = make_dtree(list(cuboids))
        for i, q in enumerate(cuboids):
            nodes[q].mus = comp[i]
        for x in tree.nodes():
            if x.mus is None:
                x.mus = np.zeros((D, D))
        self.ct = make_control_tree(tree, mode="hybrid", p=p)

    def query(self, Q: DyadicCuboid):
        return adprocess_query(self.ct, Q, self.p, self.D)


class TargetLocator:
    """Point-in-targets query: returns one target cuboid containing the point,
    or None; backed by the control tree of the target DTree."""

    def __init__(self, targets):
        tree, nodes = make_dtree(list(targets))
        self.ct = make_control_tree(tree, mode="paperback")
        self.n = targets[0].n
        self.bits = targets[0].bits

    def query_code(self, code):
        xi = self.ct.root
        while True:
            qroot = xi.x_root.cuboid
            if not qroot.contains_code(code):
                return None
            if xi.x_root.original:
                return qroot
            if xi.is_leaf:
                return None
            xs = xi.x_split
            qs = xs.cuboid
            if not qs.contains_code(code):
                xi = xi.stay
                continue
            anc = xs if xs.original else xs.anc
            if anc is not None and qroot.contains(anc.cuboid):
                return anc.cuboid
            xi = xi.go

    def query_point(self, coords_int):
        return self.query_code(interleave(tuple(int(c) for c in coords_int), self.bits))


def locate_in_targets(targets):
    return TargetLocator(targets)


def norms_from_marked_cuboids(cuboids, mu_lists, p, D):
    """Query structure over marked cuboids: lp mass of all marks inside a
    query cuboid, compressed to D functionals (see MarkedNormsIndex)."""
    return MarkedNormsIndex(cuboids, mu_lists, p, D)
