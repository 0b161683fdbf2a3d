"""Independent reference implementations used only by the tests.

They are deliberately naive (plain loops, no numpy tricks, high precision
where it matters) and share no code with the package.
"""

import math
import random

import mpmath
from scipy import integrate


# -- suggestion graphs ---------------------------------------------------

def bfs_enumerate(graph, root, alphabet, max_depth):
    """Enumerate (depth, parent, query) triples of a suggestion tree.

    ``graph`` maps query -> suggestion list. A query is fetched only the
    first time it appears (in breadth-first order); later appearances are
    leaves. Letter seeds hang off the root after the root's suggestions.
    """
    seeds = [root + " " + ch for ch in alphabet]
    expanded = set([root] + seeds)
    out = [(0, None, root)]
    level = []
    kids = []
    for s in graph.get(root, []):
        if s in kids or s in seeds:
            continue
        kids.append(s)
    for s in kids:
        level.append((s, s not in expanded))
        expanded.add(s)
    for s in seeds:
        level.append((s, True))
    for q, _ in level:
        out.append((1, root, q))
    depth = 1
    while depth < max_depth:
        nxt = []
        for q, is_new in level:
            if not is_new:
                continue
            kids = []
            for s in graph.get(q, []):
                if s not in kids:
                    kids.append(s)
            for s in kids:
                nxt.append((s, s not in expanded))
                expanded.add(s)
                out.append((depth + 1, q, s))
        if not any(new for _, new in nxt):
            break
        level = nxt
        depth += 1
    return out


def random_graph(rng: random.Random, n_queries=400, max_out=10, root="x"):
    """Random suggestion graph over word-extension queries, cycles included."""
    words = [f"w{i}" for i in range(60)]
    pool = [root] + [root + " " + ch for ch in "abc"]
    members = set(pool)
    while len(pool) < n_queries:
        base = rng.choice(pool)
        cand = base + " " + rng.choice(words)
        if cand not in members:
            members.add(cand)
            pool.append(cand)
    graph = {}
    for q in pool:
        k = rng.randint(0, max_out)
        picks = []
        for _ in range(k):
            if rng.random() < 0.15:
                picks.append(rng.choice(pool))  # back edges / cycles
            else:
                picks.append(q + " " + rng.choice(words))
        graph[q] = picks
    return graph


def tree_triples(tree):
    out = []

    def walk(node, parent):
        out.append((node.depth, parent, node.query))
        for c in node.children:
            walk(c, node.query)

    walk(tree.root, None)
    return out


def prune_two_pass(tree, variants):
    """Mark by case-insensitive substring test, then propagate downward."""
    lowered = [v.lower() for v in variants]
    marked = {}
    paths = []

    def collect(node, path):
        paths.append((path, node))
        if node.origin == "suggestion":
            marked[path] = marked_node = not any(v in " ".join(node.query.lower().split()) for v in lowered)
        else:
            marked[path] = False
        for i, c in enumerate(node.children):
            collect(c, path + (i,))

    collect(tree.root, ())
    final = {}
    for path, node in paths:
        final[path] = any(marked[path[:j]] for j in range(len(path) + 1))
    return final


# -- numerics -------------------------------------------------------------

def t_density(x, dof):
    c = math.exp(math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2)) / math.sqrt(dof * math.pi)
    return c * (1 + x * x / dof) ** (-(dof + 1) / 2)


def two_sided_p_quad(t, dof):
    """2 * integral of the t density from |t| to infinity."""
    val, _ = integrate.quad(t_density, abs(t), math.inf, args=(dof,), epsabs=1e-14, epsrel=1e-12, limit=200)
    return 2.0 * val


def ols_extended(X, y, dps=40):
    """Normal equations with an intercept in mpmath, ``dps`` digits."""
    with mpmath.workdps(dps):
        n = len(y)
        p = len(X[0]) + 1
        A = mpmath.matrix(n, p)
        for i in range(n):
            A[i, 0] = 1
            for j in range(p - 1):
                A[i, j + 1] = mpmath.mpf(float(X[i][j]))
        Y = mpmath.matrix([mpmath.mpf(float(v)) for v in y])
        AtA = A.T * A
        inv = AtA ** -1
        beta = inv * (A.T * Y)
        resid = Y - A * beta
        ssr = sum(r * r for r in resid)
        ybar = sum(Y) / n
        sst = sum((v - ybar) ** 2 for v in Y)
        dof = n - p
        sigma2 = ssr / dof
        se = [mpmath.sqrt(sigma2 * inv[j, j]) for j in range(p)]
        t = [beta[j] / se[j] for j in range(p)]
        return {
            "beta": [float(b) for b in beta],
            "se": [float(s) for s in se],
            "t": [float(v) for v in t],
            "r2": float(1 - ssr / sst),
            "dof": dof,
        }


def silhouette_bruteforce(points, labels):
    n = len(points)

    def dist(a, b):
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))

    clusters = sorted(set(labels))
    total = 0.0
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue  # singleton scores 0
        a = sum(dist(points[i], points[j]) for j in own) / len(own)
        b = min(
            sum(dist(points[i], points[j]) for j in range(n) if labels[j] == c)
            / sum(1 for j in range(n) if labels[j] == c)
            for c in clusters if c != labels[i]
        )
        m = max(a, b)
        total += 0.0 if m == 0 else (b - a) / m
    return total / n
