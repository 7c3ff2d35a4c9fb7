"""Benchmark instances, the gain metric and performance profiles.

Instances are drawn from an address pool given by a travel-time matrix.
The depot and customers are drawn first, so two instances with the same
(customer count, seed) share their customers whatever the waiting-vertex
mode.  Waiting vertices are cluster medians of the remaining addresses.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import ConfigError, Instance, ParseError, Request

HORIZON = 480
SLOT = 5
N_SLOTS = 96
SERVICE = 5
WINDOW_LENGTHS = (5, 10, 15, 20)
POOL_SIZE = 255
POOL_SEED = 20160815


def synthetic_pool(size=POOL_SIZE, seed=POOL_SEED, side=40.0, detour=1.3, noise=0.2):
    """Travel times (minutes) between ``size`` random addresses in a square.

    Times are euclidean distance times a detour factor, each direction
    perturbed independently by up to +-noise, rounded, at least 1.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, side, size=(size, 2))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    factor = rng.uniform(1.0 - noise, 1.0 + noise, size=(size, size))
    d = np.maximum(1, np.rint(dist * detour * factor)).astype(np.int64)
    np.fill_diagonal(d, 0)
    return d


def load_pool(path):
    """Read a whitespace-separated square travel-time matrix."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([int(x) for x in line.split()])
        except ValueError:
            raise ParseError("bad integer in travel matrix", lineno) from None
    d = np.array(rows, dtype=np.int64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ParseError("travel matrix must be square")
    return d


def kmeans_medians(sym, points, k, seed, max_iter=100):
    """Cluster ``points`` (indices into ``sym``) into k groups and return the
    member of each group with least mean distance to its group.

    Lloyd iterations where each centre is a group member (the median), as
    only distances are known.  An empty group is reseeded with the point
    farthest from its centre.
    """
    points = np.asarray(points)
    if not 0 < k <= len(points):
        raise ConfigError(f"cannot form {k} clusters from {len(points)} points")
    rng = np.random.default_rng(seed)
    centres = rng.choice(points, size=k, replace=False)
    for _ in range(max_iter):
        dist = sym[np.ix_(points, centres)]
        label = dist.argmin(axis=1)
        new = centres.copy()
        for j in range(k):
            members = points[label == j]
            if len(members) == 0:
                far = points[dist.min(axis=1).argmax()]
                new[j] = far
                continue
            sub = sym[np.ix_(members, members)]
            new[j] = members[sub.mean(axis=1).argmin()]
        if len(set(new.tolist())) < k:  # two groups collapsed on one median
            new = centres
        if np.array_equal(new, centres):
            break
        centres = new
    return sorted(int(c) for c in centres)


def slot_probabilities(rng, sigma=8.0):
    """Appearance probability per 5-minute slot (index 1..96) for a customer.

    Two modes drawn uniformly in [1, 96]; 100 normal draws around each are
    rounded and counted per slot.  Sum over slots is at most 2.
    """
    mu = rng.integers(1, N_SLOTS + 1, size=2)
    draws = np.rint(np.concatenate([rng.normal(m, sigma, size=100) for m in mu]))
    nb = np.zeros(N_SLOTS + 1)
    for x in draws:
        if 1 <= x <= N_SLOTS:
            nb[int(x)] += 1
    return np.minimum(1.0, nb / 100.0)


def generate_instance(
    customers,
    waiting=None,
    seed=0,
    colocated=False,
    vehicles=2,
    capacity=None,
    sigma=8.0,
    pool=None,
    horizon=HORIZON,
):
    """Build a benchmark instance.

    ``waiting`` is the number of waiting vertices (ignored when colocated,
    where every customer is a waiting vertex).  Without a pool the synthetic
    pool is used.
    """
    d_pool = synthetic_pool() if pool is None else np.asarray(pool)
    size = d_pool.shape[0]
    if not colocated and (waiting is None or waiting < 1):
        raise ConfigError("separated mode needs a positive number of waiting vertices")
    need = 1 + customers + (0 if colocated else waiting)
    if need > size:
        raise ConfigError(f"pool of {size} addresses is too small for {need}")
    rng = np.random.default_rng([seed, customers])
    picked = rng.choice(size, size=1 + customers, replace=False)
    depot, cust = int(picked[0]), [int(c) for c in picked[1:]]
    if colocated:
        wait = []
    else:
        rest = np.setdiff1d(np.arange(size), picked)
        sym = np.minimum(d_pool, d_pool.T)
        wait = kmeans_medians(sym, rest, waiting, seed)
    order = [depot] + wait + cust
    travel = d_pool[np.ix_(order, order)]
    m = len(wait)
    cust_ids = tuple(range(m + 1, m + 1 + customers))
    wait_ids = cust_ids if colocated else tuple(range(1, m + 1))
    req_rng = np.random.default_rng([seed, customers, 1])
    reqs = []
    for c in cust_ids:
        probs = slot_probabilities(req_rng, sigma)
        for slot in range(1, N_SLOTS + 1):
            gamma = slot * SLOT
            demand = int(req_rng.integers(0, 3))
            delta = int(req_rng.choice(WINDOW_LENGTHS))
            if probs[slot] <= 0.0 or gamma > horizon:
                continue
            late = min(horizon, gamma + delta - 1)
            reqs.append(Request(c, gamma, demand, SERVICE, gamma, late, float(probs[slot])))
    tag = "w" if colocated else f"{m}w"
    name = f"{customers}c-{tag}-{seed}" if not colocated else f"{customers}c+w-{seed}"
    return Instance(
        horizon=horizon,
        vehicles=vehicles,
        capacity=capacity,
        waiting=wait_ids,
        customers=cust_ids,
        travel=travel,
        requests=tuple(reqs),
        name=name,
        meta={"seed": seed, "mode": "colocated" if colocated else "separated", "sigma": sigma},
    )


def gain(ws_average, expected):
    """Relative improvement of ``expected`` over the wait-and-serve average."""
    if ws_average <= 0:
        raise ConfigError("gain is undefined when the wait-and-serve average is 0")
    return (ws_average - expected) / ws_average


def performance_profile(costs):
    """Step curves of cost ratios to the per-instance best.

    ``costs`` maps approach -> sequence of costs (one per instance, same
    order).  Returns approach -> list of (x, fraction) breakpoints where the
    fraction of instances with ratio <= x changes.  An instance whose best
    cost is 0 uses (cost + 1) / (best + 1).
    """
    names = list(costs)
    mat = np.array([costs[n] for n in names], dtype=float)
    if (mat < 0).any():
        raise ConfigError("costs must be non-negative")
    best = np.nanmin(np.where(np.isfinite(mat), mat, np.nan), axis=0)
    if np.isnan(best).any():
        raise ConfigError("every instance needs a finite cost")
    zero = best == 0
    with np.errstate(over="ignore"):
        ratios = np.where(zero, (mat + 1.0) / (best + 1.0), mat / np.where(zero, 1.0, best))
    n_inst = mat.shape[1]
    curves = {}
    for name, row in zip(names, ratios):
        xs = np.sort(row[np.isfinite(row)])
        pts = []
        for j, x in enumerate(xs):
            if j + 1 < len(xs) and xs[j + 1] == x:
                continue
            pts.append((float(x), (j + 1) / n_inst))
        curves[name] = pts
    return curves


def profile_value(curve, x):
    """Fraction of instances with ratio <= x for one step curve."""
    frac = 0.0
    for bx, f in curve:
        if bx <= x:
            frac = f
    return frac
