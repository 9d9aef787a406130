"""Seeded generator for transmission-grid-like benchmark cases.

Builds a connected, roughly planar network: buses are scattered in the
unit square, joined by their Euclidean minimum spanning tree, and meshed
with short chords until the requested line count is reached.  Reactances
scale with line length; loads and generation are sampled per-unit-style
on a 100 MVA base and balanced in total.  Optionally a few lines are
emitted twice (double circuits), which the parser merges back into one
line, so the parsed line count stays at ``n_lines``.

Output is MATPOWER-style text accepted by :func:`gridoutage.caseio.parse_case`.
"""

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import cKDTree

__all__ = ["synthetic_case"]

_LOAD_FRACTION = 0.55
_GEN_FRACTION = 0.12
_MEAN_LOAD_MW = 60.0
_FLOOR_LOAD_MW = 12.0  # every bus draws something, so no line is exactly flowless


def _mesh_edges(points, n_lines, rng):
    """Spanning tree plus nearest-neighbour chords; returns (i, j) index pairs."""
    n = len(points)
    if n_lines < n - 1:
        raise ValueError(f"need at least {n - 1} lines to connect {n} buses")
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    tree = minimum_spanning_tree(dist).tocoo()
    edges = {(min(i, j), max(i, j)) for i, j in zip(tree.row, tree.col)}

    k = min(9, n - 1)
    _, nbr = cKDTree(points).query(points, k=k + 1)
    candidates = []
    for i in range(n):
        for j in nbr[i, 1:]:
            pair = (min(i, int(j)), max(i, int(j)))
            if pair not in edges:
                candidates.append(pair)
    candidates = sorted(set(candidates), key=lambda e: dist[e])
    need = n_lines - len(edges)
    if need > len(candidates):
        raise ValueError(f"cannot mesh {n_lines} lines into {n} buses; too sparse a candidate set")
    # favour short chords: sample by exponentially decaying rank weight
    weights = np.exp(-np.arange(len(candidates)) / max(1.0, 0.35 * len(candidates)))
    weights /= weights.sum()
    chosen = rng.choice(len(candidates), size=need, replace=False, p=weights)
    for idx in chosen:
        edges.add(candidates[idx])
    return sorted(edges), dist


def synthetic_case(n_buses, n_lines, seed, parallel_pairs=0, base_mva=100.0):
    """Generate a deterministic grid-like MATPOWER case as a string."""
    rng = np.random.default_rng(seed)
    points = rng.random((n_buses, 2))
    edges, dist = _mesh_edges(points, n_lines, rng)

    lengths = np.array([dist[e] for e in edges])
    x = lengths / lengths.mean() * 0.08 * rng.lognormal(0.0, 0.35, size=len(edges))
    x = np.clip(x, 0.01, 0.6)

    n_load = max(1, int(round(_LOAD_FRACTION * n_buses)))
    n_gen = max(2, int(round(_GEN_FRACTION * n_buses)))
    load_buses = rng.choice(n_buses, size=n_load, replace=False)
    gen_buses = rng.choice(n_buses, size=n_gen, replace=False)
    pd = rng.uniform(0.3 * _FLOOR_LOAD_MW, _FLOOR_LOAD_MW, size=n_buses)
    pd[load_buses] += rng.gamma(shape=2.0, scale=_MEAN_LOAD_MW / 2.0, size=n_load)
    share = rng.dirichlet(np.full(n_gen, 2.0))
    pg = np.zeros(n_buses)
    pg[gen_buses] = share * pd.sum()

    slack = gen_buses[int(np.argmax(pg[gen_buses]))]
    bus_type = np.ones(n_buses, dtype=int)
    bus_type[gen_buses] = 2
    bus_type[slack] = 3

    branch_rows = [(f + 1, t + 1, x[i]) for i, (f, t) in enumerate(edges)]
    if parallel_pairs:
        dup = rng.choice(len(branch_rows), size=parallel_pairs, replace=False)
        for i in sorted(dup):
            f, t, xi = branch_rows[i]
            # a double circuit: same corridor, the merged reactance halves
            branch_rows.append((f, t, 2.0 * xi))

    out = []
    out.append(f"function mpc = synth{n_buses}")
    out.append(f"% synthetic {n_buses}-bus benchmark case (seed {seed})")
    out.append("mpc.version = '2';")
    out.append(f"mpc.baseMVA = {base_mva:g};")
    out.append("")
    out.append("% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin")
    out.append("mpc.bus = [")
    for i in range(n_buses):
        out.append(
            f"\t{i + 1}\t{bus_type[i]}\t{pd[i]:.2f}\t0\t0\t0\t1\t1\t0\t138\t1\t1.06\t0.94;"
        )
    out.append("];")
    out.append("")
    out.append("% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin")
    out.append("mpc.gen = [")
    for b in sorted(gen_buses):
        out.append(
            f"\t{b + 1}\t{pg[b]:.2f}\t0\t300\t-300\t1\t{base_mva:g}\t1\t{1.5 * pg[b] + 100:.0f}\t0;"
        )
    out.append("];")
    out.append("")
    out.append("% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax")
    out.append("mpc.branch = [")
    for f, t, xi in branch_rows:
        out.append(
            f"\t{f}\t{t}\t{0.1 * xi:.6f}\t{xi:.6f}\t0\t0\t0\t0\t0\t0\t1\t-360\t360;"
        )
    out.append("];")
    return "\n".join(out) + "\n"
