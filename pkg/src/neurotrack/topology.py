"""Plain-text network descriptions.

One ``population`` line per population, then one ``synapses`` header per
synapse set followed by its nonzero weights as ``pre post weight`` lines
(and, for plastic sets, the ``mask`` entries as ``pre post`` lines)::

    population in kind=input size=2
    population n kind=lif size=1 threshold=2 decay_tau=inf refractory=0 self_excitation=0 wta=0
    synapses name=in->n pre=in post=n sign=excitatory plastic=0 generator=- nnz=2
    0 0 1
    1 0 1
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import sparse

from .engine import ConfigError, Network, SpikeBatch

__all__ = ["dump_network", "load_network", "write_spike_csv"]


def _num(v) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if float(v) == int(v):
        return str(int(v))
    return repr(float(v))


def dump_network(net: Network) -> str:
    lines = ["# neurotrack network"]
    for p in net.populations.values():
        if p.kind == "input":
            lines.append(f"population {p.name} kind=input size={p.size}")
            continue
        thr = ",".join(_num(t) for t in p.threshold) if np.ndim(p.threshold) else _num(p.threshold)
        lines.append(f"population {p.name} kind=lif size={p.size} threshold={thr} decay_tau={_num(p.decay_tau)} "
                     f"refractory={p.refractory} self_excitation={p.self_excitation} "
                     f"wta={int(p.winner_take_all)}")
    for s in net.synapses.values():
        w = sparse.coo_matrix(s.weights)
        w.sum_duplicates()
        order = np.lexsort((w.col, w.row))
        head = (f"synapses name={s.name} pre={s.pre} post={s.post} sign={s.sign} plastic={int(s.plastic)} "
                f"generator={s.generator or '-'} nnz={len(order)}")
        if s.plastic:
            rp, ri = s.reinforcement
            mask = np.argwhere(s.mask)
            head += (f" reinforcement={rp}:{ri} adapt_sign={s.adapt_sign} w_min={s.w_min} w_max={s.w_max}"
                     f" mask={len(mask)}")
        lines.append(head)
        lines += [f"{w.row[k]} {w.col[k]} {int(w.data[k])}" for k in order]
        if s.plastic:
            lines += [f"{i} {j}" for i, j in mask]
    return "\n".join(lines) + "\n"


def _fields(tokens: list[str]) -> dict[str, str]:
    out = {}
    for tok in tokens:
        k, sep, v = tok.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {tok!r}")
        out[k] = v
    return out


def load_network(text: str) -> Network:
    net = Network()
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    i = 0
    while i < len(rows):
        tok = rows[i].split()
        i += 1
        if tok[0] == "population":
            f = _fields(tok[2:])
            size = int(f["size"])
            if f.get("kind") == "input":
                net.add_input(tok[1], size)
                continue
            thr = [float(v) for v in f["threshold"].split(",")]
            net.add_population(tok[1], size, threshold=np.array(thr) if len(thr) > 1 else thr[0],
                               decay_tau=float(f["decay_tau"]), refractory=int(f["refractory"]),
                               self_excitation=int(f["self_excitation"]), winner_take_all=f["wta"] == "1")
        elif tok[0] == "synapses":
            f = _fields(tok[1:])
            pre, post = net.populations[f["pre"]].size, net.populations[f["post"]].size
            nnz = int(f["nnz"])
            trip = np.array([r.split() for r in rows[i:i + nnz]], dtype=np.int64).reshape(-1, 3)
            i += nnz
            w = sparse.csr_matrix((trip[:, 2], (trip[:, 0], trip[:, 1])), shape=(pre, post), dtype=np.int64)
            kw = dict(sign=f["sign"], generator=None if f["generator"] == "-" else f["generator"])
            if f["plastic"] == "1":
                nm = int(f["mask"])
                idx = np.array([r.split() for r in rows[i:i + nm]], dtype=np.int64).reshape(-1, 2)
                i += nm
                mask = np.zeros((pre, post), dtype=bool)
                mask[idx[:, 0], idx[:, 1]] = True
                rp, _, ri = f["reinforcement"].rpartition(":")
                kw.update(plastic=True, reinforcement=(rp, int(ri)), adapt_sign=int(f["adapt_sign"]),
                          w_min=int(f["w_min"]), w_max=int(f["w_max"]), mask=mask)
                w = w.toarray()
            net.connect(f["pre"], f["post"], w, name=f["name"], **kw)
        else:
            raise ConfigError(f"unknown record {tok[0]!r}")
    return net


def write_spike_csv(batches: Iterable[SpikeBatch], path: str | Path) -> int:
    """Write ``timestep,population,neuron_index`` rows; returns the spike count."""
    n = 0
    with open(path, "w", newline="") as fh:
        fh.write("timestep,population,neuron_index\n")
        for b in batches:
            for pop, i in b.pairs():
                fh.write(f"{b.timestep},{pop},{i}\n")
                n += 1
    return n
