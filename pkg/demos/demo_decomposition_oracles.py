"""Peeking inside one round: the mean/perturbation/noise split.

Each realized round decomposes exactly as

    Q(t+1) = Q(t) + d(t) [ Hbar(t) Q(t) + C(t) + M(t) ],

where Hbar is the expected weight structure, C the sampling bias, and M
zero-mean noise. On a 3-node path the joint message space is small
enough to enumerate, so the conditional means are computed exactly.

Usage: python demos/demo_decomposition_oracles.py
"""

import numpy as np

from socialsampling import (
    CensoredExchange,
    NetworkState,
    OpinionSample,
    check_conditions,
    conditional_mean_noise,
    conditional_mean_perturbation,
    decompose,
    harmonic,
    init_state,
    step,
)
from socialsampling.topology import Graph


def main():
    g = Graph(3, ((0, 1), (1, 2)))
    st = init_state(OpinionSample(np.array([1, 2, 1]), 2))
    variant, sched = CensoredExchange(), harmonic(2.0)

    rng = np.random.default_rng(3)
    records = []
    for _ in range(200):
        st, rec = step(st, variant, sched, g, rng)
        records.append(rec)

    rec = records[150]
    dec = decompose(rec, variant)
    print("round", rec.t, " messages:", rec.Y, " step size:", round(rec.delta, 4))
    print("mean dynamics Hbar(t):")
    print(np.round(dec.Hbar, 3))
    recon = rec.Q_before + rec.delta * (dec.Hbar @ rec.Q_before + dec.C + dec.Mnoise)
    print("reconstruction error:", np.abs(recon - rec.Q_after).max())

    state = NetworkState(rec.t, rec.Q_before)
    em = conditional_mean_noise(state, variant, sched, g)
    ec = conditional_mean_perturbation(state, variant, sched, g)
    print("\nenumerated over all joint message outcomes at this state:")
    print("  max |E[noise]|        =", np.abs(em).max(), " (must be 0)")
    print("  ||E[perturbation]||/d =", np.linalg.norm(ec) / rec.delta,
          " (must stay bounded)")

    report = check_conditions(records, variant, sched, g, enum_cap=30)
    print("\ncondition report over", len(records), "rounds:")
    for key, val in report.to_dict().items():
        print(f"  {key:28s} {val}")


if __name__ == "__main__":
    main()
