"""Counts to p-value for the three bundled datasets.

Fits the no-signalling model, optimizes a test factor against the
witness-saturating vertices and reports the evidence.  The p-values are
tuned on the same data they are evaluated on, so treat them as illustrative.
"""
import numpy as np

from gtnl import (cao_locks, derive_named, empirical_from_counts, load_vertices, log_pvalue,
                  mlns_fit, mlns_fit_grouped, optimize_test_factor, zero_adjust)

for name, witness in (("mao1", "mao"), ("mao2", "mao"), ("cao", "cao")):
    ct, grouped = derive_named(name)
    e = empirical_from_counts(ct, grouped=grouped)
    q = mlns_fit_grouped(e) if grouped else mlns_fit(e)
    if np.any(ct.counts == 0):
        q = zero_adjust(q, e.n)
    locks = [cao_locks()] if grouped else []
    tf = optimize_test_factor(q, load_vertices("saturating-" + witness), locks=locks)
    ev = log_pvalue(tf, ct, same_data=True)
    print(f"{name:5s} n={ct.total:6d}  E_q[log2 F]={tf.objective:.6f}  "
          f"log10 p={ev.log10_p:9.3f}  p={ev.format_p()}")
