"""
A small simulation study
========================

Rejection rates of TRUH and the asymptotic edge-count test on two copula
mixtures.  In the first the cases come from one baseline component (no
remodeling); in the second a component has moved.
"""

# %%
from truh.simlab import run_experiment, run_tau_sweep

# %%
# Few repetitions keep this quick; increase ``reps`` for stable rates.
for name in ("Exp2-I", "Exp2-II"):
    report = run_experiment(name, reps=20, alpha=[0.05, 0.1], seed=0, b2=100)
    print(report.to_table(), end="\n\n")

# %%
# Raising the fold-change threshold trades power for leniency.
for report in run_tau_sweep("Exp2-II", (1.0, 1.2, 1.4), reps=20, seed=0, b2=100):
    print(report.config["tau_values"], report.rate())
