"""
Simulate a two-arm survival trial in which control patients may cross over
to the active treatment, then look at it the way an analyst first would:
observed patterns, crude switching summaries and intention-to-treat
Kaplan-Meier curves.

    python demos/01_simulate_trial.py
"""

from collections import Counter

import numpy as np

from switchps import THETA_REFERENCE, GeneratorConfig, classify, generate
from switchps.kaplan_meier import km_eval, km_fit

data, truth = generate(GeneratorConfig(n=1000, theta_true=THETA_REFERENCE, seed=1))
col = data.columns

print(f"{len(data)} patients, {int(col.z.sum())} randomized to treatment")
print("\nobserved patterns")
for pattern, count in sorted(Counter(classify(r).name for r in data.records).items()):
    print(f"  {pattern:<34} {count:5d}")

ctrl = col.z == 0
switched = ctrl & (col.s_event == 1)
print(f"\ncontrol patients seen switching: {switched.sum()} of {ctrl.sum()}")
print(f"mean observed switching time:    {col.s_tilde[switched].mean():.2f} years")

# The latent truth is only available because we simulated the data.
true_sw = ~np.isnan(truth.s0)
print(f"true switchers among controls:   {(true_sw & ctrl).sum()}")

# Intention-to-treat comparison by arm, ignoring the crossover.
grid = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
curves = {arm: km_fit(col.y_tilde[col.z == arm], col.y_event[col.z == arm]) for arm in (0, 1)}
print("\nKaplan-Meier survival by arm")
print("   t   control  treated")
for t in grid:
    print(f"{t:4.1f}   {km_eval(curves[0], t):.3f}    {km_eval(curves[1], t):.3f}")
