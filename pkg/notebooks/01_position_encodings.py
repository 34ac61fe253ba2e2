"""
Absolute position tables and their similarity curves
=====================================================

Vanilla sinusoids spend most of their frequencies on scales far longer
than a short series.  Rescaling the frequencies by d_model / L (tAPE)
spreads them over the positions that actually exist.
"""
# %%
import numpy as np

from convtran.encodings import anisotropy, build_tape, build_vanilla_ape, similarity_curve
from convtran.encodings import monotonicity_violations, sign_changes
from convtran.harness import write_comparison_csv

# %% [markdown]
# Both tables share row 0 and have rows of squared norm d_model / 2.

# %%
van, tape = build_vanilla_ape(30, 128), build_tape(30, 128)
print(van.array[0, :6], tape.array[0, :6])
print((van.array**2).sum(1)[:3], (tape.array**2).sum(1)[:3])

# %% [markdown]
# When d_model equals L the two constructions coincide exactly.

# %%
print(np.array_equal(build_tape(64, 64).array, build_vanilla_ape(64, 64).array))

# %% [markdown]
# Short series, wide embedding: tAPE rows are less alike.

# %%
print(f"mean |cos| vanilla {anisotropy(van):.3f}  tAPE {anisotropy(tape):.3f}")

# %% [markdown]
# Long series: the dot product against offset K.  Counting increases and
# slope sign flips over K in [0, 500] shows the tAPE curve is smoother.

# %%
L, d = 1000, 128
for name, table in (("vanilla", build_vanilla_ape(L, d)), ("tAPE", build_tape(L, d))):
    _, curve = similarity_curve(table)
    half = curve[L - 1 : L - 1 + 501]
    print(f"{name:8s} increases {monotonicity_violations(half):4d}  sign flips {sign_changes(half):4d}")

# %% [markdown]
# CSV for external plotting (same as `convtran curves --figure`).

# %%
write_comparison_csv("tape_vs_vanilla_L30.csv", 30, 128)
