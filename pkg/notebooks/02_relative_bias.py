"""
Relative biases: the 2L-1 scalar trick, Shaw tables and the skew
=================================================================
"""
# %%
import numpy as np

from convtran.autodiff import Tensor
from convtran.encodings import RelativeBias, VectorBias, complexity_report, relative_index
from convtran.encodings import vector_relative_logits

# %% [markdown]
# One scalar per offset.  Pair (i, j) reads index i - j + L - 1, so every
# diagonal of the L x L bias is constant.

# %%
print(relative_index(4))
bias = RelativeBias(3, 1, np.array([[10.0, 20.0, 30.0, 40.0, 50.0]]))
print(bias.materialize(0).data)

# %% [markdown]
# Gradients scatter-add back into the vector: offset 0 collects all three
# diagonal cells.

# %%
bias.materialize(0).sum().backward()
print(bias.weights.grad)

# %% [markdown]
# The vector variant never builds an L x L x d tensor.  Queries meet the
# (2L-1) expanded embeddings once, then a pad/reshape/slice aligns each
# cell with its distance.  Sentinel embeddings make the placement visible.

# %%
vb = VectorBias(4, 2, scale=0.0)
vb.embeddings.data[:, 0] = [100.0, 200.0, 300.0, 400.0]
q = np.tile([1.0, 0.0], (4, 1))
print(vector_relative_logits(Tensor(q), vb.embeddings, vb.offset_rows()).data)

# %% [markdown]
# Parameter and memory accounting at L = 30, d_z = 64.

# %%
for m in ("tAPE", "Learned", "Shaw", "Vector", "eRPE"):
    r = complexity_report(m, 30, 64)
    print(f"{m:8s} params {r['params']:6d}  memory {r['memory_cells']:7d}  mult-adds {r['mult_adds']:7d}")
