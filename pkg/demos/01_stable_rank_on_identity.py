"""Three ways to bring the stable rank of I_3 down to 2.

Truncating the smallest singular value gives diag(1, 1, 0). Keeping the top
singular value and shrinking the rest gives the k=1 solution. Letting the top
value grow as well (k=0) gives the Frobenius-closest answer of all three.
"""
import numpy as np

from srnkit import SrnConfig, srn_closed_form, stable_rank

W = np.eye(3)
candidates = {
    "truncate (rank 2)": np.diag([1.0, 1.0, 0.0]),
    "SRN, keep top value (k=1)": srn_closed_form(W, SrnConfig(2.0, partition_index=1)).matrix,
    "SRN, rescale all (k=0)": srn_closed_form(W, SrnConfig(2.0, partition_index=0)).matrix,
}

np.set_printoptions(precision=4, suppress=True)
for name, M in candidates.items():
    print(f"{name:28s} diag={np.diag(M)}  srank={stable_rank(M):.4f}  "
          f"|W - M|_F={np.linalg.norm(W - M):.4f}")

# Each matrix has stable rank 2, but only the last is nearest to W.
