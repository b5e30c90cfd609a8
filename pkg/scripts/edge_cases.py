"""Single-kernel edge cases: one full-length segment, and fifteen equal segments.

    python scripts/edge_cases.py

Both datasets use the kernel (a2=0.1, l2=0.4), beta=0.001 and a 30-unit horizon; the
fit uses the default hyperparameters (M=5, lambda=0.25).
"""

import json
from importlib.resources import files

import numpy as np

from segseq.generator import sample_dataset, spec_from_dict
from segseq.model import Hyperparams
from segseq.trainer import fit


def main():
    for name in ("edge1.json", "edge2.json"):
        spec = spec_from_dict(json.loads((files("segseq") / "configs" / name).read_text()))
        data, truths = sample_dataset(spec)
        res = fit(data, Hyperparams(seed=spec.seed))
        st = res.state
        active = st.active_kernels()
        print(f"{name}: {len(truths[0].boundaries)} generating segment(s), {len(active)} active kernel(s)")
        for m in active:
            print(f"  kernel {m}: a2={st.kernels[m].amp2:.4f} l2={st.kernels[m].ls2:.4f} E[pi]={st.expected_pi[m]:.3f}")
        print(f"  beta={st.beta:.5f}  mean segments per sample={res.diagnostics[-1]['mean_segments']:.1f}")
        print(f"  E[pi] = {np.round(st.expected_pi, 3).tolist()}")


if __name__ == "__main__":
    main()
