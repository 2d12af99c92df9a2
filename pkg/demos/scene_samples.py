"""Draw a few image-caption pairs from each preset and print their captions.

    python demos/scene_samples.py [out.png]
"""
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from madman.data import PRESETS, expected_knobs, generate, knob_counts
from madman.mnist import load_digits

out = sys.argv[1] if len(sys.argv) > 1 else "scene_samples.png"
digits = load_digits()
fig, axes = plt.subplots(len(PRESETS), 4, figsize=(10, 2.8 * len(PRESETS)))
for row, (name, cfg) in zip(axes, PRESETS.items()):
    records = generate(cfg.replace(n_samples=200), digits=digits)
    counts = knob_counts(records)
    print(f"{name}")
    print("  expected " + ", ".join(f"{k}={v:.2f}" for k, v in expected_knobs(cfg).items()))
    print("  observed " + ", ".join(f"{k}={s / max(n, 1):.2f}" for k, (s, n) in counts.items()))
    for ax, rec in zip(row, records):
        ax.imshow(rec.image)
        ax.axis("off")
        ax.set_title(" ".join(rec.caption.tokens[1:-1]), fontsize=6, wrap=True)
        print(f"  [{rec.sample_id}] {rec.caption.text}")
fig.tight_layout()
fig.savefig(out, dpi=100)
print(f"wrote {out}")
