"""Render one digit under every attribute value and save a gallery.

    python demos/attribute_gallery.py [out.png]
"""
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from madman.attributes import CATEGORIES, apply_transform, measure_thickness, n_combinations
from madman.mnist import load_digits

out = sys.argv[1] if len(sys.argv) > 1 else "attribute_gallery.png"
digits = load_digits()
img = digits.get("train", digits.index_of("train", 4, 0))
print(f"{n_combinations()} attribute combinations; source thickness {measure_thickness(img):.2f} px")

width = max(c.n_values for c in CATEGORIES)
fig, axes = plt.subplots(len(CATEGORIES), width, figsize=(1.6 * width, 1.8 * len(CATEGORIES)))
for row, cat in zip(axes, CATEGORIES):
    for ax in row:
        ax.axis("off")
    for ax, value in zip(row, cat.values):
        t = apply_transform(img, cat.name, value, np.random.default_rng(0))
        ax.imshow(t, cmap=None if t.ndim == 3 else "gray", vmin=0, vmax=1)
        ax.set_title(value, fontsize=8)
        if cat.name == "thickness":
            print(f"  {value:<17} thickness {measure_thickness(t):.2f} px")
fig.tight_layout()
fig.savefig(out, dpi=100)
print(f"wrote {out}")
