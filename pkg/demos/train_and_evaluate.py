"""Train a small model on the ideal preset and report recognition and binding.

The defaults finish in a few minutes on one CPU core and will not show
binding; raise --n and --steps for that.

    python demos/train_and_evaluate.py --n 2000 --steps 300
"""
import argparse

from madman.data import IDEAL, ArrayDataset, build_eval_set, generate
from madman.evaluate import TABLE_ORDER, evaluate, format_cell
from madman.mnist import load_digits
from madman.model import ModelConfig, ScoringModel
from madman.train import TrainConfig, train

p = argparse.ArgumentParser()
p.add_argument("--n", type=int, default=2000)
p.add_argument("--steps", type=int, default=300)
p.add_argument("--eval-n", type=int, default=200)
args = p.parse_args()

digits = load_digits()
records = generate(IDEAL.replace(n_samples=args.n), digits=digits)
result = train(ModelConfig(vision_patch_size=14), TrainConfig(max_steps=args.steps, log_every=50),
               ArrayDataset.from_records(records), digits=digits, progress=True)
print(f"final loss {result.final_loss:.3f}")

sets = {t: build_eval_set(t, args.eval_n, 0, digits=digits) for t in TABLE_ORDER}
report = evaluate(ScoringModel(result.model), sets)
for a in TABLE_ORDER:
    b = report.binding[a]
    print(f"{a:<10} recognition {b.recognition_accuracy:.3f}  binding % {format_cell(b.binding_accuracy):>8}"
          f"  (unfiltered {format_cell(b.binding_accuracy_unfiltered)})")
