"""Binding accuracy of hand-written scorers on an exhaustive two-object world.

A scorer that keeps each object's attributes together gets every swap right.
One that pools all concepts into a bag sees no difference between a caption
and its swap.
"""
from madman.evaluate import binding_accuracy, recognition_accuracy
from madman.oracles import BagOfWordsScorer, CompositionalScorer, RandomScorer, micro_world

records, reader = micro_world()
print(f"{len(records)} scenes")
for scorer in (CompositionalScorer(reader), BagOfWordsScorer(reader), RandomScorer(0)):
    recog = recognition_accuracy(scorer, records, "color")
    res = binding_accuracy(scorer, records, "color", recog)
    print(f"{type(scorer).__name__:<20} recognition {res.recognition_accuracy:.3f}"
          f"  binding {res.binding_accuracy_unfiltered:.3f}")
