"""Universal adversarial search policies for text classifiers.

A single parametric policy over synonym-replacement perturbations is
trained on a set of texts and then used to attack unseen texts, together
with non-learned search baselines and the evaluation harness that
compares them under identical query accounting.
"""

__version__ = "0.1.0"
