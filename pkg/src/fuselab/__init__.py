"""fuselab: CNN data-fusion paradigms (early/joint/late) on paired two-modality
image chips, trained from scratch on numpy, with the evaluation mathematics to
pick the best paradigm."""

__version__ = "0.1.0"
