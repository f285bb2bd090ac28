"""Progressive multi-task toolkit for blind image quality assessment.

Training couples a quality-score regression task with an easier
quality-level classification task whose loss weight decays over training,
on top of multi-scale backbone features. Evaluation covers within-dataset,
cross-database, and ablation protocols with SRCC/PLCC reporting.
"""

__version__ = "0.1.0"
