"""Tree-ensemble mortality risk prediction on a small AMI cohort.

Submodules follow the processing pipeline: ``datamodel`` parses and
summarizes the cohort, ``preprocess`` encodes fold-local design
matrices, ``cart``/``ensembles``/``linear`` hold the classifiers,
``metrics``/``stats``/``importance`` evaluate them, and ``tuning``
drives the nested cross-validation that ``cli`` exposes.
"""

from ._kernels import ACTIVE_BACKEND

__all__ = ["ACTIVE_BACKEND"]
__version__ = "0.1.0"
