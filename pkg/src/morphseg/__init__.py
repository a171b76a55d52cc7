"""Morphological surface segmentation for minimal-resource languages.

A character-level attention encoder-decoder trained with ADADELTA, plus
multi-task and data-augmentation training corpora, cross-lingual single-model
training, segmentation metrics, and a batch CLI.
"""

import os

# Pin BLAS to one thread before numpy loads anywhere in this package, so that
# repeated runs with identical inputs stay bit-reproducible.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
