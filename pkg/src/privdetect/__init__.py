"""Fine-grained privacy disclosure detection as multi-label text classification.

A BiLSTM encoder feeds two attention branches (self-attention and
label-attention); a GCN over the label co-occurrence graph produces
per-label compensation coefficients that fuse the branches before a
sigmoid output layer.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
