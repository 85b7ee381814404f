"""Differentiable sorting networks, top-k losses and split optimizers in NumPy."""
from .diffsort import GroundTruthPermutation, RelaxedSortResult, relaxed_sort, relaxed_swap
from .network import NetworkKind, SortingNetwork, build, hard_sort
from .sigmoid import SigmoidKind, SigmoidSpec
from .topk import TopKConfig, TopKDistribution, topk_loss, topk_loss_grad

__version__ = "0.1.0"
