"""Gradient descent over orthogonal matrices stored as Householder products.

The blocked algorithm compacts groups of reflections into WY form so that
multiplying by (and backpropagating through) a chain of ``n`` reflections
takes ``O(n/b + b)`` sequential matrix operations.
"""
from .dense import (
    HouseholderChain,
    as_matrix,
    chain_apply_sequential,
    chain_to_dense,
    householder_apply_left,
    householder_grad,
)
from .errors import (
    DegenerateVectorError,
    DimensionMismatchError,
    HouseholderError,
    NonFiniteError,
    PoleError,
    SingularMatrixError,
)
from .fasth import (
    BackwardResult,
    TapeForward,
    count_sequential_stages,
    fasth_apply,
    fasth_backward,
    fasth_forward,
    tune_block_width,
)
from .matops import (
    apply_cayley,
    apply_exponential,
    apply_inverse,
    apply_pseudo_inverse,
    condition_number,
    frobenius_sq,
    largest_singular_value,
    log_abs_det,
    truncate_rank,
)
from .parallel import StageCounter, get_num_threads, num_threads, set_num_threads
from .reference import dense_parallel_forward, sequential_forward_backward
from .svd import (
    SvdGradients,
    SvdParam,
    clamp_sigma,
    load_svd,
    materialize,
    save_svd,
    svd_backward,
    svd_forward,
    svd_step,
)
from .wy import CompactedChain, WYBlock, compact_chain, wy_apply, wy_apply_transpose, wy_compact

__version__ = "0.1.0"
