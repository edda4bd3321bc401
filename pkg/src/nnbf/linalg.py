"""Dense complex linear algebra used by the baseline beamformers.

Matrices are plain ``numpy`` complex128 arrays. Every routine accepts either a
single matrix of shape ``(r, c)`` or a stack of shape ``(..., r, c)`` and
operates on the trailing two axes, so that per-subcarrier baselines can be
computed for a whole batch in one call.
"""

import numpy as np

SINGULAR_RTOL = 1e-12


class ShapeError(ValueError):
    """Raised when matrix dimensions are incompatible."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an LU pivot falls below the singularity tolerance."""


def as_complex_matrix(a):
    """Return ``a`` as a complex128 array with at least two dimensions.

    Raises ``ValueError`` if any entry is NaN or infinite.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def matmul(a, b):
    """Complex matrix product ``a @ b`` over the trailing two axes."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitian(a):
    """Conjugate transpose over the trailing two axes."""
    a = np.asarray(a, dtype=np.complex128)
    return np.conj(np.swapaxes(a, -1, -2))


def lu_factor(a):
    """Partial-pivot LU factorization of a stack of square matrices.

    Returns ``(lu, perm, ok)``. ``lu`` stores the unit-lower factor below the
    diagonal and the upper factor on and above it; ``perm[..., i]`` is the
    original row placed at position ``i``; ``ok`` flags the matrices whose
    pivots all stayed above ``SINGULAR_RTOL`` times the largest row norm.
    Singular matrices are still factored (with a unit pivot substituted) so
    that the rest of the stack is unaffected.
    """
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    if a.ndim < 2 or a.shape[-2] != n:
        raise ShapeError(f"LU needs square matrices, got {a.shape}")
    batch_shape = a.shape[:-2]
    lu = a.reshape(-1, n, n).copy()
    count = lu.shape[0]
    idx = np.arange(count)
    perm = np.tile(np.arange(n), (count, 1))
    ok = np.ones(count, dtype=bool)
    scale = np.linalg.norm(lu, axis=-1).max(axis=-1)
    tol = SINGULAR_RTOL * np.where(scale > 0, scale, 1.0)

    for j in range(n):
        p = j + np.argmax(np.abs(lu[:, j:, j]), axis=-1)
        swap = p != j
        if np.any(swap):
            rows_j = lu[idx, j].copy()
            lu[idx, j] = lu[idx, p]
            lu[idx, p] = rows_j
            perm_j = perm[idx, j].copy()
            perm[idx, j] = perm[idx, p]
            perm[idx, p] = perm_j
        pivot = lu[:, j, j]
        bad = np.abs(pivot) < tol
        if np.any(bad):
            ok &= ~bad
            lu[bad, j, j] = 1.0
            pivot = lu[:, j, j]
        if j + 1 < n:
            lu[:, j + 1:, j] /= pivot[:, None]
            lu[:, j + 1:, j + 1:] -= lu[:, j + 1:, j, None] * lu[:, None, j, j + 1:]

    return (lu.reshape(a.shape), perm.reshape(batch_shape + (n,)),
            ok.reshape(batch_shape))


def lu_solve(lu, perm, b):
    """Solve ``A x = b`` for every matrix in the stack given its LU factors."""
    n = lu.shape[-1]
    lu2 = lu.reshape(-1, n, n)
    b = np.asarray(b, dtype=np.complex128)
    b2 = np.broadcast_to(b, lu.shape[:-2] + b.shape[-2:]).reshape(lu2.shape[0], n, -1)
    perm2 = perm.reshape(-1, n)
    x = np.take_along_axis(b2, perm2[:, :, None], axis=1).copy()
    # forward substitution, unit lower factor
    for i in range(1, n):
        x[:, i] -= np.einsum("bj,bjc->bc", lu2[:, i, :i], x[:, :i])
    # back substitution
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[:, i] -= np.einsum("bj,bjc->bc", lu2[:, i, i + 1:], x[:, i + 1:])
        x[:, i] /= lu2[:, i, i, None]
    return x.reshape(lu.shape[:-2] + (n, x.shape[-1]))


def lu_inverse_masked(a):
    """Invert a stack of square matrices, reporting singular members.

    Returns ``(inverse, ok)``; entries of ``inverse`` where ``ok`` is False
    are meaningless.
    """
    lu, perm, ok = lu_factor(a)
    n = lu.shape[-1]
    return lu_solve(lu, perm, np.eye(n, dtype=np.complex128)), ok


def lu_inverse(a):
    """Inverse of a square matrix (or stack) by partial-pivot LU.

    Raises ``SingularMatrixError`` if any matrix has a pivot below
    ``1e-12`` times its largest row norm.
    """
    inv, ok = lu_inverse_masked(a)
    if not np.all(ok):
        raise SingularMatrixError(
            f"{np.size(ok) - np.count_nonzero(ok)} singular matrix(es) in stack")
    return inv


def regularized_left_pinv_masked(h, diag_load=0.0):
    """``(H^H H + d I)^{-1} H^H`` over a stack, with a singularity mask.

    ``diag_load`` may be a scalar or an array broadcastable to the stack shape.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim < 2:
        raise ShapeError(f"expected a matrix, got shape {h.shape}")
    rows, cols = h.shape[-2:]
    hh = hermitian(h)
    gram = hh @ h
    load = np.asarray(diag_load, dtype=np.float64)
    if np.any(load != 0):
        gram = gram + load[..., None, None] * np.eye(cols)
    inv, ok = lu_inverse_masked(gram)
    return inv @ hh, ok


def left_pinv(h):
    """Left pseudo-inverse ``(H^H H)^{-1} H^H`` of a tall full-column-rank matrix."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim < 2:
        raise ShapeError(f"expected a matrix, got shape {h.shape}")
    if h.shape[-2] < h.shape[-1]:
        raise ShapeError(f"left pseudo-inverse needs rows >= cols, got {h.shape}")
    w, ok = regularized_left_pinv_masked(h)
    if not np.all(ok):
        raise SingularMatrixError("H^H H is singular; H is not full column rank")
    return w
