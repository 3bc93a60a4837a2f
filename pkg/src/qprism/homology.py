"""Exact linear algebra over Z/p^N: Howell forms, kernels, Smith invariant
factors, cohomology of two-term complexes and mapping cones, and the
flattening of W-linear operators to matrices over Z/p^N.

Matrices act on column vectors; a map C0 -> C1 between free modules of
dimensions a and b is a b x a matrix with entries reduced into [0, n).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from math import gcd

import numpy as np

from .base_ring import RingContext, WScalar
from .errors import InvalidArgs, NotAChainMap

# int64 products must not overflow: modulus^2 * max_dim < 2^63.
_MAX_MODULUS = 1 << 21


def max_flat_dim() -> int:
    return int(os.environ.get("QPRISM_MAX_DIM", "4096"))


def _check_modulus(n: int):
    if n < 2:
        raise InvalidArgs("modulus must be >= 2")
    if n > _MAX_MODULUS:
        raise InvalidArgs(f"modulus {n} too large for exact int64 arithmetic")


def _as_matrix(mat, n: int) -> np.ndarray:
    a = np.array(mat, dtype=np.int64)
    if a.ndim != 2:
        raise InvalidArgs("expected a 2-D matrix")
    return a % n


# --- scalar helpers over Z/n ------------------------------------------------


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        quo = old_r // r
        old_r, r = r, old_r - quo * r
        old_s, s = s, old_s - quo * s
        old_t, t = t, old_t - quo * t
    return old_r, old_s, old_t


def unit_multiplier(a: int, n: int) -> int:
    """A unit u mod n with u*a = gcd(a, n) mod n."""
    a %= n
    if a == 0:
        return 1
    g = gcd(a, n)
    ap, m = a // g, n // g
    u = pow(ap, -1, m) if m > 1 else 1
    while gcd(u, n) != 1:
        u += m
    return u % n


def annihilator(a: int, n: int) -> int:
    """Generator of {x : x*a = 0 mod n}; 0 when a is a unit."""
    a %= n
    if a == 0:
        return 1
    g = gcd(a, n)
    return 0 if g == 1 else n // g


# --- Howell form ------------------------------------------------------------


def howell_form(mat, n: int) -> np.ndarray:
    """Row-canonical Howell form of the row span of mat over Z/n.

    Every row-span element supported on columns >= c lies in the span of
    the returned rows with pivot column >= c, which makes normal-form
    reduction a membership test.  Annihilator rows of zero-divisor pivots
    are appended to the working matrix and folded in by later columns.
    """
    _check_modulus(n)
    a = _as_matrix(mat, n)
    if a.shape[0] == 0 or not a.any():
        return np.zeros((0, a.shape[1]), dtype=np.int64)
    work = [row.copy() for row in a]
    cols = a.shape[1]
    r = 0
    for c in range(cols):
        pivot = None
        for i in range(r, len(work)):
            if work[i][c]:
                pivot = i
                break
        if pivot is None:
            continue
        if pivot != r:
            work[r], work[pivot] = work[pivot], work[r]
        u = unit_multiplier(int(work[r][c]), n)
        if u != 1:
            work[r] = (work[r] * u) % n
        b = int(work[r][c])
        # eliminate below r with unimodular transforms
        for i in range(r + 1, len(work)):
            v = int(work[i][c])
            if v == 0:
                continue
            if v % b == 0:
                work[i] = (work[i] - (v // b) * work[r]) % n
            else:
                g, s, t = _xgcd(b, v)
                row_r = (s * work[r] + t * work[i]) % n
                row_i = ((-(v // g)) * work[r] + (b // g) * work[i]) % n
                work[r], work[i] = row_r, row_i
                u = unit_multiplier(int(work[r][c]), n)
                if u != 1:
                    work[r] = (work[r] * u) % n
                b = int(work[r][c])
        # reduce entries above r modulo the pivot
        for i in range(r):
            v = int(work[i][c])
            if v >= b:
                work[i] = (work[i] - (v // b) * work[r]) % n
        ann = annihilator(b, n)
        if ann:
            extra = (work[r] * ann) % n
            if extra.any():
                work.append(extra)
        r += 1
    kept = [row for row in work if row.any()]
    if not kept:
        return np.zeros((0, cols), dtype=np.int64)
    return _sorted_rows(np.array(kept, dtype=np.int64))


def _sorted_rows(mat: np.ndarray) -> np.ndarray:
    def pivot(row) -> int:
        nz = np.nonzero(row)[0]
        return int(nz[0]) if len(nz) else row.shape[0]

    order = sorted(range(mat.shape[0]), key=lambda i: pivot(mat[i]))
    return mat[order]


def reduce_against(vec: np.ndarray, howell: np.ndarray, n: int) -> np.ndarray:
    """Normal form of vec modulo the row span of a Howell-form matrix."""
    v = np.array(vec, dtype=np.int64) % n
    for row in howell:
        nz = np.nonzero(row)[0]
        if len(nz) == 0:
            continue
        c = int(nz[0])
        b = int(row[c])
        if v[c] % b == 0:
            v = (v - (int(v[c]) // b) * row) % n
    return v


def row_span_member(vec, mat, n: int) -> bool:
    return not reduce_against(np.asarray(vec), howell_form(mat, n), n).any()


def left_kernel_basis(mat, n: int) -> np.ndarray:
    """Rows spanning {v : v @ mat = 0} over Z/n."""
    _check_modulus(n)
    a = _as_matrix(mat, n)
    rows = a.shape[0]
    aug = np.hstack([a, np.eye(rows, dtype=np.int64)])
    h = howell_form(aug, n)
    mask = ~h[:, : a.shape[1]].any(axis=1) if h.shape[0] else np.array([], bool)
    kern = h[mask][:, a.shape[1]:] if h.shape[0] else np.zeros((0, rows), np.int64)
    kern = kern[kern.any(axis=1)]
    return kern


def right_kernel_basis(mat, n: int) -> np.ndarray:
    """Rows spanning {v : mat @ v = 0} over Z/n."""
    return left_kernel_basis(_as_matrix(mat, n).T, n)


@dataclass
class HowellResult:
    howell_basis: np.ndarray
    kernel_basis: np.ndarray


def howell_reduce(mat, n: int) -> HowellResult:
    """Howell form of the row span plus a spanning set of the right kernel."""
    return HowellResult(howell_form(mat, n), right_kernel_basis(mat, n))


# --- Smith invariant factors over Z/p^N --------------------------------------


def _valuation(a: int, p: int, N: int) -> int:
    if a == 0:
        return N
    v = 0
    while a % p == 0:
        a //= p
        v += 1
    return v


def smith_exponents(mat, p: int, N: int) -> list[int]:
    """p-adic valuations of the Smith diagonal over Z/p^N.

    One entry per diagonal position up to min(rows, cols); positions the
    reduction never reaches carry valuation N.  Pivots are chosen with
    minimal valuation, ties broken by least row then least column.
    """
    n = p**N
    _check_modulus(n)
    work = _as_matrix(mat, n)
    out: list[int] = []
    size = min(work.shape)
    for _ in range(size):
        rows, cols = work.shape
        best = None
        best_v = N
        for i in range(rows):
            for j in range(cols):
                if work[i, j]:
                    v = _valuation(int(work[i, j]), p, N)
                    if v < best_v:
                        best_v = v
                        best = (i, j)
                        if v == 0:
                            break
            if best is not None and best_v == 0:
                break
        if best is None:
            out.extend([N] * (size - len(out)))
            break
        i0, j0 = best
        if i0 != 0:
            work[[0, i0]] = work[[i0, 0]]
        if j0 != 0:
            work[:, [0, j0]] = work[:, [j0, 0]]
        pv = p**best_v
        u = unit_multiplier(int(work[0, 0]), n)
        work[0] = (work[0] * u) % n
        for i in range(1, rows):
            v = int(work[i, 0])
            if v:
                work[i] = (work[i] - (v // pv) * work[0]) % n
        for j in range(1, cols):
            v = int(work[0, j])
            if v:
                work[:, j] = (work[:, j] - (v // pv) * work[:, 0]) % n
        out.append(best_v)
        work = work[1:, 1:]
    return out


def span_exponents(gen_rows, p: int, N: int) -> list[int]:
    """Cyclic orders (as exponents e, factor Z/p^e) of the module the rows
    generate inside a free Z/p^N-module."""
    g = np.asarray(gen_rows, dtype=np.int64)
    if g.size == 0:
        return []
    return sorted(N - v for v in smith_exponents(g, p, N) if v < N)


def cokernel_exponents(mat, p: int, N: int, target_dim: int | None = None) -> list[int]:
    """Cyclic orders of target / column-span for a map given by mat."""
    a = _as_matrix(mat, p**N)
    rows = a.shape[0] if target_dim is None else target_dim
    s = smith_exponents(a, p, N) if a.size else []
    exps = [v for v in s if v > 0]
    exps += [N] * (rows - len(s))
    return sorted(exps)


# --- complexes ----------------------------------------------------------------


@dataclass
class FlatMatrix:
    """Matrix over Z/p^N acting on column vectors."""

    p: int
    n_prec: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries = _as_matrix(self.entries, self.modulus)

    @property
    def modulus(self) -> int:
        return self.p**self.n_prec

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    def matmul(self, other: FlatMatrix) -> FlatMatrix:
        if (self.p, self.n_prec) != (other.p, other.n_prec):
            raise InvalidArgs("mixed moduli")
        if self.cols != other.rows:
            raise InvalidArgs("shape mismatch")
        return FlatMatrix(self.p, self.n_prec, (self.entries @ other.entries) % self.modulus)

    def __eq__(self, other):
        return (
            isinstance(other, FlatMatrix)
            and (self.p, self.n_prec) == (other.p, other.n_prec)
            and self.entries.shape == other.entries.shape
            and bool((self.entries == other.entries).all())
        )

    @classmethod
    def identity(cls, p: int, n_prec: int, dim: int) -> FlatMatrix:
        return cls(p, n_prec, np.eye(dim, dtype=np.int64))

    @classmethod
    def zeros(cls, p: int, n_prec: int, rows: int, cols: int) -> FlatMatrix:
        return cls(p, n_prec, np.zeros((rows, cols), dtype=np.int64))


@dataclass
class TwoTermComplex:
    d0: FlatMatrix


@dataclass
class CohomologyReport:
    h0_invariant_factors: list[int]
    h1_invariant_factors: list[int]
    h0_log_cardinality: int
    h1_log_cardinality: int

    def to_json(self) -> dict:
        return {
            "h0": list(self.h0_invariant_factors),
            "h1": list(self.h1_invariant_factors),
        }


def kernel_log_cardinality(mat: FlatMatrix) -> int:
    """log_p of |{v : mat v = 0}| via the Howell right kernel."""
    k = right_kernel_basis(mat.entries, mat.modulus)
    return sum(span_exponents(k, mat.p, mat.n_prec))


def kernel_log_cardinality_smith(mat: FlatMatrix) -> int:
    """Same count through the Smith route: |ker| = |dom| / |im|."""
    s = smith_exponents(mat.entries, mat.p, mat.n_prec) if mat.entries.size else []
    im = sum(mat.n_prec - v for v in s if v < mat.n_prec)
    return mat.n_prec * mat.cols - im


def cohomology_of_complex(c: TwoTermComplex) -> CohomologyReport:
    """Kernel and cokernel of d0 decomposed into invariant factors."""
    d0 = c.d0
    p, N = d0.p, d0.n_prec
    kern = right_kernel_basis(d0.entries, d0.modulus)
    h0 = span_exponents(kern, p, N)
    h1 = cokernel_exponents(d0.entries, p, N, target_dim=d0.rows)
    return CohomologyReport(h0, h1, sum(h0), sum(h1))


def is_chain_map(d0: FlatMatrix, d0p: FlatMatrix, f0: FlatMatrix, f1: FlatMatrix) -> bool:
    return f1.matmul(d0) == d0p.matmul(f0)


def cone_acyclic(
    d0: FlatMatrix, d0p: FlatMatrix, f0: FlatMatrix, f1: FlatMatrix
) -> bool:
    """True iff the mapping cone of (f0, f1) : [d0] -> [d0p] is acyclic.

    The cone is C0 -> C1 + C'0 -> C'1 with differentials (d0, -f0) and
    (f1 | d0p); acyclicity is decided by exact cardinality bookkeeping:
    |ker| at each spot must match |image| of the previous map.
    """
    if not is_chain_map(d0, d0p, f0, f1):
        raise NotAChainMap("f1 d0 != d0' f0")
    p, N = d0.p, d0.n_prec
    delta0 = FlatMatrix(
        p, N, np.vstack([d0.entries, (-f0.entries) % d0.modulus])
    )
    delta1 = FlatMatrix(p, N, np.hstack([f1.entries, d0p.entries]))
    k0 = kernel_log_cardinality(delta0)
    if k0 != 0:
        return False
    k1 = kernel_log_cardinality(delta1)
    dim_c0 = d0.cols
    dim_mid = delta1.cols
    dim_end = delta1.rows
    im0 = N * dim_c0 - k0
    if k1 != im0:
        return False
    im1 = N * dim_mid - k1
    return im1 == N * dim_end


def cone_acyclic_smith(
    d0: FlatMatrix, d0p: FlatMatrix, f0: FlatMatrix, f1: FlatMatrix
) -> bool:
    """Independent route for the same verdict, via Smith cardinalities."""
    if not is_chain_map(d0, d0p, f0, f1):
        raise NotAChainMap("f1 d0 != d0' f0")
    p, N = d0.p, d0.n_prec
    delta0 = FlatMatrix(p, N, np.vstack([d0.entries, (-f0.entries) % d0.modulus]))
    delta1 = FlatMatrix(p, N, np.hstack([f1.entries, d0p.entries]))
    k0 = kernel_log_cardinality_smith(delta0)
    k1 = kernel_log_cardinality_smith(delta1)
    if k0 != 0:
        return False
    if k1 != N * d0.cols:
        return False
    return N * delta1.cols - k1 == N * delta1.rows


# --- flattening W-linear operators -------------------------------------------


def w_mult_block(w: WScalar) -> np.ndarray:
    """Matrix of multiplication by w on the Z/p^N-basis {t^i} of W."""
    m = w.ctx.m_prec
    block = np.zeros((m, m), dtype=np.int64)
    for i, c in enumerate(w.coeffs):
        for j in range(m - i):
            block[i + j, j] = c
    return block


def flat_dim(ctx: RingContext, rank: int, window: int) -> int:
    return rank * (window + 1) * ctx.m_prec


def flatten_sections(ctx: RingContext, rank: int, window: int, sections) -> np.ndarray:
    """Column vector of a section list (rank QPolynomials) in the basis
    e_j x^d t^i, index ((j*(window+1)) + d)*m_prec + i."""
    dim = flat_dim(ctx, rank, window)
    out = np.zeros(dim, dtype=np.int64)
    for j, poly in enumerate(sections):
        for d, w in poly.coeffs.items():
            if d > window:
                raise InvalidArgs("section escapes the degree window")
            base = (j * (window + 1) + d) * ctx.m_prec
            for i, c in enumerate(w.coeffs):
                out[base + i] = c
    return out


def flatten_operator(
    ctx: RingContext,
    rank_in: int,
    window_in: int,
    rank_out: int,
    window_out: int,
    apply_fn,
) -> FlatMatrix:
    """Flatten a W-linear operator on windowed section vectors.

    apply_fn maps a basis section (component j, degree d) to the list of
    rank_out output QPolynomials.  W-linearity lets every t^i copy share
    one application through multiplication blocks.
    """
    from .twisted_calculus import QPolynomial

    dim_in = flat_dim(ctx, rank_in, window_in)
    dim_out = flat_dim(ctx, rank_out, window_out)
    if max(dim_in, dim_out) > max_flat_dim():
        raise InvalidArgs(
            f"flattened dimension exceeds QPRISM_MAX_DIM={max_flat_dim()}"
        )
    mat = np.zeros((dim_out, dim_in), dtype=np.int64)
    m = ctx.m_prec
    for j in range(rank_in):
        for d in range(window_in + 1):
            out_sections = apply_fn(j, d)
            col0 = (j * (window_in + 1) + d) * m
            for i, poly in enumerate(out_sections):
                if not isinstance(poly, QPolynomial):
                    raise InvalidArgs("apply_fn must return QPolynomial sections")
                for dd, w in poly.coeffs.items():
                    if dd > window_out:
                        raise InvalidArgs("operator escapes the output window")
                    row0 = (i * (window_out + 1) + dd) * m
                    mat[row0 : row0 + m, col0 : col0 + m] = (
                        mat[row0 : row0 + m, col0 : col0 + m] + w_mult_block(w)
                    ) % ctx.pn
    return FlatMatrix(ctx.p, ctx.n_prec, mat)


def flatten_z_linear(
    ctx: RingContext,
    rank_in: int,
    window_in: int,
    rank_out: int,
    window_out: int,
    apply_fn,
) -> FlatMatrix:
    """Flatten a map that is only Z/p^N-linear (e.g. Frobenius-semilinear).

    apply_fn maps each full basis element (component j, degree d, t-power i)
    to a list of rank_out output QPolynomials.
    """
    dim_in = flat_dim(ctx, rank_in, window_in)
    dim_out = flat_dim(ctx, rank_out, window_out)
    if max(dim_in, dim_out) > max_flat_dim():
        raise InvalidArgs(
            f"flattened dimension exceeds QPRISM_MAX_DIM={max_flat_dim()}"
        )
    mat = np.zeros((dim_out, dim_in), dtype=np.int64)
    m = ctx.m_prec
    for j in range(rank_in):
        for d in range(window_in + 1):
            for i in range(m):
                out_sections = apply_fn(j, d, i)
                col = (j * (window_in + 1) + d) * m + i
                for comp, poly in enumerate(out_sections):
                    for dd, w in poly.coeffs.items():
                        if dd > window_out:
                            raise InvalidArgs("operator escapes the output window")
                        row0 = (comp * (window_out + 1) + dd) * m
                        for ii, c in enumerate(w.coeffs):
                            mat[row0 + ii, col] = (mat[row0 + ii, col] + c) % ctx.pn
    return FlatMatrix(ctx.p, ctx.n_prec, mat)
