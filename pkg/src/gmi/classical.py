"""Mean-square optimal interpolation with exactly known spectral densities.

Pipeline: lift periodic scalar problems to vector form, transform the target
weights, assemble the block Fourier matrices of the projection equations,
solve for the polynomial coefficients c, evaluate the spectral characteristic
h on the grid, and compute the error by two independent routes (a quadratic
form in the solved system, and direct quadrature of the error spectra).

Row/column convention: the projection equations are naturally row-vector
equations; the stacked linear system stores their transposes, so the P and T
kernels are transposed at block placement.  P stays Hermitian.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import MseInconsistencyError, NumericalError, ValidationError
from .increments import GMIncrementSpec, expand_operator, inverse_series
from .spectra import (
    DensityGrid,
    FrequencyGrid,
    MinimalityReport,
    _chi_beta,
    combine,
    inverse_density,
    minimality_value,
)

CONDITION_WARN_THRESHOLD = 1e12
MSE_CONSISTENCY_RTOL = 1e-6


@dataclass(frozen=True)
class FunctionalSpec:
    """Target functional sum_k a(k)^T xi(k) over the unobserved block 0..N."""

    N: int
    a: np.ndarray  # (N+1, T)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", a)
        if self.N < 0 or a.shape[0] != self.N + 1:
            raise ValidationError("weight list must have N+1 entries")

    @property
    def dim(self) -> int:
        return self.a.shape[1]


@dataclass(frozen=True)
class PeriodicFunctionalSpec:
    """Scalar functional sum_{k=0}^{M} a_scalar(k) theta(k) with period T."""

    M: int
    T: int
    a_scalar: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_scalar, dtype=float).reshape(-1)
        object.__setattr__(self, "a_scalar", a)
        if self.M < 0 or self.T < 1:
            raise ValidationError("require M >= 0 and T >= 1")
        if a.shape[0] != self.M + 1:
            raise ValidationError("scalar weights must have M+1 entries")


def lift_periodic(p: PeriodicFunctionalSpec) -> FunctionalSpec:
    """Block a scalar periodic problem into vector weights (zero-padded tail)."""
    N = p.M // p.T
    a = np.zeros((N + 1, p.T))
    for k in range(p.M + 1):
        a[k // p.T, k % p.T] = p.a_scalar[k]
    return FunctionalSpec(N=N, a=a)


def transform_b(spec: GMIncrementSpec, fspec: FunctionalSpec) -> np.ndarray:
    """Differenced-target weights b(k) = sum_{m>=k} d_mu(m-k) a(m)."""
    d_mu = inverse_series(spec, fspec.N).astype(float)
    N = fspec.N
    b = np.zeros_like(fspec.a)
    for k in range(N + 1):
        b[k] = d_mu[: N - k + 1] @ fspec.a[k:]
    return b


def coeffs_a_mu(spec: GMIncrementSpec, fspec: FunctionalSpec) -> np.ndarray:
    """Shifted convolution of the weights with the reversed operator expansion.

    a_minus(m) = sum_{l=max(m,0)}^{min(m+n_gamma, N)} e(l-m) a(l) for
    m = -n_gamma .. N, returned shifted to indices 0 .. N+n_gamma.
    """
    e = expand_operator(spec).astype(float)
    ng = spec.n_gamma()
    N = fspec.N
    out = np.zeros((N + ng + 1, fspec.dim))
    for m in range(-ng, N + 1):
        lo, hi = max(m, 0), min(m + ng, N)
        for l in range(lo, hi + 1):
            out[m + ng] += e[l - m] * fspec.a[l]
    return out


def v_coeffs(spec: GMIncrementSpec, b: np.ndarray) -> np.ndarray:
    """Initial-value weights v(k) = sum_{l=0}^{min(N, k+n_gamma)} e(l-k) b(l).

    Row i of the result is v(-(i+1)), i.e. ordered k = -1, -2, ..., -n_gamma.
    """
    e = expand_operator(spec).astype(float)
    ng = spec.n_gamma()
    N = b.shape[0] - 1
    v = np.zeros((ng, b.shape[1]))
    for i in range(ng):
        k = -(i + 1)
        hi = min(N, k + ng)
        for l in range(0, hi + 1):
            v[i] += e[l - k] * b[l]
    return v


@dataclass
class FourierBlocks:
    """Stacked block matrices of the projection equations."""

    P: np.ndarray  # ((N+ng+1)T, (N+ng+1)T) Hermitian
    T: np.ndarray  # ((N+ng+1)T, (N+ng+1)T)
    Q: np.ndarray  # ((N+1)T, (N+1)T) Hermitian
    N: int
    n_gamma: int
    dim: int


def _block_toeplitz(coeffs: np.ndarray, size: int, dim: int, index) -> np.ndarray:
    """Assemble a (size*dim)^2 matrix from per-offset T x T blocks.

    ``coeffs`` maps offsets -(size-1)..(size-1) (offset m at position
    m + size - 1); ``index(j, k)`` gives the offset used for block (j, k).
    """
    out = np.empty((size * dim, size * dim), dtype=complex)
    for j in range(size):
        for k in range(size):
            blk = coeffs[index(j, k) + size - 1]
            out[j * dim:(j + 1) * dim, k * dim:(k + 1) * dim] = blk
    return out


def fourier_blocks(
    spec: GMIncrementSpec, f: DensityGrid, g: DensityGrid, N: int
) -> FourierBlocks:
    """Fourier-coefficient block matrices P, T, Q of the linear system.

    Kernels (before the row-to-column transpose):
        P: (|beta|^2 / |chi|^2) p^{-1}
        T: (-1)^{sum d} (|beta|^2 / |chi|^2) g p^{-1}
        Q: f p^{-1} g
    Each is sampled nodewise and transformed once; blocks depend on the
    index offset only.
    """
    grid = f.grid
    ng = spec.n_gamma()
    dim = f.dim
    size = N + ng + 1
    p = combine(f, g, spec)
    p_inv = inverse_density(p)
    chi, beta = _chi_beta(spec.s, spec.mu, spec.d, grid.nodes)
    w = np.abs(beta) ** 2 / np.abs(chi) ** 2

    k_p = w[:, None, None] * p_inv
    sign = -1.0 if spec.total_order() % 2 else 1.0
    k_t = sign * w[:, None, None] * (g.values @ p_inv)
    k_q = f.values @ p_inv @ g.values

    for name, kern in (("P", k_p), ("T", k_t), ("Q", k_q)):
        if not np.all(np.isfinite(kern)):
            bad = int(np.argwhere(~np.isfinite(kern))[0][0])
            raise NumericalError(
                f"non-finite {name} integrand at node {bad} (lambda={grid.nodes[bad]:.6f})"
            )

    offsets = np.arange(-(size - 1), size)
    p_coeffs = grid.fourier(k_p, offsets).transpose(0, 2, 1)
    t_coeffs = grid.fourier(k_t, offsets).transpose(0, 2, 1)
    q_off = np.arange(-N, N + 1)
    q_coeffs = grid.fourier(k_q, q_off)

    P = _block_toeplitz(p_coeffs, size, dim, lambda j, k: k - j)
    T = _block_toeplitz(t_coeffs, size, dim, lambda j, k: k - j)
    q_full = np.zeros((2 * (N + 1) - 1, dim, dim), dtype=complex)
    q_full[(N + 1 - 1) + q_off - 0] = q_coeffs  # offsets -N..N at positions 0..2N
    Q = _block_toeplitz(q_full, N + 1, dim, lambda j, k: j - k)
    return FourierBlocks(P=P, T=T, Q=Q, N=N, n_gamma=ng, dim=dim)


def padded_b(b: np.ndarray, n_gamma: int) -> np.ndarray:
    """b extended by n_gamma zero vectors, flattened for the stacked system."""
    dim = b.shape[1]
    out = np.zeros(((b.shape[0] + n_gamma) * dim,), dtype=complex)
    out[: b.size] = b.reshape(-1)
    return out


@dataclass
class SystemSolution:
    c: np.ndarray          # (N+ng+1, T)
    rhs: np.ndarray        # stacked right-hand side
    condition_number: float
    residual: float


def solve_system(blocks: FourierBlocks, b: np.ndarray, a_mu: np.ndarray) -> SystemSolution:
    """Solve P c = [b]_+ - T a_mu; reports conditioning and residual."""
    rhs = padded_b(b, blocks.n_gamma) - blocks.T @ a_mu.reshape(-1).astype(complex)
    cond = float(np.linalg.cond(blocks.P))
    if not np.isfinite(cond):
        raise NumericalError("singular projection matrix P")
    if cond > CONDITION_WARN_THRESHOLD:
        warnings.warn(
            f"projection matrix condition number {cond:.3e} exceeds 1e12",
            RuntimeWarning,
            stacklevel=2,
        )
    try:
        c_flat = np.linalg.solve(blocks.P, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular projection matrix P") from exc
    residual = float(np.linalg.norm(blocks.P @ c_flat - rhs))
    size = blocks.N + blocks.n_gamma + 1
    return SystemSolution(
        c=c_flat.reshape(size, blocks.dim),
        rhs=rhs,
        condition_number=cond,
        residual=residual,
    )


def _row_polynomial(coeffs: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Evaluate sum_k coeffs[k] e^{i k lambda} on the nodes -> (n, T)."""
    K = coeffs.shape[0]
    phases = np.exp(1j * np.outer(nodes, np.arange(K)))
    return phases @ coeffs.astype(complex)


def spectral_characteristic(
    spec: GMIncrementSpec,
    f: DensityGrid,
    g: DensityGrid,
    c: np.ndarray,
    fspec: FunctionalSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Frequency response h of the optimal estimate, with its two-part split.

    h^T = B^T chi/beta - A^T g conj(beta) p^{-1}
          - C^T (conj(beta)/conj(chi)) p^{-1}

    Returns (h, h1, h2) with h = h1 - h2 nodewise; h1 carries the
    differenced-target part, h2 the noise part, each with its share of the
    C-term (split through c = c1 - c2 with c1 = P^{-1}[b]_+).
    """
    grid = f.grid
    nodes = grid.nodes
    chi, beta = _chi_beta(spec.s, spec.mu, spec.d, nodes)
    p = combine(f, g, spec)
    p_inv = inverse_density(p)

    b = transform_b(spec, fspec)
    a_mu = coeffs_a_mu(spec, fspec)
    blocks = fourier_blocks(spec, f, g, fspec.N)
    size = blocks.N + blocks.n_gamma + 1
    c1 = np.linalg.solve(blocks.P, padded_b(b, blocks.n_gamma)).reshape(size, blocks.dim)
    c2 = np.linalg.solve(blocks.P, blocks.T @ a_mu.reshape(-1).astype(complex))
    c2 = c2.reshape(size, blocks.dim)

    A_row = _row_polynomial(fspec.a, nodes)
    B_row = _row_polynomial(b, nodes)

    def c_term(cc: np.ndarray) -> np.ndarray:
        C_row = _row_polynomial(np.asarray(cc), nodes)
        out = np.einsum("nt,nts->ns", C_row, p_inv)
        return out * (np.conj(beta) / np.conj(chi))[:, None]

    noise_term = np.einsum("nt,nts->ns", A_row, g.values @ p_inv) * np.conj(beta)[:, None]
    target_term = B_row * (chi / beta)[:, None]

    h1 = target_term - c_term(c1)
    h2 = noise_term - c_term(c2)
    h = target_term - noise_term - c_term(np.asarray(c))
    return h, h1, h2


def mse_of_characteristic(
    spec: GMIncrementSpec,
    f: DensityGrid,
    g: DensityGrid,
    fspec: FunctionalSpec,
    h: np.ndarray,
) -> float:
    """Error energy of an arbitrary frequency response h against (f, g).

    (1/2pi) int r_f f r_f^H + (1/2pi) int r_g g r_g^H with
    r_f = B^T chi/beta - h^T and r_g = B^T chi - A^T - beta h^T.
    Linear in (f, g); h = 0 gives the raw variance of the target.
    """
    grid = f.grid
    nodes = grid.nodes
    chi, beta = _chi_beta(spec.s, spec.mu, spec.d, nodes)
    b = transform_b(spec, fspec)
    A_row = _row_polynomial(fspec.a, nodes)
    B_row = _row_polynomial(b, nodes)
    h = np.asarray(h, dtype=complex)

    r_f = B_row * (chi / beta)[:, None] - h
    r_g = B_row * chi[:, None] - A_row - beta[:, None] * h
    term_f = np.einsum("nt,nts,ns->n", r_f, f.values, np.conj(r_f))
    term_g = np.einsum("nt,nts,ns->n", r_g, g.values, np.conj(r_g))
    total = np.mean(term_f + term_g)
    if abs(total.imag) > 1e-8 * max(1.0, abs(total.real)):
        raise NumericalError(f"error energy has non-negligible imaginary part {total.imag:.3e}")
    return float(total.real)


@dataclass
class MseReport:
    algebraic: float
    spectral: float

    @property
    def difference(self) -> float:
        return abs(self.algebraic - self.spectral)


def mse_value(
    spec: GMIncrementSpec,
    f: DensityGrid,
    g: DensityGrid,
    fspec: FunctionalSpec,
    c: np.ndarray,
) -> MseReport:
    """Interpolation error by the algebraic and the spectral route.

    Algebraic: <rhs, c> + <Q a, a> from the solved system.  Spectral:
    quadrature of the error spectra with h rebuilt from c.  Raises if the
    two disagree beyond 1e-6 relative.
    """
    b = transform_b(spec, fspec)
    a_mu = coeffs_a_mu(spec, fspec)
    blocks = fourier_blocks(spec, f, g, fspec.N)
    rhs = padded_b(b, blocks.n_gamma) - blocks.T @ a_mu.reshape(-1).astype(complex)
    a_flat = fspec.a.reshape(-1).astype(complex)
    algebraic = float((np.vdot(c.reshape(-1).astype(complex), rhs)
                       + np.vdot(a_flat, blocks.Q @ a_flat)).real)
    h, _, _ = spectral_characteristic(spec, f, g, c, fspec)
    spectral = mse_of_characteristic(spec, f, g, fspec, h)
    report = MseReport(algebraic=algebraic, spectral=spectral)
    scale = max(abs(algebraic), abs(spectral), 1e-300)
    if report.difference > MSE_CONSISTENCY_RTOL * scale and report.difference > 1e-12:
        raise MseInconsistencyError(
            f"MSE routes disagree: algebraic {algebraic!r} vs spectral {spectral!r}"
        )
    return report


@dataclass
class InterpolationSolution:
    """Everything the exact interpolation produces for one problem."""

    spec: GMIncrementSpec
    fspec: FunctionalSpec
    c: np.ndarray                 # (N+ng+1, T)
    v: np.ndarray                 # (ng, T), rows are k = -1 .. -ng
    h: np.ndarray                 # (n_grid, T)
    h1: np.ndarray
    h2: np.ndarray
    delta: float
    delta_spectral: float
    b: np.ndarray                 # (N+1, T)
    a_mu: np.ndarray              # (N+ng+1, T)
    condition_number: float
    residual: float
    minimality: MinimalityReport
    grid: FrequencyGrid = field(repr=False, default=None)


def solve_interpolation(
    spec: GMIncrementSpec,
    f: DensityGrid,
    g: DensityGrid,
    fspec: FunctionalSpec,
) -> InterpolationSolution:
    """Run the full pipeline for known densities (f, g)."""
    if f.dim != fspec.dim:
        raise ValidationError("functional dimension does not match the densities")
    minimality = minimality_value(spec, f, g)
    b = transform_b(spec, fspec)
    a_mu = coeffs_a_mu(spec, fspec)
    blocks = fourier_blocks(spec, f, g, fspec.N)
    sol = solve_system(blocks, b, a_mu)
    h, h1, h2 = spectral_characteristic(spec, f, g, sol.c, fspec)
    a_flat = fspec.a.reshape(-1).astype(complex)
    delta_alg = float((np.vdot(sol.c.reshape(-1).astype(complex), sol.rhs)
                       + np.vdot(a_flat, blocks.Q @ a_flat)).real)
    delta_spec = mse_of_characteristic(spec, f, g, fspec, h)
    scale = max(abs(delta_alg), abs(delta_spec), 1e-300)
    if abs(delta_alg - delta_spec) > MSE_CONSISTENCY_RTOL * scale and \
            abs(delta_alg - delta_spec) > 1e-12:
        raise MseInconsistencyError(
            f"MSE routes disagree: algebraic {delta_alg!r} vs spectral {delta_spec!r}"
        )
    if delta_alg < -1e-10 * scale:
        raise NumericalError(f"negative interpolation error {delta_alg!r}")
    return InterpolationSolution(
        spec=spec,
        fspec=fspec,
        c=sol.c,
        v=v_coeffs(spec, b),
        h=h,
        h1=h1,
        h2=h2,
        delta=max(delta_alg, 0.0),
        delta_spectral=delta_spec,
        b=b,
        a_mu=a_mu,
        condition_number=sol.condition_number,
        residual=sol.residual,
        minimality=minimality,
        grid=f.grid,
    )
