"""
Weighted least-squares approximation on V_m = span{phi_1, ..., phi_m}.

phi_j runs through the signed basis L_{delta,s} in sigma order (every s is
expanded into its 2^|J_s| sign patterns). Samples are drawn either from
lambda_a itself ('plain') or from the averaged squared basis with
compensating weights ('christoffel').
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, svd

from .config import NUMERICS, STUDY
from .errors import IncompleteDataError, InvalidParameterError, NumericalFailureError, SamplerFailureError
from .gpc_analysis import signed_basis_matrix, signed_means
from .laguerre_basis import basis_for
from .measures import MeasureParams, RandomStream, sample_laplace_matrix
from .multiindex import SignedMultiIndex, WeightConfig, order_indices, signed_companions
from .pde_model import FemSolution, Mesh

logger = logging.getLogger(__name__)

# gamma(a, scale theta) envelopes tried for the half-line laws L_s(t)^2 g_a(t)
_ENVELOPE_SCALES = (1.5, 2.0, 4.0, 8.0, 16.0)
_ENVELOPE_MARGIN = 1.05


def basis_size(n: int, kappa: float) -> int:
    """m = ceil(n / kappa)."""
    if n < 1:
        raise InvalidParameterError(f"sample count must be at least 1, got {n}")
    if not kappa > 0:
        raise InvalidParameterError(f"kappa must be positive, got {kappa}")
    return max(1, math.ceil(n / kappa))


def ls_basis(cfg: WeightConfig, m: int, dim_budget: int) -> List[SignedMultiIndex]:
    """The first m signed basis functions in sigma order."""
    ordered = order_indices(cfg, m, dim_budget)
    return [signed for s in ordered for signed in signed_companions(s)][:m]


class _Envelope(NamedTuple):
    scale: float
    bound: float


def _half_line_envelope(a: float, s: int) -> _Envelope:
    """
    Gamma(a, scale theta) envelope for the density L_s(t)^2 g_a(t) on t >= 0.

    The ratio target / envelope is L_s(t)^2 theta^a exp(-t (1 - 1/theta)); its
    supremum is taken on a fine grid and padded by a small margin.
    """
    basis = basis_for(a)
    t = np.linspace(0.0, 4.0 * s + 2.0 * a + 80.0, 8001)
    squared = basis.eval_all(s, t)[s] ** 2
    best = None
    for theta in _ENVELOPE_SCALES:
        ratio = squared * theta ** a * np.exp(-t * (1.0 - 1.0 / theta))
        bound = float(ratio.max()) * _ENVELOPE_MARGIN
        if best is None or bound < best.bound:
            best = _Envelope(theta, bound)
    return best


def sample_half_line(a: float, s: int, count: int, rng: np.random.Generator,
                     min_acceptance: float = NUMERICS['min_acceptance']) -> np.ndarray:
    """
    ``count`` draws t >= 0 from L_s(t)^2 g_a(t) dt by rejection.

    Raises:
        SamplerFailureError: acceptance rate below ``min_acceptance``.
    """
    if count == 0:
        return np.zeros(0)
    basis = basis_for(a)
    if s == 0:
        return rng.standard_gamma(a, size=count)
    envelope = _half_line_envelope(a, s)
    if 1.0 / envelope.bound < min_acceptance:
        raise SamplerFailureError(
            f"rejection envelope for degree {s} accepts {1.0 / envelope.bound:.2e} < {min_acceptance:.0e}")

    accepted: List[np.ndarray] = []
    have = attempts = 0
    while have < count:
        batch = min(1_000_000, max(64, int(2 * (count - have) * envelope.bound)))
        proposals = envelope.scale * rng.standard_gamma(a, size=batch)
        ratio = basis.eval_all(s, proposals)[s] ** 2 * envelope.scale ** a \
            * np.exp(-proposals * (1.0 - 1.0 / envelope.scale))
        keep = proposals[rng.random(batch) * envelope.bound < ratio]
        accepted.append(keep)
        have += keep.size
        attempts += batch
        if attempts >= 10.0 / min_acceptance and have / attempts < min_acceptance:
            raise SamplerFailureError(f"rejection sampler stalled at acceptance {have / attempts:.2e}")
    return np.concatenate(accepted)[:count]


@dataclass(eq=False)
class LSDesign:
    """
    Sample points, weights and the SVD of A = diag(sqrt(w)) Phi.

    Attributes:
        n: Number of samples.
        m: Basis dimension.
        basis: phi_1..phi_m as signed multi-indices.
        samples: (n, dims) parameter draws.
        weights: omega_i >= 0.
        matrix: A_{ij} = sqrt(omega_i) phi_j(y_i).
    """

    n: int
    m: int
    basis: List[SignedMultiIndex]
    samples: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray
    a: float
    mode: str
    kappa: float
    seed: int
    substream: int = 0
    rank_tolerance: float = NUMERICS['rank_tolerance']
    rank: int = field(init=False)
    condition: float = field(init=False)

    def __post_init__(self):
        try:
            self._U, self._S, self._Vt = svd(self.matrix, full_matrices=False)
        except (LinAlgError, ValueError) as e:
            raise NumericalFailureError(f"SVD of the {self.n}x{self.m} design failed: {e}")
        cutoff = self.rank_tolerance * (self._S[0] if self._S.size else 0.0)
        self.rank = int(np.sum(self._S > cutoff))
        smallest = self._S[self.rank - 1] if self.rank else 0.0
        # Gram condition number cond(A^T A) = cond(A)^2
        self.condition = float((self._S[0] / smallest) ** 2) if smallest > 0 and self.rank == self.m else math.inf
        if self.rank < self.m:
            logger.warning(f"rank-deficient design: rank {self.rank} < m={self.m}; minimum-norm solutions")
        elif self.condition > NUMERICS['condition_flag']:
            logger.warning(f"ill-conditioned design: cond(G) = {self.condition:.3g}")

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def pseudo_inverse(self) -> np.ndarray:
        """(m, n) operator mapping weighted data sqrt(w) * g to coefficients."""
        r = self.rank
        return self._Vt[:r].T @ (self._U[:, :r] / self._S[:r]).T

    def to_json(self) -> Dict[str, object]:
        return {'n': self.n, 'm': self.m, 'a': self.a, 'mode': self.mode, 'kappa': self.kappa, 'seed': self.seed,
                'substream': self.substream, 'rank': self.rank, 'condition': self.condition,
                'basis': [key.to_json() for key in self.basis]}


def _christoffel_samples(basis: Sequence[SignedMultiIndex], n: int, dims: int, a: float,
                         stream: RandomStream, min_acceptance: float) -> np.ndarray:
    """Mixture draws: phi_j uniform, then y ~ phi_j^2 dlambda_a."""
    Y = sample_laplace_matrix(MeasureParams(a), stream.child(0), n, dims)
    rng = stream.generator()
    chosen = rng.integers(0, len(basis), size=n)
    requests: Dict[int, List[tuple]] = {}
    for i, j in enumerate(chosen):
        for (dim, level), (_, delta) in zip(basis[j].base.entries, basis[j].signs):
            requests.setdefault(level, []).append((i, dim, delta))
    for level in sorted(requests):
        targets = requests[level]
        draws = sample_half_line(a, level, len(targets), rng, min_acceptance)
        for (i, dim, delta), t in zip(targets, draws):
            Y[i, dim - 1] = delta * t
    return Y


def draw_design(cfg: WeightConfig, dims: int, n: int, kappa: float = STUDY['kappa'], mode: str = STUDY['mode'],
                seed: int = STUDY['seed'], a: float = 1.0, dim_budget: Optional[int] = None, substream: int = 0,
                min_acceptance: float = NUMERICS['min_acceptance']) -> LSDesign:
    """
    Draw a weighted least-squares design with m = ceil(n / kappa).

    plain: y_i i.i.d. from lambda_a^J with omega_i = 1.
    christoffel: y_i from (1/m) sum_j phi_j^2 dlambda_a with
    omega_i = m / sum_j phi_j(y_i)^2.
    """
    if mode not in ('plain', 'christoffel'):
        raise InvalidParameterError(f"unknown sampling mode {mode!r}")
    m = basis_size(n, kappa)
    if m > n:
        raise InvalidParameterError(f"basis dimension m={m} exceeds the sample count n={n}")
    basis = ls_basis(cfg, m, dim_budget or dims)
    stream = RandomStream(seed, substream)

    if mode == 'plain':
        Y = sample_laplace_matrix(MeasureParams(a), stream, n, dims)
        Phi = signed_basis_matrix(basis, Y, a)
        weights = np.ones(n)
    else:
        Y = _christoffel_samples(basis, n, dims, a, stream, min_acceptance)
        Phi = signed_basis_matrix(basis, Y, a)
        weights = m / np.sum(Phi ** 2, axis=1)

    design = LSDesign(n, m, basis, Y, weights, np.sqrt(weights)[:, None] * Phi, a, mode, float(kappa), int(seed), substream)
    logger.debug(f"LS design n={n}, m={m}, mode={mode}, cond(G)={design.condition:.3g}")
    return design


class LSFit(NamedTuple):
    coefficients: np.ndarray
    residual: float
    rank: int


def fit_scalar(design: LSDesign, samples: Sequence[float]) -> LSFit:
    """Minimizer of sum_i omega_i |g(y_i) - phi(y_i)|^2 over V_m (minimum norm if rank-deficient)."""
    g = np.asarray(samples, dtype=float)
    if g.shape != (design.n,):
        raise IncompleteDataError(f"expected {design.n} samples, got shape {g.shape}")
    rhs = design.sqrt_weights * g
    coefficients = design.pseudo_inverse() @ rhs
    residual = float(np.linalg.norm(design.matrix @ coefficients - rhs))
    return LSFit(coefficients, residual, design.rank)


def _sample_matrix(design: LSDesign, samples) -> tuple:
    if isinstance(samples, np.ndarray):
        values, mesh = samples, None
    else:
        samples = list(samples)
        if not samples:
            raise IncompleteDataError("no samples given")
        mesh = samples[0].mesh
        if any(sample.mesh != mesh for sample in samples):
            raise IncompleteDataError("Bochner samples must share one mesh")
        values = np.array([sample.values for sample in samples])
    values = np.asarray(values, dtype=float).reshape(len(values), -1)
    if values.shape[0] != design.n:
        raise IncompleteDataError(f"expected {design.n} samples, got {values.shape[0]}")
    return values, mesh


@dataclass(eq=False)
class LSApproximant:
    """Fitted expansion sum_j c_j phi_j with coefficients in V (rows of ``coefficients``)."""

    basis: List[SignedMultiIndex]
    coefficients: np.ndarray
    a: float
    mesh: Optional[Mesh] = None

    def evaluate_many(self, Y: np.ndarray) -> np.ndarray:
        return signed_basis_matrix(self.basis, np.atleast_2d(Y), self.a) @ self.coefficients

    def evaluate(self, y):
        row = self.evaluate_many(np.atleast_2d(np.asarray(y, dtype=float)))[0]
        return FemSolution(self.mesh, row) if self.mesh is not None else row

    def coefficient_solutions(self) -> List[FemSolution]:
        if self.mesh is None:
            raise IncompleteDataError("coefficients have no mesh")
        return [FemSolution(self.mesh, row) for row in self.coefficients]


def fit_bochner(design: LSDesign, samples: Union[Sequence[FemSolution], np.ndarray]) -> LSApproximant:
    """
    Componentwise LS fit of V-valued samples v(y_i).

    Raises:
        IncompleteDataError: samples missing or on different meshes.
    """
    values, mesh = _sample_matrix(design, samples)
    coefficients = design.pseudo_inverse() @ (design.sqrt_weights[:, None] * values)
    return LSApproximant(design.basis, coefficients, design.a, mesh)


@dataclass(eq=False)
class LSQuadrature:
    """Quadrature generated by the LS operator: w_i = int h_i dlambda_a."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def cost(self) -> int:
        return len(self.weights)

    def apply_values(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.cost:
            raise IncompleteDataError(f"expected {self.cost} values, got {values.shape[0]}")
        return np.tensordot(self.weights, values, axes=(0, 0))


def ls_quadrature(design: LSDesign) -> LSQuadrature:
    """w = diag(sqrt(omega)) P^T M with P the pseudo-inverse and M_j = int phi_j dlambda_a."""
    moments = signed_means(design.basis)
    weights = design.sqrt_weights * (design.pseudo_inverse().T @ moments)
    return LSQuadrature(design.samples, weights)
