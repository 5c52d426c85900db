"""
Finitely supported multi-indices, sign decorations and sparsity weights.

A MultiIndex s stores only its non-zero levels {j: s_j}. The weights

    beta_s  = c_global * prod_{j in J_s} c_dim * s_j^(-r) * S_j
    sigma_s = beta_s^(p/2 - 1)

are product-form, with S_j = sum_{l=1}^{2r} rho_j^(-l) for the rho family
and S_j = sum_{l=1}^{2r} (e * b_j * b_scale)^l for the b family. Index sets
Lambda(xi) = {s : sigma_s <= xi^(1/q)} are enumerated depth-first with
monotone pruning.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from .config import NUMERICS, WEIGHTS
from .errors import BudgetExceededError, InvalidParameterError, InvalidWeightError

logger = logging.getLogger(__name__)


class MultiIndex:
    """Immutable sparse multi-index s in F; absent dimensions have level 0."""

    __slots__ = ('_entries',)

    def __init__(self, entries: Union[Mapping[int, int], Iterable[Tuple[int, int]]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        cleaned = {}
        for j, level in items:
            j, level = int(j), int(level)
            if j < 1:
                raise InvalidParameterError(f"dimensions start at 1, got {j}")
            if level < 0:
                raise InvalidParameterError(f"levels must be non-negative, got {level} at dim {j}")
            if level:
                cleaned[j] = level
        self._entries = tuple(sorted(cleaned.items()))

    @classmethod
    def unit(cls, j: int, level: int = 1) -> 'MultiIndex':
        return cls({j: level})

    @property
    def entries(self) -> Tuple[Tuple[int, int], ...]:
        return self._entries

    def as_dict(self) -> Dict[int, int]:
        return dict(self._entries)

    def __getitem__(self, j: int) -> int:
        for dim, level in self._entries:
            if dim == j:
                return level
        return 0

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, _ in self._entries)

    @property
    def l1(self) -> int:
        return sum(level for _, level in self._entries)

    @property
    def l0(self) -> int:
        return len(self._entries)

    @property
    def linf(self) -> int:
        return max((level for _, level in self._entries), default=0)

    def is_zero(self) -> bool:
        return not self._entries

    def is_leq(self, other: 'MultiIndex') -> bool:
        """Half-order: s <= s' iff s_j <= s'_j for every j."""
        return all(level <= other[j] for j, level in self._entries)

    def with_level(self, j: int, level: int) -> 'MultiIndex':
        entries = self.as_dict()
        entries[j] = level
        return MultiIndex(entries)

    def predecessors(self) -> List['MultiIndex']:
        """s - e_j for each j in the support."""
        return [self.with_level(j, level - 1) for j, level in self._entries]

    def sort_key(self) -> Tuple[int, Tuple[Tuple[int, int], ...]]:
        """Graded lexicographic key: total order |s|_1 first, then entries."""
        return (self.l1, self._entries)

    def to_json(self) -> Dict[str, int]:
        return {str(j): level for j, level in self._entries}

    @classmethod
    def from_json(cls, data: Mapping[str, int]) -> 'MultiIndex':
        return cls({int(j): int(level) for j, level in data.items()})

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self._entries == other._entries

    def __hash__(self):
        return hash(self._entries)

    def __repr__(self):
        return f"MultiIndex({self.as_dict()})"


@dataclass(frozen=True)
class SignedMultiIndex:
    """Pair (delta, s) in E: a sign for every dimension in the support of s."""

    base: MultiIndex
    signs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        signs = tuple(sorted((int(j), int(d)) for j, d in self.signs))
        object.__setattr__(self, 'signs', signs)
        if tuple(j for j, _ in signs) != self.base.support:
            raise InvalidParameterError(
                f"sign support {[j for j, _ in signs]} must equal index support {list(self.base.support)}")
        if any(d not in (-1, 1) for _, d in signs):
            raise InvalidParameterError(f"signs must be -1 or +1, got {signs}")

    def delta(self, j: int) -> int:
        return dict(self.signs)[j]

    def nu(self) -> int:
        """nu_{delta,s} = prod_{j in J_delta} s_j."""
        return math.prod(level for _, level in self.base.entries)

    def sort_key(self):
        return self.base.sort_key() + (self.signs,)

    def to_json(self) -> Dict[str, object]:
        return {'index': self.base.to_json(), 'signs': {str(j): d for j, d in self.signs}}

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> 'SignedMultiIndex':
        base = MultiIndex.from_json(data['index'])
        return cls(base, tuple((int(j), int(d)) for j, d in data['signs'].items()))


def signed_companions(s: MultiIndex) -> List[SignedMultiIndex]:
    """All (delta, s) in E for this s, in lexicographic sign order (-1 before +1)."""
    support = s.support
    return [SignedMultiIndex(s, tuple(zip(support, pattern)))
            for pattern in itertools.product((-1, 1), repeat=len(support))]


@dataclass(frozen=True)
class WeightConfig:
    """
    Parameters of the product-form weight families.

    Attributes:
        p: Summability exponent in (0, 2); q = 2p / (2 - p).
        r: Smoothness order (>= 1).
        theta, lam: Exponents of the auxiliary weights p_s(theta, lambda).
        rho: Per-dimension rho_j (rho family); ``inf`` disables a dimension.
        c_dim: Per-active-dimension constant.
        c_global: Global constant (beta of the zero index).
        family: 'rho' or 'b'.
        b: Per-dimension b_j = ||psi_j||_inf (b family).
        b_scale: Extra factor on e * b_j in the b family.
    """

    p: float = WEIGHTS['p']
    r: int = 3
    theta: float = WEIGHTS['theta']
    lam: float = WEIGHTS['lam']
    rho: Tuple[float, ...] = ()
    c_dim: float = 1.0
    c_global: float = WEIGHTS['c_global']
    family: str = 'rho'
    b: Tuple[float, ...] = ()
    b_scale: float = WEIGHTS['b_scale']
    _sums: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.p < 2.0:
            raise InvalidParameterError(f"p must lie in (0, 2), got {self.p}")
        if int(self.r) != self.r or self.r < 1:
            raise InvalidParameterError(f"r must be a positive integer, got {self.r}")
        if self.theta < 0 or self.lam < 0:
            raise InvalidParameterError("theta and lambda must be non-negative")
        if self.c_dim <= 0 or self.c_global <= 0:
            raise InvalidParameterError("c_dim and c_global must be positive")
        object.__setattr__(self, 'rho', tuple(float(v) for v in self.rho))
        object.__setattr__(self, 'b', tuple(float(v) for v in self.b))

        if self.family == 'rho':
            if not self.rho:
                raise InvalidParameterError("rho family needs at least one rho_j")
            if any(not v > 0 for v in self.rho):
                raise InvalidWeightError(f"rho_j must be positive, got {self.rho}")
            finite = [v for v in self.rho if math.isfinite(v)]
            if any(v2 < v1 for v1, v2 in zip(finite, finite[1:])):
                raise InvalidWeightError("rho_j must be nondecreasing in j")
        elif self.family == 'b':
            if not self.b:
                raise InvalidParameterError("b family needs at least one b_j")
            if any(v < 0 for v in self.b):
                raise InvalidWeightError(f"b_j must be non-negative, got {self.b}")
        else:
            raise InvalidParameterError(f"unknown weight family {self.family!r}")
        sums = _dim_sums(self.family, self.r, self.rho, self.b, self.b_scale)
        object.__setattr__(self, '_sums', sums)

        # product form: sigma is monotone iff every factor at level 1 is <= 1
        worst = max(sums)
        if self.c_dim * worst > 1.0 + 1e-12:
            raise InvalidWeightError(
                f"sigma is not monotone: c_dim * S_j = {self.c_dim * worst:.4g} > 1; lower c_dim")

    @property
    def q(self) -> float:
        return 2.0 * self.p / (2.0 - self.p)

    @property
    def dims(self) -> int:
        return len(self._sums)

    def dim_sum(self, j: int) -> float:
        if not 1 <= j <= self.dims:
            raise InvalidParameterError(f"dimension {j} outside the configured 1..{self.dims}")
        return self._sums[j - 1]

    def to_json(self) -> Dict[str, object]:
        return {
            'p': self.p, 'q': self.q, 'r': self.r, 'theta': self.theta, 'lambda': self.lam,
            'rho': list(self.rho), 'c_dim': self.c_dim, 'c_global': self.c_global,
            'family': self.family, 'b': list(self.b), 'b_scale': self.b_scale,
        }

    @classmethod
    def from_field(cls, field_spec, p: float = WEIGHTS['p'], family: str = WEIGHTS['family'],
                   r: Optional[int] = None, theta: float = WEIGHTS['theta'], lam: float = WEIGHTS['lam'],
                   eta: float = WEIGHTS['eta'], sigma_rho: float = WEIGHTS['sigma_rho'],
                   c_dim: Optional[float] = None, c_global: float = WEIGHTS['c_global'],
                   b_scale: float = WEIGHTS['b_scale']) -> 'WeightConfig':
        """
        Built-in weights for a coefficient field.

        rho_j = eta * b_j^(sigma_rho - 1) / sum_k b_k^sigma_rho, so that
        sum_j rho_j b_j <= eta. Frozen dimensions (b_j = 0) get rho_j = inf.
        ``r=None`` picks the smallest integer with p * r > 1, and
        ``c_dim=None`` the largest value <= 1 that keeps sigma monotone.
        """
        if not 0.0 < sigma_rho < 1.0:
            raise InvalidParameterError(f"sigma_rho must lie in (0, 1), got {sigma_rho}")
        if not 0.0 < eta < math.pi / 2:
            raise InvalidParameterError(f"eta must lie in (0, pi/2), got {eta}")
        r = r if r is not None else default_r(p)
        b = [float(v) for v in field_spec.b_norms()]
        total = sum(v ** sigma_rho for v in b if v > 0)
        rho = [eta * v ** (sigma_rho - 1.0) / total if v > 0 else math.inf for v in b]
        if c_dim is None:
            worst = max(_dim_sums(family, r, rho, b, b_scale))
            c_dim = min(1.0, 1.0 / worst) if worst > 0 else 1.0
        return cls(p=p, r=r, theta=theta, lam=lam, rho=tuple(rho), c_dim=c_dim, c_global=c_global,
                   family=family, b=tuple(b), b_scale=b_scale)


def _dim_sums(family: str, r: int, rho: Sequence[float], b: Sequence[float], b_scale: float) -> Tuple[float, ...]:
    """Per-dimension factor S_j of beta (without c_dim and the s_j^(-r) decay)."""
    if family == 'rho':
        return tuple(sum(v ** (-l) for l in range(1, 2 * r + 1)) for v in rho)
    return tuple(sum((math.e * v * b_scale) ** l for l in range(1, 2 * r + 1)) for v in b)


def default_r(p: float) -> int:
    """Smallest integer r with p * r > 1."""
    return int(math.floor(1.0 / p)) + 1


def p_weight(s: MultiIndex, theta: float, lam: float) -> float:
    """p_s(theta, lambda) = prod_{j in J_s} (1 + lambda s_j)^theta."""
    if theta < 0 or lam < 0:
        raise InvalidParameterError("theta and lambda must be non-negative")
    return math.prod((1.0 + lam * level) ** theta for _, level in s.entries)


def log_beta(s: MultiIndex, cfg: WeightConfig) -> float:
    value = math.log(cfg.c_global)
    for j, level in s.entries:
        S = cfg.dim_sum(j)
        if S == 0.0:
            return -math.inf
        value += math.log(cfg.c_dim) - cfg.r * math.log(level) + math.log(S)
    return value


def beta(s: MultiIndex, cfg: WeightConfig) -> float:
    return math.exp(log_beta(s, cfg))


def log_sigma(s: MultiIndex, cfg: WeightConfig) -> float:
    """log sigma_s = (p/2 - 1) log beta_s; +inf for indices touching disabled dims."""
    lb = log_beta(s, cfg)
    if lb == -math.inf:
        return math.inf
    return (cfg.p / 2.0 - 1.0) * lb


def sigma(s: MultiIndex, cfg: WeightConfig) -> float:
    """sigma_s = beta_s^(p/2 - 1)."""
    return math.exp(log_sigma(s, cfg))


@dataclass(frozen=True)
class IndexSet:
    """Downward-closed finite index set in graded lexicographic order."""

    members: Tuple[MultiIndex, ...]
    xi: float
    _lookup: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.members, key=MultiIndex.sort_key))
        object.__setattr__(self, 'members', ordered)
        object.__setattr__(self, '_lookup', frozenset(ordered))

    def __len__(self):
        return len(self.members)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.members)

    def __contains__(self, s: MultiIndex) -> bool:
        return s in self._lookup

    def is_downward_closed(self) -> bool:
        return all(pred in self._lookup for s in self.members for pred in s.predecessors())

    def max_levels(self) -> Dict[int, int]:
        """Largest level used per dimension."""
        levels: Dict[int, int] = {}
        for s in self.members:
            for j, level in s.entries:
                levels[j] = max(levels.get(j, 0), level)
        return levels

    def to_json(self, cfg: Optional[WeightConfig] = None) -> Dict[str, object]:
        data = {'xi': self.xi, 'members': [s.to_json() for s in self.members]}
        if cfg is not None:
            data['config'] = cfg.to_json()
        return data

    @classmethod
    def from_json(cls, data: Mapping[str, object]) -> 'IndexSet':
        return cls(tuple(MultiIndex.from_json(m) for m in data['members']), float(data['xi']))


def _check_dim_budget(cfg: WeightConfig, dim_budget: int) -> None:
    if not 1 <= dim_budget <= cfg.dims:
        raise InvalidParameterError(f"dim_budget must lie in 1..{cfg.dims}, got {dim_budget}")


def _enumerate_below(cfg: WeightConfig, log_threshold: float, dim_budget: int,
                     member_cap: int) -> List[MultiIndex]:
    """All s with log sigma_s <= log_threshold and J_s within 1..dim_budget."""
    zero = MultiIndex()
    if log_sigma(zero, cfg) > log_threshold:
        return []

    found = []
    stack = [(zero, log_sigma(zero, cfg), 1)]
    while stack:
        s, ls, start = stack.pop()
        found.append(s)
        if len(found) > member_cap:
            raise BudgetExceededError(f"index set enumeration exceeded the member cap {member_cap}")
        for j in range(start, dim_budget + 1):
            previous = ls
            level = 1
            while True:
                child = s.with_level(j, level)
                lc = log_sigma(child, cfg)
                if lc < previous - 1e-12 * max(1.0, abs(previous)):
                    raise InvalidWeightError(f"sigma decreases from {s} to {child}")
                if lc > log_threshold:
                    break
                stack.append((child, lc, j + 1))
                previous = lc
                level += 1
    return found


def build_Lambda(xi: float, cfg: WeightConfig, dim_budget: int,
                 member_cap: int = NUMERICS['member_cap']) -> IndexSet:
    """
    Lambda(xi) = {s : sigma_s <= xi^(1/q), J_s within 1..dim_budget}.

    Raises:
        BudgetExceededError: more than ``member_cap`` members.
        InvalidWeightError: sigma found decreasing along the half-order.
    """
    if not xi > 1.0:
        raise InvalidParameterError(f"xi must exceed 1, got {xi}")
    _check_dim_budget(cfg, dim_budget)
    members = _enumerate_below(cfg, math.log(xi) / cfg.q, dim_budget, member_cap)
    logger.debug(f"Lambda(xi={xi:.6g}) has {len(members)} members")
    return IndexSet(tuple(members), float(xi))


def grid_cardinality(index_set: Iterable[MultiIndex]) -> int:
    """sum_{s in Lambda} prod_{j in J_s} (2 s_j + 1), the bound on |G(xi)|."""
    return sum(math.prod(2 * level + 1 for _, level in s.entries) for s in index_set)


def _sigma_order_key(cfg: WeightConfig):
    return lambda s: (log_sigma(s, cfg), s.sort_key())


def _grow_until(cfg: WeightConfig, dim_budget: int, member_cap: int, enough,
                max_doublings: int = 4096) -> List[MultiIndex]:
    """Enumerate Lambda on a doubling threshold grid until ``enough(members)``."""
    log_t = log_sigma(MultiIndex(), cfg)
    members = _enumerate_below(cfg, log_t, dim_budget, member_cap)
    for _ in range(max_doublings):
        if enough(members):
            break
        log_t += math.log(2.0)
        members = _enumerate_below(cfg, log_t, dim_budget, member_cap)
    else:
        logger.warning(f"sigma ordering saturated at {len(members)} indices (all other dims disabled)")
    return sorted(members, key=_sigma_order_key(cfg))


def order_indices(cfg: WeightConfig, count: int, dim_budget: int,
                  member_cap: int = NUMERICS['member_cap']) -> List[MultiIndex]:
    """The first ``count`` indices of F by nondecreasing sigma, ties graded-lexicographic."""
    if count < 1:
        raise InvalidParameterError(f"count must be at least 1, got {count}")
    _check_dim_budget(cfg, dim_budget)
    ordered = _grow_until(cfg, dim_budget, member_cap, lambda members: len(members) >= count)
    return ordered[:count]


def choose_xi_for_budget(n: int, cfg: WeightConfig, mode: str, dim_budget: int,
                         member_cap: int = NUMERICS['member_cap']) -> Tuple[float, IndexSet]:
    """
    Largest sigma-ordered prefix of F whose cost fits the budget ``n``.

    Cost is grid_cardinality (mode 'points') or the number of indices (mode
    'terms'). Prefixes of the sigma order are downward closed and grow with
    ``n``; the returned xi is sigma(last member)^q.
    """
    if n < 1:
        raise InvalidParameterError(f"budget must be at least 1, got {n}")
    if mode not in ('points', 'terms'):
        raise InvalidParameterError(f"mode must be 'points' or 'terms', got {mode!r}")
    _check_dim_budget(cfg, dim_budget)

    def cost(members):
        return grid_cardinality(members) if mode == 'points' else len(members)

    ordered = _grow_until(cfg, dim_budget, member_cap, lambda members: cost(members) > n)
    chosen: List[MultiIndex] = []
    spent = 0
    for s in ordered:
        step = grid_cardinality([s]) if mode == 'points' else 1
        if spent + step > n:
            break
        chosen.append(s)
        spent += step
    xi = math.exp(cfg.q * log_sigma(chosen[-1], cfg))
    logger.info(f"budget n={n} ({mode}): |Lambda|={len(chosen)}, cost={spent}, xi={xi:.6g}")
    return xi, IndexSet(tuple(chosen), xi)


def box_index_set(box: MultiIndex) -> IndexSet:
    """Full tensor box {s : s <= box}, ordered graded-lexicographically."""
    dims = box.support
    ranges = [range(box[j] + 1) for j in dims]
    members = tuple(MultiIndex(zip(dims, levels)) for levels in itertools.product(*ranges))
    return IndexSet(members, math.inf)
