"""
Configuration for the GPWPC toolkit.

This file contains the default problem, weight, numerical and study
settings. A study is configured by a single JSON file whose sections mirror
the dictionaries below (``problem``, ``weights``, ``numerics``, ``study``,
``output``); command-line flags override file values. Modify these values
to adjust default behaviour without changing core logic.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from .errors import ConfigurationError

# Desk-scale parametric problem on D = (0, 1)
PROBLEM = {
    'dims': 4,            # parametric truncation J
    'theta0': 0.6,        # amplitude of psi_j
    'tau': 3.0,           # decay of psi_j
    'a': 1.0,             # shape of the generalized Laplace law
    'cells': 64,          # FEM cells
    'family': 'sine',     # 'sine' or the 'affine-constant' toy
    'load': 1.0,          # constant right-hand side f
    'functional': None,   # None (V-norm errors), 'mean' or a point x0 in [0, 1]
}

# Sparsity weights sigma_s = beta_s^(p/2 - 1)
WEIGHTS = {
    'family': 'rho',      # 'rho' (rho_j sequence) or 'b' (b_j = ||psi_j||)
    'p': 0.5,
    'r': None,            # None: smallest integer with p * r > 1
    'theta': 0.0,
    'lam': 0.0,
    'eta': 1.5,           # sum_j rho_j b_j <= eta < pi / 2
    'sigma_rho': 0.5,
    'c_dim': None,        # None: largest value <= 1 keeping sigma monotone
    'c_global': 1.0,
    'b_scale': 1.0,
}

NUMERICS = {
    'max_degree': 64,
    'member_cap': 10**6,
    'overflow_guard': 700.0,
    'rank_tolerance': 1e-12,
    'condition_flag': 1e6,
    'tensor_point_cap': 200_000,
    'quad_margin': 3,
    'coefficient_box': [6, 4, 3, 2],
    'min_acceptance': 1e-4,
    'fd_step': 1e-2,
}

STUDY = {
    'method': 'interp',   # truncation | interp | quad | ls | ls-quad
    'budgets': [1, 9, 41, 137, 400],
    'mc_samples': 2000,
    'reference_samples': 100_000,
    'seed': 20240501,
    'kappa': 10.0,        # least-squares oversampling, m = ceil(n / kappa)
    'mode': 'plain',      # plain | christoffel
    'dim_budget': None,   # None: all problem dims
    'workers': 1,
    'record_timing': False,
}

OUTPUT = {
    'out': 'output/study.csv',
    'format': 'csv',
    'log_file': 'gpwpc_study.log',
    'db_url': None,
}

SECTIONS = {
    'problem': PROBLEM,
    'weights': WEIGHTS,
    'numerics': NUMERICS,
    'study': STUDY,
    'output': OUTPUT,
}

METHODS = ('truncation', 'interp', 'quad', 'ls', 'ls-quad')
FORMATS = ('csv', 'json')
SAMPLING_MODES = ('plain', 'christoffel')

# alternate spellings accepted in config files
_ALIASES = {'lambda': 'lam', 'theta_0': 'theta0', 'J': 'dims', 'N': 'cells'}


@dataclass
class StudyConfig:
    """Flat, fully resolved configuration of one study run."""

    problem: Dict[str, Any] = field(default_factory=lambda: dict(PROBLEM))
    weights: Dict[str, Any] = field(default_factory=lambda: dict(WEIGHTS))
    numerics: Dict[str, Any] = field(default_factory=lambda: dict(NUMERICS))
    study: Dict[str, Any] = field(default_factory=lambda: dict(STUDY))
    output: Dict[str, Any] = field(default_factory=lambda: dict(OUTPUT))

    def __post_init__(self):
        self.validate()

    @property
    def method(self) -> str:
        return self.study['method']

    @property
    def budgets(self) -> List[int]:
        return list(self.study['budgets'])

    @property
    def seed(self) -> int:
        return int(self.study['seed'])

    @property
    def dim_budget(self) -> int:
        return int(self.study['dim_budget'] or self.problem['dims'])

    def validate(self) -> None:
        """Check ranges and cross-field invariants."""
        budgets = self.study['budgets']
        if not budgets or any(int(b) < 1 for b in budgets):
            raise ConfigurationError(f"budgets must be positive integers, got {budgets}")
        if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
            raise ConfigurationError(f"budgets must be strictly increasing, got {budgets}")
        if int(self.study['mc_samples']) < 100:
            raise ConfigurationError("mc_samples must be at least 100")
        if self.study['method'] not in METHODS:
            raise ConfigurationError(f"unknown method {self.study['method']!r}; expected one of {METHODS}")
        if self.study['mode'] not in SAMPLING_MODES:
            raise ConfigurationError(f"unknown sampling mode {self.study['mode']!r}")
        if self.output['format'] not in FORMATS:
            raise ConfigurationError(f"unknown output format {self.output['format']!r}")
        if float(self.study['kappa']) <= 0:
            raise ConfigurationError("kappa must be positive")
        if int(self.problem['dims']) < 1 or int(self.problem['cells']) < 2:
            raise ConfigurationError("dims must be >= 1 and cells >= 2")
        if self.dim_budget > int(self.problem['dims']):
            raise ConfigurationError("dim_budget cannot exceed the problem dims")
        if not 0.0 < float(self.weights['p']) < 2.0:
            raise ConfigurationError("weights.p must lie in (0, 2)")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def canonical_json(self) -> str:
        """Sorted-key, whitespace-free JSON used for hashing."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))

    def config_hash(self) -> str:
        """64-bit hash of the canonical configuration, as 16 hex digits."""
        digest = hashlib.blake2b(self.canonical_json().encode('utf-8'), digest_size=8)
        return digest.hexdigest()


def _merge_section(target: Dict[str, Any], values: Mapping[str, Any], section: str) -> None:
    for key, value in values.items():
        key = _ALIASES.get(key, key)
        if key not in target:
            raise ConfigurationError(f"unknown key {key!r} in section {section!r}")
        target[key] = value


def _locate(key: str) -> Optional[str]:
    key = _ALIASES.get(key, key)
    for name, defaults in SECTIONS.items():
        if key in defaults:
            return name
    return None


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> StudyConfig:
    """
    Resolve a study configuration.

    Args:
        path: Optional JSON file. Top-level keys are either section names
            (``problem``, ``weights``, ...) holding dictionaries, or flat keys
            that are routed to the section that defines them.
        overrides: Flat key/value pairs (from CLI flags); ``None`` values are
            ignored.

    Returns:
        A validated StudyConfig.
    """
    sections = {name: dict(defaults) for name, defaults in SECTIONS.items()}

    if path:
        try:
            with open(path, 'r') as file:
                raw = json.load(file)
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"error parsing JSON from {path}: {e}")
        for key, value in raw.items():
            if key in sections and isinstance(value, Mapping):
                _merge_section(sections[key], value, key)
            else:
                section = _locate(key)
                if section is None:
                    raise ConfigurationError(f"unknown config key {key!r} in {path}")
                _merge_section(sections[section], {key: value}, section)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section = _locate(key)
        if section is None:
            raise ConfigurationError(f"unknown override {key!r}")
        _merge_section(sections[section], {key: value}, section)

    sections['study']['budgets'] = [int(b) for b in sections['study']['budgets']]
    return StudyConfig(**sections)


def ensure_parent(path: str) -> Path:
    """Create the parent directory of an output path and return the path."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out
