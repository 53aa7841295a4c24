"""Scenario and experiment configuration."""

import ast
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

# nonnegative 4-PAM with unit mean power
PAM4 = tuple(m / math.sqrt(7.5) for m in (1, 2, 3, 4))


@dataclass(frozen=True)
class SystemConfig:
    U: int = 40
    p_lambda: float = 0.1
    Q: int = 20
    M: int = 16
    N: int = 5
    N_y: int = 4
    N_z: int = 4
    delta_f: float = 15e3
    M_cp: int = 1066  # CP must cover the largest differential delay
    K: int = 1
    alphabet: tuple = PAM4
    sigma2: float = 1.0
    P: int = 3
    rho0: float = 0.75
    delay_range: tuple = (0.0, 4.44e-3)
    doppler_range: tuple = (-41e3, 41e3)
    doppler_spread: float = 1.5e3
    shared_delay: bool = True

    def __post_init__(self):
        for name in ("U", "Q", "M", "N", "N_y", "N_z", "K", "P"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.p_lambda <= 1.0:
            raise ValueError("p_lambda must lie in [0, 1]")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if self.M_cp < 1:
            raise ValueError("M_cp must be >= 1 so that T_sym > T")
        a = np.asarray(self.alphabet, dtype=float)
        if a.ndim != 1 or a.size == 0 or np.any(a < 0) or np.any(np.diff(a) <= 0):
            raise ValueError("alphabet must be distinct, nonnegative and sorted ascending")
        for name in ("delay_range", "doppler_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if not 0.0 < self.rho0 <= 1.0:
            raise ValueError("rho0 must lie in (0, 1]")
        object.__setattr__(self, "alphabet", tuple(float(v) for v in a))
        object.__setattr__(self, "delay_range", tuple(float(v) for v in self.delay_range))
        object.__setattr__(self, "doppler_range", tuple(float(v) for v in self.doppler_range))

    @property
    def N_a(self):
        return self.N_y * self.N_z

    @property
    def T(self):
        return 1.0 / self.delta_f

    @property
    def T_s(self):
        return 1.0 / (self.M * self.delta_f)

    @property
    def T_sym(self):
        return self.T + self.M_cp * self.T_s

    @property
    def A(self):
        return np.asarray(self.alphabet)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


BASELINES = ("mrf-gm-amp", "no-mrf", "genie-csi")


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    snr_db: tuple = (0.0,)
    drops: int = 10
    max_iter: int = 50
    tol: float = 1e-4
    gamp_damping: float = 0.7
    mrf_damping: float = 0.5
    alpha: float = 0.4
    beta: float = 0.4
    xi_th: float = 0.0  # <= 0 selects the automatic threshold
    baseline: str = "mrf-gm-amp"
    seed: int = 0

    def __post_init__(self):
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        snr = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        if not snr:
            raise ValueError("snr sweep must be nonempty")
        object.__setattr__(self, "snr_db", snr)
        if self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}; choose from {BASELINES}")
        for name in ("gamp_damping", "mrf_damping"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "system"}
        d.update(dataclasses.asdict(self.system))
        return d

    def digest(self):
        blob = json.dumps(self.as_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SYSTEM_KEYS = {f.name for f in fields(SystemConfig)}
_EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {"system"}


def _parse_value(text):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def make_config(**kw):
    """Build an ExperimentConfig from a flat mapping of field names."""
    unknown = set(kw) - _SYSTEM_KEYS - _EXPERIMENT_KEYS
    if unknown:
        raise KeyError(f"unknown configuration keys: {sorted(unknown)}")
    sys_kw = {k: v for k, v in kw.items() if k in _SYSTEM_KEYS}
    exp_kw = {k: v for k, v in kw.items() if k in _EXPERIMENT_KEYS}
    return ExperimentConfig(system=SystemConfig(**sys_kw), **exp_kw)


def parse_config_text(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into a flat dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def load_config(path, **overrides):
    with open(path) as fh:
        kw = parse_config_text(fh.read())
    kw.update(overrides)
    return make_config(**kw)


def dump_config(cfg):
    lines = []
    for k, v in cfg.as_dict().items():
        if isinstance(v, tuple):
            v = list(v)
        lines.append(f"{k} = {v!r}")
    return "\n".join(lines) + "\n"
