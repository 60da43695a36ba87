"""Experiment configuration: one flat record, JSON round-trippable.

Interaction strengths are stated as fractions of the computed critical
mass and the schedule as fractions of the threshold, so a config stays
meaningful whatever resolution the ground profile was solved at.  The
named builtin configs cover the standard experiments; CLI flags override
individual keys.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict, replace

from .potentials import PotentialSpec, spec_from_dict, spec_to_dict

DEFAULT_SCHEDULE = (0.90, 0.94, 0.96, 0.975, 0.985, 0.99, 0.994, 0.997)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    a1_frac: float = 0.5
    a2_frac: float = 0.5
    beta_schedule: tuple = DEFAULT_SCHEDULE
    v1: PotentialSpec = field(default_factory=lambda: PotentialSpec.single_well())
    v2: PotentialSpec = field(default_factory=lambda: PotentialSpec.single_well())
    n: int = 512
    L: float = 15.0
    mode: str = "spectral"
    dt: float = 0.1
    tol: float = 1e-5
    max_iters: int = 60000
    refine_trigger: int = 5
    seed: int = 0
    init_width: float | None = None      # None: L/4 recipe default
    init_center: tuple | None = None     # None: flattest common zero
    noise: float = 0.0
    n_starts: int = 5
    tau_grid: tuple = (0.6, 4.0, 24)
    fit_window: int = 5
    townes_r_max: float = 30.0
    townes_h_r: float = 1e-3
    townes_tol: float = 1e-13
    outdir: str = "out"

    def __post_init__(self):
        bs = tuple(self.beta_schedule)
        object.__setattr__(self, "beta_schedule", bs)
        if any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
            raise ValueError("beta schedule must be strictly increasing")

    def existence_regime(self):
        return 0.0 < self.a1_frac < 1.0 and 0.0 < self.a2_frac < 1.0 \
            and all(0.0 < b < 1.0 for b in self.beta_schedule)

    def to_dict(self):
        d = asdict(self)
        d["v1"] = spec_to_dict(self.v1)
        d["v2"] = spec_to_dict(self.v2)
        d["beta_schedule"] = list(self.beta_schedule)
        d["tau_grid"] = list(self.tau_grid)
        d["init_center"] = list(self.init_center) if self.init_center else None
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def config_from_dict(d):
    d = dict(d)
    for k in ("v1", "v2"):
        if isinstance(d.get(k), dict):
            d[k] = spec_from_dict(d[k])
    for k in ("beta_schedule", "tau_grid"):
        if k in d and d[k] is not None:
            d[k] = tuple(d[k])
    if d.get("init_center") is not None:
        d["init_center"] = tuple(d["init_center"])
    return ExperimentConfig(**d)


def load_config(path):
    with open(path) as f:
        return config_from_dict(json.load(f))


def _harmonic():
    return PotentialSpec.single_well(p=2.0, g=1.0)


def _double_well(p=2.0, g_left=1.0, g_right=1.0, d=1.0):
    return PotentialSpec.of("product", ((-d, 0.0), p, g_left), ((d, 0.0), p, g_right))


def builtin_configs():
    """Named configs for the standard experiments."""
    harmonic = _harmonic()
    trimmed = DEFAULT_SCHEDULE[:-1]
    return {
        # decoupled linear sanity run: exact ground energy 2
        "linear": ExperimentConfig(
            name="linear", a1_frac=0.0, a2_frac=0.0, beta_schedule=(1e-9,),
            v1=harmonic, v2=harmonic, n=256, L=10.5, tol=1e-6,
            refine_trigger=8),
        # symmetric couplings in a single harmonic trap: threshold + blow-up laws
        "threshold": ExperimentConfig(
            name="threshold", a1_frac=0.5, a2_frac=0.5, v1=harmonic, v2=harmonic,
            n=512, L=15.0),
        # asymmetric couplings: limit shape, mass ratio, vanishing peak gap
        "limit-shape": ExperimentConfig(
            name="limit-shape", a1_frac=0.3, a2_frac=0.6, v1=harmonic, v2=harmonic,
            n=512, L=15.0),
        # two wells of different exponents: concentration selects the flatter one
        "concentration-exponent": ExperimentConfig(
            name="concentration-exponent", a1_frac=0.5, a2_frac=0.5,
            v1=PotentialSpec.of("product", ((-1.0, 0.0), 2.0, 1.0), ((1.0, 0.0), 4.0, 1.0)),
            v2=PotentialSpec.of("product", ((-1.0, 0.0), 2.0, 1.0), ((1.0, 0.0), 4.0, 1.0)),
            n=512, L=11.0, refine_trigger=4),
        # equal exponents, unequal weights: concentration selects the lighter well
        "concentration-weight": ExperimentConfig(
            name="concentration-weight", a1_frac=0.5, a2_frac=0.5,
            beta_schedule=trimmed,
            v1=_double_well(g_left=1.0, g_right=2.0),
            v2=_double_well(g_left=1.0, g_right=2.0),
            n=512, L=11.0, refine_trigger=4),
        # symmetric double well: two mirror minimizers of equal energy
        "symmetry": ExperimentConfig(
            name="symmetry", a1_frac=0.5, a2_frac=0.5, beta_schedule=trimmed,
            v1=_double_well(), v2=_double_well(),
            n=512, L=11.0, refine_trigger=4),
        # multi-start agreement at a near-threshold beta
        "uniqueness": ExperimentConfig(
            name="uniqueness", a1_frac=0.3, a2_frac=0.6, beta_schedule=(0.995,),
            v1=harmonic, v2=harmonic, n=512, L=7.5, tol=2e-6,
            noise=0.3, n_starts=5),
        # trial-state mechanism on both sides of the threshold
        "nonexistence": ExperimentConfig(
            name="nonexistence", a1_frac=0.5, a2_frac=0.5, beta_schedule=(0.5,),
            v1=harmonic, v2=harmonic, n=512, L=12.0),
    }


def builtin(name, **overrides):
    cfg = builtin_configs()[name]
    return replace(cfg, **overrides) if overrides else cfg
