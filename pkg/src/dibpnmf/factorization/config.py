from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ContractError

MODELS = ("bb", "copula", "gp")


@dataclass
class ModelConfig:
    """Sampler settings. Model-specific fields are ignored by the other models.

    Gamma priors are shape/rate: loadings use ``gamma(1, tau)`` and the
    coupling parameters ``gamma(hp_shape, hp_rate)``.
    """

    model: str = "bb"
    K: int = 30
    epsilon: float = 0.01
    tau1: float = 1.0
    tau2: float = 1.0
    hp_shape: float = 1.0
    hp_rate: float = 1.0
    max_iter: int = 1000
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    # bivariate beta
    a0: float = 1.0
    b0: float = 1.0
    # FGM copula
    rho0: float = 0.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    # GP coupling
    sigma: float = 1.0
    eta: float = 1.0
    s0: float = 1.0
    hs: float = 1.0
    alpha: float = 1.0
    t1: float = 1.0
    t2: float = 2.0
    # random-walk step sizes, log scale
    theta_step: float = 0.1
    s_step: float = 0.1
    keep_samples: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ContractError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if self.epsilon <= 0:
            raise ContractError("epsilon must be positive")
        if self.max_iter < 1:
            raise ContractError("max_iter must be >= 1")
        if not 0 <= self.burn_in < self.max_iter:
            raise ContractError("need 0 <= burn_in < max_iter")
        if self.thin < 1:
            raise ContractError("thin must be >= 1")
        for name in ("tau1", "tau2", "hp_shape", "hp_rate", "a0", "b0", "alpha1", "alpha2",
                     "sigma", "eta", "s0", "hs", "alpha", "theta_step", "s_step"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if not -1.0 <= self.rho0 <= 1.0:
            raise ContractError("rho0 must lie in [-1, 1]")
        if self.t1 == self.t2:
            raise ContractError("t1 and t2 must differ")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
