"""Structured run configuration: YAML sections mapped onto dataclasses.

Unknown keys are rejected so typos fail loudly; all cross-field constraints
of the owning modules are re-validated at load time.
"""

from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .exceptions import ConfigError
from .forward import BoundaryConditions, ModelParams
from .optimizer import OptimizeOptions
from .regularization import RegConfig


@dataclass
class MeshSection:
    geometry: str = "lshape"  # lshape | square
    h: float = 0.0625  # target edge length (lshape)
    nx: int = 16  # grid cells (square)
    ny: int = 16
    refinements: int = 1  # extra uniformly refined meshes (spectrum command)


@dataclass
class ModelSection:
    kappa_s: float = 2.0
    kappa_f: float = 0.06
    h_exchange: float = 1e3
    C_compress: float = 1e-6
    mu: float = 1e6
    K_bulk: float = 2e6
    T_hot: float = 300.0
    T_cold: float = 270.0
    conv_coeff: float = 50.0
    traction: list = field(default_factory=lambda: [0.0, -1e3])


@dataclass
class PriorSection:
    gamma: float = 3.0
    delta: float = 30.0
    # mild anisotropy: breaks the x/y mirror symmetry of the domain so the
    # preconditioned Hessian spectrum has simple, stably ordered eigenvalues
    theta: list = field(default_factory=lambda: [[2.0, 0.4], [0.4, 1.0]])
    mean: float = 0.0  # constant mean level of the uncertain field


@dataclass
class RiskSection:
    beta_M: float = 1.0
    beta_V: float = 0.0
    # {0, 1e5, 1e6} scaled by 1e-4: keeps the variance term comparable to
    # the mean term's variation over the design box rather than dominant
    beta_V_list: list = field(default_factory=lambda: [0.0, 10.0, 100.0])
    beta_R: float = 0.0
    N: int = 25
    N_sweep: list = field(default_factory=lambda: [1, 5, 10, 25])
    oversampling: int = 10
    power_iters: int = 0
    seed: int = 0


@dataclass
class MCSection:
    n_samples: int = 10240
    workers: int = 1


@dataclass
class RegSection:
    beta_tik: float = 1.0
    beta_l0: float = 0.0
    eps0: float = 0.5
    K_cont: int = 3
    continuation: bool = False


@dataclass
class OptimizerSection:
    max_iters: int = 200
    memory: int = 10
    grad_tol: float = 1e-6
    step_tol: float = 1e-12


@dataclass
class DesignSection:
    initial: float = 0.5  # constant initial/default nodal design


@dataclass
class OutputSection:
    directory: str = "out"


def _coerce(section, key, value, declared):
    """Coerce scalar values to the declared field type.

    Plain-YAML floats like ``1.0e3`` (no exponent sign) load as strings, so
    numeric fields accept anything float()/int() can parse.
    """
    if declared in (float, "float"):
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{key} must be a number") from exc
    if declared in (int, "int"):
        try:
            out = int(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}.{key} must be an integer") from exc
        return out
    if declared in (list, "list") and value is not None:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{section}.{key} must be a list")
        return [
            float(v) if isinstance(v, str) else v for v in value
        ]
    return value


@dataclass
class RunConfig:
    mesh: MeshSection = field(default_factory=MeshSection)
    model: ModelSection = field(default_factory=ModelSection)
    prior: PriorSection = field(default_factory=PriorSection)
    risk: RiskSection = field(default_factory=RiskSection)
    mc: MCSection = field(default_factory=MCSection)
    reg: RegSection = field(default_factory=RegSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    design: DesignSection = field(default_factory=DesignSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a mapping")
        section_types = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(section_types)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, f in ((f.name, f) for f in fields(cls)):
            sect_cls = f.default_factory().__class__
            sect_data = data.get(name, {})
            if sect_data is None:
                sect_data = {}
            if not isinstance(sect_data, dict):
                raise ConfigError(f"config section '{name}' must be a mapping")
            allowed = {sf.name: sf.type for sf in fields(sect_cls)}
            bad = set(sect_data) - set(allowed)
            if bad:
                raise ConfigError(
                    f"unknown key(s) in section '{name}': {sorted(bad)}"
                )
            coerced = {
                k: _coerce(name, k, v, allowed[k]) for k, v in sect_data.items()
            }
            kwargs[name] = sect_cls(**coerced)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def dump(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    # -- validation ---------------------------------------------------------

    def validate(self):
        m = self.mesh
        if m.geometry not in ("lshape", "square"):
            raise ConfigError(
                f"mesh.geometry must be 'lshape' or 'square', got {m.geometry!r}"
            )
        if m.geometry == "lshape" and m.h <= 0.0:
            raise ConfigError("mesh.h must be positive")
        if m.geometry == "square" and (m.nx < 1 or m.ny < 1):
            raise ConfigError("mesh.nx and mesh.ny must be at least 1")
        if m.refinements < 0:
            raise ConfigError("mesh.refinements must be nonnegative")
        try:
            self.model_params().validate()
        except ValueError as exc:
            raise ConfigError(f"model section invalid: {exc}") from exc
        if self.prior.gamma <= 0.0 or self.prior.delta <= 0.0:
            raise ConfigError("prior.gamma and prior.delta must be positive")
        r = self.risk
        if r.beta_V < 0.0 or r.beta_R < 0.0 or any(b < 0 for b in r.beta_V_list):
            raise ConfigError("risk weights must be nonnegative")
        if r.N < 0 or r.oversampling < 0 or r.power_iters < 0:
            raise ConfigError("risk rank/oversampling/power_iters must be >= 0")
        if any(n < 0 for n in r.N_sweep):
            raise ConfigError("risk.N_sweep entries must be nonnegative")
        if self.mc.n_samples < 2:
            raise ConfigError("mc.n_samples must be at least 2")
        if self.mc.workers < 1:
            raise ConfigError("mc.workers must be at least 1")
        try:
            self.reg_config()
            self.optimize_options()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0.0 <= self.design.initial <= 1.0:
            raise ConfigError("design.initial must lie in [0, 1]")

    # -- adapters to module types ------------------------------------------

    def model_params(self):
        md = self.model
        return ModelParams(
            kappa_s=md.kappa_s,
            kappa_f=md.kappa_f,
            h_exchange=md.h_exchange,
            C_compress=md.C_compress,
            mu=md.mu,
            K_bulk=md.K_bulk,
            beta_M=self.risk.beta_M,
            bc=BoundaryConditions(
                T_hot=md.T_hot,
                T_cold=md.T_cold,
                conv_coeff=md.conv_coeff,
                traction=tuple(md.traction),
            ),
        )

    def build_mesh(self):
        from .mesh import build_lshape_mesh, build_unit_square_mesh

        if self.mesh.geometry == "square":
            return build_unit_square_mesh(self.mesh.nx, self.mesh.ny)
        return build_lshape_mesh(self.mesh.h)

    def build_prior(self, mesh):
        from . import prior as prior_mod

        theta = None
        if self.prior.theta is not None:
            theta = np.asarray(self.prior.theta, dtype=np.float64)
        mean = np.full(mesh.num_vertices, float(self.prior.mean))
        return prior_mod.build_prior(
            mesh, self.prior.gamma, self.prior.delta, theta=theta, mean=mean
        )

    def reg_config(self, beta_tik=None, beta_l0=None, eps0=None):
        rg = self.reg
        return RegConfig(
            beta_tik=rg.beta_tik if beta_tik is None else beta_tik,
            beta_l0=rg.beta_l0 if beta_l0 is None else beta_l0,
            eps0=rg.eps0 if eps0 is None else eps0,
            K_cont=rg.K_cont,
        )

    def optimize_options(self):
        o = self.optimizer
        return OptimizeOptions(
            max_iters=o.max_iters,
            memory=o.memory,
            grad_tol=o.grad_tol,
            step_tol=o.step_tol,
        )
