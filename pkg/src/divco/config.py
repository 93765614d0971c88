"""Run configuration: dataclass, flat key=value file format, CLI flag names."""

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    d: int = 64                 # hidden size shared by both encoders/decoder
    d_f: int = 16               # frame feature dimension (gen-data side)
    K: int = 3                  # number of similarity perspectives
    beta: float = 0.01          # orthonormality strength
    lr: float = 3e-4
    epochs: int = 50
    dropout: float = 0.1
    batch: int = 16
    seed: int = 0
    gam_enabled: bool = True
    ortho_enabled: bool = True
    ortho_mode: str = "simultaneous"   # simultaneous | sequential | loss-term
    dca_traditional: bool = False      # single fixed-identity perspective
    scoring: str = "mean"              # mean | sum log-likelihood
    max_len: int = 12

    def validate(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.ortho_mode not in ("simultaneous", "sequential", "loss-term"):
            raise ConfigError(f"unknown ortho.mode {self.ortho_mode!r}")
        if self.scoring not in ("mean", "sum"):
            raise ConfigError(f"unknown scoring {self.scoring!r}")
        if self.d < 1 or self.batch < 1 or self.epochs < 0 or self.max_len < 1:
            raise ConfigError("d/batch/epochs/max_len out of range")
        return self


# dataclass field <-> dotted config-file/flag key
_KEY_OF = {
    "gam_enabled": "gam.enabled",
    "ortho_enabled": "ortho.enabled",
    "ortho_mode": "ortho.mode",
    "dca_traditional": "dca.traditional",
}
_FIELD_OF = {v: k for k, v in _KEY_OF.items()}


def key_of(field_name: str) -> str:
    return _KEY_OF.get(field_name, field_name)


def field_of(key: str) -> str:
    return _FIELD_OF.get(key, key)


def _parse(value: str, typ):
    if typ is bool:
        low = value.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"bad boolean {value!r}")
    return typ(value)


def to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[key_of(f.name)] = v
    return out


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, v in to_dict(cfg).items():
            if isinstance(v, bool):
                v = "true" if v else "false"
            fh.write(f"{key}={v}\n")


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    cfg = RunConfig(**vars(base)) if base is not None else RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    pytypes = {"int": int, "float": float, "str": str, "bool": bool}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            name = field_of(key.strip())
            if name not in types:
                raise ConfigError(f"{path}:{lineno}: unknown key {key.strip()!r}")
            typ = types[name]
            if isinstance(typ, str):
                typ = pytypes[typ]
            setattr(cfg, name, _parse(raw.strip(), typ))
    return cfg.validate()
