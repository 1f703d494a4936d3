"""Pipeline configuration: one flat key = value text file, overridable by
CLI flags.  Every numeric bound is validated at load time."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from typing import Dict, List, Tuple

from .errors import ConfigError


@dataclass
class PipelineConfig:
    # retrieval model parameters
    kl_lambda: float = 0.4
    bm25_k1: float = 1.5
    bm25_b: float = 1.5
    bm25_k3: float = 3.0
    cutoff: int = 1000

    # working sets
    ws_lower: int = 10
    ws_upper: int = 10000
    cooccur_k: int = 2

    # phrase mining
    dice_threshold: float = 0.25
    phrase_min_count: int = 3

    # learning
    learner: str = "kernel_rbf"
    cv_folds: int = 3
    gamma_grid: Tuple[float, ...] = (0.01, 0.1, 1.0, 10.0)
    reg_grid: Tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0)
    ridge_grid: Tuple[float, ...] = (0.0, 1e-3, 1e-2, 1e-1)
    rerank_gamma_grid: Tuple[float, ...] = (0.1, 1.0)
    rerank_reg_grid: Tuple[float, ...] = (1e-2, 1e-1)
    rerank_max_rows: int = 2000
    negatives_per_topic: int = 20

    # validation-set construction
    validation_size: int = 4131
    validation_min_citations: int = 4

    # task mode and execution
    monolingual: str = ""
    threads: int = 1
    figures: bool = True

    # corpus generation defaults for `gen` / `pipeline`
    seed: int = 7
    gen_n_patents: int = 300
    gen_n_clusters: int = 10
    gen_vocab_size: int = 400
    gen_lang_mix: Tuple[float, float, float] = (0.69, 0.23, 0.07)
    gen_citation_density: float = 2.5
    gen_ecla_per_cluster: int = 3

    def validate(self) -> None:
        if not 0.0 < self.kl_lambda < 1.0:
            raise ConfigError("kl_lambda must lie in (0, 1)")
        for name in ("bm25_k1", "bm25_b", "bm25_k3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.cutoff < 1:
            raise ConfigError("cutoff must be >= 1")
        if self.ws_lower < 1 or self.ws_upper < self.ws_lower:
            raise ConfigError("working-set limits need 1 <= lower <= upper")
        if self.cooccur_k < 0:
            raise ConfigError("cooccur_k must be >= 0")
        if not 0.0 <= self.dice_threshold <= 1.0:
            raise ConfigError("dice_threshold must lie in [0, 1]")
        if self.phrase_min_count < 1:
            raise ConfigError("phrase_min_count must be >= 1")
        if self.learner not in ("linear", "kernel_rbf"):
            raise ConfigError(f"unknown learner {self.learner!r}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        for name in ("gamma_grid", "reg_grid", "rerank_gamma_grid", "rerank_reg_grid"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if self.negatives_per_topic < 0:
            raise ConfigError("negatives_per_topic must be >= 0")
        if self.rerank_max_rows < 2:
            raise ConfigError("rerank_max_rows must be >= 2")
        if self.validation_min_citations < 1:
            raise ConfigError("validation_min_citations must be >= 1")
        if self.monolingual not in ("", "en", "fr", "de"):
            raise ConfigError(f"monolingual must be one of en/fr/de, got {self.monolingual!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def merge_grid(self) -> List[Dict[str, float]]:
        if self.learner == "linear":
            return [{"ridge": r} for r in self.ridge_grid]
        return [{"gamma": g, "reg": r} for g in self.gamma_grid for r in self.reg_grid]

    def rerank_grid(self) -> List[Dict[str, float]]:
        if self.learner == "linear":
            return [{"ridge": r} for r in self.ridge_grid]
        return [
            {"gamma": g, "reg": r}
            for g in self.rerank_gamma_grid
            for r in self.rerank_reg_grid
        ]

    def dump(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()


def _coerce(name: str, raw: str, current) -> object:
    raw = raw.strip().strip('"').strip("'")
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}")
    if isinstance(current, tuple):
        try:
            return tuple(float(part) for part in raw.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"{name}: expected a comma-separated number list, got {raw!r}")
    return raw


def load_config(path=None, overrides: Dict[str, str] | None = None) -> PipelineConfig:
    """Read `key = value` lines (comments with #) and apply overrides."""
    cfg = PipelineConfig()
    known = {f.name for f in fields(cfg)}

    def apply(name: str, raw: str) -> None:
        name = name.strip()
        if name not in known:
            raise ConfigError(f"unknown configuration key {name!r}")
        setattr(cfg, name, _coerce(name, raw, getattr(cfg, name)))

    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                name, raw = line.split("=", 1)
                apply(name, raw)
    for name, raw in (overrides or {}).items():
        apply(name, raw)
    cfg.validate()
    return cfg
