"""Flat key-value experiment configuration.

One diff-friendly text file drives every pipeline command: `section.key
= value` lines, `#` comments. Every command writes the fully resolved
configuration next to its outputs, so a run directory always documents
how to reproduce itself.
"""

from pathlib import Path

from .agent import TrainConfig
from .ioutil import atomic_write_text
from .perturb import SynonymConfig


class ConfigError(Exception):
    pass


def _bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip() != ""]


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip() != ""]


# key -> (caster, default). Paths stay strings; empty string means unset.
SCHEMA: dict = {
    "seed": (int, 0),
    "paths.corpus": (str, ""),
    "paths.vectors": (str, ""),
    "paths.synonym_vectors": (str, ""),  # falls back to paths.vectors
    "paths.stopwords": (str, ""),
    "paths.pos_lexicon": (str, ""),
    "paths.out": (str, "out"),
    "oracle.hidden": (int, 32),
    "oracle.epochs": (int, 60),
    "oracle.lr": (float, 1e-2),
    "oracle.batch_size": (int, 32),
    "synonyms.tau_word": (float, 0.7),
    "synonyms.tau_sent": (float, 0.84),
    "synonyms.pos_filter": (_bool, True),
    "env.eps_penalty": (float, 0.2),
    "env.sim_scale": (float, 100.0),
    "prepare.direction_label": (int, 1),
    "prepare.train_fraction": (float, 0.7),
    "prepare.simple_search_rounds": (int, 100),
    "train.num_rounds": (int, 500),
    "train.gamma": (float, 0.9),
    "train.lr": (float, 1e-3),
    "train.batch_size": (int, 32),
    "train.eps_start": (float, 0.9),
    "train.eps_end": (float, 0.05),
    "train.eps_decay": (float, 1000.0),
    "train.target_update_every": (int, 20),
    "train.max_turns_train": (int, 30),
    "train.memory_capacity": (int, 10000),
    "train.alpha": (float, 1.0),
    "train.hidden": (_ints, [128, 128, 64, 64, 32, 32]),
    "train.td_variant": (str, "target_select"),
    "train.l_max": (int, 64),
    "genfooler.folds": (int, 5),
    "genfooler.max_epochs": (int, 40),
    "genfooler.lr": (float, 1e-3),
    "genfooler.hidden": (_ints, [64, 64]),
    "genfooler.l_max": (int, 64),
    "attack.method": (str, "lunatc"),
    "eval.threshold": (float, 0.9),
    "eval.threshold_min": (float, 0.5),
    "eval.threshold_max": (float, 0.99),
    "eval.threshold_count": (int, 50),
    "eval.method_seeds": (_ints, [0, 1, 2]),
    "eval.baseline_seeds": (_ints, [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]),
}


def parse_kv(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


class ExperimentConfig:
    """Typed view over the flat keys, with schema-checked access."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in SCHEMA.items()}
        for key, raw in (values or {}).items():
            self.set(key, raw)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        cfg = cls(parse_kv(path))
        for key, raw in (overrides or {}).items():
            cfg.set(key, raw)
        return cfg

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        caster, _ = SCHEMA[key]
        try:
            self.values[key] = caster(raw) if isinstance(raw, str) else raw
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {e}") from None

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def path(self, key: str, must_exist: bool = True) -> Path:
        raw = self[key]
        if not raw:
            raise ConfigError(f"config key {key!r} is required but unset")
        p = Path(raw)
        if must_exist and not p.exists():
            raise ConfigError(f"{key} = {raw!r}: file not found")
        return p

    @property
    def synonym_vectors_path(self) -> Path:
        return self.path("paths.synonym_vectors") if self["paths.synonym_vectors"] else self.path("paths.vectors")

    def thresholds(self) -> list[float]:
        import numpy as np

        return [
            float(x)
            for x in np.linspace(
                self["eval.threshold_min"], self["eval.threshold_max"], self["eval.threshold_count"]
            )
        ]

    def synonym_config(self, stopwords: frozenset[str]) -> SynonymConfig:
        return SynonymConfig(
            tau_word=self["synonyms.tau_word"],
            tau_sent=self["synonyms.tau_sent"],
            stopwords=stopwords,
            pos_filter_enabled=self["synonyms.pos_filter"],
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            num_rounds=self["train.num_rounds"],
            gamma=self["train.gamma"],
            lr=self["train.lr"],
            batch_size=self["train.batch_size"],
            eps_start=self["train.eps_start"],
            eps_end=self["train.eps_end"],
            eps_decay=self["train.eps_decay"],
            target_update_every=self["train.target_update_every"],
            max_turns_train=self["train.max_turns_train"],
            memory_capacity=self["train.memory_capacity"],
            seed=seed,
            alpha=self["train.alpha"],
            hidden=tuple(self["train.hidden"]),
            td_variant=self["train.td_variant"],
            l_max=self["train.l_max"],
        )

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    def freeze(self, path) -> None:
        """Write the fully resolved configuration next to an artifact."""
        atomic_write_text(path, self.to_text())
