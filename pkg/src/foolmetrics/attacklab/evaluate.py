"""Attack configuration and record generation."""

from __future__ import annotations

import configparser
import logging
from dataclasses import asdict, dataclass, fields, replace
from os import PathLike
from typing import Optional

import numpy as np

from ..errors import FoolMetricsError, InvariantViolation
from ..metrics import PredictionRecord, RecordSet
from . import attacks as A
from .model import ToyClassifier
from .task import SyntheticTask, default_epsilon

log = logging.getLogger(__name__)

ATTACK_KINDS = ("identity", "fgsm", "ifgsm_ll", "pgd", "deepfool", "cw", "uap", "gduap")
# the seven attacks of the standard comparison, in reporting order
STANDARD_ATTACKS = ("fgsm", "ifgsm_ll", "pgd", "deepfool", "cw", "uap", "gduap")


@dataclass(frozen=True)
class AttackConfig:
    kind: str
    eps: Optional[float] = None  # None: derived from the task
    alpha: Optional[float] = None  # None: 2.5 * eps / steps
    steps: int = 10
    norm: str = "linf"
    overshoot: float = 0.02
    max_iter: int = 50
    c: float = 1.0
    kappa: float = 0.0
    binary_search_steps: int = 5
    lr: float = 0.01
    cw_steps: int = 100
    th: float = 0.2
    max_epochs: int = 10
    restarts: int = 20
    seed: int = 0
    eps_scale: float = 0.5

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack {self.kind!r}; expected one of {ATTACK_KINDS}")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def resolved(self, task: Optional[SyntheticTask]) -> "AttackConfig":
        if self.eps is not None:
            return self
        if task is None:
            raise ValueError("eps is unset and no task is available to derive it")
        return replace(self, eps=default_epsilon(task, self.eps_scale))

    def to_dict(self) -> dict:
        return asdict(self)


def run_attack(m: ToyClassifier, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
               task: Optional[SyntheticTask] = None) -> A.Perturbation:
    cfg = cfg.resolved(task)
    k = cfg.kind
    if k == "identity":
        return A.Perturbation(np.zeros(x.shape[1]), kind=A.UNIVERSAL)
    if k == "fgsm":
        return A.fgsm(m, x, y, cfg.eps, cfg.norm)
    if k == "pgd":
        return A.pgd(m, x, y, cfg.eps, cfg.alpha, cfg.steps, cfg.norm)
    if k == "ifgsm_ll":
        return A.ifgsm_ll(m, x, cfg.eps, cfg.alpha, cfg.steps, cfg.norm)
    if k == "deepfool":
        return A.deepfool(m, x, cfg.max_iter, cfg.overshoot)
    if k == "cw":
        box = task.feature_range() if task is not None else None
        return A.cw(m, x, cfg.c, cfg.kappa, cfg.cw_steps, cfg.lr, cfg.binary_search_steps, box)
    if k == "uap":
        return A.uap(m, x, cfg.eps, cfg.th, cfg.max_epochs, cfg.norm, cfg.overshoot, cfg.max_iter,
                     seed=cfg.seed)
    if k == "gduap":
        return A.gduap(m, cfg.eps, iters=cfg.max_iter * 4, seed=cfg.seed, restarts=cfg.restarts,
                       norm=cfg.norm)
    raise AssertionError(k)


def evaluate_attack(m: ToyClassifier, task: SyntheticTask, attack: AttackConfig, name: Optional[str] = None,
                    model_name: str = "toy-mlp") -> RecordSet:
    """Attack every correctly classified sample and record the full
    post-attack ranking.

    An attack error for the batch is recorded in ``meta["errors"]`` and the
    samples are then scored unperturbed, so the record count always equals
    the number of correctly classified samples.
    """
    name = name or attack.kind
    cfg = attack.resolved(task)
    pred = m.predict(task.x)
    keep = np.flatnonzero(pred == task.y)
    x, y = task.x[keep], task.y[keep]
    errors = []
    try:
        pert = run_attack(m, x, y, cfg, task)
    except FoolMetricsError as exc:
        log.warning("attack %s failed: %s", name, exc)
        errors.append(f"{type(exc).__name__}: {exc}")
        pert = A.Perturbation(np.zeros(x.shape[1]), kind=A.UNIVERSAL)
    v = pert.v
    x_adv = x + v
    ranking = m.ranking(x_adv)
    post = ranking[:, 0]
    if pert.success is not None:
        succ = np.atleast_1d(pert.success)
        bad = np.flatnonzero(succ & (post == y))
        if bad.size:
            raise InvariantViolation(f"{name}: attack reported success but label did not flip",
                                     str(int(keep[bad[0]])))
    target = pert.info.get("target") if cfg.kind == "ifgsm_ll" else None
    records = [
        PredictionRecord.from_ranking(
            str(int(i)), int(yy), rk, None if target is None else int(target[j]))
        for j, (i, yy, rk) in enumerate(zip(keep, y, ranking))
    ]
    vv = np.broadcast_to(v, x.shape)
    meta = {
        "config": cfg.to_dict(),
        "eps": cfg.eps,
        "kind": pert.kind,
        "mean_linf": float(np.abs(vv).max(axis=1).mean()) if len(x) else 0.0,
        "mean_l2": float(np.linalg.norm(vv, axis=1).mean()) if len(x) else 0.0,
        "errors": errors,
    }
    for key in ("fooling_rate", "target_reached", "objective"):
        if key in pert.info:
            meta[f"attack_{key}"] = pert.info[key]
    return RecordSet(records, m.class_count, attack=name, model=model_name, meta=meta)


# -- configuration file ------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(AttackConfig)}


def _coerce(key, raw):
    typ = _FIELD_TYPES[key]
    if "float" in str(typ):
        return None if raw.lower() in ("", "none", "auto") else float(raw)
    if "int" in str(typ):
        return int(raw)
    return raw


def parse_attack_config(text: str, path=None) -> dict:
    """Read ``[section]`` blocks of ``key = value`` lines into named
    :class:`AttackConfig` objects.  A section's ``kind`` defaults to its
    name; keys in ``[DEFAULT]`` apply to every section."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text, source=str(path) if path else "<config>")
    out = {}
    for section in cp.sections():
        opts = dict(cp[section])
        opts.setdefault("kind", section)
        kw = {}
        for key, raw in opts.items():
            if key not in _FIELD_TYPES:
                raise ValueError(f"[{section}] unknown key {key!r}")
            kw[key] = _coerce(key, raw)
        out[section] = AttackConfig(**kw)
    return out


def read_attack_config(path: str | PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_attack_config(fh.read(), path)


def format_attack_config(configs: dict) -> str:
    lines = []
    for name, cfg in configs.items():
        lines.append(f"[{name}]")
        for key, value in cfg.to_dict().items():
            lines.append(f"{key} = {'auto' if value is None else value}")
        lines.append("")
    return "\n".join(lines)
