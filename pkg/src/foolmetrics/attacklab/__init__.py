"""Desk-scale attack laboratory: synthetic task, toy MLP, seven attacks."""

from .attacks import (
    Perturbation,
    cw,
    deepfool,
    fgsm,
    gduap,
    ifgsm_ll,
    least_likely,
    pgd,
    project,
    uap,
)
from .evaluate import (
    ATTACK_KINDS,
    STANDARD_ATTACKS,
    AttackConfig,
    evaluate_attack,
    parse_attack_config,
    read_attack_config,
    run_attack,
)
from .model import ToyClassifier, load_model, save_model, train_model
from .task import SyntheticTask, default_epsilon, generate_task, read_task, write_task


def input_gradient(m, x, y):
    return m.input_gradient(x, y)
