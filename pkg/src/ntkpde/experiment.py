"""Turn a normalized configuration into problems, samples and training settings."""

from __future__ import annotations

from .barron import BarronRepresentation
from .boundary import lift_time_dependent
from .operator import CoefficientField, PdeProblem, SampleSet
from .training import TrainConfig


def _table(cfg, name):
    return cfg.data.get(name, {}) if hasattr(cfg, "data") else cfg.get(name, {})


def build_coefficients(cfg):
    prob = _table(cfg, "problem")
    make = CoefficientField.from_divergence_form if prob["form"] == "divergence" else CoefficientField.from_expressions
    return make(prob["dim"], prob["A"], prob["b"], prob["c"], bound=prob["bound"])


def build_barron(cfg):
    barron = _table(cfg, "problem.barron")
    if not barron:
        return None
    return BarronRepresentation(barron["a"], barron["w"], barron["p"], build_coefficients(cfg), barron["rescale"])


def build_problem(cfg):
    """Return ``(problem, barron_rep)``; the representation is ``None`` for expression targets."""
    rep = build_barron(cfg)
    if rep is not None:
        problem = rep.as_problem()
    else:
        prob = _table(cfg, "problem")
        problem = PdeProblem(build_coefficients(cfg), prob["rhs"], rhs_bound=prob["rhs_bound"])
    time = _table(cfg, "problem.time")
    if time:
        problem = lift_time_dependent(problem, time["kind"], time["T"], convention=time["convention"])
    return problem, rep


def build_augmentation(cfg):
    from .config import build_augmentation as _build

    return _build(cfg.data if hasattr(cfg, "data") else cfg)


def build_samples(cfg, dim, aug=None, n=None):
    samples = _table(cfg, "samples")
    seed = samples.get("seed", _table(cfg, "")["seed"])
    low, high = aug.interior() if aug is not None else (0.0, 1.0)
    return SampleSet.uniform(n or samples["n"], dim, seed=seed, low=low, high=high)


def build_train_config(cfg):
    tr = _table(cfg, "train")
    diag = _table(cfg, "diagnostics")
    return TrainConfig(
        width=tr["width"],
        gamma=tr.get("gamma"),
        lr=tr.get("lr"),
        steps=tr["steps"],
        asi=tr["asi"],
        reg_lambda=tr["lambda"],
        seed=tr.get("seed", _table(cfg, "")["seed"] + 1),
        cadence=tr.get("cadence"),
        gram_cadence=diag["gram_cadence"],
        gram_w=diag["gram_w"],
    )
