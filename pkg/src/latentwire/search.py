"""Sequential model-based search over the encoder design dictionary.

A simplified tree-structured Parzen estimator: the first trials sample the
prior, then the history splits at the top-quartile objective into good/bad
sets, each variable gets a kernel-density (numeric) or smoothed-frequency
(categorical) model per set, and the next point is the best of 24
candidates ranked by good-density over bad-density.  The objective is
maximized.  Proposals are serialized on the trial history and evaluated
one at a time, so a fixed seed reproduces the exact trial sequence.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DivergedError, SearchError

N_CANDIDATES = 24
GOOD_FRACTION = 0.25


@dataclass(frozen=True)
class QuantizedUniform:
    """Uniform on [low, high], snapped to multiples of q: value = round(u/q)*q."""

    low: float
    high: float
    q: float

    def sample(self, rng: np.random.Generator):
        return self.quantize(rng.uniform(self.low, self.high))

    def quantize(self, u: float):
        value = round(u / self.q) * self.q
        value = min(max(value, self.low), self.high)
        if float(value).is_integer() and float(self.q).is_integer():
            return int(value)
        return float(value)

    def contains(self, value) -> bool:
        if not (self.low <= value <= self.high):
            return False
        ratio = value / self.q
        return abs(ratio - round(ratio)) < 1e-9


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mean, sigma) re-drawn until it lands inside [low, high]."""

    mean: float
    sigma: float
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        for _ in range(1000):
            value = rng.normal(self.mean, self.sigma)
            if self.low <= value <= self.high:
                return float(value)
        return float(min(max(self.mean, self.low), self.high))

    def contains(self, value) -> bool:
        return self.low <= value <= self.high

    def pdf(self, value: float) -> float:
        z = (value - self.mean) / self.sigma
        return math.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def sample(self, rng: np.random.Generator):
        return self.choices[rng.integers(0, len(self.choices))]

    def contains(self, value) -> bool:
        return value in self.choices


MLP_CONFS = ((60, 20), (100, 70, 40, 10), (50, 40, 30, 20, 10), (100, 80, 60, 40, 20, 10))


@dataclass(frozen=True)
class SearchSpace:
    dimensions: dict

    @classmethod
    def default(cls) -> "SearchSpace":
        return cls(dimensions={
            "lstm1_units": QuantizedUniform(10, 200, 10),
            "lstm2_units": QuantizedUniform(10, 200, 10),
            "activation": Categorical(("elu", "relu", "tanh", "sigmoid")),
            "epochs": QuantizedUniform(100, 1000, 50),
            "learning_rate": TruncatedNormal(0.001, 0.01, 0.00001, 0.01),
            "mlp_conf": Categorical(MLP_CONFS),
            "latent_size": Categorical((2, 3, 4, 5)),
        })

    def validate_point(self, point: dict) -> None:
        if set(point) != set(self.dimensions):
            raise ValueError(f"point keys {sorted(point)} != space keys {sorted(self.dimensions)}")
        for name, dim in self.dimensions.items():
            if not dim.contains(point[name]):
                raise ValueError(f"{name}={point[name]!r} outside its declared support")


def sample_prior(space: SearchSpace, rng: np.random.Generator) -> dict:
    return {name: dim.sample(rng) for name, dim in space.dimensions.items()}


@dataclass
class Trial:
    number: int
    point: dict
    status: str  # "ok" | "diverged"
    objective: float | None
    duration_seconds: float

    def to_dict(self) -> dict:
        point = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.point.items()}
        return {"number": self.number, "status": self.status, "objective": self.objective,
                "duration_seconds": self.duration_seconds, "point": point}


@dataclass
class SearchResult:
    trials: list[Trial]
    best: Trial

    @property
    def ok_trials(self) -> list[Trial]:
        return [t for t in self.trials if t.status == "ok"]


# --- density models -------------------------------------------------------

def _numeric_support(dim) -> tuple[float, float]:
    return float(dim.low), float(dim.high)


def _prior_pdf(dim, value: float) -> float:
    if isinstance(dim, TruncatedNormal):
        return dim.pdf(value)
    low, high = _numeric_support(dim)
    return 1.0 / (high - low)


def _kernel_sigma(dim, count: int) -> float:
    low, high = _numeric_support(dim)
    return (high - low) / max(2, count)


def _numeric_density(dim, observed: list[float], value: float) -> float:
    """Parzen mixture over the observations plus one prior component."""
    sigma = _kernel_sigma(dim, len(observed))
    total = _prior_pdf(dim, value)
    for center in observed:
        z = (value - center) / sigma
        total += math.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))
    return total / (len(observed) + 1)


def _numeric_draw(dim, observed: list[float], rng: np.random.Generator):
    pick = int(rng.integers(0, len(observed) + 1))
    if pick == len(observed):
        return dim.sample(rng)
    sigma = _kernel_sigma(dim, len(observed))
    low, high = _numeric_support(dim)
    for _ in range(100):
        value = rng.normal(observed[pick], sigma)
        if low <= value <= high:
            break
    else:
        value = min(max(observed[pick], low), high)
    if isinstance(dim, QuantizedUniform):
        return dim.quantize(value)
    return float(value)


def _categorical_weights(dim: Categorical, observed: list) -> np.ndarray:
    counts = np.array([sum(1 for v in observed if v == c) for c in dim.choices], dtype=np.float64)
    weights = counts + 1.0
    return weights / weights.sum()


def _propose(space: SearchSpace, good: list[dict], bad: list[dict],
             rng: np.random.Generator, n_candidates: int) -> dict:
    """Best of n_candidates draws from the good model, scored good/bad."""
    best_point = None
    best_score = -math.inf
    for _ in range(n_candidates):
        point = {}
        log_score = 0.0
        for name, dim in space.dimensions.items():
            good_vals = [p[name] for p in good]
            bad_vals = [p[name] for p in bad]
            if isinstance(dim, Categorical):
                wg = _categorical_weights(dim, good_vals)
                wb = _categorical_weights(dim, bad_vals)
                idx = int(rng.choice(len(dim.choices), p=wg))
                point[name] = dim.choices[idx]
                log_score += math.log(wg[idx]) - math.log(wb[idx])
            else:
                value = _numeric_draw(dim, good_vals, rng)
                point[name] = value
                g = _numeric_density(dim, good_vals, float(value))
                b = _numeric_density(dim, bad_vals, float(value))
                log_score += math.log(g) - math.log(b)
        if log_score > best_score:
            best_score = log_score
            best_point = point
    return best_point


def run_search(space: SearchSpace, budget: int, objective_fn: Callable[[dict], float],
               seed: int, trial_log=None, n_candidates: int = N_CANDIDATES,
               good_fraction: float = GOOD_FRACTION) -> SearchResult:
    """Maximize objective_fn over the space with `budget` evaluations."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    n_startup = max(10, budget // 10)
    trials: list[Trial] = []
    log_path = Path(trial_log) if trial_log is not None else None
    if log_path is not None:
        log_path.write_text("")

    for number in range(budget):
        ok = [t for t in trials if t.status == "ok"]
        if number < n_startup or len(ok) < 2:
            point = sample_prior(space, rng)
        else:
            ranked = sorted(ok, key=lambda t: t.objective, reverse=True)
            n_good = max(1, math.ceil(good_fraction * len(ranked)))
            good = [t.point for t in ranked[:n_good]]
            bad = [t.point for t in ranked[n_good:]] or [t.point for t in ranked]
            point = _propose(space, good, bad, rng, n_candidates)
        space.validate_point(point)

        started = time.perf_counter()
        try:
            objective = float(objective_fn(point))
            trial = Trial(number=number, point=point, status="ok", objective=objective,
                          duration_seconds=time.perf_counter() - started)
        except DivergedError:
            trial = Trial(number=number, point=point, status="diverged", objective=None,
                          duration_seconds=time.perf_counter() - started)
        trials.append(trial)
        if log_path is not None:
            with log_path.open("a") as fh:
                fh.write(json.dumps(trial.to_dict()) + "\n")

    ok = [t for t in trials if t.status == "ok"]
    if not ok:
        raise SearchError("every trial diverged", trials=trials)
    best = max(ok, key=lambda t: t.objective)
    return SearchResult(trials=trials, best=best)


def spec_from_point(point: dict, input_dim: int, *, epochs_cap: int | None = None,
                    batch_size: int = 256, seed: int = 0):
    """Translate a sampled point into a buildable encoder description."""
    from .encoder import EncoderSpec
    from .nn.network import TrainingConfig

    epochs = int(point["epochs"])
    if epochs_cap is not None:
        epochs = min(epochs, epochs_cap)
    return EncoderSpec(
        input_dim=input_dim,
        latent_size=int(point["latent_size"]),
        lstm_units=(int(point["lstm1_units"]), int(point["lstm2_units"])),
        mlp_layers=tuple(point["mlp_conf"]),
        activation=point["activation"],
        training=TrainingConfig(learning_rate=float(point["learning_rate"]),
                                epochs=epochs, batch_size=batch_size, seed=seed),
    )


def objective_from_encoder(train, validation, *, epochs_cap: int = 50,
                           rows_cap: int = 20000, batch_size: int = 256,
                           seed: int = 0) -> Callable[[dict], float]:
    """Objective = validation accuracy of an encoder trained from the point.

    Trials run at desk scale: epochs clipped to epochs_cap and the training
    split subsampled to rows_cap (seeded), so a search finishes in minutes;
    the winner is meant to be retrained afterwards at its full budget.
    Divergence inside training surfaces as a diverged trial.
    """
    from .encoder import build_encoder, train_encoder

    rng = np.random.default_rng(seed)
    if len(train) > rows_cap:
        keep = np.sort(rng.choice(len(train), size=rows_cap, replace=False))
        train = train.take(keep)
    if len(validation) > rows_cap:
        keep = np.sort(rng.choice(len(validation), size=rows_cap, replace=False))
        validation = validation.take(keep)

    def objective(point: dict) -> float:
        spec = spec_from_point(point, train.dimension, epochs_cap=epochs_cap,
                               batch_size=batch_size, seed=seed)
        trained = train_encoder(build_encoder(spec), train, validation, spec.training)
        return trained.history[-1].val_accuracy

    return objective
