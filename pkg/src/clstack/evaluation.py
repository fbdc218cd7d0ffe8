"""Cross-validation protocol and almost-stochastic-order model comparison.

The evaluation scheme is k-fold cross-validation with random splits,
replicated over several seeds; reported numbers are averages of the per-seed
CV means.  Model pairs are compared with the ASO test: the violation ratio
of almost stochastic dominance is computed from empirical quantile
functions, a bootstrap estimates its spread, and the reported
``epsilon_min`` is the confidence-adjusted ratio (0 means the first model
dominates, 1 the opposite).  Multiple comparisons use Bonferroni-adjusted
confidence levels.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .models import ModelConfig
from .store import EmbeddingDataset
from .training import TrainConfig, TrainingDivergedError, train_fold


def kfold_split(n: int, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded random split into k (train, validation) index pairs.

    Validation folds are disjoint, differ in size by at most one, and jointly
    cover range(n).  No stratification.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, k)
    splits = []
    for i in range(k):
        train = np.concatenate([parts[j] for j in range(k) if j != i])
        splits.append((train, parts[i]))
    return splits


def accuracy(predictions, labels) -> float:
    """Fraction of exact matches."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise ValueError("empty prediction list")
    return float(np.mean(predictions == labels))


@dataclass
class EvalReport:
    """Per-(seed, fold) accuracies with aggregate means and failure records."""

    model: str
    variant: str
    dataset: str
    seeds: list[int]
    folds: int
    accuracies: list[list[float | None]]
    seed_means: list[float | None]
    grand_mean: float | None
    failures: list[dict]
    wall_clock: list[list[float]] | None = None  # seconds per fold; not serialized

    def to_json_dict(self) -> dict:
        return {
            "model": self.model,
            "variant": self.variant,
            "dataset": self.dataset,
            "seeds": self.seeds,
            "folds": self.folds,
            "accuracies": self.accuracies,
            "seed_means": self.seed_means,
            "grand_mean": self.grand_mean,
            "failures": self.failures,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EvalReport":
        return cls(
            model=data["model"],
            variant=data["variant"],
            dataset=data["dataset"],
            seeds=list(data["seeds"]),
            folds=data["folds"],
            accuracies=[list(row) for row in data["accuracies"]],
            seed_means=list(data["seed_means"]),
            grand_mean=data["grand_mean"],
            failures=list(data["failures"]),
        )


def _fold_task(args) -> tuple[float | None, int | None, float]:
    """Train one fold; returns (accuracy, diverged-step, wall seconds)."""
    train_x, train_y, val_x, val_y, mcfg_dict, tcfg_dict = args
    mcfg = ModelConfig.from_dict(mcfg_dict)
    tcfg = TrainConfig.from_dict(tcfg_dict)
    started = time.perf_counter()
    try:
        result = train_fold(train_x, train_y, val_x, val_y, mcfg, tcfg)
    except TrainingDivergedError as exc:
        return None, exc.step, time.perf_counter() - started
    return result.accuracy, None, time.perf_counter() - started


def run_cv(
    ds: EmbeddingDataset,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    seeds: list[int],
    k: int = 5,
    n_workers: int = 1,
    model: str | None = None,
    dataset: str = "synthetic",
) -> EvalReport:
    """k-fold cross-validation replicated over seeds.

    Every seed draws fresh folds and fresh initializations; fold f of seed s
    trains with RNG stream ``s ^ f``.  Failed (diverged) folds are excluded
    from the means and listed in ``failures``.
    """
    ds.validate()
    tasks = []
    for seed in seeds:
        for fold_idx, (train_idx, val_idx) in enumerate(kfold_split(ds.n_samples, k, seed)):
            fold_tcfg = TrainConfig.from_dict({**tcfg.to_dict(), "seed": seed ^ fold_idx})
            tasks.append(
                (
                    ds.stacks[train_idx],
                    ds.labels[train_idx],
                    ds.stacks[val_idx],
                    ds.labels[val_idx],
                    mcfg.to_dict(),
                    fold_tcfg.to_dict(),
                )
            )

    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_fold_task, tasks))
    else:
        outcomes = [_fold_task(t) for t in tasks]

    accuracies: list[list[float | None]] = []
    wall: list[list[float]] = []
    failures: list[dict] = []
    for s_idx, seed in enumerate(seeds):
        row: list[float | None] = []
        wall_row: list[float] = []
        for fold_idx in range(k):
            acc, failed_step, seconds = outcomes[s_idx * k + fold_idx]
            row.append(acc)
            wall_row.append(seconds)
            if acc is None:
                failures.append({"seed": seed, "fold": fold_idx, "step": failed_step})
        accuracies.append(row)
        wall.append(wall_row)

    seed_means = [
        (float(np.mean([a for a in row if a is not None])) if any(a is not None for a in row) else None)
        for row in accuracies
    ]
    valid_means = [m for m in seed_means if m is not None]
    grand_mean = float(np.mean(valid_means)) if valid_means else None

    return EvalReport(
        model=model if model is not None else mcfg.variant,
        variant=mcfg.variant,
        dataset=dataset,
        seeds=list(seeds),
        folds=k,
        accuracies=accuracies,
        seed_means=seed_means,
        grand_mean=grand_mean,
        failures=failures,
        wall_clock=wall,
    )


@dataclass
class AsoResult:
    """Confidence-adjusted violation ratio for one ordered model pair."""

    eps_min: float
    alpha: float
    n_a: int
    n_b: int
    n_bootstrap: int


def _quantile_indices(n: int, grid_points: int) -> np.ndarray:
    """Inverse-CDF sample indices for the midpoint grid on (0, 1)."""
    t = (np.arange(grid_points) + 0.5) / grid_points
    return np.clip(np.ceil(t * n).astype(np.int64) - 1, 0, n - 1)


def violation_ratio(scores_a, scores_b, grid_points: int = 1000) -> float:
    """Squared violation ratio of 'A almost stochastically dominates B'.

    Integrates max(F_B^-1 - F_A^-1, 0)^2 over a uniform quantile grid and
    normalizes by the full squared quantile distance; 1.0 when the quantile
    functions coincide (zero denominator).
    """
    a = np.sort(np.asarray(scores_a, dtype=np.float64))
    b = np.sort(np.asarray(scores_b, dtype=np.float64))
    qa = a[_quantile_indices(a.size, grid_points)]
    qb = b[_quantile_indices(b.size, grid_points)]
    return _violation_ratio(qa, qb)[0]


def _violation_ratio(qa: np.ndarray, qb: np.ndarray) -> tuple[float, float]:
    """(ratio, denominator) of the squared violation of 'A dominates B'."""
    diff = qb - qa
    denom = float(np.sum(diff * diff))
    num = float(np.sum(np.square(np.maximum(diff, 0.0))))
    return (num / denom if denom > 0 else 1.0), denom


def aso_epsilon_min(
    scores_a,
    scores_b,
    alpha: float = 0.05,
    n_bootstrap: int = 1000,
    seed: int = 0,
    grid_points: int = 1000,
) -> AsoResult:
    """Almost-stochastic-order comparison of score samples A against B.

    The empirical violation ratio is integrated on a uniform quantile grid;
    a bootstrap (resampling both sides with replacement) estimates its
    standard deviation, and ``eps_min = clip(ratio + Phi^-1(alpha) * sd, 0, 1)``.
    Identical quantile functions (zero denominator) report 1.0: no dominance
    is claimed.
    """
    a = np.sort(np.asarray(scores_a, dtype=np.float64))
    b = np.sort(np.asarray(scores_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("score samples must be nonempty")
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")

    ia = _quantile_indices(a.size, grid_points)
    ib = _quantile_indices(b.size, grid_points)
    ratio, denom = _violation_ratio(a[ia], b[ib])
    if denom == 0.0:
        return AsoResult(1.0, alpha, a.size, b.size, n_bootstrap)

    rng = np.random.default_rng(seed)
    resampled_a = np.sort(a[rng.integers(0, a.size, size=(n_bootstrap, a.size))], axis=1)
    resampled_b = np.sort(b[rng.integers(0, b.size, size=(n_bootstrap, b.size))], axis=1)
    diff = resampled_b[:, ib] - resampled_a[:, ia]
    denoms = np.sum(diff * diff, axis=1)
    nums = np.sum(np.square(np.maximum(diff, 0.0)), axis=1)
    ratios = np.where(denoms > 0, nums / np.where(denoms > 0, denoms, 1.0), 1.0)
    sd = float(np.std(ratios, ddof=1)) if n_bootstrap > 1 else 0.0

    eps_min = ratio + NormalDist().inv_cdf(alpha) * sd
    return AsoResult(float(np.clip(eps_min, 0.0, 1.0)), alpha, a.size, b.size, n_bootstrap)


@dataclass
class ComparisonResult:
    """Pairwise eps_min matrix over a set of models."""

    models: list[str]
    matrix: list[list[float | None]]  # None on the diagonal
    alpha: float
    adjusted_alpha: float
    n_comparisons: int
    scores: dict[str, list[float]]

    def to_json_dict(self) -> dict:
        return {
            "models": self.models,
            "alpha": self.alpha,
            "adjusted_alpha": self.adjusted_alpha,
            "n_comparisons": self.n_comparisons,
            "eps_min": self.matrix,
            "scores": self.scores,
        }

    def to_text(self) -> str:
        """Aligned table; rows dominate columns where eps_min is 0."""
        width = max(12, max(len(m) for m in self.models) + 2)
        lines = ["".ljust(width) + "".join(m.ljust(width) for m in self.models)]
        for name, row in zip(self.models, self.matrix):
            cells = ["-".ljust(width) if v is None else f"{v:.3f}".ljust(width) for v in row]
            lines.append(name.ljust(width) + "".join(cells))
        return "\n".join(lines)


def compare_all(
    reports: list[EvalReport],
    alpha: float = 0.05,
    n_bootstrap: int = 1000,
    seed: int = 0,
) -> ComparisonResult:
    """Pairwise ASO over models, stacking per-seed CV means across datasets.

    Reports sharing a ``model`` label contribute their seed means to one
    score list (stacked in input order).  The confidence level is Bonferroni
    adjusted by the number of ordered comparisons m*(m-1).
    """
    if len(reports) < 2:
        raise ValueError(f"need at least 2 reports, got {len(reports)}")
    scores: dict[str, list[float]] = {}
    for report in reports:
        means = [m for m in report.seed_means if m is not None]
        scores.setdefault(report.model, []).extend(means)
    models = list(scores)
    if len(models) < 2:
        raise ValueError("need at least 2 distinct models to compare")
    counts = {name: len(vals) for name, vals in scores.items()}
    if len(set(counts.values())) != 1:
        raise ValueError(f"mismatched score counts across models: {counts}")

    m = len(models)
    n_comparisons = m * (m - 1)
    adjusted = alpha / n_comparisons
    matrix: list[list[float | None]] = [[None] * m for _ in range(m)]
    for i, name_a in enumerate(models):
        for j, name_b in enumerate(models):
            if i == j:
                continue
            result = aso_epsilon_min(
                scores[name_a],
                scores[name_b],
                alpha=adjusted,
                n_bootstrap=n_bootstrap,
                seed=seed + i * m + j,
            )
            matrix[i][j] = result.eps_min
    return ComparisonResult(
        models=models,
        matrix=matrix,
        alpha=alpha,
        adjusted_alpha=adjusted,
        n_comparisons=n_comparisons,
        scores=scores,
    )
