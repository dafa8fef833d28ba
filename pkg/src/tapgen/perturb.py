"""Perturbation search: penalty-method descent toward the target region.

A candidate minimizes

    d_Y(M(x_tilde), T) + lam * cost(x, x_tilde) + box_penalty + group_penalty

over x_tilde, starting from the individual x.  Descent runs in the model's
standardized coordinates with adaptive moment estimation; immutable features
receive zero gradient, the best iterate by objective is kept (so the search
can never do worse than staying put), coordinates that barely moved are
snapped back exactly, and the final point is rounded onto the coherent set
inside the individual's actionable box.  The reported epsilon (cost) and
delta (distance of M's output from the target region) are recomputed at
that discrete point.

Budgets are met by walking lam geometrically: down for a delta ceiling
(spend more until close enough), up for an epsilon ceiling (spend less until
affordable, with the zero-change candidate as the always-affordable floor).
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actionability import (
    CostModel,
    FeatureSchema,
    PenaltyConfig,
    cond,
    cost,
    cost_grad,
    penalty_actionable,
    penalty_coherence,
)
from .netcore import DenseClassifier, forward_cache, input_gradient, predict_proba
from .probspace import (
    DivergenceSpec,
    TargetSet,
    kl_divergence,
    target_distance,
    target_distance_grad,
)
from .rng import substream

__all__ = [
    "OptConfig",
    "TapCandidate",
    "DivergedError",
    "trivial_candidate",
    "generate_candidate",
    "BudgetOutcome",
    "meet_budget",
    "SweepResult",
    "frontier_sweep",
    "RepairAttempt",
    "RepairOutcome",
    "repair_on_rejection",
    "CandidateRecord",
    "write_frontier_csv",
    "FRONTIER_COLUMNS",
]


@dataclass(frozen=True)
class OptConfig:
    """Knobs for one descent run; ``lam`` prices cost against distance."""

    lam: float = 1.0
    lr: float = 0.05
    max_iters: int = 500
    tol: float = 1e-6
    patience: int = 10
    snap_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lam < 0.0 or not math.isfinite(self.lam):
            raise ValueError("lam must be finite and nonnegative")
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")
        if self.max_iters < 1 or self.patience < 1:
            raise ValueError("max_iters and patience must be positive")
        if self.tol < 0.0 or self.snap_tol < 0.0:
            raise ValueError("tolerances must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True, eq=False)
class TapCandidate:
    """A proposed move for one individual, priced and scored."""

    x: np.ndarray
    x_tilde: np.ndarray
    lam: float
    epsilon: float
    delta: float
    objective: float
    iterations: int
    verified: bool | None = None
    discrepancy: float | None = None

    @property
    def is_noop(self) -> bool:
        return bool(np.array_equal(self.x, self.x_tilde))

    def with_verdict(self, verdict) -> "TapCandidate":
        return dataclasses.replace(self, verified=verdict.accepted,
                                   discrepancy=verdict.discrepancy)


class DivergedError(RuntimeError):
    """Descent hit a non-finite objective or gradient."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _check_problem(model: DenseClassifier, schema: FeatureSchema,
                   target: TargetSet) -> None:
    if model.num_features != len(schema.features):
        raise ValueError(
            f"model expects {model.num_features} features, "
            f"schema has {len(schema.features)}"
        )
    if model.num_classes != target.num_classes:
        raise ValueError(
            f"model has {model.num_classes} classes, "
            f"target set expects {target.num_classes}"
        )
    if not np.all(model.std > 0):
        raise ValueError("model standardization has nonpositive scales")


def trivial_candidate(model: DenseClassifier, schema: FeatureSchema,
                      cm: CostModel, target: TargetSet, x: np.ndarray,
                      div: DivergenceSpec | None = None) -> TapCandidate:
    """The stay-put candidate: x_tilde = x, epsilon 0, lam infinite."""
    div = div if div is not None else kl_divergence()
    _check_problem(model, schema, target)
    x = schema.check_vector(x)
    delta = target_distance(predict_proba(model, x), target, div)
    return TapCandidate(
        x=_frozen(x), x_tilde=_frozen(x), lam=math.inf,
        epsilon=float(cost(x, x, cm, schema)), delta=float(delta),
        objective=float(delta), iterations=0,
    )


def generate_candidate(model: DenseClassifier, schema: FeatureSchema,
                       cm: CostModel, target: TargetSet, x: np.ndarray,
                       oc: OptConfig, div: DivergenceSpec | None = None,
                       penalty: PenaltyConfig | None = None,
                       x_start: np.ndarray | None = None) -> TapCandidate:
    """Run one descent at oc.lam and return the discretized best point."""
    div = div if div is not None else kl_divergence()
    penalty = penalty if penalty is not None else PenaltyConfig()
    _check_problem(model, schema, target)
    x = schema.check_vector(x)
    if not schema.is_coherent(x):
        raise ValueError("origin point is not coherent under the schema")
    lo, hi = schema.box_for(x)
    if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
        raise ValueError("origin point lies outside the feature bounds")

    mean, std = model.mean, model.std
    mutable = schema.mutable_mask
    u_origin = (x - mean) / std
    start = x if x_start is None else schema.check_vector(x_start)
    u = (start - mean) / std

    def evaluate(u_now: np.ndarray, lam_eff: float
                 ) -> tuple[float, np.ndarray]:
        """Full-lam objective for tracking, lam_eff gradient for stepping."""
        x_now = u_now * std + mean
        cache = forward_cache(model, x_now)
        dist = target_distance(cache.probs, target, div)
        grad_dist = input_gradient(model, x_now, target_distance_grad(
            cache.probs, target, div), cache)
        box_val, box_grad = penalty_actionable(x_now, schema, penalty, (lo, hi))
        grp_val, grp_grad = penalty_coherence(x_now, schema, penalty)
        value = dist + oc.lam * cost(x, x_now, cm, schema) + box_val + grp_val
        step_grad = (grad_dist + lam_eff * cost_grad(x, x_now, cm, schema)
                     + box_grad + grp_grad) * std
        step_grad[~mutable] = 0.0
        return value, step_grad

    # Two-phase schedule: the cost term is muted for the first half of the
    # run and switches on at full weight afterwards.  From the origin the
    # cost gradient vanishes while a saturated softmax pulls toward the
    # target only minusculely, so a constant weight traps the search at the
    # origin; chasing the target first and then letting the pull-back
    # retrace the trade-off curve covers both regimes, and the best
    # full-objective iterate is what gets returned either way.
    warmup = oc.max_iters // 2

    def effective_lam(t: int) -> float:
        return oc.lam if t > warmup else 0.0

    value, grad = evaluate(u, effective_lam(1))
    trace = [value]
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise DivergedError("objective not finite at the starting point", trace)
    best_value, best_u = value, u.copy()
    prev = value
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    stall = 0
    iterations = 0
    for t in range(1, oc.max_iters + 1):
        # Unit-normalize so adaptive steps survive the saturated regime,
        # where the raw gradient can sit below the moment-epsilon floor.
        norm = float(np.linalg.norm(grad))
        if norm > 0.0:
            grad = grad / norm
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad * grad
        m_hat = m / (1.0 - 0.9 ** t)
        v_hat = v / (1.0 - 0.999 ** t)
        u = u - oc.lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        value, grad = evaluate(u, effective_lam(t + 1))
        trace.append(value)
        iterations = t
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            raise DivergedError(
                f"objective diverged at iteration {t} (lam={oc.lam:g})", trace
            )
        if value < best_value:
            best_value, best_u = value, u.copy()
        if t > warmup:
            stall = stall + 1 if abs(value - prev) < oc.tol else 0
        prev = value
        if stall >= oc.patience:
            break

    moved = best_u.copy()
    dust = np.abs(moved - u_origin) < oc.snap_tol
    moved[dust] = u_origin[dust]
    x_tilde = cond(moved * std + mean, schema, (lo, hi))

    epsilon = float(cost(x, x_tilde, cm, schema))
    delta = float(target_distance(predict_proba(model, x_tilde), target, div))
    objective = delta if epsilon == 0.0 else delta + oc.lam * epsilon
    return TapCandidate(
        x=_frozen(x), x_tilde=_frozen(x_tilde), lam=oc.lam,
        epsilon=epsilon, delta=delta, objective=objective,
        iterations=iterations,
    )


@dataclass(frozen=True)
class BudgetOutcome:
    candidate: TapCandidate
    met: bool
    budget: str
    limit: float
    trials: tuple[TapCandidate, ...]


def meet_budget(model: DenseClassifier, schema: FeatureSchema, cm: CostModel,
                target: TargetSet, x: np.ndarray, oc: OptConfig,
                epsilon_max: float | None = None,
                delta_max: float | None = None,
                trials: int = 20, factor: float = 2.0,
                div: DivergenceSpec | None = None,
                penalty: PenaltyConfig | None = None) -> BudgetOutcome:
    """Search lam geometrically until one ceiling holds.

    With ``delta_max`` the zero-change candidate is tried first, then lam
    walks down from oc.lam, returning the first candidate close enough to
    the target; an unmet budget returns the closest attempt with met=False.
    With ``epsilon_max`` lam walks up from oc.lam and the first affordable
    candidate wins; the zero-change candidate is the fallback, so an epsilon
    budget is always met.
    """
    if (epsilon_max is None) == (delta_max is None):
        raise ValueError("give exactly one of epsilon_max or delta_max")
    if trials < 1 or factor <= 1.0:
        raise ValueError("need trials >= 1 and factor > 1")
    noop = trivial_candidate(model, schema, cm, target, x, div)
    tried: list[TapCandidate] = []

    if delta_max is not None:
        if delta_max < 0.0:
            raise ValueError("delta_max must be nonnegative")
        if noop.delta <= delta_max:
            return BudgetOutcome(noop, True, "delta", delta_max, (noop,))
        lam = oc.lam
        for _ in range(trials):
            cand = generate_candidate(model, schema, cm, target, x,
                                      dataclasses.replace(oc, lam=lam),
                                      div=div, penalty=penalty)
            tried.append(cand)
            if cand.delta <= delta_max:
                return BudgetOutcome(cand, True, "delta", delta_max, tuple(tried))
            lam /= factor
        best = min(tried, key=lambda c: c.delta)
        return BudgetOutcome(best, False, "delta", delta_max, tuple(tried))

    if epsilon_max < 0.0:
        raise ValueError("epsilon_max must be nonnegative")
    lam = oc.lam
    for _ in range(trials):
        cand = generate_candidate(model, schema, cm, target, x,
                                  dataclasses.replace(oc, lam=lam),
                                  div=div, penalty=penalty)
        tried.append(cand)
        if cand.epsilon <= epsilon_max:
            return BudgetOutcome(cand, True, "epsilon", epsilon_max, tuple(tried))
        lam *= factor
    tried.append(noop)
    return BudgetOutcome(noop, True, "epsilon", epsilon_max, tuple(tried))


@dataclass(frozen=True)
class SweepResult:
    candidates: tuple[TapCandidate, ...]
    failures: tuple[tuple[float, str], ...]

    def cheapest_with_delta_below(self, delta_max: float) -> TapCandidate | None:
        for cand in self.candidates:
            if cand.delta <= delta_max:
                return cand
        return None


def frontier_sweep(model: DenseClassifier, schema: FeatureSchema,
                   cm: CostModel, target: TargetSet, x: np.ndarray,
                   lambdas, oc: OptConfig, include_noop: bool = True,
                   div: DivergenceSpec | None = None,
                   penalty: PenaltyConfig | None = None) -> SweepResult:
    """One candidate per lam, sorted by epsilon; diverged runs are logged."""
    candidates: list[TapCandidate] = []
    failures: list[tuple[float, str]] = []
    for lam in lambdas:
        try:
            candidates.append(generate_candidate(
                model, schema, cm, target, x,
                dataclasses.replace(oc, lam=float(lam)),
                div=div, penalty=penalty,
            ))
        except DivergedError as err:
            failures.append((float(lam), str(err)))
    if include_noop:
        candidates.append(trivial_candidate(model, schema, cm, target, x, div))
    candidates.sort(key=lambda c: (c.epsilon, c.delta))
    return SweepResult(candidates=tuple(candidates), failures=tuple(failures))


@dataclass(frozen=True)
class RepairAttempt:
    strategy: str
    attempt: int
    candidate: TapCandidate | None
    error: str | None = None


@dataclass(frozen=True)
class RepairOutcome:
    candidate: TapCandidate
    verified: bool
    strategy: str | None
    attempts: tuple[RepairAttempt, ...]


def _tightened(target: TargetSet, step: float) -> TargetSet:
    p = min(target.p + step, 1.0) if target.desirable else target.p
    q = max(target.q - step, 0.0) if target.undesirable else target.q
    return TargetSet(target.num_classes, target.desirable,
                     target.undesirable, p, q)


def repair_on_rejection(model: DenseClassifier, verifier, cal,
                        schema: FeatureSchema, cm: CostModel,
                        target: TargetSet, rejected: TapCandidate,
                        oc: OptConfig,
                        strategies=("decrease_lambda", "shrink_target",
                                    "random_restart"),
                        attempts_per_strategy: int = 2,
                        div: DivergenceSpec | None = None,
                        penalty: PenaltyConfig | None = None) -> RepairOutcome:
    """Re-search after a verifier rejection, stopping at the first accept.

    decrease_lambda halves lam per attempt to allow a larger move;
    shrink_target tightens the thresholds by 0.05 per attempt so descent
    aims deeper into the region (delta is still reported against the
    original target); random_restart reruns from a start jittered by half
    a standard deviation per attempt, enough to put descent into a
    different basin rather than retracing the rejected path.  If nothing
    passes, the smallest-discrepancy candidate seen (including the
    rejected one) is returned with verified=False.
    """
    from .verify import verify_pair

    div = div if div is not None else kl_divergence()
    x = np.asarray(rejected.x, dtype=float)
    attempts: list[RepairAttempt] = []
    for strategy in strategies:
        if strategy not in ("decrease_lambda", "shrink_target", "random_restart"):
            raise ValueError(f"unknown repair strategy {strategy!r}")
        for a in range(1, attempts_per_strategy + 1):
            try:
                if strategy == "decrease_lambda":
                    cand = generate_candidate(
                        model, schema, cm, target, x,
                        dataclasses.replace(oc, lam=oc.lam / (2.0 ** a)),
                        div=div, penalty=penalty,
                    )
                elif strategy == "shrink_target":
                    cand = generate_candidate(
                        model, schema, cm, _tightened(target, 0.05 * a), x,
                        oc, div=div, penalty=penalty,
                    )
                    delta = target_distance(
                        predict_proba(model, cand.x_tilde), target, div)
                    objective = delta if cand.epsilon == 0.0 else (
                        delta + cand.lam * cand.epsilon)
                    cand = dataclasses.replace(cand, delta=delta,
                                               objective=objective)
                else:
                    rng = substream(oc.seed, f"repair-restart-{a}")
                    jitter = 0.5 * a * model.std * rng.standard_normal(x.size)
                    jitter[~schema.mutable_mask] = 0.0
                    lo, hi = schema.box_for(x)
                    start = np.clip(x + jitter, lo, hi)
                    cand = generate_candidate(
                        model, schema, cm, target, x, oc,
                        div=div, penalty=penalty, x_start=start,
                    )
            except DivergedError as err:
                attempts.append(RepairAttempt(strategy, a, None, str(err)))
                continue
            cand = cand.with_verdict(
                verify_pair(model, verifier, cal, x, cand.x_tilde))
            attempts.append(RepairAttempt(strategy, a, cand))
            if cand.verified:
                return RepairOutcome(cand, True, strategy, tuple(attempts))

    pool = [(att.candidate.discrepancy, att.strategy, att.candidate)
            for att in attempts if att.candidate is not None]
    if rejected.discrepancy is not None:
        pool.append((rejected.discrepancy, None, rejected))
    if not pool:
        return RepairOutcome(rejected, False, None, tuple(attempts))
    _, strategy, best = min(pool, key=lambda item: item[0])
    return RepairOutcome(best, False, strategy, tuple(attempts))


# ---------------------------------------------------------------------------
# frontier serialization

FRONTIER_COLUMNS = ("individual_id", "method", "lambda", "epsilon", "delta",
                    "discrepancy", "verified", "iterations")


@dataclass(frozen=True)
class CandidateRecord:
    individual_id: int
    method: str
    candidate: TapCandidate


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_frontier_csv(path, records) -> None:
    """One row per candidate; floats use shortest round-trip formatting."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRONTIER_COLUMNS)
        for rec in records:
            c = rec.candidate
            writer.writerow([
                _fmt(rec.individual_id), rec.method, _fmt(c.lam),
                _fmt(c.epsilon), _fmt(c.delta), _fmt(c.discrepancy),
                _fmt(c.verified), _fmt(c.iterations),
            ])
