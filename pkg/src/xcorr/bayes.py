"""Self-tuning Bayesian prediction.

Hypotheses for one output are "targeted on single input i" for each i,
plus "untargeted".  Behavioral evidence is which accounts saw the
output; contextual evidence is how often it was displayed next to each
input.  Likelihoods are exact Bernoulli-count products computed in log
space; the composite model averages the two posteriors hypothesis-wise.
Parameter learning alternates prediction with moment-matching
re-estimation until the parameters stop moving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .core_model import Combination
from .errors import DomainError
from .placement import PlacementMatrix
from .prediction import Prediction, Verdict

BEHAVIORAL_MODEL = "behavioral"
CONTEXTUAL_MODEL = "contextual"
COMPOSITE_MODEL = "composite"

_PROB_FLOOR = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """Service-behavior parameters plus hypothesis priors.

    ``priors``, when given, lists positive weights for (D_0..D_{N-1},
    untargeted) and is normalized internally, so rescaling all entries
    never changes a verdict; None means uniform 1/(N+1).
    """

    p_in: float = 0.7
    p_out: float = 0.01
    p_empty: float = 0.1
    priors: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.p_out < self.p_in < 1.0:
            raise DomainError(
                f"need 0 < p_out < p_in < 1, got ({self.p_out}, {self.p_in})"
            )
        if not 0.0 < self.p_empty < 1.0:
            raise DomainError(f"need 0 < p_empty < 1, got {self.p_empty}")
        if self.priors is not None:
            if len(self.priors) < 2 or any(w <= 0 for w in self.priors):
                raise DomainError("priors must be >= 2 positive weights")

    def log_priors(self, n_inputs: int) -> np.ndarray:
        """Normalized log prior over (D_0..D_{N-1}, untargeted)."""
        if self.priors is None:
            return np.full(n_inputs + 1, -math.log(n_inputs + 1))
        if len(self.priors) != n_inputs + 1:
            raise DomainError(
                f"priors have {len(self.priors)} entries, need {n_inputs + 1}"
            )
        w = np.log(np.asarray(self.priors, dtype=float))
        return w - _logsumexp(w)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_in, self.p_out, self.p_empty)


DEFAULT_INIT = ModelParams(p_in=0.7, p_out=0.01, p_empty=0.1)


def _logsumexp(v: np.ndarray) -> float:
    hi = float(np.max(v))
    return hi + math.log(float(np.sum(np.exp(v - hi))))


@dataclass(frozen=True, eq=False)
class Posterior:
    """Probability over (D_0..D_{N-1}, untargeted); last entry is the
    untargeted hypothesis.  ``log_normalizer`` is the log evidence."""

    probabilities: np.ndarray
    log_normalizer: float

    def __post_init__(self):
        self.probabilities.setflags(write=False)

    @property
    def n_inputs(self) -> int:
        return len(self.probabilities) - 1

    def prob_input(self, i: int) -> float:
        return float(self.probabilities[i])

    @property
    def prob_untargeted(self) -> float:
        return float(self.probabilities[-1])

    def argmax_hypothesis(self) -> int:
        """Index of the winning hypothesis; ties go to the lowest input
        ID (the untargeted hypothesis sits last, so inputs win ties)."""
        return int(np.argmax(self.probabilities))


def _posterior_from_loglik(loglik: np.ndarray, params: ModelParams) -> Posterior:
    log_post = loglik + params.log_priors(len(loglik) - 1)
    z = _logsumexp(log_post)
    probs = np.exp(log_post - z)
    probs /= probs.sum()
    return Posterior(probabilities=probs, log_normalizer=z)


# ------------------------------------------------------------ likelihoods


def behavioral_likelihood(
    active_accounts: Iterable[int],
    input_accounts: Iterable[int] | None,
    n_accounts: int,
    params: ModelParams,
) -> float:
    """Log-likelihood of A_k under one hypothesis.

    For input hypothesis A_i: every account is an independent Bernoulli,
    p_in inside A_i and p_out outside; for the untargeted hypothesis
    every account sees the output with p_empty.
    """
    a_k = frozenset(int(j) for j in active_accounts)
    k = len(a_k)
    if input_accounts is None:
        return k * math.log(params.p_empty) + (n_accounts - k) * math.log1p(
            -params.p_empty
        )
    a_i = frozenset(int(j) for j in input_accounts)
    hit = len(a_i & a_k)
    return (
        hit * math.log(params.p_in)
        + (len(a_i) - hit) * math.log1p(-params.p_in)
        + (k - hit) * math.log(params.p_out)
        + (n_accounts - len(a_i) - k + hit) * math.log1p(-params.p_out)
    )


def contextual_likelihood(
    counts: Sequence[int] | np.ndarray,
    input_id: int | None,
    params: ModelParams,
) -> float:
    """Log-likelihood of the per-input display counts under one
    hypothesis: x_i log p_in + (sum - x_i) log p_out, or sum log p_empty
    for untargeted."""
    x = np.asarray(counts, dtype=float)
    if np.any(x < 0):
        raise DomainError("display counts must be >= 0")
    total = float(x.sum())
    if input_id is None:
        return total * math.log(params.p_empty)
    xi = float(x[input_id])
    return xi * math.log(params.p_in) + (total - xi) * math.log(params.p_out)


def behavioral_posterior(
    active_accounts: Iterable[int],
    placement: PlacementMatrix,
    params: ModelParams,
) -> Posterior:
    mem = placement.membership
    m, n = mem.shape
    ak = np.zeros(m, dtype=bool)
    idx = [int(j) for j in active_accounts]
    if idx and (min(idx) < 0 or max(idx) >= m):
        raise DomainError(f"active accounts outside 0..{m - 1}")
    ak[idx] = True
    k = int(ak.sum())
    hit = mem[ak].sum(axis=0).astype(float)  # |A_i  ∩ A_k| per input
    size = mem.sum(axis=0).astype(float)  # |A_i| per input
    loglik = np.empty(n + 1)
    loglik[:n] = (
        hit * math.log(params.p_in)
        + (size - hit) * math.log1p(-params.p_in)
        + (k - hit) * math.log(params.p_out)
        + (m - size - k + hit) * math.log1p(-params.p_out)
    )
    loglik[n] = k * math.log(params.p_empty) + (m - k) * math.log1p(-params.p_empty)
    return _posterior_from_loglik(loglik, params)


def contextual_posterior(
    counts: Sequence[int] | np.ndarray, params: ModelParams
) -> Posterior:
    x = np.asarray(counts, dtype=float)
    if np.any(x < 0):
        raise DomainError("display counts must be >= 0")
    n = len(x)
    total = float(x.sum())
    loglik = np.empty(n + 1)
    loglik[:n] = x * math.log(params.p_in) + (total - x) * math.log(params.p_out)
    loglik[n] = total * math.log(params.p_empty)
    return _posterior_from_loglik(loglik, params)


# -------------------------------------------------------------- predict


def bayes_predict(
    active_accounts: Iterable[int] | None = None,
    contextual_counts: Sequence[int] | np.ndarray | None = None,
    placement: PlacementMatrix | None = None,
    params: ModelParams = DEFAULT_INIT,
    contextual_params: ModelParams | None = None,
    score_floor: float = 0.5,
) -> Prediction:
    """Verdict for one output from whichever observations are present.

    With both channels present the two posterior vectors are averaged
    hypothesis-wise before the argmax, so disagreeing models still
    produce a well-defined winner.  TARGETED({i}) requires the winning
    hypothesis to be an input with (averaged) posterior >= score_floor;
    an untargeted winner or a sub-floor input yields UNTARGETED.
    """
    posteriors: dict[str, Posterior] = {}
    if active_accounts is not None:
        if placement is None:
            raise DomainError("behavioral prediction needs the placement")
        posteriors[BEHAVIORAL_MODEL] = behavioral_posterior(
            active_accounts, placement, params
        )
    if contextual_counts is not None:
        posteriors[CONTEXTUAL_MODEL] = contextual_posterior(
            contextual_counts, contextual_params or params
        )
    if not posteriors:
        return Prediction(Verdict.UNKNOWN, flags=("no_observations",))

    vecs = [p.probabilities for p in posteriors.values()]
    if len({len(v) for v in vecs}) != 1:
        raise DomainError("behavioral and contextual universes disagree")
    combined = np.mean(vecs, axis=0)
    n = len(combined) - 1
    winner = int(np.argmax(combined))
    scores = {name: float(np.max(p.probabilities)) for name, p in posteriors.items()}
    scores[COMPOSITE_MODEL] = float(combined[winner])
    if winner < n and combined[winner] >= score_floor:
        return Prediction(
            Verdict.TARGETED,
            target=Combination([winner]),
            scores=scores,
            posteriors=posteriors,
        )
    return Prediction(Verdict.UNTARGETED, scores=scores, posteriors=posteriors)


def composite_score(
    behavioral_max: float | None, contextual_max: float | None
) -> float | None:
    """Arithmetic mean of the present per-model maxima; None (= unknown)
    when both are absent."""
    present = [s for s in (behavioral_max, contextual_max) if s is not None]
    if not present:
        return None
    for s in present:
        if not 0.0 <= s <= 1.0:
            raise DomainError(f"score {s} outside [0,1]")
    return sum(present) / len(present)


# --------------------------------------------------------------- learning


@dataclass(frozen=True)
class LearnResult:
    params: ModelParams
    iterations: int
    converged: bool
    history: tuple[tuple[float, float, float], ...]


def _clamped(p_in: float, p_out: float, p_empty: float) -> tuple[float, float, float]:
    p_in = min(max(p_in, _PROB_FLOOR), 1.0 - _PROB_FLOOR)
    p_empty = min(max(p_empty, _PROB_FLOOR), 1.0 - _PROB_FLOOR)
    p_out = min(max(p_out, _PROB_FLOOR / 10.0), p_in * (1.0 - 1e-9))
    return p_in, p_out, p_empty


def learn_params(
    behavioral_obs: dict[int, frozenset[int]],
    placement: PlacementMatrix,
    init: ModelParams = DEFAULT_INIT,
    tol: float = 1e-3,
    max_iter: int = 50,
    score_floor: float = 0.5,
) -> LearnResult:
    """Iterated moment matching on the behavioral channel.

    Each round predicts every output with the current parameters, then
    re-estimates: p_in from (account holds the predicted input, account
    saw the output) pairs, p_out from the accounts not holding it, and
    p_empty from the hit rate of outputs predicted untargeted.  A
    parameter with no supporting predictions keeps its previous value.
    All accumulators are exact integer counts, so estimates do not
    depend on output iteration order.
    """
    params = init
    mem = placement.membership
    m = placement.n_accounts
    size = mem.sum(axis=0)  # |A_i| per input
    history: list[tuple[float, float, float]] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        in_seen = in_total = out_seen = out_total = 0
        empty_seen = empty_total = 0
        for _, a_k in sorted(behavioral_obs.items()):
            pred = bayes_predict(
                active_accounts=a_k,
                placement=placement,
                params=params,
                score_floor=score_floor,
            )
            if pred.verdict is Verdict.TARGETED:
                i = pred.target.inputs[0]
                hits = sum(1 for j in a_k if mem[j, i])
                in_seen += hits
                in_total += int(size[i])
                out_seen += len(a_k) - hits
                out_total += m - int(size[i])
            elif pred.verdict is Verdict.UNTARGETED:
                empty_seen += len(a_k)
                empty_total += m
        p_in = in_seen / in_total if in_total else params.p_in
        p_out = out_seen / out_total if out_total else params.p_out
        p_empty = empty_seen / empty_total if empty_total else params.p_empty
        p_in, p_out, p_empty = _clamped(p_in, p_out, p_empty)
        delta = max(
            abs(p_in - params.p_in),
            abs(p_out - params.p_out),
            abs(p_empty - params.p_empty),
        )
        params = replace(params, p_in=p_in, p_out=p_out, p_empty=p_empty)
        history.append(params.as_tuple())
        if delta < tol:
            converged = True
            break
    return LearnResult(
        params=params,
        iterations=iterations,
        converged=converged,
        history=tuple(history),
    )


def learn_contextual_params(
    contextual_obs: dict[int, np.ndarray],
    n_inputs: int,
    displays_per_input: int,
    init: ModelParams = DEFAULT_INIT,
    tol: float = 1e-3,
    max_iter: int = 50,
    score_floor: float = 0.5,
) -> LearnResult:
    """Contextual twin of :func:`learn_params`: slot-count moment
    matching, with per-input display totals as denominators."""
    params = init
    history: list[tuple[float, float, float]] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        in_seen = in_slots = out_seen = out_slots = 0
        empty_seen = empty_slots = 0
        for _, x in sorted(contextual_obs.items()):
            pred = bayes_predict(
                contextual_counts=x, params=params, score_floor=score_floor
            )
            total = int(np.sum(x))
            if pred.verdict is Verdict.TARGETED:
                i = pred.target.inputs[0]
                in_seen += int(x[i])
                in_slots += displays_per_input
                out_seen += total - int(x[i])
                out_slots += displays_per_input * (n_inputs - 1)
            elif pred.verdict is Verdict.UNTARGETED:
                empty_seen += total
                empty_slots += displays_per_input * n_inputs
        p_in = in_seen / in_slots if in_slots else params.p_in
        p_out = out_seen / out_slots if out_slots else params.p_out
        p_empty = empty_seen / empty_slots if empty_slots else params.p_empty
        p_in, p_out, p_empty = _clamped(p_in, p_out, p_empty)
        delta = max(
            abs(p_in - params.p_in),
            abs(p_out - params.p_out),
            abs(p_empty - params.p_empty),
        )
        params = replace(params, p_in=p_in, p_out=p_out, p_empty=p_empty)
        history.append(params.as_tuple())
        if delta < tol:
            converged = True
            break
    return LearnResult(
        params=params,
        iterations=iterations,
        converged=converged,
        history=tuple(history),
    )
