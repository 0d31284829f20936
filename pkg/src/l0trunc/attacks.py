"""Black-box sparse attacks and robustness metrics.

Attackers see only classifier logits.  A classifier here is any object with
a ``logits(X) -> (n, num_classes)`` method; labels are integer class
indices (use ``TruncatedLinearClassifier.class_index`` for sign labels).

The random-search attack keeps a working set of coordinates pinned to the
corners of the relaxed box [-beta a, beta a] and mutates a geometrically
shrinking subset of it, accepting a candidate only when the true-class
margin strictly drops.  The mutation schedule depends on the iteration
number alone, so runs with larger query budgets extend shorter ones and
per-sample success is monotone in the budget.

The pointwise attack escalates salt-and-pepper noise until the input is
misclassified and then greedily resets perturbed coordinates while the
misclassification survives.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .rng import substream

__all__ = [
    "AttackBudget",
    "AttackResult",
    "RhoReport",
    "sparse_random_search",
    "pointwise_attack",
    "robust_accuracy",
    "generate_adv_set",
    "median_adv_magnitude",
]

# fraction of the working set mutated at iteration r is GAMMA ** r
_GAMMA = 0.95
# canonical sample-chunk size; fixed so that --jobs never changes results
_CHUNK = 128
# salt-and-pepper escalation: starting coordinate fraction and growth factor
_SP_START = 0.01
_SP_GROWTH = 1.5


@dataclass(frozen=True)
class AttackBudget:
    """Sparse-attack budget: k coordinates, t queries, box [-beta a, beta a]."""

    k: int
    t: int
    beta: float = 100.0
    a: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"coordinate budget must be at least 1, got {self.k}")
        if self.t < 1:
            raise ValueError(f"query budget must be at least 1, got {self.t}")
        if self.beta < 1.0:
            raise ValueError(f"box relaxation factor must be at least 1, got {self.beta}")
        if self.a <= 0.0:
            raise ValueError(f"data half-range must be positive, got {self.a}")

    @property
    def box(self) -> float:
        return self.beta * self.a


@dataclass
class AttackResult:
    success: bool
    x_adv: np.ndarray | None
    queries_used: int
    l0_magnitude: int


@dataclass
class RhoReport:
    """Median pointwise-attack magnitude plus the failure tally."""

    rho: float
    n_failed: int
    magnitudes: np.ndarray


def _margins(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    """True-class logit minus the best other logit, per row."""
    n = logits.shape[0]
    true = logits[np.arange(n), y]
    masked = logits.copy()
    masked[np.arange(n), y] = -np.inf
    return true - masked.max(axis=1)


def _check_result(res: AttackResult, x: np.ndarray, budget: AttackBudget | None):
    if res.x_adv is not None:
        diff = res.x_adv != x
        res.l0_magnitude = int(diff.sum())
        if budget is not None:
            assert res.l0_magnitude <= budget.k, "attack exceeded its coordinate budget"
            assert np.all(np.abs(res.x_adv[diff]) <= budget.box + 1e-12), "attack left the value box"


class _SearchState:
    """Per-sample random-search bookkeeping."""

    __slots__ = ("rng", "coords", "vals", "margin", "queries", "sid")

    def __init__(self, rng, sid):
        self.rng = rng
        self.sid = sid
        self.coords = None
        self.vals = None
        self.margin = np.inf
        self.queries = 0


def _propose(state: _SearchState, d: int, k: int, box: float, iteration: int):
    """Draw the next candidate working set for one sample."""
    rng = state.rng
    if state.coords is None:
        coords = rng.choice(d, size=k, replace=False)
        vals = (rng.integers(0, 2, size=k) * 2 - 1) * box
        return coords, vals
    n_mut = max(1, int(round(k * _GAMMA**iteration)))
    pick = rng.choice(k, size=n_mut, replace=False)
    coords = state.coords.copy()
    vals = state.vals.copy()
    swap = rng.random(n_mut) < 0.5
    for j, do_swap in zip(pick, swap):
        if do_swap:
            c = int(rng.integers(0, d))
            while c in coords:
                c = int(rng.integers(0, d))
            coords[j] = c
    vals[pick] = (rng.integers(0, 2, size=n_mut) * 2 - 1) * box
    return coords, vals


def _random_search_chunk(f, X, Y, budget: AttackBudget, seed: int, sids, transcript=None):
    """Lockstep random search over one chunk of samples.

    Every sample owns the substream ``(seed, sample id)``, so results do
    not depend on how samples are grouped into chunks.
    """
    n, d = X.shape
    if budget.k >= d:
        raise ValueError(f"coordinate budget {budget.k} must be below the dimension {d}")
    states = [_SearchState(substream(seed, sid), sid) for sid in sids]
    results = [AttackResult(False, None, 0, 0) for _ in range(n)]

    logits = f.logits(X)
    margins = _margins(logits, Y)
    preds = logits.argmax(axis=1)
    active = []
    for i, st in enumerate(states):
        st.queries = 1
        st.margin = margins[i]
        if preds[i] != Y[i]:
            results[i] = AttackResult(True, X[i].copy(), 1, 0)
        elif st.queries < budget.t:
            active.append(i)
        else:
            results[i] = AttackResult(False, None, st.queries, 0)

    iteration = 0
    while active:
        iteration += 1
        proposals = [_propose(states[i], d, budget.k, budget.box, iteration - 1) for i in active]
        cand = X[active].copy()
        for row, (coords, vals) in enumerate(proposals):
            cand[row, coords] = vals
        logits = f.logits(cand)
        margins = _margins(logits, Y[np.asarray(active)])
        preds = logits.argmax(axis=1)
        still = []
        for row, i in enumerate(active):
            st = states[i]
            st.queries += 1
            if transcript is not None:
                mag = int((cand[row] != X[i]).sum())
                transcript.write(f"{st.sid} {iteration} {st.queries} {margins[row]:.6g} {mag}\n")
            if preds[row] != Y[i]:
                results[i] = AttackResult(True, cand[row].copy(), st.queries, budget.k)
                continue
            if margins[row] < st.margin:
                st.margin = margins[row]
                st.coords, st.vals = proposals[row]
            if st.queries < budget.t:
                still.append(i)
            else:
                results[i] = AttackResult(False, None, st.queries, 0)
        active = still

    for i, res in enumerate(results):
        _check_result(res, X[i], budget)
    # success means misclassification, re-verified by one uncounted pass
    winners = [i for i, r in enumerate(results) if r.success]
    if winners:
        ver = f.logits(np.stack([results[i].x_adv for i in winners]))
        assert np.all(ver.argmax(axis=1) != Y[winners]), "adversarial example failed re-verification"
    return results


def sparse_random_search(f, x, y: int, budget: AttackBudget, seed: int, sid: int = 0) -> AttackResult:
    """Random-search attack on a single sample; ``y`` is the true class index."""
    x = np.asarray(x, dtype=np.float64)
    return _random_search_chunk(f, x[None, :], np.array([y]), budget, seed, [sid])[0]


def pointwise_attack(f, x, y: int, restarts: int, seed: int, a: float = 1.0, beta: float = 1.0) -> AttackResult:
    """Salt-and-pepper escalation followed by greedy coordinate resets.

    Returns the smallest perturbation over ``restarts`` independent
    restarts; magnitude never grows with more restarts.  Noise values sit
    at the corners of the relaxed box [-beta a, beta a].
    """
    if restarts < 1:
        raise ValueError("need at least one restart")
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    box = beta * a
    queries = 0

    def _misclassified(v) -> bool:
        return int(f.logits(v[None, :]).argmax(axis=1)[0]) != y

    queries += 1
    if _misclassified(x):
        return AttackResult(True, x.copy(), 1, 0)

    best = None
    for r in range(restarts):
        rng = substream(seed, r)
        cand = None
        frac = _SP_START
        while True:
            cnt = min(d, max(1, int(round(frac * d))))
            coords = rng.choice(d, size=cnt, replace=False)
            signs = rng.integers(0, 2, size=cnt) * 2 - 1
            trial = x.copy()
            trial[coords] = signs * box
            queries += 1
            if _misclassified(trial):
                cand = trial
                break
            if cnt == d:
                break
            frac *= _SP_GROWTH
        if cand is None:
            continue
        # greedy reset sweeps; stop when a full sweep changes nothing
        while True:
            perturbed = np.flatnonzero(cand != x)
            order = rng.permutation(perturbed)
            changed = False
            for j in order:
                trial = cand.copy()
                trial[j] = x[j]
                queries += 1
                if _misclassified(trial):
                    cand = trial
                    changed = True
            if not changed:
                break
        mag = int((cand != x).sum())
        if best is None or mag < best.l0_magnitude:
            best = AttackResult(True, cand, queries, mag)
    if best is None:
        return AttackResult(False, None, queries, 0)
    best.queries_used = queries
    return best


def _run_chunked(task, n: int, jobs: int):
    """Apply ``task(start, stop)`` over canonical chunks, merged in order."""
    spans = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    if jobs <= 1 or len(spans) <= 1:
        parts = [task(*sp) for sp in spans]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda sp: task(*sp), spans))
    out = []
    for part in parts:
        out.extend(part)
    return out


def _attack_dataset(f, X, Y, budget, seed, attack, jobs, transcript=None):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("dataset must be non-empty")
    if attack == "sparse-rs":
        def task(s, e):
            return _random_search_chunk(f, X[s:e], Y[s:e], budget, seed, range(s, e), transcript)
    elif callable(attack):
        def task(s, e):
            return [attack(f, X[i], int(Y[i]), budget, int(substream(seed, i).integers(2**63))) for i in range(s, e)]
    else:
        raise ValueError(f"unknown attack {attack!r}")
    return _run_chunked(task, len(X), jobs)


def robust_accuracy(
    f, X, Y, budget: AttackBudget, seed: int, attack="sparse-rs", jobs: int = 1, transcript=None
) -> float:
    """Fraction of samples the attack fails to break.

    A sample already misclassified clean counts as broken (the attack
    succeeds there with zero perturbation).  ``transcript``, when given, is
    a writable text stream receiving one record per query:
    ``sample-id iteration queries margin magnitude``.
    """
    results = _attack_dataset(f, X, Y, budget, seed, attack, jobs, transcript)
    return float(np.mean([not r.success for r in results]))


def generate_adv_set(X, Y, f, k: int, t: int, seed: int, beta: float = 100.0, a: float = 1.0, jobs: int = 1):
    """Adversarial copies of every breakable sample, with their clean labels.

    Members are re-verified to be misclassified; samples the attack cannot
    break within the budget are left out.
    """
    budget = AttackBudget(k=k, t=t, beta=beta, a=a)
    results = _attack_dataset(f, X, Y, budget, seed, "sparse-rs", jobs)
    Y = np.asarray(Y, dtype=np.int64)
    hit = [i for i, r in enumerate(results) if r.success]
    if not hit:
        return np.empty((0, X.shape[1])), np.empty(0, dtype=np.int64)
    X_adv = np.stack([results[i].x_adv for i in hit])
    Y_adv = Y[hit]
    assert np.all(f.logits(X_adv).argmax(axis=1) != Y_adv)
    return X_adv, Y_adv


def median_adv_magnitude(
    f, X, Y, restarts: int, seed: int, a: float = 1.0, beta: float = 1.0, jobs: int = 1
) -> RhoReport:
    """Median pointwise-attack magnitude over a dataset.

    Failed samples are excluded from the median and reported in
    ``n_failed`` (a median over values including infinities may not be
    defined); their magnitude slot is +inf.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)

    def task(s, e):
        out = []
        for i in range(s, e):
            child = int(substream(seed, i).integers(2**63))
            out.append(pointwise_attack(f, X[i], int(Y[i]), restarts, child, a=a, beta=beta))
        return out

    results = _run_chunked(task, len(X), jobs)
    mags = np.array([r.l0_magnitude if r.success else np.inf for r in results])
    finite = mags[np.isfinite(mags)]
    rho = float(np.median(finite)) if finite.size else float("inf")
    return RhoReport(rho=rho, n_failed=int(np.sum(~np.isfinite(mags))), magnitudes=mags)
