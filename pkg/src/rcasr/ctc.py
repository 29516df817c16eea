"""Connectionist temporal classification.

Forward/backward dynamic program over the blank-extended label, with per-step
normalization of both variable sets (scaled arithmetic, not log space); loss
and analytic gradient through an internal softmax; greedy and prefix beam
decoding.  The blank is always the LAST label index.
"""

import math
from dataclasses import dataclass

import numpy as np

NEG_INF = float("-inf")


class InfeasibleLabel(ValueError):
    """Raised when a label cannot be emitted in the available frames."""


@dataclass(frozen=True)
class Alphabet:
    """61 (or fewer) non-blank symbols plus one trailing blank."""

    non_blank: tuple

    def __post_init__(self):
        if len(set(self.non_blank)) != len(self.non_blank):
            raise ValueError("alphabet symbols must be unique")

    @property
    def blank(self):
        return len(self.non_blank)

    @property
    def size(self):
        return len(self.non_blank) + 1

    def encode(self, symbols):
        index = {s: i for i, s in enumerate(self.non_blank)}
        try:
            return tuple(index[s] for s in symbols)
        except KeyError as exc:
            raise KeyError(f"symbol {exc.args[0]!r} not in alphabet") from None

    def decode(self, ids):
        return tuple(self.non_blank[i] for i in ids)


TIMIT_PHONES = (
    "aa", "ae", "ah", "ao", "aw", "ax", "ax-h", "axr", "ay", "b", "bcl",
    "ch", "d", "dcl", "dh", "dx", "eh", "el", "em", "en", "eng", "epi",
    "er", "ey", "f", "g", "gcl", "h#", "hh", "hv", "ih", "ix", "iy", "jh",
    "k", "kcl", "l", "m", "n", "ng", "nx", "ow", "oy", "p", "pau", "pcl",
    "q", "r", "s", "sh", "t", "tcl", "th", "uh", "uw", "ux", "v", "w",
    "y", "z", "zh",
)


def timit_alphabet():
    return Alphabet(non_blank=TIMIT_PHONES)


def synthetic_alphabet(n_phonemes):
    return Alphabet(non_blank=tuple(f"p{i}" for i in range(n_phonemes)))


def extend_label(labels, blank):
    """Interleave blanks: l -> (blank, l1, blank, l2, ..., blank)."""
    ext = [blank]
    for s in labels:
        ext.append(int(s))
        ext.append(blank)
    return np.asarray(ext, dtype=np.intp)


def min_frames(labels):
    """Fewest frames that can emit `labels` (repeats force a blank between)."""
    labels = tuple(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


@dataclass
class CtcTrellis:
    """Scaled forward/backward variables over the extended label.

    alpha[t] and beta[t] each sum to 1; log_alpha_scale[t] holds ln C_t so
    that the unscaled alpha_t(s) = alpha[t,s] * exp(sum_{t'<=t} ln C_t'),
    and log_prob = sum_t ln C_t.
    """

    alpha: np.ndarray
    beta: np.ndarray
    log_alpha_scale: np.ndarray
    log_beta_scale: np.ndarray
    log_prob: float
    l_prime: np.ndarray
    y: np.ndarray


def _check_rows_stochastic(y):
    sums = y.sum(axis=1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=1e-9):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"row {worst} of y sums to {sums[worst]!r}, expected 1")


def ctc_forward(y, labels):
    """Fill the scaled alpha/beta trellis for label sequence `labels`.

    y is a T x L row-stochastic matrix whose last column is the blank.
    Infeasible (or zero-probability) labellings come back with
    log_prob = -inf rather than raising.
    """
    y = np.asarray(y, dtype=np.float64)
    T, L = y.shape
    _check_rows_stochastic(y)
    blank = L - 1
    labels = tuple(int(s) for s in labels)
    if any(s < 0 or s >= blank for s in labels):
        raise ValueError(f"label out of range for {L}-label alphabet: {labels}")
    lp = extend_label(labels, blank)
    S = lp.size

    empty = CtcTrellis(
        alpha=np.zeros((T, S)), beta=np.zeros((T, S)),
        log_alpha_scale=np.full(T, NEG_INF), log_beta_scale=np.full(T, NEG_INF),
        log_prob=NEG_INF, l_prime=lp, y=y,
    )
    if T < min_frames(labels):
        return empty

    # skip transition s-2 -> s is legal when l'_s is a non-blank differing
    # from l'_{s-2}
    can_skip = np.zeros(S, dtype=bool)
    for s in range(2, S):
        can_skip[s] = lp[s] != blank and lp[s] != lp[s - 2]

    # states outside [lo_t, hi_t) either cannot be reached from the start or
    # cannot reach an accepting end state; excluding them makes the row sums
    # (and hence sum_t ln C_t) equal the exact path probability
    def window(t):
        lo = max(0, S - 2 * (T - t))
        hi = min(S, 2 * (t + 1))
        return lo, hi

    alpha = np.zeros((T, S))
    log_c = np.zeros(T)
    lo, hi = window(0)
    if lo <= 0:
        alpha[0, 0] = y[0, blank]
    if S > 1 and lo <= 1:
        alpha[0, 1] = y[0, lp[1]]
    total = alpha[0].sum()
    if total == 0.0:
        return empty
    alpha[0] /= total
    log_c[0] = math.log(total)
    for t in range(1, T):
        lo, hi = window(t)
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] += prev[:-1]
        acc[2:][can_skip[2:]] += prev[:-2][can_skip[2:]]
        row = np.zeros(S)
        row[lo:hi] = acc[lo:hi] * y[t, lp[lo:hi]]
        total = row.sum()
        if total == 0.0:
            return empty
        alpha[t] = row / total
        log_c[t] = math.log(total)

    beta = np.zeros((T, S))
    log_d = np.zeros(T)
    lo, hi = window(T - 1)
    beta[T - 1, S - 1] = y[T - 1, blank]
    if S > 1:
        beta[T - 1, S - 2] = y[T - 1, lp[S - 2]]
    beta[T - 1, :lo] = 0.0
    total = beta[T - 1].sum()
    beta[T - 1] /= total
    log_d[T - 1] = math.log(total)
    for t in range(T - 2, -1, -1):
        lo, hi = window(t)
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] += nxt[1:]
        acc[:-2][can_skip[2:]] += nxt[2:][can_skip[2:]]
        row = np.zeros(S)
        row[lo:hi] = acc[lo:hi] * y[t, lp[lo:hi]]
        total = row.sum()
        if total == 0.0:
            return empty
        beta[t] = row / total
        log_d[t] = math.log(total)

    return CtcTrellis(
        alpha=alpha, beta=beta,
        log_alpha_scale=log_c, log_beta_scale=log_d,
        log_prob=float(log_c.sum()), l_prime=lp, y=y,
    )


def ctc_posterior_check(trellis):
    """Reconstruct p(l|x) independently at every t from alpha_t and beta_t.

    In unscaled terms sum_s alpha_t(s) beta_t(s) / y_{l'_s}^t is p(l|x) for
    every t; returns that value per t so callers can verify it is constant.
    """
    if trellis.log_prob == NEG_INF:
        raise ValueError("posterior check undefined for infeasible trellis")
    T, S = trellis.alpha.shape
    cum_c = np.cumsum(trellis.log_alpha_scale)
    cum_d = np.cumsum(trellis.log_beta_scale[::-1])[::-1]
    out = np.zeros(T)
    for t in range(T):
        yt = trellis.y[t, trellis.l_prime]
        prod = trellis.alpha[t] * trellis.beta[t]
        mask = prod != 0.0
        s = float(np.sum(prod[mask] / yt[mask]))
        out[t] = s * math.exp(cum_c[t] + cum_d[t])
    return out


def softmax(u):
    u = np.asarray(u, dtype=np.float64)
    shifted = u - u.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def ctc_loss_and_grad(u, labels):
    """Negative log likelihood and its gradient w.r.t. pre-activations u.

    The softmax lives inside: u is the network's linear T x L output.
    """
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite pre-activations passed to CTC")
    y = softmax(u)
    trellis = ctc_forward(y, labels)
    if trellis.log_prob == NEG_INF:
        if u.shape[0] < min_frames(labels):
            raise InfeasibleLabel(
                f"infeasible label length {len(tuple(labels))} for {u.shape[0]} frames"
            )
        raise ArithmeticError("CTC path probability underflowed to zero (saturated softmax?)")
    T, L = y.shape
    lp = trellis.l_prime
    cum_c = np.cumsum(trellis.log_alpha_scale)
    cum_d = np.cumsum(trellis.log_beta_scale[::-1])[::-1]
    gamma = np.zeros((T, L))
    for t in range(T):
        k_t = math.exp(cum_c[t] + cum_d[t] - trellis.log_prob)
        w = trellis.alpha[t] * trellis.beta[t] * k_t
        mask = w != 0.0
        if np.any(mask):
            np.add.at(gamma[t], lp[mask], w[mask] / y[t, lp[mask]])
    return -trellis.log_prob, y - gamma


def collapse(path, blank):
    """The label-collapsing map: drop repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev:
            if p != blank:
                out.append(int(p))
            prev = p
    return tuple(out)


def greedy_decode(y):
    """Best-path decoding: frame argmax, collapse repeats, strip blanks.

    Ties break toward the lowest label index.
    """
    y = np.asarray(y)
    blank = y.shape[1] - 1
    return collapse(np.argmax(y, axis=1), blank)


def _lm_increment(lm, lam, alphabet, prefix_ids, new_id):
    context = alphabet.decode(prefix_ids)
    return lam * lm.forward_logprob(alphabet.non_blank[new_id], context)


def beam_decode(y, width=16, lm=None, lam=0.3, alphabet=None):
    """Prefix beam search; returns hypotheses as (label_ids, ctc_log_prob).

    Each candidate prefix keeps separate blank/non-blank log masses.  With
    an n-gram model attached, every label extension also adds
    lam * forward LM log probability to the pruning score (the reported
    score stays the pure CTC log probability).  width=None disables pruning,
    which makes the top hypothesis the exact most probable labelling.
    """
    if width is not None and width < 1:
        raise ValueError(f"beam width must be >= 1, got {width}")
    if lm is not None and alphabet is None:
        raise ValueError("beam_decode needs an alphabet to query the language model")
    y = np.asarray(y, dtype=np.float64)
    T, L = y.shape
    blank = L - 1
    with np.errstate(divide="ignore"):
        ly = np.log(y)

    beams = {(): [0.0, NEG_INF]}   # prefix -> [log p_blank, log p_nonblank]
    lm_bonus = {(): 0.0}

    def fused(prefix, masses):
        return np.logaddexp(masses[0], masses[1]) + lm_bonus[prefix]

    for t in range(T):
        nxt = {}
        for prefix, (lpb, lpnb) in beams.items():
            lp_tot = np.logaddexp(lpb, lpnb)
            cur = nxt.setdefault(prefix, [NEG_INF, NEG_INF])
            cur[0] = np.logaddexp(cur[0], lp_tot + ly[t, blank])
            if prefix:
                cur[1] = np.logaddexp(cur[1], lpnb + ly[t, prefix[-1]])
            for c in range(blank):
                if ly[t, c] == NEG_INF:
                    continue
                src = lpb if (prefix and c == prefix[-1]) else lp_tot
                if src == NEG_INF:
                    continue
                new = prefix + (c,)
                if new not in lm_bonus:
                    lm_bonus[new] = lm_bonus[prefix] + (
                        _lm_increment(lm, lam, alphabet, prefix, c) if lm is not None else 0.0
                    )
                ext = nxt.setdefault(new, [NEG_INF, NEG_INF])
                ext[1] = np.logaddexp(ext[1], src + ly[t, c])
        if width is not None and len(nxt) > width:
            ranked = sorted(nxt.items(), key=lambda kv: fused(kv[0], kv[1]), reverse=True)
            nxt = dict(ranked[:width])
        beams = nxt

    order = sorted(beams.items(), key=lambda kv: fused(kv[0], kv[1]), reverse=True)
    return [(prefix, float(np.logaddexp(m[0], m[1]))) for prefix, m in order]


def format_hypotheses(utt_id, hyps, alphabet):
    """One text line per hypothesis: `utt_id score ph1 ph2 ...`."""
    lines = []
    for ids, score in hyps:
        symbols = " ".join(alphabet.decode(ids))
        lines.append(f"{utt_id} {score:.6f} {symbols}".rstrip())
    return lines
