"""Bidirectional statistical n-gram phoneme language model.

Forward tables count left-to-right transitions with (N-1) start markers;
backward tables are built by running the identical procedure on reversed
sentences.  Conditional probabilities use additive-k smoothing over the
event space vocab + end marker, orders 2-4 are mixed with fixed
interpolation weights, and a sequence score blends the forward and backward
interpolated log scores with weight mu.
"""

import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

ORDERS = (2, 3, 4)
DEFAULT_WEIGHTS = {2: 0.4, 3: 0.35, 4: 0.25}
DEFAULT_K = 1.0
DEFAULT_MU = 0.5


@dataclass
class NgramModel:
    vocab: tuple
    smoothing_k: float = DEFAULT_K
    interp_weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    mu: float = DEFAULT_MU
    counts: dict = field(default_factory=dict)    # (order, dir) -> {ctx: {sym: n}}
    totals: dict = field(default_factory=dict)    # (order, dir) -> {ctx: n}

    def __post_init__(self):
        w = self.interp_weights
        if any(w[n] < 0 for n in ORDERS) or abs(sum(w[n] for n in ORDERS) - 1.0) > 1e-12:
            raise ValueError(f"interpolation weights must be >= 0 and sum to 1: {w}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        for key in [(n, d) for n in ORDERS for d in "FB"]:
            self.counts.setdefault(key, {})
            self.totals.setdefault(key, {})

    # event space: every vocab symbol plus the end-of-sentence marker
    @property
    def event_count(self):
        return len(self.vocab) + 1

    def _lookup(self, order, direction, context, symbol):
        table = self.counts[(order, direction)]
        c = table.get(context, {}).get(symbol, 0)
        total = self.totals[(order, direction)].get(context, 0)
        return (c + self.smoothing_k) / (total + self.smoothing_k * self.event_count)

    def order_conditional(self, symbol, context, order, direction="F"):
        """Smoothed P(symbol | context) for a single n-gram order."""
        padded = (BOS,) * (order - 1) + tuple(context)
        return self._lookup(order, direction, padded[len(padded) - (order - 1):], symbol)

    def conditional(self, symbol, context, direction="F"):
        """Interpolated smoothed P(symbol | context) for one direction.

        `context` is the full preceding history (most recent last); each
        order slices its own window after start-marker padding.
        """
        symbol = symbol if symbol in self._vocab_set or symbol == EOS else UNK
        context = tuple(s if s in self._vocab_set or s == BOS else UNK for s in context)
        p = 0.0
        for n in ORDERS:
            padded = (BOS,) * (n - 1) + context
            p += self.interp_weights[n] * self._lookup(n, direction, padded[len(padded) - (n - 1):], symbol)
        return p

    def forward_logprob(self, symbol, context):
        return math.log(self.conditional(symbol, context, "F"))

    @property
    def _vocab_set(self):
        cached = getattr(self, "_vocab_cache", None)
        if cached is None:
            cached = frozenset(self.vocab)
            self._vocab_cache = cached
        return cached


def _count_sentence(model, sentence, direction):
    for n in ORDERS:
        padded = (BOS,) * (n - 1) + tuple(sentence) + (EOS,)
        counts = model.counts[(n, direction)]
        totals = model.totals[(n, direction)]
        for i in range(len(sentence) + 1):
            ctx = padded[i:i + n - 1]
            sym = padded[i + n - 1]
            counts.setdefault(ctx, {})
            counts[ctx][sym] = counts[ctx].get(sym, 0) + 1
            totals[ctx] = totals.get(ctx, 0) + 1


def train_lm(corpus, smoothing_k=DEFAULT_K, interp_weights=None, mu=DEFAULT_MU):
    """Count forward and backward tables of orders 2-4 over label sequences."""
    corpus = [tuple(s) for s in corpus]
    if not corpus:
        raise ValueError("train_lm: empty corpus")
    vocab = tuple(sorted({sym for sent in corpus for sym in sent}))
    model = NgramModel(
        vocab=vocab,
        smoothing_k=smoothing_k,
        interp_weights=dict(interp_weights) if interp_weights else dict(DEFAULT_WEIGHTS),
        mu=mu,
    )
    for sent in corpus:
        if not sent:
            log.warning("train_lm: skipping empty sentence")
            continue
        _count_sentence(model, sent, "F")
        _count_sentence(model, tuple(reversed(sent)), "B")
    return model


def _directional_score(model, seq, direction):
    total = 0.0
    history = ()
    for sym in tuple(seq) + (EOS,):
        total += math.log(model.conditional(sym, history, direction))
        history = history + (sym if sym in model._vocab_set else UNK,)
    return total


def score(model, seq):
    """Bidirectional log score: mu * forward + (1 - mu) * backward."""
    seq = tuple(seq)
    unknown = [s for s in seq if s not in model._vocab_set]
    if unknown:
        log.warning("score: mapping %d out-of-vocabulary symbols to %s", len(unknown), UNK)
    fwd = _directional_score(model, seq, "F")
    bwd = _directional_score(model, tuple(reversed(seq)), "B")
    return model.mu * fwd + (1.0 - model.mu) * bwd


def rectify(model, hypotheses, lam):
    """Pick the hypothesis maximizing ctc_log_score + lam * lm score.

    `hypotheses` is a ranked list of (label_sequence, ctc_log_score); ties
    go to the higher CTC score.  Returns (best_sequence, best_combined).
    """
    if not hypotheses:
        raise ValueError("rectify: empty hypothesis list")
    best = None
    for seq, ctc_score in hypotheses:
        combined = ctc_score + lam * score(model, seq)
        key = (combined, ctc_score)
        if best is None or key > best[0]:
            best = (key, tuple(seq))
    return best[1], best[0][0]


# -- plain-text model format ---------------------------------------------------

def save_lm(path, model):
    """Sorted `N DIR context... symbol count` lines under a small header."""
    with open(path, "w") as fh:
        fh.write("NGRAM-LM v1\n")
        fh.write(f"k {model.smoothing_k:.17g}\n")
        fh.write("weights " + " ".join(f"{model.interp_weights[n]:.17g}" for n in ORDERS) + "\n")
        fh.write(f"mu {model.mu:.17g}\n")
        fh.write("vocab " + " ".join(model.vocab) + "\n")
        lines = []
        for (n, d), table in model.counts.items():
            for ctx, syms in table.items():
                for sym, c in syms.items():
                    lines.append(f"{n} {d} {' '.join(ctx)} {sym} {c}")
        for line in sorted(lines):
            fh.write(line + "\n")


def load_lm(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "NGRAM-LM v1":
            raise ValueError(f"{path}: not an n-gram model file")
        k = float(fh.readline().split()[1])
        weights = dict(zip(ORDERS, map(float, fh.readline().split()[1:])))
        mu = float(fh.readline().split()[1])
        vocab = tuple(fh.readline().split()[1:])
        model = NgramModel(vocab=vocab, smoothing_k=k, interp_weights=weights, mu=mu)
        for ln, line in enumerate(fh, start=6):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 4:
                raise ValueError(f"{path}:{ln}: malformed count line")
            n = int(parts[0])
            d = parts[1]
            ctx = tuple(parts[2:-2])
            sym, c = parts[-2], int(parts[-1])
            model.counts[(n, d)].setdefault(ctx, {})[sym] = c
            model.totals[(n, d)][ctx] = model.totals[(n, d)].get(ctx, 0) + c
    return model
