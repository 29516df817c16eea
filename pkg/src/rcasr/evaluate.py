"""Damerau-Levenshtein distance and phoneme error rate.

The distance is the optimal-string-alignment (restricted) variant: inserts,
deletes, substitutions, and adjacent transpositions, with no substring edited
twice.  PER aggregates corpus-wide as total distance over total reference
length (length-weighted, not a mean of per-utterance rates).
"""

from dataclasses import dataclass


def damerau_levenshtein(a, b):
    """OSA edit distance between two sequences."""
    a = tuple(a)
    b = tuple(b)
    la, lb = len(a), len(b)
    prev2 = None
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                best = min(best, prev2[j - 2] + 1)
            cur[j] = best
        prev2, prev = prev, cur
    return prev[lb]


@dataclass
class PerReport:
    per_utterance: dict       # id -> (distance, reference length)

    @property
    def total_distance(self):
        return sum(d for d, _ in self.per_utterance.values())

    @property
    def total_ref_length(self):
        return sum(n for _, n in self.per_utterance.values())

    @property
    def aggregate(self):
        n = self.total_ref_length
        return self.total_distance / n if n else 0.0

    def to_csv(self, path):
        """`utt_id,distance,ref_len,per` rows plus a trailing aggregate row."""
        with open(path, "w") as fh:
            fh.write("utt_id,distance,ref_len,per\n")
            for utt_id, (d, n) in self.per_utterance.items():
                fh.write(f"{utt_id},{d},{n},{d / n if n else 0.0:.6f}\n")
            fh.write(f"AGGREGATE,{self.total_distance},{self.total_ref_length},"
                     f"{self.aggregate:.6f}\n")


def per(refs, hyps):
    """Phoneme error rate of hypothesis sequences against references.

    Both arguments map utterance id to a label sequence; the id sets must
    match exactly.
    """
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise KeyError(f"missing hypotheses for: {', '.join(missing)}")
    extra = sorted(set(hyps) - set(refs))
    if extra:
        raise KeyError(f"hypotheses without references: {', '.join(extra)}")
    report = {}
    for utt_id in refs:
        ref = tuple(refs[utt_id])
        report[utt_id] = (damerau_levenshtein(ref, hyps[utt_id]), len(ref))
    return PerReport(per_utterance=report)
