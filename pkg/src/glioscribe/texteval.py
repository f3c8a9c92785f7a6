"""Lexical report metrics, corpus aggregation, and significance testing.

BLEU is computed per report (sentence level) with add-1 smoothing on the
higher-order precisions; ROUGE is reported as precision/recall/F1. The
significance test is the paired sign-flipping approximate randomization
test on the mean difference.
"""

import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

_TOKEN_RE = re.compile(r"\d+\.\d+|[a-z0-9]+")


def tokenize(text):
    """Lowercase tokens split on non-alphanumerics, keeping internal decimal
    points so measurements like 4.0 stay single tokens."""
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate, reference, n):
    """BLEU-n: geometric mean of modified k-gram precisions (k = 1..n, add-1
    smoothed for k >= 2) times the brevity penalty min(1, e^(1 - r/c))."""
    if n not in (1, 2, 3, 4):
        raise ValueError(f"n must be in 1..4, got {n}")
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        cg = _ngrams(cand, k)
        rg = _ngrams(ref, k)
        clipped = sum(min(c, rg[g]) for g, c in cg.items())
        total = sum(cg.values())
        if k >= 2:
            p = (clipped + 1.0) / (total + 1.0) if total else 0.0
        else:
            p = clipped / total if total else 0.0
        if p == 0.0:
            return 0.0
        log_sum += math.log(p)
    bp = min(1.0, math.exp(1.0 - len(ref) / len(cand)))
    return bp * math.exp(log_sum / n)


def rouge_n(candidate, reference, n):
    """(precision, recall, f1) of clipped n-gram overlap."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    cg = _ngrams(tokenize(candidate), n)
    rg = _ngrams(tokenize(reference), n)
    overlap = sum(min(c, rg[g]) for g, c in cg.items())
    n_cand = sum(cg.values())
    n_ref = sum(rg.values())
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return p, r, f1


@dataclass
class EvalScores:
    bleu1: float
    bleu2: float
    rouge1_f: float
    rouge2_f: float
    tbfact: dict = None  # optional {"score","precision","recall","f1"}

    def as_dict(self):
        d = {"bleu1": self.bleu1, "bleu2": self.bleu2,
             "rouge1_f": self.rouge1_f, "rouge2_f": self.rouge2_f}
        if self.tbfact is not None:
            d["tbfact"] = dict(self.tbfact)
        return d


def score_pair(candidate, reference):
    return EvalScores(
        bleu1=bleu_n(candidate, reference, 1),
        bleu2=bleu_n(candidate, reference, 2),
        rouge1_f=rouge_n(candidate, reference, 1)[2],
        rouge2_f=rouge_n(candidate, reference, 2)[2],
    )


@dataclass
class CorpusSummary:
    n: int
    means: dict
    stds: dict   # population standard deviation

    def as_dict(self):
        return {"n": self.n, "mean": dict(self.means), "std": dict(self.stds)}


def aggregate_scores(score_list):
    """Mean and population std per metric over per-report EvalScores."""
    if not score_list:
        raise ValueError("aggregate_scores needs at least one report")
    keys = ["bleu1", "bleu2", "rouge1_f", "rouge2_f"]
    means = {}
    stds = {}
    for k in keys:
        vals = np.array([getattr(s, k) for s in score_list], np.float64)
        means[k] = float(vals.mean())
        stds[k] = float(vals.std())
    return CorpusSummary(len(score_list), means, stds)


def approx_randomization_test(scores_a, scores_b, iters=10000, seed=0):
    """Two-sided paired sign-flip permutation p-value on the mean difference.

    p = (#{|mean(flipped d)| >= |mean(d)|} + 1) / (iters + 1), deterministic
    for a fixed seed.
    """
    a = np.asarray(scores_a, np.float64)
    b = np.asarray(scores_b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired lists differ in length: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("need at least 2 pairs")
    d = a - b
    obs = abs(d.mean())
    rng = np.random.default_rng(seed)
    flips = rng.integers(0, 2, size=(iters, d.size)) * 2 - 1
    perm = np.abs((flips * d).mean(axis=1))
    count = int((perm >= obs - 1e-15).sum())
    return (count + 1) / (iters + 1)


def summarize_agreement(records):
    """Corpus roll-up of per-report feature_agreement records.

    Categorical fields aggregate to accuracy; numeric fields to MAE with
    population std of the absolute errors.
    """
    cat = {}
    num = {}
    for rec in records:
        for name, entry in rec.items():
            if entry["kind"] == "categorical":
                cat.setdefault(name, []).append(1.0 if entry["match"] else 0.0)
            else:
                num.setdefault(name, []).append(entry["abs_error"])
    table = {}
    for name, vals in sorted(cat.items()):
        table[name] = {"kind": "categorical", "n": len(vals),
                       "accuracy": float(np.mean(vals))}
    for name, vals in sorted(num.items()):
        arr = np.asarray(vals, np.float64)
        table[name] = {"kind": "numeric", "n": len(vals),
                       "mae": float(arr.mean()), "std": float(arr.std())}
    return table


# LLM-backed factuality scoring --------------------------------------------

_DECOMPOSE_PROMPT = """\
Rewrite the report below as a list of independently verifiable factual
claims, one claim per line. Keep each claim self-contained. Output only
the claims.

FINDINGS:
{text}

CLAIMS:"""

_ENTAIL_PROMPT = """\
Decide whether the claim is supported, contradicted, or absent with
respect to the reference claims. ANSWER WITH EXACTLY ONE WORD: one of
supported, contradicted, absent.

CLAIM: {claim}

REFERENCE CLAIMS:
{refs}

ANSWER:"""

_ENTAIL_LABELS = ("supported", "contradicted", "absent")


def decompose_claims(text, client):
    """Split findings text into atomic claims via the configured endpoint."""
    raw = client.complete(_DECOMPOSE_PROMPT.format(text=text.strip()))
    claims = [line.strip() for line in raw.splitlines() if line.strip()]
    if not claims:
        raise ValueError("claim decomposition produced no claims")
    return claims


def _entail_label(claim, ref_claims, client):
    from .llm import LLMResponseError
    raw = client.complete(
        _ENTAIL_PROMPT.format(claim=claim, refs="\n".join(ref_claims)))
    word = raw.strip().split()[0].lower().rstrip(".") if raw.strip() else ""
    if word not in _ENTAIL_LABELS:
        raise LLMResponseError(f"unparseable entailment label: {raw!r}")
    return word


def tbfact_score(candidate, reference, settings, audit_dir=None):
    """Claim-level factuality of candidate against reference.

    Precision: fraction of candidate claims supported by the reference.
    Recall: fraction of reference claims supported by the candidate.
    The headline score is the F1 of the two (this composition is our
    reconstruction; the convention is not fully pinned down upstream).
    Every prompt and raw label is written to audit_dir when given.
    """
    from .llm import LLMClient
    client = LLMClient(settings)
    cand_claims = decompose_claims(candidate, client)
    ref_claims = decompose_claims(reference, client)
    cand_labels = [_entail_label(c, ref_claims, client) for c in cand_claims]
    ref_labels = [_entail_label(r, cand_claims, client) for r in ref_claims]
    precision = sum(lab == "supported" for lab in cand_labels) / len(cand_claims)
    recall = sum(lab == "supported" for lab in ref_labels) / len(ref_claims)
    f1 = 0.0 if precision + recall == 0 else \
        2 * precision * recall / (precision + recall)
    result = {"score": f1, "precision": precision, "recall": recall, "f1": f1}
    if audit_dir is not None:
        import json
        import pathlib
        d = pathlib.Path(audit_dir)
        d.mkdir(parents=True, exist_ok=True)
        audit = {
            "candidate_claims": cand_claims,
            "reference_claims": ref_claims,
            "candidate_labels": cand_labels,
            "reference_labels": ref_labels,
            "result": result,
        }
        (d / "tbfact_audit.json").write_text(json.dumps(audit, indent=2))
    return result
