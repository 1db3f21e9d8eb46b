"""Token-level tagging metrics and confusion reporting."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import TaggedCorpus, TagSet


class StructureMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TagScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ConfusionPair:
    gold: str
    predicted: str
    count: int


@dataclass
class EvalReport:
    accuracy: float
    micro_f1: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    token_count: int
    per_tag: dict[str, TagScore]
    confusion: np.ndarray = field(repr=False)
    tagset: TagSet = field(repr=False)
    top_confusions: list[ConfusionPair] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "token_count": self.token_count,
            "per_tag": {k: asdict(v) for k, v in self.per_tag.items()},
            "top_confusions": [asdict(c) for c in self.top_confusions],
            "confusion": {
                "labels": self.tagset.codes,
                "counts": self.confusion.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        lines = [
            f"tokens        {self.token_count}",
            f"accuracy      {pct(self.accuracy)}",
            f"micro F1      {pct(self.micro_f1)}",
            f"macro F1      {pct(self.macro_f1)}",
            "",
            f"{'tag':<10} {'precision':>10} {'recall':>10} {'F1':>10} {'support':>8}",
        ]
        for code, s in self.per_tag.items():
            lines.append(
                f"{code:<10} {pct(s.precision):>10} {pct(s.recall):>10} {pct(s.f1):>10} {s.support:>8}"
            )
        if self.top_confusions:
            lines += ["", "most frequent confusions (gold -> predicted):"]
            for c in self.top_confusions:
                lines.append(f"  {c.gold} -> {c.predicted}  {c.count}")
        return "\n".join(lines) + "\n"


def pct(x: float) -> str:
    return f"{100 * x:.2f}%"


def _f1(tp: float, n_pred: float, n_gold: float) -> float:
    # 2TP / (2TP + FP + FN), from counts so rational results stay exact
    denom = n_pred + n_gold
    return 2 * tp / denom if denom else 0.0


def confusion_matrix(gold: TaggedCorpus, pred: TaggedCorpus) -> tuple[np.ndarray, np.ndarray]:
    """Rows are gold tags, columns predicted.

    Also returns, per gold tag, how many tokens the prediction left untagged.
    """
    if len(gold.sentences) != len(pred.sentences):
        raise StructureMismatchError(
            f"gold has {len(gold.sentences)} sentences, prediction has {len(pred.sentences)}"
        )
    if gold.tagset != pred.tagset:
        raise StructureMismatchError("gold and prediction use different tagsets")
    T = len(gold.tagset)
    m = np.zeros((T, T), dtype=np.int64)
    missing = np.zeros(T, dtype=np.int64)
    for k, (gs, ps) in enumerate(zip(gold.sentences, pred.sentences)):
        if gs.surfaces != ps.surfaces:
            raise StructureMismatchError(
                f"sentence {k + 1} ({gs.id!r}) differs between gold and prediction"
            )
        for i, (gt, pt) in enumerate(zip(gs.tokens, ps.tokens)):
            if gt.gold is None:
                raise StructureMismatchError(f"sentence {k + 1} ({gs.id!r}) token {i} has no gold tag")
            if pt.gold is None:
                missing[gt.gold] += 1
            else:
                m[gt.gold, pt.gold] += 1
    return m, missing


def report_from_matrix(
    m: np.ndarray,
    tagset: TagSet,
    missing: np.ndarray | None = None,
    include_zero_support: bool = False,
    top_k: int = 10,
) -> EvalReport:
    m = np.asarray(m, dtype=np.int64)
    if missing is None:
        missing = np.zeros(len(tagset), dtype=np.int64)
    tp = np.diag(m).astype(float)
    support = m.sum(axis=1) + missing
    pred_count = m.sum(axis=0)
    total = int(support.sum())
    per_tag: dict[str, TagScore] = {}
    f1s = []
    for t, code in enumerate(tagset.codes):
        p = tp[t] / pred_count[t] if pred_count[t] else 0.0
        r = tp[t] / support[t] if support[t] else 0.0
        f = _f1(tp[t], pred_count[t], support[t])
        if support[t] or pred_count[t]:
            per_tag[code] = TagScore(float(p), float(r), float(f), int(support[t]))
        if support[t] or include_zero_support:
            f1s.append(f)
    correct = float(tp.sum())
    micro_p = correct / pred_count.sum() if pred_count.sum() else 0.0
    micro_r = correct / total if total else 0.0
    report = EvalReport(
        accuracy=correct / total if total else 0.0,
        micro_f1=_f1(correct, pred_count.sum(), total),
        micro_precision=micro_p,
        micro_recall=micro_r,
        macro_f1=float(np.mean(f1s)) if f1s else 0.0,
        token_count=total,
        per_tag=per_tag,
        confusion=m,
        tagset=tagset,
    )
    if top_k:
        report.top_confusions = confusion_pairs(m, top_k, tagset)
    return report


def evaluate(
    gold: TaggedCorpus,
    pred: TaggedCorpus,
    include_zero_support: bool = False,
    top_k: int = 10,
) -> EvalReport:
    """Score predictions against gold token by token.

    Untagged predicted tokens count as misses: they lower recall and accuracy
    but add no false positive.
    """
    m, missing = confusion_matrix(gold, pred)
    return report_from_matrix(m, gold.tagset, missing, include_zero_support, top_k)


def confusion_pairs(m: np.ndarray, k: int, tagset: TagSet | None = None) -> list[ConfusionPair]:
    """Top-k off-diagonal cells by count; ties by (gold ordinal, predicted ordinal)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    m = np.asarray(m)
    cells = [
        (-int(m[g, p]), g, p)
        for g in range(m.shape[0])
        for p in range(m.shape[1])
        if g != p and m[g, p] > 0
    ]
    cells.sort()
    name = (lambda i: tagset.code(i)) if tagset is not None else str
    return [ConfusionPair(name(g), name(p), -c) for c, g, p in cells[:k]]
