"""POS-tagging fine-tuning: a token-classification head over UPOS.

Sentences are split 80/10/10 at random with the given seed. Labels align to
the first subword of each word; continuation subwords are ignored by the
loss. Reports accuracy, F1, precision, and recall (weighted over the tag
distribution) for each split.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

IGNORE = -100


@dataclass
class TaggedSentence:
    forms: list[str]
    tags: list[str]


@dataclass
class FinetuneResult:
    label_set: list[str]
    metrics: dict[str, dict[str, float]]
    checkpoint: str
    epochs: int
    history: list[float] = field(default_factory=list)  # train accuracy per epoch


def read_tagged_sentences(paths: list[str | Path]) -> list[TaggedSentence]:
    """Minimal CoNLL-U reader: syntactic word lines only, FORM and UPOS."""
    sentences: list[TaggedSentence] = []
    for path in paths:
        forms: list[str] = []
        tags: list[str] = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                if forms:
                    sentences.append(TaggedSentence(forms, tags))
                    forms, tags = [], []
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 10 or "-" in cols[0] or "." in cols[0]:
                continue
            forms.append(cols[1])
            tags.append(cols[3])
        if forms:
            sentences.append(TaggedSentence(forms, tags))
    if not sentences:
        raise ValueError("no sentences found in the given treebanks")
    return sentences


def split_sentences(sentences: list[TaggedSentence], seed: int):
    order = list(range(len(sentences)))
    random.Random(seed).shuffle(order)
    n = len(order)
    b1, b2 = int(0.8 * n + 0.5), int(0.9 * n + 0.5)
    pick = lambda rows: [sentences[i] for i in rows]
    return pick(order[:b1]), pick(order[b1:b2]), pick(order[b2:])


def _encode(batch: list[TaggedSentence], tokenizer, label_index, max_length):
    enc = tokenizer([s.forms for s in batch], is_split_into_words=True,
                    padding=True, truncation=True, max_length=max_length,
                    return_tensors="pt")
    labels = torch.full(enc["input_ids"].shape, IGNORE, dtype=torch.long)
    for b, sentence in enumerate(batch):
        previous = None
        for t, w in enumerate(enc.word_ids(batch_index=b)):
            if w is None or w == previous:
                continue
            previous = w
            labels[b, t] = label_index.get(sentence.tags[w], IGNORE)
    return enc, labels


def _evaluate(model, sentences, tokenizer, label_index, device, max_length,
              batch_size=16) -> dict[str, float]:
    k = len(label_index)
    confusion = np.zeros((k, k), dtype=np.int64)
    model.eval()
    with torch.no_grad():
        for start in range(0, len(sentences), batch_size):
            batch = sentences[start:start + batch_size]
            enc, labels = _encode(batch, tokenizer, label_index, max_length)
            logits = model(**{key: v.to(device) for key, v in enc.items()}).logits
            pred = logits.argmax(dim=-1).to("cpu")
            mask = labels != IGNORE
            for gold, hyp in zip(labels[mask].tolist(), pred[mask].tolist()):
                confusion[gold, hyp] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    true_pos = np.diag(confusion).astype(np.float64)
    precision = np.divide(true_pos, predicted, out=np.zeros(k), where=predicted > 0)
    recall = np.divide(true_pos, support, out=np.zeros(k), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(k), where=denom > 0)
    weights = support / total if total else np.zeros(k)
    return {
        "accuracy": accuracy,
        "precision": float((precision * weights).sum()),
        "recall": float((recall * weights).sum()),
        "f1": float((f1 * weights).sum()),
        "n_tokens": int(total),
    }


def finetune_pos(treebank_paths: list[str | Path], model_path: str,
                 out_dir: str | Path, seed: int = 0, epochs: int = 5,
                 batch_size: int = 4, learning_rate: float = 5e-4,
                 device: str = "cpu", max_length: int | None = None) -> FinetuneResult:
    from transformers import AutoModelForTokenClassification, AutoTokenizer

    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)

    sentences = read_tagged_sentences(treebank_paths)
    train, dev, test = split_sentences(sentences, seed)
    label_set = sorted({tag for s in train for tag in s.tags})
    label_index = {tag: i for i, tag in enumerate(label_set)}

    tokenizer = AutoTokenizer.from_pretrained(model_path, use_fast=True)
    model = AutoModelForTokenClassification.from_pretrained(
        model_path, num_labels=len(label_set))
    model.to(device)
    if max_length is None:
        max_length = int(getattr(model.config, "max_position_embeddings", 512))

    optimizer = torch.optim.AdamW(model.parameters(), lr=learning_rate)
    loss_fn = torch.nn.CrossEntropyLoss(ignore_index=IGNORE)

    rng = random.Random(seed)
    history = []
    for _ in range(epochs):
        model.train()
        order = list(range(len(train)))
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            batch = [train[i] for i in order[start:start + batch_size]]
            enc, labels = _encode(batch, tokenizer, label_index, max_length)
            logits = model(**{key: v.to(device) for key, v in enc.items()}).logits
            loss = loss_fn(logits.view(-1, len(label_set)),
                           labels.to(device).view(-1))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        history.append(_evaluate(model, train, tokenizer, label_index, device,
                                 max_length)["accuracy"])

    metrics = {
        "train": _evaluate(model, train, tokenizer, label_index, device, max_length),
        "dev": _evaluate(model, dev, tokenizer, label_index, device, max_length),
        "test": _evaluate(model, test, tokenizer, label_index, device, max_length),
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    (out_dir / "labels.txt").write_text("\n".join(label_set) + "\n", encoding="utf-8")
    return FinetuneResult(label_set=label_set, metrics=metrics,
                          checkpoint=str(out_dir), epochs=epochs, history=history)
