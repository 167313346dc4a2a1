"""CoNLL-U sentence model and morphosyntactic feature queries.

Parses UD treebanks into a typed sentence model. Multiword-token ranges
(ids like "3-4") and empty nodes (ids like "5.1") are dropped: features and
dependency relations live on syntactic words, and all downstream counting is
over syntactic words.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ConlluParseError

LANGUAGES = ("ru", "en", "de", "fr")

N_COLUMNS = 10

# Ordered per-language inventories of admissible feature values. The order of
# a value list defines the label ids of the k-way value-classification task,
# and its length the task arity.
DEFAULT_INVENTORIES: dict[str, dict[str, tuple[str, ...]]] = {
    "en": {
        "Number": ("Sing", "Plur"),
        "Person": ("1", "2", "3"),
    },
    "fr": {
        "Number": ("Sing", "Plur"),
        "Person": ("1", "2", "3"),
        "Gender": ("Masc", "Fem"),
    },
    "de": {
        "Number": ("Sing", "Plur"),
        "Case": ("Nom", "Acc", "Dat", "Gen"),
        "Person": ("1", "2", "3"),
        "Gender": ("Masc", "Fem", "Neut"),
    },
    "ru": {
        "Number": ("Sing", "Plur"),
        "Case": ("Nom", "Acc", "Dat", "Gen", "Loc", "Ins"),
        "Person": ("1", "2", "3"),
        "Gender": ("Masc", "Fem", "Neut"),
    },
}


@dataclass(frozen=True)
class Token:
    """One syntactic word.

    `head` is the CoNLL-U head column: 0 for the root, otherwise the 1-based
    index of the governing token. `syncretic` lists feature names whose FEATS
    entry carried several values (e.g. "Case=Acc,Nom"); only the first value
    is kept in `feats`.
    """

    index: int
    form: str
    lemma: str
    upos: str
    feats: dict[str, str]
    head: int
    deprel: str
    syncretic: frozenset[str] = field(default_factory=frozenset, compare=False)

    @property
    def is_syncretic(self) -> bool:
        return bool(self.syncretic)


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[Token, ...]
    language: str = "und"

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def root_index(self) -> int | None:
        """0-based position of the unique root token, or None if the root is
        missing or ambiguous (such sentences are skipped by perturbation
        generators)."""
        roots = [i for i, t in enumerate(self.tokens) if t.deprel == "root"]
        return roots[0] if len(roots) == 1 else None

    @property
    def has_unique_root(self) -> bool:
        return self.root_index is not None


class FeatureInventory:
    """Ordered feature -> admissible value lists for one language."""

    def __init__(self, language: str, features: dict[str, tuple[str, ...]]):
        for name, values in features.items():
            if not values or len(set(values)) != len(values):
                raise ConfigError(f"inventory for {name} must be nonempty and duplicate-free")
        self.language = language
        self.features = {name: tuple(values) for name, values in features.items()}

    def supports(self, feature: str) -> bool:
        return feature in self.features

    def values(self, feature: str) -> tuple[str, ...]:
        return self.features[feature]

    def arity(self, feature: str) -> int:
        return len(self.features[feature])

    def label_of(self, feature: str, value: str) -> int | None:
        values = self.features.get(feature, ())
        return values.index(value) if value in values else None


def feature_inventory(language: str) -> FeatureInventory:
    if language not in DEFAULT_INVENTORIES:
        raise ConfigError(f"no feature inventory for language {language!r}")
    return FeatureInventory(language, DEFAULT_INVENTORIES[language])


def has_feature(token: Token, feature: str) -> bool:
    return feature in token.feats


def feature_value(token: Token, feature: str) -> str | None:
    return token.feats.get(feature)


def _parse_feats(raw: str) -> tuple[dict[str, str], frozenset[str]]:
    if raw == "_" or raw == "":
        return {}, frozenset()
    feats: dict[str, str] = {}
    syncretic = set()
    for item in raw.split("|"):
        if "=" not in item:
            continue
        name, value = item.split("=", 1)
        if not name or not value:
            continue
        if "," in value:
            value = value.split(",")[0]
            syncretic.add(name)
        feats[name] = value
    return feats, frozenset(syncretic)


def parse_conllu(data: str | bytes, language: str = "und",
                 source_name: str = "<stream>") -> list[Sentence]:
    """Parse CoNLL-U text into sentences.

    Multiword-token lines and empty nodes are skipped. A line with a column
    count other than 10, or a non-integer index/head on a word line, raises
    ConlluParseError with the line number.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")

    sentences: list[Sentence] = []
    sent_id: str | None = None
    tokens: list[Token] = []
    ordinal = 0

    def flush(line_no: int) -> None:
        nonlocal sent_id, tokens, ordinal
        if tokens:
            ordinal += 1
            sid = sent_id if sent_id else f"{source_name}:{ordinal}"
            expected = list(range(1, len(tokens) + 1))
            if [t.index for t in tokens] != expected:
                raise ConlluParseError("token indices are not contiguous 1..n", line_no)
            sentences.append(Sentence(id=sid, tokens=tuple(tokens), language=language))
        sent_id = None
        tokens = []

    line_no = 0
    for line_no, line in enumerate(io.StringIO(data), start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line:
            flush(line_no)
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                sent_id = body.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise ConlluParseError(f"expected {N_COLUMNS} columns, got {len(cols)}", line_no)
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:
            continue  # multiword-token range / empty node
        try:
            index = int(tok_id)
        except ValueError:
            raise ConlluParseError(f"non-integer token index {tok_id!r}", line_no) from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(f"non-integer head {cols[6]!r}", line_no) from None
        if index < 1 or head < 0:
            raise ConlluParseError(f"index/head out of range: {index}/{head}", line_no)
        feats, syncretic = _parse_feats(cols[5])
        tokens.append(Token(index=index, form=cols[1], lemma=cols[2], upos=cols[3],
                            feats=feats, head=head, deprel=cols[7], syncretic=syncretic))
    flush(line_no + 1)

    for sentence in sentences:
        for token in sentence.tokens:
            if token.head > len(sentence.tokens):
                raise ConlluParseError(
                    f"head {token.head} exceeds sentence length in {sentence.id}")
    return sentences


def parse_conllu_file(path: str | Path, language: str = "und") -> list[Sentence]:
    path = Path(path)
    return parse_conllu(path.read_bytes(), language=language, source_name=path.name)


def sentence_to_conllu(sentence: Sentence) -> str:
    """Serialize back to CoNLL-U (sent_id comment plus word lines only)."""
    lines = [f"# sent_id = {sentence.id}"]
    for t in sentence.tokens:
        feats = "|".join(f"{k}={v}" for k, v in t.feats.items()) or "_"
        lines.append("\t".join([str(t.index), t.form, t.lemma, t.upos, "_",
                                feats, str(t.head), t.deprel, "_", "_"]))
    return "\n".join(lines) + "\n"


def filter_by_length(sentences: list[Sentence], min_len: int = 5,
                     max_len: int = 25) -> list[Sentence]:
    """Keep sentences whose syntactic-word count is within [min_len, max_len]."""
    if min_len > max_len:
        raise ConfigError(f"min length {min_len} exceeds max length {max_len}")
    return [s for s in sentences if min_len <= len(s.tokens) <= max_len]
