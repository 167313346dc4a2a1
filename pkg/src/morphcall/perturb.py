"""Guided sentence perturbations: stop-word/article removals and single-token
inflectional agreement errors, emitted as paired (original, perturbed)
detection datasets.

Inflectional edits go through a precompiled paradigm lexicon (TSV of surface
form, lemma, UPOS, feature bundle). Quality rules: unique root, a single
main-clause subject, syncretic targets skipped, removals must leave at least
two tokens.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, FormatError, GenerationError
from .seeding import derive_rng
from .taskgen import GenerationConfig, ProbingDataset, TaskInstance, split_and_balance
from .udcore import (DEFAULT_INVENTORIES, FeatureInventory, Sentence,
                     feature_inventory, feature_value, filter_by_length)

REMOVAL_KINDS = ("stopword_removal", "article_removal")
AGREEMENT_KINDS = ("subject_number", "subject_case", "predicate_number",
                   "predicate_gender", "predicate_person", "deictic_number")

# (target role, governed feature) per inflectional kind.
_KIND_TARGETS = {
    "subject_number": ("subject", "Number"),
    "subject_case": ("subject", "Case"),
    "predicate_number": ("predicate", "Number"),
    "predicate_gender": ("predicate", "Gender"),
    "predicate_person": ("predicate", "Person"),
    "deictic_number": ("deictic", "Number"),
}

# Language restrictions; kinds absent here run for every supported language.
_KIND_LANGUAGES = {
    "article_removal": {"en", "fr", "de"},
    "subject_case": {"ru"},
    "predicate_gender": {"ru"},
    "predicate_person": {"ru"},
    "deictic_number": {"en", "de"},
}


def kinds_for_language(language: str) -> list[str]:
    kinds = []
    for kind in REMOVAL_KINDS + AGREEMENT_KINDS:
        allowed = _KIND_LANGUAGES.get(kind)
        if allowed is None or language in allowed:
            kinds.append(kind)
    return kinds


def check_kind(kind: str, language: str) -> None:
    if kind not in REMOVAL_KINDS + AGREEMENT_KINDS:
        raise ConfigError(f"unknown perturbation kind {kind!r}")
    allowed = _KIND_LANGUAGES.get(kind)
    if allowed is not None and language not in allowed:
        raise ConfigError(f"perturbation {kind} is not defined for language {language!r}")


@dataclass
class InflectionLexicon:
    """(lemma, upos) -> ordered list of (surface form, feature bundle)."""

    language: str
    entries: dict[tuple[str, str], list[tuple[str, dict[str, str]]]] = field(default_factory=dict)

    def add(self, form: str, lemma: str, upos: str, bundle: dict[str, str]) -> None:
        self.entries.setdefault((lemma, upos), []).append((form, bundle))

    def sort(self) -> None:
        for forms in self.entries.values():
            forms.sort(key=lambda e: (e[0], _bundle_str(e[1])))

    def lookup(self, form: str, lemma: str, upos: str) -> list[dict[str, str]]:
        return [bundle for f, bundle in self.entries.get((lemma, upos), []) if f == form]


def _bundle_str(bundle: dict[str, str]) -> str:
    return "|".join(f"{k}={bundle[k]}" for k in sorted(bundle)) or "_"


def _parse_bundle(raw: str) -> dict[str, str]:
    if raw == "_" or raw == "":
        return {}
    bundle = {}
    for item in raw.split("|"):
        name, _, value = item.partition("=")
        if not name or not value:
            raise ValueError(f"bad feature item {item!r}")
        bundle[name] = value
    return bundle


def load_lexicon(path: str | Path, language: str) -> InflectionLexicon:
    """Load a UTF-8 TSV of (form, lemma, upos, bundle) rows. Comment lines
    start with '#'. Entry lists are sorted so first-match lookup is stable."""
    lexicon = InflectionLexicon(language=language)
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise FormatError(f"{path}: line {line_no}: expected 4 columns, got {len(cols)}")
        try:
            bundle = _parse_bundle(cols[3])
        except ValueError as exc:
            raise FormatError(f"{path}: line {line_no}: {exc}") from None
        lexicon.add(cols[0], cols[1], cols[2], bundle)
    lexicon.sort()
    return lexicon


@dataclass
class StopList:
    language: str
    stopwords: frozenset[str]
    articles: frozenset[str] = frozenset()


_DATA_PACKAGE = "morphcall.data"


def _read_wordlist(path: Path) -> frozenset[str]:
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word and not word.startswith("#"):
            words.add(word)
    return frozenset(words)


def load_stoplist(language: str, stopwords_path: str | Path | None = None,
                  articles_path: str | Path | None = None) -> StopList:
    """Load the vendored stop-word/article lists, or explicit overrides."""
    from importlib import resources

    data_root = resources.files(_DATA_PACKAGE)
    if stopwords_path is None:
        candidate = data_root / "stopwords" / f"{language}.txt"
        if not candidate.is_file():
            raise ConfigError(f"no vendored stop-word list for language {language!r}")
        stopwords = _read_wordlist(candidate)  # type: ignore[arg-type]
    else:
        stopwords = _read_wordlist(Path(stopwords_path))
    if not stopwords:
        raise ConfigError(f"empty stop-word list for {language!r}")
    articles: frozenset[str] = frozenset()
    if articles_path is not None:
        articles = _read_wordlist(Path(articles_path))
    else:
        candidate = data_root / "articles" / f"{language}.txt"
        if candidate.is_file():
            articles = _read_wordlist(candidate)  # type: ignore[arg-type]
    return StopList(language=language, stopwords=stopwords, articles=articles)


@dataclass
class Edit:
    kind: str
    indices: tuple[int, ...]      # 0-based positions in the original token list
    old: tuple[str, ...]
    new: tuple[str, ...]          # empty for removals
    feature: str | None = None    # inflectional kinds: the flipped feature
    value: str | None = None      # and the value it was flipped to


@dataclass
class PerturbedPair:
    original: list[str]           # label 0
    perturbed: list[str]          # label 1
    edit: Edit


def find_main_subject(sentence: Sentence) -> int | None:
    """Position of the single nsubj-child of the root, or None."""
    root = sentence.root_index
    if root is None:
        return None
    root_id = sentence.tokens[root].index
    subjects = [i for i, t in enumerate(sentence.tokens)
                if t.head == root_id and t.deprel.startswith("nsubj")]
    return subjects[0] if len(subjects) == 1 else None


def find_main_predicate(sentence: Sentence) -> int | None:
    """The root if verbal, otherwise the leftmost AUX child of the root
    (copula or auxiliary), else None."""
    root = sentence.root_index
    if root is None:
        return None
    root_token = sentence.tokens[root]
    if root_token.upos in ("VERB", "AUX"):
        return root
    for i, t in enumerate(sentence.tokens):
        if t.head == root_token.index and t.upos == "AUX":
            return i
    return None


def _find_deictic(sentence: Sentence, feature: str) -> int | None:
    for i, t in enumerate(sentence.tokens):
        if (t.upos in ("DET", "PRON") and t.feats.get("PronType") == "Dem"
                and feature in t.feats and feature not in t.syncretic):
            return i
    return None


def inflect(lexicon: InflectionLexicon, lemma: str, upos: str,
            base_features: dict[str, str], overrides: dict[str, str],
            original_form: str | None = None) -> str | None:
    """First paradigm form matching base features with overrides applied.

    A candidate must carry every override feature with its new value, and must
    agree with the (non-overridden) base features it encodes; features the
    lexicon does not encode are unconstrained. Returns None when nothing
    matches or the first match is the original surface form (syncretism)."""
    for form, bundle in lexicon.entries.get((lemma, upos), []):
        if any(bundle.get(name) != value for name, value in overrides.items()):
            continue
        if any(name in bundle and bundle[name] != value
               for name, value in base_features.items() if name not in overrides):
            continue
        if original_form is not None and form.lower() == original_form.lower():
            return None
        return form
    return None


def _match_case(new_form: str, old_form: str) -> str:
    if old_form[:1].isupper() and new_form[:1].islower():
        return new_form[:1].upper() + new_form[1:]
    return new_form


def remove_stopwords(sentence: Sentence, stoplist: StopList) -> PerturbedPair | None:
    """Remove every stop-word token; None if nothing was removed or fewer than
    two tokens would remain."""
    removed = [i for i, t in enumerate(sentence.tokens)
               if t.form.lower() in stoplist.stopwords]
    if not removed or len(sentence.tokens) - len(removed) < 2:
        return None
    kept = [t.form for i, t in enumerate(sentence.tokens) if i not in set(removed)]
    edit = Edit(kind="stopword_removal", indices=tuple(removed),
                old=tuple(sentence.tokens[i].form for i in removed), new=())
    return PerturbedPair(original=sentence.forms, perturbed=kept, edit=edit)


def remove_articles(sentence: Sentence, stoplist: StopList) -> PerturbedPair | None:
    """Remove article determiners (en/fr/de only)."""
    check_kind("article_removal", sentence.language)
    if not stoplist.articles:
        raise ConfigError(f"no article list for language {sentence.language!r}")
    removed = []
    for i, t in enumerate(sentence.tokens):
        if t.upos != "DET" or t.form.lower() not in stoplist.articles:
            continue
        if t.feats and t.feats.get("PronType", "Art") != "Art":
            continue
        removed.append(i)
    if not removed or len(sentence.tokens) - len(removed) < 2:
        return None
    kept = [t.form for i, t in enumerate(sentence.tokens) if i not in set(removed)]
    edit = Edit(kind="article_removal", indices=tuple(removed),
                old=tuple(sentence.tokens[i].form for i in removed), new=())
    return PerturbedPair(original=sentence.forms, perturbed=kept, edit=edit)


def perturb_agreement(sentence: Sentence, kind: str, lexicon: InflectionLexicon,
                      rng: random.Random,
                      inventory: FeatureInventory | None = None) -> PerturbedPair | None:
    """Flip one inflectional feature value on the clause subject, predicate, or
    a demonstrative, using a seeded uniform choice among admissible values that
    have a distinct surface form."""
    check_kind(kind, sentence.language)
    role, feature = _KIND_TARGETS[kind]
    if inventory is None:
        if sentence.language not in DEFAULT_INVENTORIES:
            raise ConfigError(f"no inventory for language {sentence.language!r}")
        inventory = feature_inventory(sentence.language)
    if not inventory.supports(feature):
        raise ConfigError(f"feature {feature} not in inventory for {sentence.language!r}")

    if role == "subject":
        position = find_main_subject(sentence)
    elif role == "predicate":
        position = find_main_predicate(sentence)
    else:
        position = _find_deictic(sentence, feature)
    if position is None:
        return None
    token = sentence.tokens[position]
    current = feature_value(token, feature)
    if current is None or feature in token.syncretic:
        return None

    candidates = []
    for value in inventory.values(feature):
        if value == current:
            continue
        form = inflect(lexicon, token.lemma, token.upos, token.feats,
                       {feature: value}, original_form=token.form)
        if form is not None:
            candidates.append((value, _match_case(form, token.form)))
    if not candidates:
        return None
    value, new_form = rng.choice(candidates)

    perturbed = list(sentence.forms)
    perturbed[position] = new_form
    edit = Edit(kind=kind, indices=(position,), old=(token.form,), new=(new_form,),
                feature=feature, value=value)
    return PerturbedPair(original=sentence.forms, perturbed=perturbed, edit=edit)


def _apply_kind(sentence: Sentence, kind: str, lexicon: InflectionLexicon | None,
                stoplist: StopList | None, seed: int) -> PerturbedPair | None:
    if kind == "stopword_removal":
        if stoplist is None:
            raise ConfigError("stopword_removal needs a stop-word list")
        return remove_stopwords(sentence, stoplist)
    if kind == "article_removal":
        if stoplist is None:
            raise ConfigError("article_removal needs an article list")
        return remove_articles(sentence, stoplist)
    if lexicon is None:
        raise ConfigError(f"{kind} needs an inflection lexicon")
    rng = derive_rng(seed, "perturb", kind, sentence.id)
    return perturb_agreement(sentence, kind, lexicon, rng)


def gen_perturbation_task(sentences: list[Sentence], kind: str,
                          lexicon: InflectionLexicon | None,
                          stoplist: StopList | None,
                          cfg: GenerationConfig) -> ProbingDataset:
    """Emit sentence-level (original=0, perturbed=1) pairs for one kind.

    Pair members share the sentence id, so the sentence-based splitter keeps
    them in the same split and the dataset is balanced by construction."""
    if not sentences:
        raise GenerationError("no input sentences")
    language = sentences[0].language
    check_kind(kind, language)
    task = f"perturb:{kind}"

    lo, hi = cfg.length_range
    instances: list[TaskInstance] = []
    n_pairs = 0
    for sentence in filter_by_length(list(sentences), lo, hi):
        if not sentence.has_unique_root:
            continue
        pair = _apply_kind(sentence, kind, lexicon, stoplist, cfg.seed)
        if pair is None:
            continue
        n_pairs += 1
        orig_id = f"{task}:{sentence.id}:orig"
        pert_id = f"{task}:{sentence.id}:pert"
        common = {"kind": kind, "paired_original": orig_id}
        instances.append(TaskInstance(
            id=orig_id, sentence_id=sentence.id, tokens=pair.original,
            target_index=None, label=0, task=task, language=language,
            meta=dict(common)))
        pert_meta = {**common, "edit_indices": list(pair.edit.indices),
                     "edit_old": list(pair.edit.old), "edit_new": list(pair.edit.new)}
        if pair.edit.feature is not None:
            pert_meta["edit_feature"] = pair.edit.feature
            pert_meta["edit_value"] = pair.edit.value
        instances.append(TaskInstance(
            id=pert_id, sentence_id=sentence.id, tokens=pair.perturbed,
            target_index=None, label=1, task=task, language=language,
            meta=pert_meta))
    if n_pairs < cfg.min_pairs:
        raise GenerationError(f"{task}: only {n_pairs} pairs generated "
                              f"(minimum {cfg.min_pairs})")
    return split_and_balance(instances, cfg, task=task, language=language,
                             arity=2, stream_tag=kind)
