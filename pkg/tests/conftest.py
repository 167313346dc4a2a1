from pathlib import Path

import pytest

from morphcall import perturb, udcore

FIXTURES = Path(__file__).parent / "fixtures"
LANGUAGES = ("ru", "en", "de", "fr")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpora() -> dict[str, list[udcore.Sentence]]:
    return {lang: udcore.parse_conllu_file(FIXTURES / "treebanks" / f"{lang}_fixture.conllu",
                                           language=lang)
            for lang in LANGUAGES}


@pytest.fixture(scope="session")
def lexicons() -> dict[str, perturb.InflectionLexicon]:
    return {lang: perturb.load_lexicon(FIXTURES / "lexicons" / f"{lang}.tsv", lang)
            for lang in LANGUAGES}


@pytest.fixture(scope="session")
def stoplists() -> dict[str, perturb.StopList]:
    lists = {}
    for lang in LANGUAGES:
        override = FIXTURES / "stopwords" / "ru.txt" if lang == "ru" else None
        lists[lang] = perturb.load_stoplist(lang, stopwords_path=override)
    return lists
