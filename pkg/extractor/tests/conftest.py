from pathlib import Path

import pytest
import torch

PRIMARY_FIXTURES = Path(__file__).resolve().parent.parent.parent / "tests" / "fixtures"

# words deliberately left out of the vocabulary so they split into pieces
SPLIT_WORDS = {"situatsiyu": ["situ", "##atsiyu"], "odnoobrazen": ["odno", "##obrazen"]}

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


def _fixture_word_atoms() -> set[str]:
    """Fixture forms as the BERT normalizer + pre-tokenizer will see them."""
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer

    normalizer = BertNormalizer(lowercase=True)
    splitter = BertPreTokenizer()
    atoms: set[str] = set()
    for treebank in sorted((PRIMARY_FIXTURES / "treebanks").glob("*.conllu")):
        for line in treebank.read_text(encoding="utf-8").splitlines():
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 10 or "-" in cols[0] or "." in cols[0]:
                continue
            normalized = normalizer.normalize_str(cols[1])
            atoms.update(atom for atom, _ in splitter.pre_tokenize_str(normalized))
    return atoms


def build_tokenizer(vocab: list[str]):
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer
    from tokenizers.processors import BertProcessing
    from transformers import BertTokenizerFast

    table = {word: i for i, word in enumerate(vocab)}
    backend = Tokenizer(WordPiece(table, unk_token="[UNK]"))
    backend.normalizer = BertNormalizer(lowercase=True)
    backend.pre_tokenizer = BertPreTokenizer()
    backend.post_processor = BertProcessing(("[SEP]", table["[SEP]"]),
                                            ("[CLS]", table["[CLS]"]))
    return BertTokenizerFast(tokenizer_object=backend, unk_token="[UNK]",
                             pad_token="[PAD]", cls_token="[CLS]",
                             sep_token="[SEP]", mask_token="[MASK]")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return PRIMARY_FIXTURES


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> Path:
    """A WordPiece tokenizer over the fixture vocabulary plus a random-init
    two-layer encoder, saved as a local checkpoint."""
    from transformers import BertConfig, BertModel

    model_dir = tmp_path_factory.mktemp("tiny-bert")
    atoms = _fixture_word_atoms() - set(SPLIT_WORDS)
    pieces = sorted(piece for parts in SPLIT_WORDS.values() for piece in parts)
    vocab = SPECIALS + sorted(atoms) + pieces
    tokenizer = build_tokenizer(vocab)
    tokenizer.save_pretrained(model_dir)

    torch.manual_seed(0)
    config = BertConfig(vocab_size=len(vocab), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=4,
                        intermediate_size=64, max_position_embeddings=64)
    BertModel(config).save_pretrained(model_dir)
    return model_dir


@pytest.fixture(scope="session")
def generated_datasets(tmp_path_factory) -> Path:
    """Russian fixture datasets emitted by the probing pipeline's CLI."""
    from morphcall import cli

    out = tmp_path_factory.mktemp("datasets")
    rc = cli.main(["generate", "--config",
                   str(PRIMARY_FIXTURES / "configs" / "ru.json"),
                   "--out", str(out)])
    assert rc == 0
    return out / "datasets"
