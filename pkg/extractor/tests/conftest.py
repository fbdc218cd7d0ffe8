from pathlib import Path

import pytest
import torch

DATA_DIR = Path(__file__).parent / "data"

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "this", "that", "movie", "film", "plot", "acting", "story",
    "cast", "ending", "music", "was", "is", "felt", "looked", "really", "very",
    "quite", "absolutely", "great", "fantastic", "brilliant", "fun", "moving",
    "sharp", "crisp", "terrible", "boring", "slow", "weak", "flat", "dull",
    "bad", "and", "but", "with", "of", "it", "i", "loved", "hated", "enjoyed",
]


def build_model_dir(root: Path, n_layers: int, seed: int = 7) -> str:
    """Materialize a small randomly initialized encoder + wordpiece tokenizer."""
    from transformers import BertConfig, BertModel, BertTokenizer

    root.mkdir(parents=True, exist_ok=True)
    (root / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    tokenizer = BertTokenizer(str(root / "vocab.txt"))
    tokenizer.save_pretrained(root)
    torch.manual_seed(seed)
    model = BertModel(
        BertConfig(
            vocab_size=len(VOCAB),
            hidden_size=768,
            num_hidden_layers=n_layers,
            num_attention_heads=12,
            intermediate_size=128,
            max_position_embeddings=64,
        )
    )
    model.save_pretrained(root)
    return str(root)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A 12-layer, 768-hidden encoder usable fully offline."""
    return build_model_dir(tmp_path_factory.mktemp("encoder12"), n_layers=12)


@pytest.fixture(scope="session")
def shallow_model_dir(tmp_path_factory):
    """A 6-layer encoder, for geometry rejection tests."""
    return build_model_dir(tmp_path_factory.mktemp("encoder6"), n_layers=6)


@pytest.fixture(scope="session")
def corpus_path():
    return str(DATA_DIR / "reviews100.csv")
