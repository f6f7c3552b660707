import os

# Model loading must never touch the network during tests; an unknown model
# id should fail fast instead of timing out against the hub.
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")

import pytest


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A 1-layer, 16-dim BERT with a 14-token vocabulary, built offline."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer
    from transformers.utils import logging as hf_logging

    hf_logging.disable_progress_bar()
    directory = tmp_path_factory.mktemp("tinybert")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "the", "cat", "sat", "on", "a", "mat", "dog", "ran", "fast",
    ]
    (directory / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=32,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(directory)
    tokenizer = BertTokenizer(str(directory / "vocab.txt"), model_max_length=32)
    tokenizer.save_pretrained(directory)
    return directory


@pytest.fixture(scope="session")
def sentence_file(tmp_path_factory):
    """Two in-vocabulary sentences, the smallest interesting job input."""
    path = tmp_path_factory.mktemp("sentences") / "pair.txt"
    path.write_text("the cat sat on a mat\na dog ran fast\n", encoding="utf-8")
    return path
