"""Shared fixtures: a tiny local transformer so tests never touch the hub."""

from __future__ import annotations

from pathlib import Path

import pytest

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "apt", "##28", "attacked", "banks", "in", "france", "during", "2019",
    ".", "turla", "used", "mimikatz", "on", "victims", "the",
    "lazarus", "group", "deployed", "malware", "##s",
]


def build_model_dir(path: Path, hidden_size: int = 16, seed: int = 0) -> Path:
    """A randomly initialized 1-layer BERT plus WordPiece tokenizer."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    path.mkdir(parents=True, exist_ok=True)
    vocab_file = path / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(str(vocab_file), do_lower_case=True)
    tokenizer.save_pretrained(path)

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=hidden_size,
        num_hidden_layers=1,
        num_attention_heads=2 if hidden_size % 2 == 0 else 1,
        intermediate_size=2 * hidden_size,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory) -> Path:
    return build_model_dir(tmp_path_factory.mktemp("model"))


def write_bio(path: Path, sentences: list[list[str]]) -> Path:
    lines = []
    for surfaces in sentences:
        lines.extend(f"{surface}\tO" for surface in surfaces)
        lines.append("")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture()
def small_corpus(tmp_path) -> Path:
    return write_bio(tmp_path / "small.bio", [
        ["APT28", "attacked", "banks", "."],
        ["Turla", "used", "Mimikatz", "on", "victims", "."],
    ])
