"""Exporter internals: corpus reading, container bytes, alignment, CLI."""

from __future__ import annotations

import contextlib
import io
import json
import struct
import sys
from unittest import mock

import numpy as np
import pytest

from threatkg_exporter import (
    AlignmentError,
    BioFormatError,
    ExportManifest,
    corpus_fingerprint,
    export_embeddings,
    read_bio_tokens,
    write_embedding_container,
)
from threatkg_exporter.cli import main
from threatkg_exporter.export import compute_embeddings, pool_subwords

from conftest import write_bio


# --------------------------------------------------------------------------
# BIO reading
# --------------------------------------------------------------------------


def test_read_bio_tokens_keys_and_surfaces(small_corpus):
    sentences = read_bio_tokens(small_corpus)
    assert [(s.doc_id, s.sentence_id) for s in sentences] == [
        ("small.bio", 0), ("small.bio", 1)
    ]
    assert sentences[0].surfaces == ("APT28", "attacked", "banks", ".")
    assert len(sentences[1]) == 6


def test_read_bio_tokens_trailing_sentence_and_doc_id(tmp_path):
    path = tmp_path / "t.bio"
    path.write_text("a\tO\nb\tB-APT", encoding="utf-8")  # no trailing blank line
    sentences = read_bio_tokens(path, doc_id="custom")
    assert len(sentences) == 1
    assert sentences[0].doc_id == "custom"
    assert sentences[0].surfaces == ("a", "b")


@pytest.mark.parametrize("line,fragment", [
    ("justonetoken", "1 fields"),
    ("a b c", "3 fields"),
    ("tok\tX-APT", "tag shape"),
])
def test_read_bio_tokens_rejects_malformed_lines(tmp_path, line, fragment):
    path = tmp_path / "bad.bio"
    path.write_text(f"ok\tO\n{line}\n", encoding="utf-8")
    with pytest.raises(BioFormatError, match=fragment) as excinfo:
        read_bio_tokens(path)
    assert excinfo.value.line_no == 2


# --------------------------------------------------------------------------
# Container writing
# --------------------------------------------------------------------------


def test_container_layout_matches_documented_bytes(tmp_path):
    path = tmp_path / "e.emb"
    matrix = np.array([[1.5, -2.0]], dtype=np.float64)
    write_embedding_container(path, {("d", 3): matrix}, 2, "abc", "<f8")
    expected = (
        b"TKGEMB01"
        + struct.pack("<III", 1, 2, 2)
        + struct.pack("<I", 3) + b"abc"
        + struct.pack("<Q", 1)
        + struct.pack("<I", 1) + b"d"
        + struct.pack("<II", 3, 1)
        + matrix.tobytes()
    )
    assert path.read_bytes() == expected


def test_container_no_fingerprint_is_zero_length(tmp_path):
    path = tmp_path / "e.emb"
    write_embedding_container(path, {}, 4, None)
    blob = path.read_bytes()
    assert blob[:8] == b"TKGEMB01"
    (fp_len,) = struct.unpack_from("<I", blob, 8 + 12)
    assert fp_len == 0


def test_container_rejects_bad_dtype_and_shape(tmp_path):
    with pytest.raises(ValueError, match="dtype"):
        write_embedding_container(tmp_path / "x", {}, 4, None, "<i4")
    with pytest.raises(ValueError, match="shape"):
        write_embedding_container(
            tmp_path / "x", {("d", 0): np.zeros((2, 3))}, 4, None
        )
    # the failed write must not leave the target or temp files behind
    assert list(tmp_path.iterdir()) == []


def test_corpus_fingerprint_is_sha256_of_bytes(tmp_path):
    path = tmp_path / "c.bio"
    path.write_text("x\tO\n", encoding="utf-8")
    import hashlib

    assert corpus_fingerprint(path) == hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# Pooling
# --------------------------------------------------------------------------


def test_pool_mean_of_identical_subwords_is_that_vector():
    row = np.array([0.25, -1.5, 3.0])
    stacked = np.stack([row, row, row])
    np.testing.assert_allclose(pool_subwords(stacked, "mean"), row, rtol=1e-12)


def test_pool_mean_is_symmetric_but_not_the_inputs():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    pooled = pool_subwords(np.stack([a, b]), "mean")
    swapped = pool_subwords(np.stack([b, a]), "mean")
    np.testing.assert_allclose(pooled, swapped, rtol=1e-15)
    assert not np.allclose(pooled, a) and not np.allclose(pooled, b)


def test_pool_first_takes_the_leading_subword():
    a, b = np.array([1.0, 0.0]), np.array([0.0, 2.0])
    np.testing.assert_array_equal(pool_subwords(np.stack([a, b]), "first"), a)


def test_pool_rejects_unknown_policy():
    with pytest.raises(ValueError, match="pooling"):
        pool_subwords(np.zeros((1, 2)), "median")


# --------------------------------------------------------------------------
# Alignment against the model
# --------------------------------------------------------------------------


def test_vector_counts_match_token_counts(tiny_model, small_corpus):
    sentences = read_bio_tokens(small_corpus)
    records, dim = compute_embeddings(sentences, str(tiny_model))
    assert dim == 16
    for sentence in sentences:
        assert records[(sentence.doc_id, sentence.sentence_id)].shape == (
            len(sentence), dim,
        )


def test_multi_subword_token_is_mean_of_its_pieces(tiny_model, small_corpus):
    """'APT28' splits into 'apt' + '##28'; its exported vector must be the
    mean of exactly those two hidden states."""
    import torch
    from transformers import AutoModel, AutoTokenizer

    sentences = read_bio_tokens(small_corpus)
    records, _ = compute_embeddings(sentences, str(tiny_model), batch_size=1)

    tokenizer = AutoTokenizer.from_pretrained(str(tiny_model))
    assert tokenizer.tokenize("APT28") == ["apt", "##28"]
    model = AutoModel.from_pretrained(str(tiny_model)).eval()
    encoding = tokenizer([list(sentences[0].surfaces)], is_split_into_words=True,
                         return_tensors="pt")
    with torch.no_grad():
        hidden = model(**encoding).last_hidden_state[0].numpy()
    word_ids = encoding.word_ids(0)
    pieces = [p for p, w in enumerate(word_ids) if w == 0]
    assert len(pieces) == 2
    expected = hidden[pieces].mean(axis=0)
    np.testing.assert_allclose(
        records[("small.bio", 0)][0], expected, rtol=1e-6
    )


def test_first_subword_pooling_flag(tiny_model, small_corpus):
    sentences = read_bio_tokens(small_corpus)
    mean_records, _ = compute_embeddings(sentences, str(tiny_model), pooling="mean")
    first_records, _ = compute_embeddings(sentences, str(tiny_model), pooling="first")
    key = ("small.bio", 0)
    # token 0 has two subwords, so the policies must disagree there ...
    assert not np.allclose(mean_records[key][0], first_records[key][0])
    # ... and agree on single-subword tokens
    np.testing.assert_allclose(mean_records[key][1], first_records[key][1], rtol=1e-6)


def test_repeated_token_gets_contextual_vectors(tiny_model, tmp_path):
    corpus = write_bio(tmp_path / "r.bio", [["banks", "attacked", "banks"]])
    records, _ = compute_embeddings(read_bio_tokens(corpus), str(tiny_model))
    vectors = records[("r.bio", 0)]
    assert not np.allclose(vectors[0], vectors[2])  # same surface, different context


def test_zero_subword_token_raises_alignment_error(tiny_model, tmp_path):
    corpus = write_bio(tmp_path / "z.bio", [
        ["fine", "tokens", "."],
        ["bad", "​", "token"],  # zero-width space vanishes in normalization
    ])
    with pytest.raises(AlignmentError) as excinfo:
        compute_embeddings(read_bio_tokens(corpus), str(tiny_model))
    assert "('z.bio', 1)" in str(excinfo.value)
    assert excinfo.value.token_index == 1


def test_batching_covers_every_sentence(tiny_model, tmp_path):
    corpus = write_bio(tmp_path / "b.bio", [["banks", "."]] * 7)
    records, _ = compute_embeddings(read_bio_tokens(corpus), str(tiny_model),
                                    batch_size=3)
    assert sorted(sid for _, sid in records) == list(range(7))
    with pytest.raises(ValueError, match="batch_size"):
        compute_embeddings([], str(tiny_model), batch_size=0)


# --------------------------------------------------------------------------
# export_embeddings
# --------------------------------------------------------------------------


def test_export_writes_container_and_manifest(tiny_model, small_corpus, tmp_path):
    out = tmp_path / "vectors.emb"
    manifest = export_embeddings(small_corpus, str(tiny_model), out)
    assert out.is_file()
    assert manifest.dim == 16
    assert manifest.pooling == "mean"
    assert manifest.sentences == 2
    assert manifest.vectors == 10
    assert manifest.corpus_fingerprint == corpus_fingerprint(small_corpus)

    sidecar = ExportManifest.from_file(tmp_path / "vectors.emb.manifest.json")
    assert sidecar == manifest


def test_export_is_byte_deterministic(tiny_model, small_corpus, tmp_path):
    a, b = tmp_path / "a.emb", tmp_path / "b.emb"
    export_embeddings(small_corpus, str(tiny_model), a)
    export_embeddings(small_corpus, str(tiny_model), b)
    assert a.read_bytes() == b.read_bytes()


def test_export_float64_and_text_variants(tiny_model, small_corpus, tmp_path):
    binary = tmp_path / "v.emb"
    export_embeddings(small_corpus, str(tiny_model), binary, dtype="<f8")
    (dtype_code,) = struct.unpack_from("<I", binary.read_bytes(), 8 + 8)
    assert dtype_code == 2

    text = tmp_path / "v.txt"
    export_embeddings(small_corpus, str(tiny_model), text, text=True)
    first = text.read_text(encoding="utf-8").splitlines()[0]
    assert first.startswith("#tkg-embeddings v1 dim=16 fingerprint=")


def test_export_custom_manifest_path(tiny_model, small_corpus, tmp_path):
    manifest_path = tmp_path / "audit.json"
    export_embeddings(small_corpus, str(tiny_model), tmp_path / "v.emb",
                      manifest_path=manifest_path)
    payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    assert payload["model_id"] == str(tiny_model)


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------


def run_cli(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    code = 0
    with mock.patch.object(sys, "argv", ["threatkg-export", *argv]):
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            try:
                main()
            except SystemExit as exc:
                code = exc.code if isinstance(exc.code, int) else 1
    return code, out.getvalue(), err.getvalue()


def test_cli_exports_and_reports(tiny_model, small_corpus, tmp_path):
    out_path = tmp_path / "v.emb"
    code, out, err = run_cli(str(small_corpus), "--model", str(tiny_model),
                             "-o", str(out_path))
    assert code == 0, err
    assert "10 vectors" in out and out_path.is_file()

    code, out, _ = run_cli(str(small_corpus), "--model", str(tiny_model),
                           "-o", str(tmp_path / "v2.emb"), "--json")
    assert code == 0
    assert json.loads(out)["vectors"] == 10


def test_cli_exit_codes(tiny_model, small_corpus, tmp_path):
    code, _, _ = run_cli(str(small_corpus), "-o", str(tmp_path / "v.emb"))
    assert code == 2  # --model is required

    bad = tmp_path / "bad.bio"
    bad.write_text("one-field-only\n", encoding="utf-8")
    code, _, err = run_cli(str(bad), "--model", str(tiny_model),
                           "-o", str(tmp_path / "v.emb"))
    assert code == 3 and "1 fields" in err

    code, _, _ = run_cli(str(tmp_path / "missing.bio"), "--model", str(tiny_model),
                         "-o", str(tmp_path / "v.emb"))
    assert code == 5
