"""Train both models on the shipped synthetic corpora and save checkpoints.

The corpora are small enough to overfit in seconds on a CPU; this script
is the quickest way to produce working checkpoints for the demo pipeline
(see demo_pipeline.py) and to eyeball training curves after a change.

    python3 scripts/train_synthetic.py --out-dir runs/synthetic --seed 1
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from threatkg.corpus import Corpus, parse_bio_file
from threatkg.embeddings import HashedFeatureEmbedding
from threatkg.ontology import default_schema
from threatkg.relation import (
    ReTrainConfig,
    build_instances,
    evaluate_re,
    save_re,
    train_re,
)
from threatkg.serialize import atomic_write_text
from threatkg.tagger import (
    TrainConfig,
    evaluate_ner,
    extract_spans,
    history_csv,
    save_ner,
    train_ner,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
NER_CORPUS = REPO_ROOT / "data" / "synthetic" / "ner_overfit.bio"
RE_CORPUS = REPO_ROOT / "data" / "synthetic" / "re_overfit.bio"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path, default=Path("runs/synthetic"))
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--epochs", type=int, default=30)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    ner_corpus = parse_bio_file(NER_CORPUS)
    ner_config = TrainConfig(batch_size=4, dropout=0.0, learning_rate=0.02,
                             epochs=args.epochs, hidden_dim=12, seed=args.seed)
    ner_model, ner_history = train_ner(
        ner_corpus, Corpus(()), ner_config, HashedFeatureEmbedding(24)
    )
    save_ner(ner_model, args.out_dir / "ner.ckpt")
    atomic_write_text(args.out_dir / "ner_history.csv", history_csv(ner_history))
    ner_metrics = evaluate_ner(ner_model, ner_corpus)
    print(f"tagger ({time.perf_counter() - started:.1f}s, "
          f"{len(ner_corpus)} sentences)")
    print(ner_metrics.table())

    started = time.perf_counter()
    schema = default_schema()
    instances = []
    for sentence in parse_bio_file(RE_CORPUS):
        spans = extract_spans(sentence.tags, sentence)
        instances.extend(build_instances(sentence, spans, schema))
    instances = [inst for inst in instances if inst.gold_label is not None]
    re_config = ReTrainConfig(batch_size=8, dropout=0.0, learning_rate=0.03,
                              epochs=args.epochs + 10, hidden_dim=10, seed=args.seed + 1)
    re_model, _ = train_re(instances, instances, re_config, HashedFeatureEmbedding(16))
    save_re(re_model, args.out_dir / "re.ckpt")
    re_metrics = evaluate_re(re_model, schema, instances)
    print(f"\nrelation classifier ({time.perf_counter() - started:.1f}s, "
          f"{len(instances)} instances)")
    print(f"  micro-F1 pre-correction  {re_metrics.pre_micro.f1:.4f}")
    print(f"  micro-F1 post-correction {re_metrics.post_micro.f1:.4f}")
    print(f"  kept {re_metrics.kept}, corrected {re_metrics.corrected}, "
          f"rejected {re_metrics.rejected}")
    print(f"\ncheckpoints in {args.out_dir}/")


if __name__ == "__main__":
    main()
