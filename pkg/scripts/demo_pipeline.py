"""End-to-end demo: raw report text -> tagged entities -> triples -> graph.

Bootstraps checkpoints via train_synthetic.py if they are missing, runs the
extraction pipeline over a small sample report, then queries and exports the
resulting knowledge graph.

    python3 scripts/demo_pipeline.py --workspace runs/demo
"""

from __future__ import annotations

import argparse
import subprocess
import sys
from pathlib import Path

from threatkg.graph import GraphStore, export, neighbors
from threatkg.pipeline import PipelineConfig, run_pipeline

SAMPLE_REPORT = """\
APT28 attacked banks in France during 2019.
Turla used Mimikatz on victims.
Kaspersky identified Emotet infections in Germany.
Lazarus Group deployed WannaCry against hospitals.
"""


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workspace", type=Path, default=Path("runs/demo"))
    parser.add_argument("--models", type=Path, default=None,
                        help="checkpoint dir (default: <workspace>/models)")
    args = parser.parse_args()

    models = args.models or args.workspace / "models"
    if not (models / "ner.ckpt").exists():
        print(f"no checkpoints in {models}/, training on the synthetic corpora...")
        trainer = Path(__file__).with_name("train_synthetic.py")
        subprocess.run([sys.executable, str(trainer), "--out-dir", str(models)],
                       check=True, stdout=subprocess.DEVNULL)

    reports = args.workspace / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    (reports / "sample.txt").write_text(SAMPLE_REPORT, encoding="utf-8")

    config = PipelineConfig(
        ner_checkpoint=models / "ner.ckpt",
        re_checkpoint=models / "re.ckpt",
        graph_store=args.workspace / "kg.jsonl",
        refang=True,
    )
    report = run_pipeline(config, reports, args.workspace / "triples.jsonl")
    print(f"pipeline: {report.documents} document(s), {report.sentences} sentences, "
          f"{report.spans} entity spans, {report.triples} triples")
    assert report.ingest is not None
    print(f"graph:    +{report.ingest.nodes_added} nodes, "
          f"+{report.ingest.edges_added} edges, "
          f"{len(report.ingest.rejected)} rejected by the schema")

    store = GraphStore(args.workspace / "kg.jsonl")
    graph = store.load()
    print("\nneighbors of (apt28, APT):")
    for edge, node in neighbors(graph, ("apt28", "APT"), direction="both"):
        print(f"  -[{edge.relation} w={edge.weight}]-> {node.key[0]} ({node.key[1]})")

    graphml = args.workspace / "kg.graphml"
    written = export(graph, "graphml", graphml)
    print(f"\nexported {written} bytes of GraphML to {graphml}")


if __name__ == "__main__":
    main()
