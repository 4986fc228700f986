"""Command-line wrapper: ``threatkg-export CORPUS --model ID -o FILE``."""

from __future__ import annotations

import json
import sys

import click

from .bio import BioFormatError
from .export import AlignmentError, POOLING_POLICIES, export_embeddings


@click.command()
@click.argument("corpus_path")
@click.option("--model", "model_id", required=True,
              help="Hub id or local directory of the pretrained model.")
@click.option("-o", "--output", required=True, help="Embedding container path.")
@click.option("--pooling", type=click.Choice(POOLING_POLICIES), default="mean",
              show_default=True, help="Subword-to-token aggregation.")
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--dtype", type=click.Choice(["f4", "f8"]), default="f4",
              show_default=True, help="Stored vector precision.")
@click.option("--text", is_flag=True, help="Write the debug text variant instead.")
@click.option("--manifest", "manifest_path", default=None,
              help="Manifest path (default: <output>.manifest.json).")
@click.option("--json", "as_json", is_flag=True, help="Print the manifest as JSON.")
def cli(corpus_path, model_id, output, pooling, batch_size, dtype, text,
        manifest_path, as_json) -> None:
    """Export per-token contextual vectors for a BIO corpus."""
    manifest = export_embeddings(
        corpus_path, model_id, output, pooling=pooling, batch_size=batch_size,
        dtype="<" + dtype, text=text, manifest_path=manifest_path,
    )
    if as_json:
        click.echo(json.dumps(manifest.as_dict(), indent=2, sort_keys=True))
    else:
        click.echo(
            f"exported {manifest.vectors} vectors ({manifest.sentences} sentences, "
            f"dim {manifest.dim}, {manifest.pooling} pooling) to {output}"
        )


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except (BioFormatError, AlignmentError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(5)


if __name__ == "__main__":
    main()
