"""Verify every stage manifest of a run directory against the files on disk."""

import sys
from pathlib import Path

from src.utils.provenance import MANIFEST_NAME, verify_manifest

RUN_DIR = Path("runs/default")


def main(argv=None):
    run_dir = Path(argv[0]) if argv else RUN_DIR
    manifests = sorted(run_dir.glob(f"*/{MANIFEST_NAME}"))
    if not manifests:
        raise SystemExit(f"No stage manifests under {run_dir}")
    failed = []
    for manifest in manifests:
        stage = manifest.parent
        bad = verify_manifest(stage)
        for name in bad:
            print(f"Checksum mismatch for {stage / name}")
        failed.extend(bad)
        if not bad:
            print(f"OK: {stage.name} artifacts match {manifest}")
    if failed:
        raise SystemExit(f"{len(failed)} artifact(s) failed verification")


if __name__ == "__main__":
    main(sys.argv[1:])
