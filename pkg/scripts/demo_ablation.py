"""Run the four-configuration ablation on the bundled synthetic corpus with the
scripted mock backend, recording every completion, then replay the run offline
and check the two runs agree byte for byte.

    python3 scripts/demo_ablation.py --out /tmp/legalkg-demo
"""

import argparse
import filecmp
import logging
import sys
from pathlib import Path

from legalkg.gateway import Gateway, ReplayStore
from legalkg.ingest import extract_opinion, load_corpus
from legalkg.mock import load_scenario
from legalkg.pipeline import run_ablation

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


def compare(a: Path, b: Path) -> list[str]:
    diffs = []
    for p in sorted(a.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            q = b / p.relative_to(a)
            if not q.exists() or not filecmp.cmp(p, q, shallow=False):
                diffs.append(str(p.relative_to(a)))
    return diffs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("demo_runs"))
    ap.add_argument("--corpus", type=Path, default=FIXTURES / "corpus")
    ap.add_argument("--scenario", type=Path, default=FIXTURES / "scenario.json")
    ap.add_argument("--chunk-size", type=int, default=120)
    ap.add_argument("--overlap", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.ERROR)

    docs = [extract_opinion(d) for d in load_corpus(args.corpus)]
    store = ReplayStore(args.out / "store")
    opts = dict(chunk_size=args.chunk_size, overlap=args.overlap, workers=args.workers)

    recorded = run_ablation(docs, Gateway(load_scenario(args.scenario), store, "record"),
                            args.out / "recorded", "recorded", **opts)
    replayed = run_ablation(docs, Gateway(None, store, "replay"), args.out / "replayed", "replayed", **opts)
    for m in (recorded, replayed):
        print(f"{m.run_id}: {len(m.cases)} case runs, {len(m.failures)} failed, {m.seconds:.2f}s")

    print((args.out / "replayed" / "reports" / "duplication_noise.txt").read_text())
    print((args.out / "replayed" / "reports" / "degradation.txt").read_text())
    diffs = compare(args.out / "recorded", args.out / "replayed")
    print("replay identical to recording" if not diffs else f"{len(diffs)} files differ: {diffs[:10]}")
    return 1 if diffs or recorded.failures or replayed.failures else 0


if __name__ == "__main__":
    sys.exit(main())
