"""
Baseline versus DFM-50
======================

The whole experiment through the pipeline helpers: baseline, its DFMs,
a DFM-X model trained with X = 50, then corruption and attack evaluation.
Takes several minutes on one core.
"""

import sys

from dfmx import pipeline
from dfmx.config import parse_config

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = parse_config(f"""
[run]
seed = {seed}
name = demo-dfmx-{seed}

[attack]
eps_255 = 0, 2, 4, 8
""")

layout = pipeline.run_pipeline(cfg, log=print)
print()
print((layout.report_dir / "summary.txt").read_text())

for mid in layout.model_ids():
    rows = pipeline.reports.read_csv(layout.attack_csv(mid), "attack")
    cells = ", ".join(f"{r['attack']}@{r['eps_255']}: {float(r['accuracy']):.3f}" for r in rows)
    print(f"{mid:10s} {cells}")

for mid in layout.model_ids():
    stats = pipeline.reports.read_csv(layout.dfm_dir(mid) / "stats.csv", "dfm_stats")
    counts = [r["frequency_count"] for r in stats if r["class"].isdigit()]
    print(f"{mid:10s} DFM sizes per class {counts}")
