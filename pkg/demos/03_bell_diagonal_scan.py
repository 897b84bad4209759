"""
Scanning Bell-diagonal states
=============================

Bell-diagonal states with correlations (s, -s, 1) interpolate between a
classically correlated state (s = 0) and a maximally entangled one (s = 1).
The scan is driven through the command line tool with a JSON config, so it
can be resumed and reproduced byte for byte.  The result is a CSV file with
one row per (point, curve).
"""

import csv
import json
import sys
from pathlib import Path

from localmodels import cli

here = Path(__file__).parent
config = here / "configs" / "bell_diagonal.json"
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("bell_diagonal.csv")

cfg = json.loads(config.read_text())
cfg["output"] = {"csv": str(out)}
tmp = out.with_suffix(".run.json")
tmp.write_text(json.dumps(cfg))

# same as:  localmodels scan --config demos/configs/bell_diagonal.json
code = cli.main(["scan", "--config", str(tmp)])
if code:
    sys.exit(code)

rows = list(csv.DictReader(out.open()))
curves = {}
for r in rows:
    key = r["method"] + (f" L{r['level']}" if r["level"] else "")
    curves.setdefault(key, {})[float(r["param1"])] = float(r["q_star"])

# the hierarchy stops at level 1 where the state is already certified, so
# some points have no level-2 row
names = sorted(curves)
grid = sorted({s for c in curves.values() for s in c})
print("s     " + "  ".join(f"{n:>15s}" for n in names))
for s in grid:
    print(f"{s:.2f}  " + "  ".join(
        f"{curves[n][s]:15.6f}" if s in curves[n] else f"{'-':>15s}" for n in names))

try:
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit(0)
for n in names:
    xs = sorted(curves[n])
    plt.plot(xs, [curves[n][x] for x in xs], label=n)
plt.xlabel("s")
plt.ylabel("critical visibility")
plt.legend()
plt.savefig(out.with_suffix(".png"), dpi=120)
print("plot written to", out.with_suffix(".png"))
