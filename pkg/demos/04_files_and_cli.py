"""From a CSV file to a block-ordered matrix, via the command line.

The same steps are available as ``blockmix simulate``, ``blockmix select``
and ``blockmix report`` from a shell; here the entry point is called
in-process.
"""

# %%
import json
import tempfile
from pathlib import Path

from blockmix import cli
from blockmix.io import load_csv

work = Path(tempfile.mkdtemp(prefix="blockmix-demo-"))
cli.main(["simulate", "--n", "200", "--seed", "1", "--out-dir", str(work / "sim")])
data = load_csv(work / "sim" / "data.csv")
print(data.n, "rows;", data.column_ids)

# %%
cli.main(["select", str(work / "sim" / "data.csv"), "--variants", "UU", "--k-max", "3",
          "--l-max", "2", "--restarts", "3", "--out-dir", str(work / "out")])
doc = json.loads((work / "out" / "result.json").read_text())
sel = doc["selected"]
print("selected", sel["variant"], "K =", sel["K"], "L =", sel["L"], "BIC =", round(sel["BIC"], 2))

# %%
# block boundaries for drawing a partitioned heatmap
layout = json.loads((work / "out" / "ordered_layout.json").read_text())
print("row blocks:", layout["row_boundaries"])
print("column order:", layout["column_order"], "boundaries:", layout["column_boundaries"])

# %%
# bad input gives a categorized error and a nonzero exit code
(work / "bad.csv").write_text("id,x,y\na,1,\nb,2,3\n")
code = cli.main(["fit", str(work / "bad.csv"), "-K", "1", "-L", "1"])
print("exit code:", code)
