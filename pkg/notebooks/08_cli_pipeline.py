# %% [markdown]
# # The batch pipeline end to end
#
# `collect -> filter -> train -> infer` through the command-line entry
# point, on a small seed range so it finishes in well under a minute.

# %%
import json
import tempfile
from pathlib import Path

from hqnoise.cli import main

out = Path(tempfile.mkdtemp())
config = out / "config.json"
config.write_text(json.dumps({"collection": {"seeds": [1, 12]}, "train": {"epochs": 40}}))
base = ["--config", str(config), "--out", str(out)]
for command in (["collect"], ["filter"], ["train"]):
    print(" ".join(command), "->", main(base + command))
print((out / "collect.log").read_text())

# %%
main(base + ["infer", "--mode", "all", "--checkpoint", str(out / "edn.ckpt"), "--seeds", "101-104"])
print(sorted(p.name for p in out.iterdir()))

# %%
print("verify ->", main(base + ["verify", "--trials", "50"]))
