"""Reading observations from CSV and driving the command-line interface.

Everything is written to a temporary directory.

Run: python gallery/06_csv_and_cli.py
"""

import os
import tempfile

import numpy as np

from mmd_robust.cli import main
from mmd_robust.dataio import DatasetSchema, load_csv

tmp = tempfile.mkdtemp()
rng = np.random.default_rng(3)

# Accelerometer-style file: user, activity, x, y, z.
path = os.path.join(tmp, "acc.csv")
with open(path, "w") as fh:
    fh.write("user,activity,x,y,z\n")
    for _ in range(40):
        act = "Jogging" if rng.random() < 0.5 else "Walking"
        x, y, z = rng.normal(size=3) + (1.0 if act == "Jogging" else 0.0)
        fh.write(f"685,{act},{x:.6f},{y:.6f},{z:.6f};\n")
schema = DatasetSchema(("x", "y", "z"), "activity", has_header=True)
jog = load_csv(path, schema, label="Jogging")
walk = load_csv(path, schema, label="Walking")
print(f"{len(jog)} jogging rows, {len(walk)} walking rows")

cfg = os.path.join(tmp, "lfd.cfg")
with open(cfg, "w") as fh:
    fh.write(f"train0 = {path}\ntrain1 = {path}\nlabel0 = Walking\nlabel1 = Jogging\n"
             "feature_columns = x, y, z\nlabel_column = activity\nhas_header = true\n"
             "theta = 0.05\n")

print("\n$ mmd-robust calibrate --m 50 --delta 0.05")
main(["calibrate", "--m", "50", "--delta", "0.05"])
print("\n$ mmd-robust lfd --config lfd.cfg")
main(["lfd", "--config", cfg, "--out", tmp])
print("\n$ mmd-robust test-bayes --config lfd.cfg --input acc.csv --lfd lfd_solution.json")
main(["test-bayes", "--config", cfg, "--input", path,
      "--lfd", os.path.join(tmp, "lfd_solution.json")])
print("\noutputs in", tmp, ":", sorted(os.listdir(tmp)))
