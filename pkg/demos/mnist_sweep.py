"""Full compression sweep on real MNIST, if the IDX files are present.

Expects train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte
and t10k-labels-idx1-ubyte (plain or .gz) under $MNIST_DIR or ./data/mnist.
This is the long-running one: a baseline plus five fine-tuned sparsity levels,
each trained for 12 epochs.
"""

import logging
import os
import sys

from compresslab import SweepConfig, build_report_table, run_sweep

candidates = [os.environ.get("MNIST_DIR"), os.path.join("data", "mnist")]
names = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
         "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
data_dir = next((d for d in candidates if d and all(
    os.path.isfile(os.path.join(d, n)) or os.path.isfile(os.path.join(d, n + ".gz"))
    for n in names)), None)

if data_dir is None:
    print("MNIST not found: put the four IDX files (plain or .gz) in ./data/mnist")
    print("or point $MNIST_DIR at them, then rerun.")
    sys.exit(1)

logging.basicConfig(level=logging.INFO, format="%(message)s")
cfg = SweepConfig(dataset="mnist", data_dir=data_dir, out_dir="mnist-sweep-out")
records, failures = run_sweep(cfg)

for row in build_report_table(records):
    flag = f"  <-- {row['flag']}" if row["flag"] else ""
    print(f"s={row['sparsity']:<5} p={row['precision_bits']:>2}  "
          f"{row['size_bytes']:>9} B  {row['accuracy_pct']:>6}%  "
          f"Q={row['quality']}{flag}")
if failures:
    print(f"{len(failures)} cells failed; see mnist-sweep-out/failures.log")
