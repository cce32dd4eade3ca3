"""Regenerate tests/data/real_shaped: a small expression study laid out like a real export.

50 graph genes plus 8 genes missing from the network, genes as rows,
tab separated, string labels. Values are on a raw (unstandardized) scale.
"""
from pathlib import Path

import numpy as np

from gedfn.synthgen import generate_dataset

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "real_shaped"


def main():
    data = generate_dataset(p=50, n=80, p0=10, n_cores=1, seed=2024)
    rng = np.random.default_rng(7)
    genes = [f"GENE{j:03d}" for j in range(50)]
    extra = [f"ORPHAN{j}" for j in range(8)]
    X = np.hstack([data.X * 1.5 + 6.0, rng.normal(5.0, 1.0, (80, 8))])
    names = genes + extra
    col_order = rng.permutation(len(names))
    samples = [f"PT-{i:03d}" for i in range(80)]
    row_order = rng.permutation(80)
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "expression.tsv", "w") as fh:
        fh.write("gene\t" + "\t".join(samples[i] for i in row_order) + "\n")
        for j in col_order:
            fh.write(names[j] + "\t" + "\t".join("%.6f" % X[i, j] for i in row_order) + "\n")
    with open(OUT / "labels.tsv", "w") as fh:
        fh.write("patient\ter_status\n")
        for i in row_order:
            fh.write(f"{samples[i]}\t{'Positive' if data.y[i] else 'Negative'}\n")
    with open(OUT / "network.txt", "w") as fh:
        fh.write("# gene-gene functional links\n")
        for u, v in data.graph.edges:
            fh.write(f"{genes[u]} {genes[v]}\n")
    with open(OUT / "predictors.txt", "w") as fh:
        fh.writelines(genes[j] + "\n" for j in data.predictors.all)


if __name__ == "__main__":
    main()
