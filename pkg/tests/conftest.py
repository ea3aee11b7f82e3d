import os

import numpy as np
import pytest

from exonarray.ingest import Sample, SampleSheet, parse_chip_layout


def write_text(path, text, mode="w"):
    with open(path, mode, encoding="utf-8", newline="") as fh:
        fh.write(text)
    return str(path)


def layout_text(rows):
    lines = ["probe_id\tprobeset_id\ttranscript_cluster_id"]
    lines += ["\t".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def grid_layout_rows(n_clusters, n_probesets, n_probes):
    rows = []
    for c in range(1, n_clusters + 1):
        for e in range(1, n_probesets + 1):
            for p in range(1, n_probes + 1):
                rows.append((f"p{c}_{e}_{p}", f"ps{c}_{e}", f"c{c}"))
    return rows


@pytest.fixture
def make_layout(tmp_path):
    def make(rows, name="layout.tsv"):
        path = write_text(tmp_path / name, layout_text(rows))
        return parse_chip_layout(path)
    return make


def paired_sheet(n_replicates, treatments=("normal", "tumour")):
    return SampleSheet(tuple(Sample(f"{t}_{r}", str(r), t)
                             for t in treatments for r in range(1, n_replicates + 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
