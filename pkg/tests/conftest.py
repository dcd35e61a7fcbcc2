import json

import numpy as np
import pytest

from tgg.dataio import SyntheticSpec, generate_synthetic


def write_toy(directory, features=None):
    """Four instances: seen classes a (2) and b (1), unseen class u (1)."""
    features = features or {0: ("a", [1.0, 0.0]), 1: ("a", [0.9, 0.1]), 2: ("b", [0.0, 1.0]), 3: ("u", [0.5, 0.5])}
    fpath = directory / "features.csv"
    apath = directory / "attributes.csv"
    spath = directory / "splits.json"
    with open(fpath, "w") as fh:
        fh.write("instance_id,label,f1,f2\n")
        for iid, (lab, row) in features.items():
            fh.write(f"{iid},{lab},{row[0]},{row[1]}\n")
    apath.write_text("label,a1,a2,a3\na,1,0,0.5\nb,0,1,0.5\nu,0.5,0.5,1\n")
    spath.write_text(json.dumps({"train": [0, 1, 2], "val": [], "test_seen": [], "test_unseen": [3]}))
    return fpath, apath, spath


@pytest.fixture
def toy_paths(tmp_path):
    return write_toy(tmp_path)


@pytest.fixture(scope="session")
def synthetic():
    return generate_synthetic(SyntheticSpec(seed=0))


def nearest_mean_accuracy(ds, split="test_seen"):
    classes = sorted(ds.seen_classes)
    train = ds.split("train")
    means = np.stack([ds.features[train][ds.labels[train] == c].mean(0) for c in classes])
    idx = ds.split(split)
    d = ((ds.features[idx][:, None, :] - means[None]) ** 2).sum(-1)
    return float(np.mean(np.asarray(classes)[d.argmin(1)] == ds.labels[idx]))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
