import json
from pathlib import Path

import pytest
import yaml

from codesign.dataset import write_csv
from codesign.oracles import synth_dataset

FIXTURES = Path(__file__).parent / "fixtures" / "v1"


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text())


def dataset_csv(path, ds):
    header = [f"x{i}" for i in range(ds.n_features)] + ["label"]
    rows = [[repr(v) for v in r] + [str(l)] for r, l in zip(ds.features.tolist(), ds.labels.tolist())]
    write_csv(path, header, rows)
    return path


def tiny_config(csv_path, out_dir, **evolution):
    """A search small enough for unit tests: 2-feature blobs, narrow nets, short training."""
    evo = {"population": 6, "steps": 12, "seed": 0, **evolution}
    return {
        "dataset": {"path": str(csv_path), "label_column": "label", "name": "blobs"},
        "nna": {"input_size": 2, "output_size": 2, "max_layers": 2, "max_neurons": 8},
        "hardware": {"target": "arria10", "grid": {"rows": [1, 8], "cols": [1, 8], "vec_width": [1, 4],
                                                   "interleave_rows": [1, 4], "interleave_cols": [1, 4]},
                     "batch_m": [1, 16], "total_inputs": 1000},
        "objectives": [{"name": "accuracy", "sense": "max"}, {"name": "outputs_per_s", "sense": "max"}],
        "evolution": evo,
        "training": {"epochs": 5, "batch_size": 16},
        "output": {"dir": str(out_dir)},
    }


@pytest.fixture
def blobs_csv(tmp_path):
    return dataset_csv(tmp_path / "blobs.csv", synth_dataset("blobs", 80, seed=3))


@pytest.fixture
def tiny_config_file(tmp_path, blobs_csv):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(tiny_config(blobs_csv, tmp_path / "out")))
    return p


# -- acceptance reporting: one PASS/FAIL line per criterion in the terminal summary --

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Call ``criterion(name, ok, detail)`` once per check; it records the line and asserts."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def check(name, ok, detail=""):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        print(lines[-1])
        assert ok, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
