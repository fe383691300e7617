from pathlib import Path

import pytest
import yaml


def write_config(root: Path, synthetic: dict, **extra) -> Path:
    """YAML config for a synthetic dataset under ``root``; returns its path."""
    from tdff.synth import SyntheticSpec

    spec = SyntheticSpec(**synthetic)
    raw = {
        "metadata": "data/metadata.csv",
        "streams": [{"name": n, "dim": d, "path": f"data/{n}.tdff"}
                    for n, d in zip(spec.stream_names(), spec.streams)],
        "work_dir": "out",
        "synthetic": synthetic,
    }
    raw.update(extra)
    root.mkdir(parents=True, exist_ok=True)
    path = root / "config.yaml"
    path.write_text(yaml.safe_dump(raw, sort_keys=False))
    return path


@pytest.fixture
def make_config(tmp_path):
    def make(name="run", synthetic=None, **extra):
        return write_config(tmp_path / name, synthetic or {"n_subjects": 10, "seed": 0}, **extra)
    return make


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; shown in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
