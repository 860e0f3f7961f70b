"""Smoke test for the mhte extension module.

Build first:
    cargo build --release -p mhte-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("mhte")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libmhte.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "mhte.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("mhte")
    sys.exit("libmhte.so not found; build the mhte-py crate first")


def main():
    mhte = load()

    matches, cases, agreement = mhte.judge_fixture()
    assert (matches, cases, agreement) == (11, 11, 100.0), (matches, cases, agreement)

    day = mhte.run("scripted", load=25, seed=1)
    assert day.subset_size == 12, day
    assert day.judged == day.subset_size, day
    assert "policy=scripted" in day.report

    ppt = mhte.run("exp_learning", app="ppt", seed=2)
    assert ppt.subset_size == 7, ppt

    suite = mhte.synthetic_suite()
    assert sum(1 for l in suite.splitlines() if l.startswith("task_id=")) == 46

    cells = {(p, l): r for p, l, r in mhte.matrix(["flat", "exp_learning"], [25, 100], [1, 2, 3])}
    assert len(cells) == 4
    assert cells[("exp_learning", 100)] >= cells[("flat", 100)]

    try:
        mhte.run("nonsense")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown policy accepted")

    print("smoke test ok:", day, ppt)


if __name__ == "__main__":
    main()
