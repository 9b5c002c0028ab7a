"""Smoke test for the Python bindings.

Build first:
    cargo build --release -p flu-hgam-py --features extension-module
then run:
    python3 python/smoke_test.py [path/to/libflu_hgam_py.so]
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module(explicit=None):
    candidates = [pathlib.Path(explicit)] if explicit else [
        ROOT / "target" / profile / "libflu_hgam_py.so" for profile in ("release", "debug")
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("extension not built; run cargo build -p flu-hgam-py --features extension-module")
    staged = pathlib.Path(tempfile.mkdtemp()) / "flu_hgam_py.so"
    shutil.copy(lib, staged)
    spec = importlib.util.spec_from_file_location("flu_hgam_py", staged)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    fh = load_module(sys.argv[1] if len(sys.argv) > 1 else None)

    assert fh.basis_dimension(63, 5.0) == 12
    score, sharp, under, over = fh.wis([7.0] * 5, 9.5)
    assert math.isclose(score, 2.5) and math.isclose(score, sharp + under + over)
    assert fh.interval_score(0.0, 10.0, 0.2, 15.0) == 60.0
    assert fh.pinball(3.0, 0.5, 5.0) == 1.0

    data = fh.Dataset.synthetic(seed=3, n_units=8, n_regions=2, n_days=84)
    assert len(data.unit_ids) == 8 and len(data.dates) == 84
    with tempfile.TemporaryDirectory() as d:
        data.write(d)
        again = fh.Dataset.load(f"{d}/panel.csv", f"{d}/geo.csv", f"{d}/adj.csv")
        assert again.counts(data.unit_ids[0]) == data.counts(data.unit_ids[0])

    cfg = fh.RunConfig(n_samples=300, seed=7, arima_levels=["nation"])
    sets, model = data.forecast(config=cfg)
    assert model.converged and model.theta > 0
    assert len(sets) == 8 + 2 + 1
    nation = next(s for s in sets if s.level == "nation")
    units = [s for s in sets if s.level == "unit"]
    paths = nation.sample_paths()
    for h in range(14):
        assert paths[0][h] == sum(u.sample_paths()[0][h] for u in units)
        assert all(nation.values[k][h] <= nation.values[k + 1][h] for k in range(4))

    # forecasts are reproducible for a fixed seed
    again_sets, _ = data.forecast(config=cfg)
    assert [s.values for s in again_sets] == [s.values for s in sets]

    arima = fh.fit_arima([float(c) for c in data.counts(data.unit_ids[0])])
    q = arima.forecast(7)
    assert len(q) == 5 and all(len(row) == 7 for row in q)

    try:
        data.forecast(origin="2000-01-01")
    except ValueError:
        pass
    else:
        raise AssertionError("infeasible origin accepted")

    print("python smoke test passed:", nation, model.theta, arima)


if __name__ == "__main__":
    main()
