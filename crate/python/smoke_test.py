"""Quick end-to-end check of the Python bindings."""

import math
import random
import tempfile
from pathlib import Path

import shelab_py as sl


def main():
    white = sl.NoiseModel.dirac()
    assert white.d == 1
    # Υ(λ) = 1/√(2λ) for white noise in d = 1
    assert abs(white.upsilon(2.0) - 0.5) < 1e-9, white.upsilon(2.0)
    y = white.upsilon(0.7)
    assert abs(white.lambda_inverse(y) - 0.7) < 1e-6

    p = sl.heat_kernel(1.0, [0.0])
    assert abs(p - 1.0 / math.sqrt(2.0 * math.pi)) < 1e-12

    grid = sl.LatticeGrid(1, 128, 0.125, 0.00625)
    assert len(grid) == 128 and grid.length == 16.0
    frames = sl.simulate(grid, white, 0.5, [0.25, 0.5], seed=3)
    assert [t for t, _ in frames] == [0.0, 0.25, 0.5]
    assert all(len(v) == 128 and all(x > 0 for x in v) for _, v in frames)

    rng = random.Random(1)
    xs = [rng.gauss(0.0, 1.0) for _ in range(2000)]
    verdict = sl.normality_test(xs, 0.01)
    print("normality:", verdict)
    dist = sl.distance_to_gaussian(xs, 1.0)
    assert dist["value"] <= sl.tv_normals_bound(1.5, 1.0)

    try:
        sl.NoiseModel.gaussian(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative bandwidth accepted")

    cfg = sl.ExperimentConfig("dalang")
    assert len(cfg.digest()) == 64
    with tempfile.TemporaryDirectory() as tmp:
        result = cfg.run(out=str(Path(tmp) / "dalang"), workers=1)
        names = [v["name"] for v in result["verdicts"]]
        print("dalang verdicts:", names)
        assert all(v["pass"] for v in result["verdicts"])
    print("campaigns:", ", ".join(sl.CAMPAIGNS))
    print("ok")


if __name__ == "__main__":
    main()
