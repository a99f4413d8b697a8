"""Independent colorimetry oracle (scikit-image) used to freeze test fixtures.

Run manually; the printed values are pasted into tests/unit/test_color.cpp.
"""
import numpy as np
from pathlib import Path
from skimage.color import deltaE_ciede2000, rgb2xyz

WHITE = (238, 238, 238)
BROWN = (117.3, 88.9, 67.3)


def lab(rgb):
    # White reference is the XYZ image of RGB(1,1,1) so that sRGB white maps to exactly (100, 0, 0).
    white = rgb2xyz(np.ones((1, 1, 3)))[0, 0]
    xyz = rgb2xyz(np.array([[rgb]], dtype=np.float64) / 255.0)[0, 0] / white
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    return np.array([116 * f[1] - 16, 500 * (f[0] - f[1]), 200 * (f[1] - f[2])])


def de(x, y):
    return float(deltaE_ciede2000(np.array(x), np.array(y)))


def check_pairs():
    rows = [l.split() for l in Path(__file__).parent.parent.joinpath("data/ciede2000_pairs.txt").read_text().splitlines()
            if l and not l.startswith("#")]
    worst = 0.0
    for r in rows:
        v = [float(t) for t in r]
        got = de(v[0:3], v[3:6])
        worst = max(worst, abs(got - v[6]))
    print(f"pairs={len(rows)} max |skimage - published| = {worst:.2e}")


if __name__ == "__main__":
    check_pairs()
    for name, rgb in [("white238", WHITE), ("white255", (255, 255, 255)), ("brown", BROWN), ("black", (0, 0, 0)),
                      ("gray128", (128, 128, 128))]:
        print(name, " ".join(f"{c:.4f}" for c in lab(rgb)))
    print("dw(255)", f"{de(lab((255,255,255)), lab(WHITE)):.4f}")
    print("dw(brown)", f"{de(lab(BROWN), lab(WHITE)):.4f}")
    print("db(black)", f"{de(lab((0,0,0)), lab(BROWN)):.4f}")
    print("db(white238)", f"{de(lab(WHITE), lab(BROWN)):.4f}")
    print("dw(black)", f"{de(lab((0,0,0)), lab(WHITE)):.4f}")
