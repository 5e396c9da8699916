#!/usr/bin/env python3
"""Build the Pendigits and Optdigits train/test files used by the acceptance suite.

The raw UCI rows are taken from the `keel-ds` wheel on PyPI, which ships both
corpora as KEEL `.dat` files.  Output is LIBSVM text with 0-based labels.

  Optdigits: rows [0, 3823) are optdigits.tra, rows [3823, 5620) are optdigits.tes
             (verified row-for-row against the copy bundled with scikit-learn when
             it is installed).
  Pendigits: the KEEL file interleaves the official files.  The official test
             file starts at row 6728; we take rows [6728, 10226) as the test set
             and every other row as the training set.  Sizes match the official
             7494/3498 split but the membership is a reconstruction.

Usage: prepare_data.py [--wheel PATH] [--out DIR]
"""
import argparse
import glob
import os
import subprocess
import sys
import tempfile
import zipfile


def read_dat(raw: str):
    rows = []
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        vals = [v.strip() for v in line.split(",")]
        rows.append(([int(float(v)) for v in vals[:-1]], int(vals[-1])))
    return rows


def write_libsvm(path, rows):
    with open(path, "w") as f:
        for feats, label in rows:
            parts = [str(label)] + [f"{i + 1}:{v}" for i, v in enumerate(feats) if v != 0]
            f.write(" ".join(parts) + "\n")


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp()
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "120",
         "keel-ds==0.2.5", "-d", tmp])
    return glob.glob(os.path.join(tmp, "keel_ds-*.whl"))[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    z = zipfile.ZipFile(find_wheel(args.wheel))
    opt = read_dat(z.read("keel_ds/data/balanced/raw/optdigits.dat").decode())
    pen = read_dat(z.read("keel_ds/data/balanced/raw/penbased.dat").decode())
    assert len(opt) == 5620 and len(pen) == 10992

    opt_tr, opt_te = opt[:3823], opt[3823:]
    try:
        from sklearn.datasets import load_digits
        d = load_digits()
        assert all(
            list(map(int, d.data[i])) == opt_te[i][0] and int(d.target[i]) == opt_te[i][1]
            for i in range(1797)
        ), "optdigits test rows do not match scikit-learn's copy"
    except ImportError:
        pass

    lo, hi = 6728, 6728 + 3498
    pen_te = pen[lo:hi]
    pen_tr = pen[:lo] + pen[hi:]

    write_libsvm(os.path.join(args.out, "optdigits.tr"), opt_tr)
    write_libsvm(os.path.join(args.out, "optdigits.te"), opt_te)
    write_libsvm(os.path.join(args.out, "pendigits.tr"), pen_tr)
    write_libsvm(os.path.join(args.out, "pendigits.te"), pen_te)
    for name, rows in [("optdigits.tr", opt_tr), ("optdigits.te", opt_te),
                       ("pendigits.tr", pen_tr), ("pendigits.te", pen_te)]:
        print(f"{name}: {len(rows)} rows")


if __name__ == "__main__":
    main()
