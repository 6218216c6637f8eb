"""Standalone brute-force incidence counter: plain Python, no package imports.

usage: python incidence_oracle.py instance.txt [more.txt ...]
prints "<file> <count>" per instance.
"""
import sys


def load(path):
    m, section, pts = None, None, {"A": [], "B": []}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# m="):
                m = int(line[4:])
            elif line in ("# A", "# B"):
                section = line[2]
            elif line:
                p, q = line.split()
                pts[section].append((int(p), int(q)))
    return m, pts["A"], set(pts["B"])


def count(m, A, B):
    side = 2 ** m
    total = 0
    for p, r in A:
        for q in range(1, side + 1):
            # nearest integer to q^2 / 2^m, halves rounded up
            s = (2 * q * q + side) // (2 * side)
            cell = ((p + q - 1) % side + 1, (r + s - 1) % side + 1)
            if cell in B:
                total += 1
    return total


if __name__ == "__main__":
    for path in sys.argv[1:]:
        print(path, count(*load(path)))
