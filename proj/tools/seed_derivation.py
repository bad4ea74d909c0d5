#!/usr/bin/env python3
"""Reference seed derivation: reads 'master index' pairs on stdin, prints one seed per line."""
import sys

M = (1 << 64) - 1


def derive(master, index):
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & M
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
    return z ^ (z >> 31)


if __name__ == "__main__":
    for line in sys.stdin:
        if line.strip():
            master, index = map(int, line.split())
            print(derive(master, index))
