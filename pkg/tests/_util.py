"""Shared test helpers."""
from hemsdr.core import DayProfile

# criterion number -> one-line verdict, printed again in the terminal summary
VERDICTS = {}


def random_day(rng, T=24, load=(0.0, 2.0), ghi=(0.0, 0.8), price=(0.02, 0.3)):
    return DayProfile(rng.uniform(*load, T), rng.uniform(*ghi, T), rng.uniform(*price, T))


def verdict(n, passed, detail):
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)
    return passed
