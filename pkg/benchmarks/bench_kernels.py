"""Compare the compiled kernels with their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Each row reports the best
of several timing rounds per call and the speedup of the compiled backend.
Results are checked for agreement before timing.
"""

from __future__ import annotations

import sys
import timeit

import click
import numpy as np

from hdt import _core_py, spectral

try:
    from hdt import _core
except ImportError:  # extension not built
    _core = None


def _twiddles(n):
    return np.exp(-2j * np.pi * np.arange(n // 2) / n)


def _best(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def cases(rows):
    rng = np.random.default_rng(0)
    for n in (64, 512, 4096):
        src = rng.normal(size=(rows, n)) + 1j * rng.normal(size=(rows, n))
        tw = _twiddles(n)

        def run(mod, src=src, tw=tw):
            a = src.copy()
            mod.fft_pow2(a, tw, False)
            return a

        yield f"fft_pow2 rows={rows} n={n}", run
    for n, k in ((384, 25), (8192, 25)):
        x = rng.normal(size=(n, rows))
        yield f"moving_average n={n} k={k} C={rows}", lambda mod, x=x, k=k: mod.moving_average(x, k)
        yield f"moving_average_adjoint n={n} k={k} C={rows}", lambda mod, x=x, k=k: mod.moving_average_adjoint(x, k)


@click.command()
@click.option("--rows", default=7, show_default=True, help="Channels per call.")
@click.option("--number", default=20, show_default=True, help="Calls per timing round.")
@click.option("--repeat", default=5, show_default=True, help="Timing rounds; the best is kept.")
def main(rows, number, repeat):
    if _core is None:
        click.echo("compiled extension not built; nothing to compare", err=True)
        sys.exit(1)
    click.echo(f"{'kernel':<42}{'cython us':>12}{'python us':>12}{'speedup':>10}")
    for name, fn in cases(rows):
        np.testing.assert_allclose(fn(_core), fn(_core_py), rtol=1e-10, atol=1e-9)
        tc = _best(lambda: fn(_core), number, repeat)
        tp = _best(lambda: fn(_core_py), number, repeat)
        click.echo(f"{name:<42}{tc * 1e6:>12.1f}{tp * 1e6:>12.1f}{tp / tc:>9.1f}x")
    # end-to-end: one-sided transform through the selected backend
    x = np.random.default_rng(1).normal(size=(1024, rows))
    t = _best(lambda: spectral.rfft(x), number, repeat)
    click.echo(f"{'spectral.rfft M=1024 (active backend)':<42}{t * 1e6:>12.1f}")


if __name__ == "__main__":
    main()
