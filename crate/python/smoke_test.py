"""Smoke test for the nlsolitons_py extension.

Build and install first:

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import math

import nlsolitons_py as nls


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    grid = nls.Grid(128.0, 2048)
    cubic = nls.Nonlinearity.cubic()

    # cubic ground state: sqrt(2 mu) sech(sqrt(mu) x), m = 2 sqrt(mu), m' = 1/sqrt(mu)
    p = nls.solve_profile(cubic, 2.0, grid)
    close(p.mass, 2.0 * math.sqrt(2.0), 1e-8)
    close(p.mass_slope, 1.0 / math.sqrt(2.0), 1e-6)
    xs = grid.coordinates()
    err = max(abs(e - 2.0 / math.cosh(math.sqrt(2.0) * x)) for x, e in zip(xs, p.samples()))
    assert err < 1e-8, err

    sigma = nls.SolitonParams(1.5, 3.0, 0.2, 2.0)
    closed = nls.omega_closed(sigma, p.mass, p.mass_slope)
    numeric = nls.omega_numeric(p, sigma, grid)
    diff = max(abs(a - b) for ra, rb in zip(closed, numeric) for a, b in zip(ra, rb))
    assert diff < 1e-6, diff

    # two solitons, fitted back from slightly wrong guesses
    cache = nls.ProfileCache(cubic, grid)
    s1 = nls.SolitonParams(-20.0, 1.0, 0.0, 1.0)
    s2 = nls.SolitonParams(20.0, -1.0, 0.5, 1.5)
    psi = nls.synthesize(cache.get(1.0), s1, grid) + nls.synthesize(cache.get(1.5), s2, grid)
    fit = nls.decompose(
        psi,
        [nls.SolitonParams(-20.001, 1.0, 0.0, 1.0), nls.SolitonParams(20.0, -1.0, 0.501, 1.5)],
        cache,
    )
    for got, want in zip(fit.sigmas, [s1, s2]):
        for a, b in zip(got.to_tuple(), want.to_tuple()):
            close(a, b, 1e-8)
    assert fit.w_l2 < 1e-8

    # free evolution conserves charge and moves the soliton at speed v
    single = nls.synthesize(cache.get(1.0), nls.SolitonParams(-5.0, 2.0, 0.0, 1.0), grid)
    final, frames = nls.evolve(single, nls.Potential.zero(), cubic, 1.0, 1e-3, stride=250)
    assert len(frames) == 5
    close(final.charge(), single.charge(), 1e-9 * single.charge())
    moved = nls.decompose(final, [nls.SolitonParams(-3.0, 2.0, 1.0, 1.0)], cache)
    close(moved.sigmas[0].a, -3.0, 1e-5)

    traj = nls.integrate_effective([nls.SolitonParams(0.0, 1.0, 0.0, 1.0)], nls.Potential.zero(), 2.0, 0.01)
    close(traj[-1][1][0].a, 2.0, 1e-12)

    record = nls.run_experiment(
        "",
        [
            "experiment.scenario=single",
            "experiment.horizon=1.0",
            "grid.length=128.0",
            "grid.points=1024",
            "solver.checkpoint_stride=100",
        ],
    )
    assert record.completed
    assert record.sup_w < 1e-5, record.sup_w
    assert len(record.frames()) == 11

    try:
        nls.Grid(-1.0, 64)
    except ValueError:
        pass
    else:
        raise AssertionError("negative length accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
