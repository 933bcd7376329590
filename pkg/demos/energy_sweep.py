"""Energy and heat scaling along a delta sweep, written as CSV.

    python demos/energy_sweep.py plasmonic 16 sweep.csv
"""
import sys

from photothermal.asymptotics import SweepSpec, add_fits, run_sweep
from photothermal.io import write_csv


def main(regime="plasmonic", resolution=16, path="sweep.csv"):
    h = 1.0 if regime == "plasmonic" else 0.5
    spec = SweepSpec([0.1, 0.05, 0.025, 0.0125], h, regime, resolution=resolution, with_heat=True)
    rep = add_fits(run_sweep(spec), {"L2E": 0.15, "L2_sq_of_square": 0.2, "HeatDominant": 0.15})
    for name, fit in [("EnergyIntegral", rep.fit), *rep.extra_fits.items()]:
        print(f"{name:18s} slope {fit.slope:7.4f}  predicted {fit.predicted:7.4f}  {fit.status}")
    if rep.remainder is not None:
        print(f"{'remainder':18s} slope {rep.remainder.slope:7.4f}  bound {rep.remainder.predicted:7.4f}")
    write_csv(path, *rep.csv_rows())
    print("wrote", path)


if __name__ == "__main__":
    a = sys.argv[1:]
    main(a[0] if a else "plasmonic", int(a[1]) if len(a) > 1 else 16, a[2] if len(a) > 2 else "sweep.csv")
