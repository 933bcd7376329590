"""Temperature at a fixed point while the source is on (t < T0): point-source law
against the spread source.

    python demos/heat_history.py
"""
import numpy as np

from photothermal import heat as ht
from photothermal.asymptotics import Pipeline

pipe = Pipeline(resolution=12, regime="plasmonic")
coef = ht.HeatCoefficients()
xi = np.array([0.5, 0.0, 0.0])
print("    t      dominant        oracle   rel.diff")
for t in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
    row = pipe.evaluate(0.05, 1.0, {"coefficients": coef, "t": t, "T0": 30.0, "xi": lambda d: xi})
    dom, orc = row["HeatDominantRaw"], row["HeatOracleRaw"]
    print(f"{t:5.1f}  {dom:12.5e}  {orc:12.5e}  {abs(dom - orc) / orc:9.2e}")
