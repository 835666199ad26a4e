"""How perceived risk responds to headway, lateral offset and vehicle class.

Run:  python demos/risk_field_tour.py [outdir]

Writes a heat map of one vehicle's risk field and prints the three sweeps.
"""

import sys
from pathlib import Path

from drfagent import Config, VehicleState, drf_evaluate, qpr_sweeps
from drfagent.risk_field import write_field_pgm


def show(table, x, y):
    print(f"\n{table.kind}: {y} by {x}")
    for a, b in zip(table.column(x), table.column(y)):
        print(f"  {a!s:>10}  {b:10.3f}")


def main(outdir="demo_out"):
    out = Path(outdir)
    out.mkdir(exist_ok=True)
    cfg = Config()

    # A car at 15 m/s steering gently left: the field bends along the predicted arc
    car = VehicleState(1, "Sedan", 0.0, 0.0, 0.0, 15.0, steering=0.05)
    field = drf_evaluate(car, cfg.drf, cfg.grid.build(car))
    write_field_pgm(field, out / "drf.pgm")
    print(f"peak field value {field.values.max():.3f}, heat map in {out / 'drf.pgm'}")

    # Closer leaders and smaller lateral offsets both raise QPR
    show(qpr_sweeps("thw", config=cfg), "thw", "qpr")
    show(qpr_sweeps("lateral", config=cfg), "lateral_offset", "qpr")

    # Same footprint and motion, different class: QPR scales with the class cost
    show(qpr_sweeps("class", config=cfg), "class", "qpr_front")


if __name__ == "__main__":
    main(*sys.argv[1:])
