"""Safety rate and decision alignment for every condition on the bundled suite.

Run:  python demos/desk_scale_table.py

Same computation as ``drfagent run --dataset builtin:suite``, printed as a
table with one column per condition.
"""

from drfagent import Config, ScriptedClient
from drfagent.evaluation import CONDITIONS, builtin_suite, calibrate_per_tag, evaluate

cfg = Config()
suite = builtin_suite(cfg)
thresholds = calibrate_per_tag(suite.tables, cfg)
table = evaluate(suite.scenes, CONDITIONS, cfg, lambda tag, cond: ScriptedClient.from_file(), thresholds)

tags = sorted({tag for tag, _ in table.rows})
for metric in ("safety_rate", "decision_alignment"):
    print(f"\n{metric}")
    print(f"{'':14}" + "".join(f"{c:>9}" for c in CONDITIONS))
    for tag in tags:
        print(f"{tag:14}" + "".join(f"{getattr(table[tag, c], metric):9.2f}" for c in CONDITIONS))

# The risk notice is what turns unsafe lane changes and closing-in into waiting or braking
both = table["highway", "both"]
print(f"\nhighway with both modules: {both.n_safe}/{both.n_scenes} safe")
