"""A lane change the navigation asks for, and why the risk notice vetoes it.

Run:  python demos/overtaking_conflict.py

The ego is told to move left while a faster car closes in that lane.
The rule-scripted backend follows the instruction unless the prompt carries
a HIGH-risk notice for a vehicle behind.
"""

from drfagent import Config, ScriptedClient, VectorStore, render_scene_text
from drfagent.agent import DecisionAgent, Modules
from drfagent.evaluation import builtin_suite, calibrate_per_tag, safety_oracle

cfg = Config()
suite = builtin_suite(cfg)
scene = suite.conflict_scene.scene
thresholds = calibrate_per_tag(suite.tables, cfg)[scene.dataset_tag]

print(render_scene_text(scene))
print(f"\nthresholds: low {thresholds.t_low:.1f}, high {thresholds.t_high:.1f}\n")

for risk in (False, True):
    agent = DecisionAgent(cfg, ScriptedClient.from_file(), VectorStore(),
                          thresholds if risk else None, Modules(risk=risk, memory=False))
    rec = agent.reason(scene)
    verdict = safety_oracle(scene, rec.action, None, cfg.oracle, cfg.idm)
    print(f"--- risk module {'on' if risk else 'off'}")
    if rec.risk_text:
        print(rec.risk_text)
    print(f"decision: {rec.action.token}  ({'safe' if verdict.safe else 'unsafe: ' + verdict.cause})\n")
