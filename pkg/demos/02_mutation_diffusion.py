"""Why scattering mutations raises the diffusion score.

Two listings do the same work. In the first, every append follows the
definition directly. In the second, reads sit between the definition and
each append, and each of those lines counts toward the score.

Run: python3 demos/02_mutation_diffusion.py
"""

from pathlib import Path

from nbquality import build_cfg, mutation_diffusion_score, parse_scopes
from nbquality.ingest import parse_script
from nbquality.metrics import run_dataflow

GROUPED = """l = []
l.append(1)
l.append(2)
s = sum(l)
a = sum(l) / len(l)
m = max(l)
"""

SCATTERED = """l = []
s = sum(l)
l.append(1)
a = sum(l) / len(l)
m = max(l)
l.append(2)
"""

for title, src in (("grouped", GROUPED), ("scattered", SCATTERED)):
    (module,) = parse_scopes(parse_script(Path(f"{title}.py"), src))
    cfg = build_cfg(module)
    states = run_dataflow(cfg)
    print(f"== {title}")
    for stmt in module.statements:
        seen = sorted(states[stmt.id].get("l", ()))
        print(f"  line {stmt.line}  DEF={sorted(stmt.def_set)!s:<6} UPDATE={sorted(stmt.update_set_opt)!s:<6}"
              f" lines since l last changed: {seen}")
    score, contributions = mutation_diffusion_score(cfg, states)
    print(f"  contributions {[c.value for c in contributions]}  score {score}\n")
