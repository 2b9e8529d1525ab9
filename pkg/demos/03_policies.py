"""How call resolution and the two policies change what counts as a mutation.

Run: python3 demos/03_policies.py
"""

import ast

from nbquality import MutationSpecTable, Policy, resolve_call_effect
from nbquality.mutation import ModuleContext

SOURCE = """import random
import pandas as pd

def shuffle_into(target, items):
    target.extend(items)

rows = [3, 1, 2]
random.shuffle(rows)
rows.sort()
names = {}.keys()
shuffle_into(rows, [4])
frame = pd.DataFrame(rows)
frame.dropna(inplace=True)
report(rows, frame)
"""

ctx = ModuleContext.from_source(SOURCE)
table = MutationSpecTable.default()
for node in ast.walk(ast.parse(SOURCE)):
    if not isinstance(node, ast.Call):
        continue
    opt = resolve_call_effect(node, ctx, table, Policy.OPTIMISTIC)
    cons = resolve_call_effect(node, ctx, table, Policy.CONSERVATIVE)
    print(f"{ast.unparse(node):<28} {opt.resolution.value:<11} "
          f"optimistic={sorted(opt.mutated)!s:<10} conservative={sorted(cons.mutated)}")

# ``report`` is defined nowhere, so only the conservative policy assumes it
# touches its arguments.
