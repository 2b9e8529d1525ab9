import random
import re
import time
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import GROUPED, SCATTERED, script
from nbquality.cfg import Statement, build_cfg, parse_scopes
from nbquality.metrics import (
    EmptyScope,
    analyze_scope,
    block_transfer,
    compute_lifetimes,
    meet,
    mutating_statement_ratio,
    mutation_diffusion_score,
    normalize_score,
    run_dataflow,
    transfer,
)
from nbquality.mutation import Policy
from oracles import VARS, Branch, ProgramGenerator, Simple, path_oracle

OPT, CONS = Policy.OPTIMISTIC, Policy.CONSERVATIVE


def scopes(src):
    return parse_scopes(script(src))


def module(src):
    return scopes(src)[0]


def score_of(src, policy=OPT, scope_index=0):
    return mutation_diffusion_score(build_cfg(scopes(src)[scope_index]), policy=policy)


def stmt(line, defs=(), ups=(), cons=None):
    ups = frozenset(ups)
    return Statement(0, line, (line, line), "other", frozenset(), frozenset(defs), ups,
                     ups | frozenset(cons or ()))


# --- transfer and meet ----------------------------------------------------------

def test_transfer_adds_line_then_resets():
    state = {"a": frozenset({1}), "b": frozenset()}
    out = transfer(stmt(5, defs={"c"}, ups={"a"}), state, OPT)
    assert out == {"a": frozenset(), "b": frozenset({5}), "c": frozenset()}


def test_transfer_uses_policy_update_set():
    s = stmt(4, cons={"x"})
    state = {"x": frozenset({1})}
    assert transfer(s, state, OPT)["x"] == {1, 4}
    assert transfer(s, state, CONS)["x"] == frozenset()


def test_meet_is_per_variable_union_over_tracked_names():
    assert meet({"a": frozenset({1})}, {"a": frozenset({2}), "b": frozenset()}) == \
        {"a": frozenset({1, 2}), "b": frozenset()}
    assert meet() == {}


lines = st.integers(1, 12)
line_sets = st.frozensets(lines, max_size=5)
var_names = st.sampled_from(VARS)
states = st.dictionaries(var_names, line_sets, max_size=5)
stmts = st.builds(lambda ln, d, u, c: stmt(ln, d, u, c), lines,
                  st.frozensets(var_names, max_size=2), st.frozensets(var_names, max_size=2),
                  st.frozensets(var_names, max_size=2))
policies = st.sampled_from([OPT, CONS])


@settings(max_examples=500)
@given(stmts, states, states, policies)
def test_transfer_is_distributive(s, a, b, policy):
    assert transfer(s, meet(a, b), policy) == meet(transfer(s, a, policy), transfer(s, b, policy))


@settings(max_examples=300)
@given(st.lists(stmts, max_size=8), states, policies)
def test_block_transfer_equals_folded_transfer(seq, state, policy):
    folded = dict(state)
    for s in seq:
        folded = transfer(s, folded, policy)
    assert block_transfer(seq, state, policy) == folded


# --- dataflow --------------------------------------------------------------------

def test_scattered_in_states():
    cfg = build_cfg(module(SCATTERED))
    result = run_dataflow(cfg, OPT)
    by_line = {s.line: s.id for s in cfg.scope.statements}
    assert result[by_line[3]]["l"] == {2}
    assert result[by_line[6]]["l"] == {4, 5}


def test_empty_scope_gives_empty_states():
    empty = scopes("")[0]
    assert empty.statements == []
    result = run_dataflow(build_cfg(empty), OPT)
    assert len(result) == 0 and all(s == {} for s in result.block_in.values())
    assert mutation_diffusion_score(build_cfg(empty))[0] == 0


def test_diamond_join_is_union():
    src = "v = []\nif c:\n    v.append(1)\nelse:\n    w = 2\nv.append(3)\n"
    cfg = build_cfg(module(src))
    by_line = {s.line: s.id for s in cfg.scope.statements}
    result = run_dataflow(cfg, OPT)
    # through the then-branch v was reset on line 3; through else it saw 2 and 5
    assert result[by_line[6]]["v"] == {2, 5}
    score, contribs = mutation_diffusion_score(cfg, result)
    assert [c.value for c in contribs] == [1, 2]
    assert score == _diamond_oracle()


def _diamond_oracle():
    # the same program as a hand-built tree
    body = [Simple(1, "", frozenset({"v"})),
            Branch(2, "c", [Simple(3, "", frozenset(), frozenset({"v"}))],
                   [Simple(5, "", frozenset({"w"}))]),
            Simple(6, "", frozenset(), frozenset({"v"}))]
    return path_oracle(body)[0]


def test_loop_back_edge_accumulates_body_lines():
    src = "l = []\nfor i in r:\n    l.append(i)\n    y = i\n"
    score, contribs = score_of(src)
    # first iteration sees the header; later ones also see line 4 via the back edge
    assert [(c.line, c.value) for c in contribs] == [(3, 2)]


def test_parameters_are_tracked_from_entry():
    src = "def f(a):\n    x = 1\n    a.append(x)\n"
    score, contribs = score_of(src, scope_index=1)
    assert [(c.variable, c.value) for c in contribs] == [("a", 1)]


def test_untracked_variable_contributes_zero():
    # ``g`` is never defined in this scope
    assert score_of("x = 1\ny = 2\ng.append(1)\n")[0] == 0


# --- diffusion score ----------------------------------------------------------------

def test_grouped_scattered_scores():
    assert score_of(GROUPED)[0] == 0
    score, contribs = score_of(SCATTERED)
    assert score == 3 and [c.value for c in contribs] == [1, 2]


def test_no_mutation_means_zero():
    src = "".join(f"v{i} = {i}\n" for i in range(40))
    assert score_of(src)[0] == 0


def test_optimistic_score_counts_only_optimistic_updates():
    src = "a = []\nb = 1\nc = 2\nmystery(a)\n"
    assert score_of(src, OPT)[0] == 0
    assert score_of(src, CONS)[0] == 2


def test_normalize():
    assert normalize_score(3, 6) == 0.5
    assert normalize_score(0, 9) == 0.0
    with pytest.raises(EmptyScope):
        normalize_score(1, 0)


def test_scattered_end_to_end_normalized():
    rec = analyze_scope(module(SCATTERED))
    assert rec.diffusion_opt == 3 and rec.statement_count == 6
    assert rec.diffusion_normalized_opt == 0.5


# --- lifetimes and ratio ---------------------------------------------------------------

def test_lifetime_eleven():
    src = "\n" * 9 + "v = 1\n" + "w = 0\n" * 9 + "print(v)\n"
    assert compute_lifetimes(module(src))["v"] == 11


def test_lifetime_unused_is_one():
    assert compute_lifetimes(module("x = 1\n"))["x"] == 1


def test_lifetime_counts_mutation_as_use():
    src = "\n\nv = []\n\nprint(v)\n\n\n\nv.append(1)\n"
    assert compute_lifetimes(module(src))["v"] == 7


def test_lifetime_of_parameter_starts_at_def_line():
    f = scopes("def f(p):\n    x = 1\n    return p\n")[1]
    assert compute_lifetimes(f) == {"p": 3, "x": 1}


def test_ratio_examples():
    ten = "a = []\nb = 1\nc = 2\na.append(b)\nd = 3\ne = 4\nf = 5\na.append(c)\ng = 6\nh = 7\n"
    assert len(module(ten).statements) == 10
    for p in (OPT, CONS):
        assert mutating_statement_ratio(module(ten), p) == 0.2
    assert mutating_statement_ratio(module("x = 1\ny = x\n"), CONS) == 0.0
    assert Fraction(mutating_statement_ratio(module(GROUPED), OPT)).limit_denominator() == Fraction(1, 3)
    with pytest.raises(EmptyScope):
        mutating_statement_ratio(module(""), OPT)


def test_ratio_over_several_scopes_excludes_placeholders(make_notebook):
    from nbquality.ingest import load_source_unit
    unit = load_source_unit(make_notebook(("code", ""), ("code", "a = []\na.append(1)")))
    assert mutating_statement_ratio(parse_scopes(unit), OPT) == 0.5


def test_record_invariants_on_mixed_code():
    src = ("import random\nxs = []\nfor i in range(9):\n    xs.append(i)\n    if i % 2:\n"
           "        xs[0] += 1\n    mystery(xs, i)\nrandom.shuffle(xs)\n")
    rec = analyze_scope(module(src))
    assert rec.mutating_ratio_opt <= rec.mutating_ratio_cons
    assert rec.diffusion_normalized_opt == rec.diffusion_opt / rec.statement_count
    assert rec.diffusion_normalized_cons == rec.diffusion_cons / rec.statement_count


# --- properties over generated programs ----------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=80, deadline=None)
@given(seeds)
def test_fixpoint_matches_path_oracle(seed):
    src, body = ProgramGenerator(random.Random(seed)).generate()
    score, contribs = score_of(src)
    expected, per_mutation = path_oracle(body)
    assert score == expected
    assert {(c.line, c.variable): c.value for c in contribs} == per_mutation


@given(st.integers(0, 30))
def test_insertion_sensitivity(k):
    filler = "".join(f"t{i} = {i}\n" for i in range(k))
    _, base = score_of("v = []\nv.append(0)\n")
    _, grown = score_of("v = []\n" + filler + "v.append(0)\n")
    assert grown[0].value == base[0].value + k


@given(st.lists(st.sampled_from(VARS), min_size=1, max_size=10))
def test_straight_line_locality(names):
    src = "".join(f"{v} = []\n{v}.append(1)\n{v} += [2]\n" for v in names)
    assert score_of(src)[0] == 0


@settings(max_examples=60, deadline=None)
@given(seeds, st.permutations(VARS))
def test_alpha_invariance(seed, perm):
    src, _ = ProgramGenerator(random.Random(seed)).generate()
    mapping = {v: f"r_{p}" for v, p in zip(VARS, perm)}
    renamed = re.sub(r"\b[a-e]\b", lambda m: mapping[m.group()], src)
    a, b = analyze_scope(module(src)), analyze_scope(module(renamed))
    assert sorted(a.lifetimes.values()) == sorted(b.lifetimes.values())
    assert {mapping[k]: v for k, v in a.lifetimes.items()} == b.lifetimes
    for field in ("mutating_ratio_opt", "mutating_ratio_cons", "diffusion_opt", "diffusion_cons"):
        assert getattr(a, field) == getattr(b, field)


# --- cyclic programs against a naive fixpoint ---------------------------------------

def _looping_source(rng, depth=0, indent=""):
    lines = []
    for _ in range(rng.randint(1, 4)):
        v, w = rng.sample(VARS, 2)
        roll = rng.random()
        if depth < 3 and roll < 0.25:
            header = rng.choice([f"for {v} in {w}:", f"while {v}:", f"if {v}:"])
            lines.append(indent + header)
            lines += _looping_source(rng, depth + 1, indent + "    ")
            if depth and rng.random() < 0.3:
                lines.append(indent + "    " + rng.choice(["break", "continue"]))
        else:
            lines.append(indent + rng.choice([f"{v} = []", f"{v}.append({w})", f"{v} += {w}",
                                              f"print({v})", f"{v} = list({w})"]))
    return lines


def _round_robin(cfg, policy):
    preds = {b: [a for a, c in cfg.edges if c == b] for b in range(len(cfg.blocks))}
    stmts = [[cfg.scope.statements[s] for s in ids] for ids in cfg.blocks]
    outs, ins = {}, {}
    changed = True
    while changed:
        changed = False
        for b in range(len(cfg.blocks)):
            state = meet(*[outs[p] for p in preds[b] if p in outs],
                         *([{}] if b == cfg.entry else []))
            for s in stmts[b]:
                ins[s.id] = state
                state = transfer(s, state, policy)
            if outs.get(b) != state:
                outs[b], changed = state, True
    return ins


@settings(max_examples=80, deadline=None)
@given(seeds, st.sampled_from([OPT, CONS]))
def test_worklist_matches_naive_fixpoint_on_loops(seed, policy):
    src = "\n".join(_looping_source(random.Random(seed))) + "\n"
    cfg = build_cfg(module(src))
    result = run_dataflow(cfg, policy)
    expected = _round_robin(cfg, policy)
    reachable = set(cfg.reverse_postorder())
    for b in reachable:
        for sid in cfg.blocks[b]:
            assert result[sid] == expected[sid], src
    score, _ = mutation_diffusion_score(cfg, result)
    want = sum(len(expected[s.id].get(v, ())) for b in reachable for s in
               (cfg.scope.statements[i] for i in cfg.blocks[b]) for v in s.update_set(policy))
    assert score == want


def test_large_looping_module_stays_fast():
    # hundreds of variables live across deeply nested loops: the shape that
    # makes per-block line sets expensive
    parts = []
    for k in range(150):
        parts.append(f"v{k} = []\nfor i{k} in v{max(0, k - 1)}:\n    while v{k}:\n"
                     f"        v{k}.append(i{k})\n        w{k} = len(v{k})\n")
    src = "".join(parts)
    cfg = build_cfg(module(src))
    start = time.perf_counter()
    for policy in (OPT, CONS):
        score, contribs = mutation_diffusion_score(cfg, policy=policy)
        assert len(contribs) == 150 and score > 0
    assert time.perf_counter() - start < 5
