"""Variable lifetime, mutating statement ratio and mutation diffusion score.

The diffusion score comes from a forward dataflow analysis whose state maps
each variable to the set of lines executed since that variable was last
defined or mutated. A statement on line ``l`` first adds ``l`` to every
tracked variable, then resets the variables it defines or mutates to the
empty set. States meet by per-variable union. At a mutation of ``v`` the
size of ``v``'s incoming set is that mutation's contribution.
"""

from __future__ import annotations

import heapq
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .cfg import Cfg, Scope, Statement, build_cfg
from .mutation import Policy

MutationState = dict[str, frozenset[int]]

POLICIES = (Policy.OPTIMISTIC, Policy.CONSERVATIVE)


class EmptyScope(ValueError):
    """A ratio or normalization was requested for a scope with no statements."""


class NonTermination(RuntimeError):
    pass


def transfer(stmt: Statement, state: Mapping[str, frozenset[int]],
             policy: Policy | str) -> MutationState:
    """The per-statement transfer function, applied literally."""
    line = frozenset((stmt.line,))
    out = {v: s | line for v, s in state.items()}
    for v in stmt.def_set | stmt.update_set(policy):
        out[v] = frozenset()
    return out


def meet(*states: Mapping[str, frozenset[int]]) -> MutationState:
    out: MutationState = {}
    for st in states:
        for v, s in st.items():
            prev = out.get(v)
            out[v] = s if prev is None else prev | s
    return out


def block_transfer(stmts: Sequence[Statement], state: Mapping[str, frozenset[int]],
                   policy: Policy | str) -> MutationState:
    """Same result as folding :func:`transfer` over ``stmts``, with one set
    operation per variable instead of one per statement and variable."""
    last_kill: dict[str, int] = {}
    for i, s in enumerate(stmts):
        for v in s.def_set | s.update_set(policy):
            last_kill[v] = i
    lines = [s.line for s in stmts]
    every = frozenset(lines)
    out = {v: s | every for v, s in state.items() if v not in last_kill}
    for v, i in last_kill.items():
        out[v] = frozenset(lines[i + 1:])
    return out


def initial_state(scope: Scope) -> MutationState:
    return {p: frozenset() for p in scope.params}


class _LineBits:
    """Line sets as int bitmasks: one bit per distinct statement line.

    The fixpoint touches every tracked variable at every block, so set
    operations dominate; integer OR and popcount keep both time and memory
    linear in the line count divided by the word size.
    """

    def __init__(self, lines: Iterable[int]):
        self.lines = sorted(set(lines))
        self.bit = {ln: 1 << i for i, ln in enumerate(self.lines)}

    def encode(self, lines: Iterable[int]) -> int:
        mask = 0
        for ln in lines:
            mask |= self.bit[ln]
        return mask

    def decode(self, mask: int) -> frozenset[int]:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(self.lines[i])
            mask >>= 1
            i += 1
        return frozenset(out)

    def decode_state(self, state: Mapping[str, int]) -> MutationState:
        return {v: self.decode(m) for v, m in state.items()}


@dataclass(frozen=True)
class _BlockEffect:
    every: int             # mask of all lines in the block
    kills: dict[str, int]  # killed variable -> lines after its last kill

    @classmethod
    def of(cls, stmts: Sequence[Statement], policy: Policy, bits: _LineBits) -> _BlockEffect:
        masks = [bits.bit[s.line] for s in stmts]
        suffix = [0] * (len(masks) + 1)
        for i in range(len(masks) - 1, -1, -1):
            suffix[i] = suffix[i + 1] | masks[i]
        kills: dict[str, int] = {}
        for i, s in enumerate(stmts):
            for v in s.def_set | s.update_set(policy):
                kills[v] = suffix[i + 1]
        return cls(suffix[0], kills)

    def apply(self, state: Mapping[str, int]) -> dict[str, int]:
        every, kills = self.every, self.kills
        out = {v: m | every for v, m in state.items() if v not in kills}
        out.update(kills)
        return out


class DataflowResult(Mapping):
    """IN states of a converged analysis, keyed by statement id.

    Block-level states are kept as bitmasks; per-statement states are
    derived on demand from the enclosing block's IN.
    """

    def __init__(self, cfg: Cfg, policy: Policy, bits: _LineBits,
                 in_bits: dict[int, dict[str, int]], out_bits: dict[int, dict[str, int]],
                 iterations: int):
        self.cfg = cfg
        self.policy = policy
        self.iterations = iterations
        self._bits = bits
        self._in = in_bits
        self._out = out_bits
        self._where = {sid: (b, i) for b, ids in enumerate(cfg.blocks) for i, sid in enumerate(ids)}
        self._cache: dict[int, MutationState] = {}

    @property
    def block_in(self) -> dict[int, MutationState]:
        return {b: self._bits.decode_state(s) for b, s in self._in.items()}

    @property
    def block_out(self) -> dict[int, MutationState]:
        return {b: self._bits.decode_state(s) for b, s in self._out.items()}

    def __getitem__(self, sid: int) -> MutationState:
        if sid not in self._cache:
            b, i = self._where[sid]
            stmts = [self.cfg.scope.statements[s] for s in self.cfg.blocks[b][:i]]
            effect = _BlockEffect.of(stmts, self.policy, self._bits)
            self._cache[sid] = self._bits.decode_state(effect.apply(self._in[b]))
        return self._cache[sid]

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._where))

    def __len__(self) -> int:
        return len(self._where)

    def in_mask(self, sid: int, var: str) -> int | None:
        b, i = self._where[sid]
        stmts = self.cfg.scope.statements
        mask = 0
        for s in reversed(self.cfg.blocks[b][:i]):
            st = stmts[s]
            if var in st.def_set or var in st.update_set(self.policy):
                return mask
            mask |= self._bits.bit[st.line]
        base = self._in[b].get(var)
        return None if base is None else base | mask

    def in_set(self, sid: int, var: str) -> frozenset[int] | None:
        """IN[sid](var) without building the whole state; None when untracked."""
        mask = self.in_mask(sid, var)
        return None if mask is None else self._bits.decode(mask)


def run_dataflow(cfg: Cfg, policy: Policy | str = Policy.OPTIMISTIC,
                 initial: Mapping[str, frozenset[int]] | None = None) -> DataflowResult:
    """Worklist iteration to the least fixpoint.

    The entry block starts from ``initial`` (parameters mapped to the empty
    set by default); every other block starts empty.
    """
    policy = Policy(policy)
    scope = cfg.scope
    start_sets = dict(initial_state(scope) if initial is None else initial)
    bits = _LineBits([s.line for s in scope.statements] + [ln for s in start_sets.values() for ln in s])
    start = {v: bits.encode(s) for v, s in start_sets.items()}
    nblocks = len(cfg.blocks)
    preds: dict[int, list[int]] = {b: [] for b in range(nblocks)}
    succs: dict[int, list[int]] = {b: [] for b in range(nblocks)}
    for a, b in sorted(cfg.edges):
        preds[b].append(a)
        succs[a].append(b)
    effects = [_BlockEffect.of([scope.statements[s] for s in ids], policy, bits)
               for ids in cfg.blocks]

    variables = set(start)
    for s in scope.statements:
        variables |= s.def_set | s.update_set_cons
    # each OUT can grow at most |vars| * (|lines| + 1) times; every growth
    # re-queues the successors once
    bound = nblocks + len(cfg.edges) * max(1, len(variables)) * (len(bits.lines) + 1)

    block_in: dict[int, dict[str, int]] = {}
    block_out: dict[int, dict[str, int]] = {}
    # always take the pending block earliest in iteration order: loops settle
    # before their successors run, and each pass sees its predecessors' latest states
    order = cfg.iteration_order()
    rank = {b: i for i, b in enumerate(order)}
    rank.update((b, len(order) + b) for b in range(nblocks) if b not in rank)
    work = sorted(rank[b] for b in order)
    by_rank = {r: b for b, r in rank.items()}
    queued = set(order)
    iterations = 0
    while work:
        b = by_rank[heapq.heappop(work)]
        queued.discard(b)
        iterations += 1
        if iterations > bound:
            raise NonTermination(f"{scope.name}: no fixpoint after {iterations} iterations")
        state_in: dict[str, int] = dict(start) if b == cfg.entry else {}
        for p in preds[b]:
            out = block_out.get(p)
            if out:
                for v, m in out.items():
                    state_in[v] = state_in.get(v, 0) | m
        state_out = effects[b].apply(state_in)
        block_in[b] = state_in
        if block_out.get(b) != state_out:
            block_out[b] = state_out
            for s in succs[b]:
                if s not in queued:
                    queued.add(s)
                    heapq.heappush(work, rank[s])
    return DataflowResult(cfg, policy, bits, block_in, block_out, iterations)


@dataclass(frozen=True)
class Contribution:
    statement: int
    line: int
    variable: str
    value: int


def mutation_diffusion_score(cfg: Cfg, result: DataflowResult | None = None,
                             policy: Policy | str = Policy.OPTIMISTIC
                             ) -> tuple[int, list[Contribution]]:
    """Sum over mutations of ``|IN[s](v)|`` for every ``v`` in ``UPDATE(s)``."""
    policy = Policy(policy) if result is None else result.policy
    if result is None:
        result = run_dataflow(cfg, policy)
    contributions = []
    for ids in cfg.blocks:
        for sid in ids:
            stmt = cfg.scope.statements[sid]
            for v in sorted(stmt.update_set(policy)):
                seen = result.in_mask(sid, v)
                contributions.append(Contribution(sid, stmt.line, v, seen.bit_count() if seen else 0))
    contributions.sort(key=lambda c: (c.line, c.statement, c.variable))
    return sum(c.value for c in contributions), contributions


def normalize_score(score: float, statement_count: int) -> float:
    if statement_count <= 0:
        raise EmptyScope("cannot normalize over zero statements")
    return score / statement_count


def compute_lifetimes(scope: Scope) -> dict[str, int]:
    """Inclusive line distance from each local's first definition to its last use.

    Parameters count as defined on the ``def`` line. Variables that are
    never used afterwards get lifetime 1.
    """
    first_def: dict[str, int] = {p: scope.line for p in scope.params}
    last_use: dict[str, int] = {}
    for s in scope.statements:
        for v in s.def_set:
            if v not in first_def or s.line < first_def[v]:
                first_def[v] = s.line
        for v in s.reads | s.update_set_opt:
            last_use[v] = max(last_use.get(v, s.line), s.line)
    return {v: max(last_use.get(v, d), d) - d + 1 for v, d in sorted(first_def.items())}


def mutating_statements(statements: Iterable[Statement], policy: Policy | str) -> int:
    return sum(1 for s in statements if s.update_set(policy))


def mutating_statement_ratio(scopes: Scope | Iterable[Scope], policy: Policy | str) -> float:
    """Fraction of statements with a non-empty UPDATE set, over one scope or several."""
    if isinstance(scopes, Scope):
        scopes = [scopes]
    stmts = [s for sc in scopes for s in sc.statements]
    if not stmts:
        raise EmptyScope("no statements")
    return mutating_statements(stmts, policy) / len(stmts)


@dataclass
class MetricsRecord:
    scope: str
    kind: str
    line: int
    statement_count: int
    lifetimes: dict[str, int] = field(default_factory=dict)
    mutating_count_opt: int | None = None
    mutating_count_cons: int | None = None
    mutating_ratio_opt: float | None = None
    mutating_ratio_cons: float | None = None
    diffusion_opt: int | None = None
    diffusion_cons: int | None = None
    diffusion_normalized_opt: float | None = None
    diffusion_normalized_cons: float | None = None


def analyze_scope(scope: Scope, policies: Iterable[Policy | str] = POLICIES,
                  cfg: Cfg | None = None) -> MetricsRecord:
    n = len(scope.statements)
    rec = MetricsRecord(scope.name, scope.kind.value, scope.line, n, compute_lifetimes(scope))
    if n == 0:
        return rec
    cfg = cfg or build_cfg(scope)
    for policy in map(Policy, policies):
        suffix = "opt" if policy is Policy.OPTIMISTIC else "cons"
        score, _ = mutation_diffusion_score(cfg, run_dataflow(cfg, policy))
        count = mutating_statements(scope.statements, policy)
        setattr(rec, f"mutating_count_{suffix}", count)
        setattr(rec, f"mutating_ratio_{suffix}", count / n)
        setattr(rec, f"diffusion_{suffix}", score)
        setattr(rec, f"diffusion_normalized_{suffix}", normalize_score(score, n))
    return rec
