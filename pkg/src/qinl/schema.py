"""Database schemas as equational theories with an entity/attribute split,
finite instances with labelled nulls, satisfaction checking, and
isomorphism-of-instances search."""

from __future__ import annotations

import itertools
import random
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

from .equality import Theory, check_theory
from .kernel import (
    App,
    Base,
    EngineError,
    Lit,
    Pair,
    Prod,
    Proj1,
    Proj2,
    Signature,
    Term,
    TypeExpr,
    UNIT,
    UnboundVariable,
    UnitTerm,
    Var,
    format_literal,
    format_type,
    subterms,
)
from .nrc import BaseV, UninterpretedOperation, Value


class PartialFunction(EngineError):
    def __init__(self, op: str, row: str):
        super().__init__(f"function table '{op}' has no entry for '{row}'")
        self.op = op
        self.row = row


class InvalidInstance(EngineError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


# --------------------------------------------------------------------------
# Attribute values

@dataclass(frozen=True)
class LabelledNull:
    """An unknown attribute value created by the chase; equal only to itself."""

    label: str

    def __str__(self) -> str:
        return f"?{self.label}"


@dataclass(frozen=True)
class OpApplied:
    """A builtin operation applied to a value containing a labelled null;
    kept symbolic because the operation cannot compute on an unknown."""

    op: str
    arg: object

    def __str__(self) -> str:
        return f"{self.op}({render_cell(self.arg)})"


class _UnitCell:
    def __repr__(self) -> str:
        return "()"


UNIT_CELL = _UnitCell()

Cell = object  # row id (str), constant, LabelledNull, OpApplied, tuple, UNIT_CELL


def render_cell(v: Cell) -> str:
    if v is UNIT_CELL:
        return "()"
    if isinstance(v, (LabelledNull, OpApplied)):
        return str(v)
    if isinstance(v, tuple):
        return f"({render_cell(v[0])}, {render_cell(v[1])})"
    if isinstance(v, (bool, int)):
        return format_literal(v)
    return str(v)  # row ids print bare; string constants are rendered by callers


def cell_key(v: Cell) -> tuple:
    if isinstance(v, bool):
        return (0, v)
    if isinstance(v, int):
        return (1, v)
    if isinstance(v, str):
        return (2, v)
    if isinstance(v, LabelledNull):
        return (3, v.label)
    if isinstance(v, OpApplied):
        return (4, v.op, cell_key(v.arg))
    if isinstance(v, tuple):
        return (5, cell_key(v[0]), cell_key(v[1]))
    return (6,)


# --------------------------------------------------------------------------
# Builtin carriers and operations

@dataclass(frozen=True)
class BuiltinRegistry:
    """Carriers and total semantics for attribute types and their
    operations; also the source of pseudo-random sample values."""

    carriers: Mapping[str, type]
    ops: Mapping[str, Callable[[object], object]]
    samplers: Mapping[str, Callable[[random.Random], object]]

    def has_carrier(self, base: str) -> bool:
        return base in self.carriers

    def sample(self, base: str, rng: random.Random) -> object:
        return self.samplers[base](rng)

    def apply(self, op: str, value: Cell) -> Cell:
        if op not in self.ops:
            raise UninterpretedOperation(op)
        if isinstance(value, (LabelledNull, OpApplied)):
            return OpApplied(op, value)
        return self.ops[op](value)


def _sample_string(rng: random.Random) -> str:
    return "".join(rng.choice("ab") for _ in range(rng.randrange(0, 6)))


def _sample_int(rng: random.Random) -> int:
    return rng.randrange(-50, 51)


def _sample_bool(rng: random.Random) -> bool:
    return rng.random() < 0.5


def default_builtins() -> BuiltinRegistry:
    return BuiltinRegistry(
        carriers={"String": str, "Int": int, "Bool": bool},
        ops={"length": len, "reverse": lambda s: s[::-1]},
        samplers={"String": _sample_string, "Int": _sample_int,
                  "Bool": _sample_bool},
    )


# --------------------------------------------------------------------------
# Schemas

@dataclass(frozen=True)
class FqlSchema:
    """An equational theory whose base types are partitioned into entity
    types (finite, enumerable carriers) and attribute types (fixed builtin
    carriers).  Operations must run between base types; no operation may map
    an attribute type to an entity type."""

    theory: Theory
    entity_types: frozenset[str]
    attribute_types: frozenset[str]
    builtins: BuiltinRegistry = field(default_factory=default_builtins)

    @property
    def sig(self) -> Signature:
        return self.theory.sig

    def classify_op(self, name: str) -> str:
        dom, cod = self.sig.op_type(name)
        if _base_name(dom) in self.entity_types:
            return "fk" if _base_name(cod) in self.entity_types else "attribute"
        return "builtin"

    def entity_dom_ops(self) -> list[str]:
        """Operations stored as tables: domain is an entity type."""
        return sorted(
            name for name, (dom, _) in self.sig.operations.items()
            if _base_name(dom) in self.entity_types)

    def builtin_op_names(self) -> list[str]:
        return sorted(
            name for name, (dom, _) in self.sig.operations.items()
            if _base_name(dom) in self.attribute_types)

    def ops_from(self, entity: str) -> list[str]:
        return sorted(
            name for name, (dom, _) in self.sig.operations.items()
            if dom == Base(entity))

    def validate(self) -> list[str]:
        """Structural problems only; equation well-formedness is reported
        separately by check_theory so callers can locate each equation."""
        problems = []
        declared = self.sig.base_types
        overlap = self.entity_types & self.attribute_types
        if overlap:
            problems.append(f"types declared both entity and attribute: {sorted(overlap)}")
        missing = declared - self.entity_types - self.attribute_types
        if missing:
            problems.append(f"base types not classified: {sorted(missing)}")
        extra = (self.entity_types | self.attribute_types) - declared
        if extra:
            problems.append(f"classified types not declared: {sorted(extra)}")
        for a in sorted(self.attribute_types):
            if not self.builtins.has_carrier(a):
                problems.append(f"attribute type '{a}' has no builtin carrier")
        for name in sorted(self.sig.operations):
            dom, cod = self.sig.operations[name]
            if not isinstance(dom, Base) or not isinstance(cod, Base):
                problems.append(
                    f"operation '{name}' must run between base types, has "
                    f"{format_type(dom)} -> {format_type(cod)}")
                continue
            if dom.name in self.attribute_types and cod.name in self.entity_types:
                problems.append(
                    f"operation '{name}' maps attribute type {dom.name} "
                    f"to entity type {cod.name}")
            if dom.name in self.attribute_types and name not in self.builtins.ops:
                problems.append(f"builtin operation '{name}' has no registered semantics")
        return problems

    def theory_problems(self):
        return check_theory(self.theory)

    def nrc_interpretations(self) -> dict[str, Callable[[Value], Value]]:
        """Builtin operations wrapped for the set-semantics evaluator."""
        out = {}
        for name in self.builtin_op_names():
            cod = self.sig.op_type(name)[1]
            assert isinstance(cod, Base)

            def fn(v: Value, _name=name, _cod=cod.name) -> Value:
                assert isinstance(v, BaseV)
                return BaseV(_cod, self.builtins.apply(_name, v.constant))

            out[name] = fn
        return out


def _base_name(t: TypeExpr) -> str | None:
    return t.name if isinstance(t, Base) else None


# --------------------------------------------------------------------------
# Instances

@dataclass(frozen=True)
class Instance:
    """Finite carriers for entity types plus total function tables for every
    operation with an entity domain.  Attribute cells hold builtin constants
    or labelled nulls; operations between attribute types are computed from
    the registry, not stored."""

    carriers: Mapping[str, tuple[str, ...]]
    functions: Mapping[str, Mapping[str, Cell]]

    @classmethod
    def make(cls, carriers: Mapping[str, Iterable[str]],
             functions: Mapping[str, Mapping[str, Cell]]) -> Instance:
        return cls(
            {t: tuple(sorted(set(rows))) for t, rows in carriers.items()},
            {op: dict(table) for op, table in functions.items()},
        )

    def rows(self, entity: str) -> tuple[str, ...]:
        return self.carriers.get(entity, ())

    def total_rows(self) -> int:
        return sum(len(rows) for rows in self.carriers.values())

    def nulls(self) -> list[LabelledNull]:
        seen = {}
        for op in sorted(self.functions):
            for row in sorted(self.functions[op]):
                v = self.functions[op][row]
                for null in _nulls_in(v):
                    seen.setdefault(null.label, null)
        return [seen[k] for k in sorted(seen)]


def _nulls_in(v: Cell) -> Iterable[LabelledNull]:
    if isinstance(v, LabelledNull):
        yield v
    elif isinstance(v, OpApplied):
        yield from _nulls_in(v.arg)


def validate_instance(s: FqlSchema, i: Instance) -> list[str]:
    problems = []
    for t in sorted(s.entity_types):
        if t not in i.carriers:
            problems.append(f"no carrier for entity type '{t}'")
    for t in sorted(i.carriers):
        if t not in s.entity_types:
            problems.append(f"carrier for non-entity type '{t}'")
    expected_ops = s.entity_dom_ops()
    for op in expected_ops:
        if op not in i.functions:
            problems.append(f"no function table for operation '{op}'")
    for op in sorted(i.functions):
        if op not in expected_ops:
            problems.append(f"function table for unknown or builtin operation '{op}'")
    for op in expected_ops:
        if op not in i.functions:
            continue
        dom, cod = s.sig.op_type(op)
        table = i.functions[op]
        dom_rows = i.rows(_base_name(dom))
        for row in dom_rows:
            if row not in table:
                problems.append(f"partial function '{op}': no entry for '{row}'")
        for row in sorted(table):
            if row not in dom_rows:
                problems.append(f"table '{op}' has entry for unknown row '{row}'")
        cod_name = _base_name(cod)
        if cod_name in s.entity_types:
            cod_rows = set(i.rows(cod_name))
            for row in sorted(table):
                if table[row] not in cod_rows:
                    problems.append(
                        f"table '{op}' sends '{row}' outside the "
                        f"'{cod_name}' carrier: {render_cell(table[row])}")
        else:
            carrier = s.builtins.carriers.get(cod_name)
            for row in sorted(table):
                v = table[row]
                if isinstance(v, (LabelledNull, OpApplied)):
                    continue
                if carrier is bool:
                    ok = isinstance(v, bool)
                else:
                    ok = isinstance(v, carrier) and not isinstance(v, bool)
                if not ok:
                    problems.append(
                        f"ill-typed cell {op}({row}) = {render_cell(v)}: "
                        f"not a {cod_name}")
    return problems


# --------------------------------------------------------------------------
# Term evaluation over an instance

def eval_term(s: FqlSchema, i: Instance, env: Mapping[str, Cell], e: Term) -> Cell:
    """Evaluate by table lookups for entity-domain operations and registered
    semantics for builtins.  A builtin applied to an unknown stays symbolic."""
    if isinstance(e, Var):
        if e.name not in env:
            raise UnboundVariable(e.name)
        return env[e.name]
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, UnitTerm):
        return UNIT_CELL
    if isinstance(e, Pair):
        return (eval_term(s, i, env, e.fst), eval_term(s, i, env, e.snd))
    if isinstance(e, Proj1):
        v = eval_term(s, i, env, e.of)
        assert isinstance(v, tuple)
        return v[0]
    if isinstance(e, Proj2):
        v = eval_term(s, i, env, e.of)
        assert isinstance(v, tuple)
        return v[1]
    if isinstance(e, App):
        arg = eval_term(s, i, env, e.arg)
        if s.classify_op(e.op) == "builtin":
            return s.builtins.apply(e.op, arg)
        table = i.functions.get(e.op)
        if table is None or arg not in table:
            raise PartialFunction(e.op, render_cell(arg))
        return table[arg]
    raise EngineError(f"cannot evaluate term construct {e!r}")


# --------------------------------------------------------------------------
# Satisfaction checking

@dataclass(frozen=True)
class EquationCheck:
    equation: str
    status: str  # "satisfied" | "violated" | "sampled-only"
    witness: tuple[tuple[str, str], ...] | None = None
    sample_size: int | None = None


@dataclass(frozen=True)
class SatisfactionReport:
    checks: tuple[EquationCheck, ...]

    @property
    def all_ok(self) -> bool:
        return all(c.status != "violated" for c in self.checks)

    def violations(self) -> list[EquationCheck]:
        return [c for c in self.checks if c.status == "violated"]


def check_instance(s: FqlSchema, i: Instance, *,
                   sample_size: int = 256, seed: int = 0) -> SatisfactionReport:
    """Check every schema equation against an instance.

    Entity-typed context variables are enumerated exhaustively over the
    carriers.  Attribute-typed variables range over the instance's active
    domain plus a seeded pseudo-random sample, and such equations report
    `sampled-only` rather than `satisfied`.
    """
    problems = validate_instance(s, i)
    if problems:
        raise InvalidInstance(problems)
    rng = random.Random(seed)
    checks = []
    for eq in s.theory.equations:
        domains = []
        sampled = False
        for _, t in eq.ctx:
            values, was_sampled = _type_domain(s, i, t, rng, sample_size)
            sampled = sampled or was_sampled
            domains.append(values)
        witness = None
        for combo in itertools.product(*domains):
            env = {var: value for (var, _), value in zip(eq.ctx, combo)}
            if eval_term(s, i, env, eq.lhs) != eval_term(s, i, env, eq.rhs):
                witness = tuple(
                    (var, render_cell(value)) for var, value in sorted(env.items()))
                break
        if witness is not None:
            checks.append(EquationCheck(eq.render(), "violated", witness=witness))
        elif sampled:
            checks.append(EquationCheck(
                eq.render(), "sampled-only", sample_size=sample_size))
        else:
            checks.append(EquationCheck(eq.render(), "satisfied"))
    return SatisfactionReport(tuple(checks))


def _type_domain(s: FqlSchema, i: Instance, t: TypeExpr,
                 rng: random.Random, sample_size: int) -> tuple[list[Cell], bool]:
    if t == UNIT:
        return [UNIT_CELL], False
    if isinstance(t, Prod):
        left, ls = _type_domain(s, i, t.left, rng, sample_size)
        right, rs = _type_domain(s, i, t.right, rng, sample_size)
        return [(a, b) for a in left for b in right], ls or rs
    assert isinstance(t, Base)
    if t.name in s.entity_types:
        return list(i.rows(t.name)), False
    return _attribute_domain(s, i, t.name, rng, sample_size), True


def _attribute_domain(s: FqlSchema, i: Instance, base: str,
                      rng: random.Random, sample_size: int) -> list[Cell]:
    """Active-domain constants of an attribute type plus sampled carrier
    values.  Labelled nulls denote unknown-but-fixed values and are not
    quantified over."""
    active: dict[tuple, Cell] = {}

    def put(v: Cell) -> None:
        if not isinstance(v, (LabelledNull, OpApplied)):
            active.setdefault(cell_key(v), v)

    for op in s.entity_dom_ops():
        cod = s.sig.op_type(op)[1]
        if _base_name(cod) == base:
            for v in i.functions.get(op, {}).values():
                put(v)
    for eq in s.theory.equations:
        for side in (eq.lhs, eq.rhs):
            for sub in subterms(side):
                if isinstance(sub, Lit) and sub.base == base:
                    put(sub.value)
    values = [active[k] for k in sorted(active)]
    seen = set(active)
    attempts = 0
    while len(values) < len(active) + sample_size and attempts < sample_size * 4:
        attempts += 1
        v = s.builtins.sample(base, rng)
        k = cell_key(v)
        if k not in seen:
            seen.add(k)
            values.append(v)
    return values


# --------------------------------------------------------------------------
# Isomorphism of instances

def instance_equal_upto_iso(s: FqlSchema, i: Instance, j: Instance,
                            ) -> dict[str, dict[str, str]] | None:
    """Search for a bijective, operation-commuting family of carrier maps
    fixing builtin constants; labelled nulls may be renamed bijectively.
    Returns the carrier maps, or None."""
    for t in sorted(s.entity_types):
        if len(i.rows(t)) != len(j.rows(t)):
            return None
    slots = [(t, r) for t in sorted(s.entity_types) for r in i.rows(t)]
    mapping: dict[str, dict[str, str]] = {t: {} for t in sorted(s.entity_types)}
    used: dict[str, set[str]] = {t: set() for t in sorted(s.entity_types)}
    null_map: dict[str, str] = {}
    null_rev: dict[str, str] = {}

    def attr_match(vi: Cell, vj: Cell, trail: list[str]) -> bool:
        if isinstance(vi, LabelledNull):
            if not isinstance(vj, LabelledNull):
                return False
            if vi.label in null_map:
                return null_map[vi.label] == vj.label
            if vj.label in null_rev:
                return False
            null_map[vi.label] = vj.label
            null_rev[vj.label] = vi.label
            trail.append(vi.label)
            return True
        if isinstance(vi, OpApplied):
            return (isinstance(vj, OpApplied) and vi.op == vj.op
                    and attr_match(vi.arg, vj.arg, trail))
        return type(vi) is type(vj) and vi == vj

    def consistent(t: str, r: str, r2: str, trail: list[str]) -> bool:
        for op in s.ops_from(t):
            cod = s.sig.op_type(op)[1]
            vi = i.functions[op][r]
            vj = j.functions[op][r2]
            if _base_name(cod) in s.entity_types:
                cod_name = _base_name(cod)
                if vi in mapping[cod_name]:
                    if mapping[cod_name][vi] != vj:
                        return False
            elif not attr_match(vi, vj, trail):
                return False
        # also re-check earlier rows whose images land on r under some op
        for t2 in sorted(s.entity_types):
            for op in s.ops_from(t2):
                cod = s.sig.op_type(op)[1]
                if _base_name(cod) != t:
                    continue
                for r0, r0img in mapping[t2].items():
                    if i.functions[op][r0] == r and j.functions[op][r0img] != r2:
                        return False
        return True

    def search(k: int) -> bool:
        if k == len(slots):
            return True
        t, r = slots[k]
        for r2 in j.rows(t):
            if r2 in used[t]:
                continue
            trail: list[str] = []
            if consistent(t, r, r2, trail):
                mapping[t][r] = r2
                used[t].add(r2)
                if search(k + 1):
                    return True
                del mapping[t][r]
                used[t].remove(r2)
            for label in trail:
                del null_rev[null_map.pop(label)]
        return False

    if search(0):
        return {t: dict(m) for t, m in mapping.items()}
    return None
