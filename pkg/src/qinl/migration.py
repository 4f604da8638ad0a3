"""The three data migration operations along a schema mapping, plus a
brute-force homomorphism enumerator used as the adjunction oracle.

delta pulls a target instance back by composition.  sigma pushes a source
instance forward freely via the chase, and pi pushes forward via the limit
formula over saturated classes of target terms.  Both adjoints are
fuel-bounded and raise FuelExhausted rather than truncating silently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .chase import FuelExhausted, initial_model
from .equality import Proved, decide_equal
from .kernel import (
    App,
    Base,
    Context,
    EngineError,
    Lit,
    Term,
    Var,
    format_term,
    substitute,
)
from .mapping import SchemaMapping, apply_to_term, check_preservation
from .schema import (
    Cell,
    FqlSchema,
    Instance,
    LabelledNull,
    OpApplied,
    eval_term,
)


class UnverifiedMapping(EngineError):
    def __init__(self, unproved: list[str]):
        super().__init__(
            "mapping preservation not proved for: " + "; ".join(unproved))
        self.unproved = unproved


class TooLarge(EngineError):
    pass


def require_verified(mapping: SchemaMapping, fuel: int,
                     allow_unverified: bool) -> None:
    if allow_unverified:
        return
    unproved = [eq.render() for eq, v in check_preservation(mapping, fuel)
                if not isinstance(v, Proved)]
    if unproved:
        raise UnverifiedMapping(unproved)


# --------------------------------------------------------------------------
# delta: migration by composition

def delta(mapping: SchemaMapping, j: Instance, *, fuel: int = 32,
          allow_unverified: bool = False) -> Instance:
    """Pull a target instance back to the source: the carrier at each source
    entity type is the carrier at its image, and each source operation is
    interpreted by evaluating its image expression in the target instance."""
    require_verified(mapping, fuel, allow_unverified)
    src = mapping.source
    carriers = {t: j.rows(mapping.type_map[t]) for t in sorted(src.entity_types)}
    functions: dict[str, dict[str, Cell]] = {}
    for op in src.entity_dom_ops():
        dom = src.sig.op_type(op)[0]
        assert isinstance(dom, Base)
        var, body = mapping.op_map[op]
        functions[op] = {
            row: eval_term(mapping.target, j, {var: row}, body)
            for row in carriers[dom.name]}
    return Instance.make(carriers, functions)


# --------------------------------------------------------------------------
# sigma: the free (chase-constructed) push-forward

def sigma(mapping: SchemaMapping, i: Instance, *, fuel: int = 32,
          allow_unverified: bool = False) -> Instance:
    """Push a source instance forward freely: every source row seeds a
    generator of its image type, and for each source operation the image
    expression applied to the seed is equated with the seed of (or constant
    in) the operation's value.  The chase then builds the initial model.

    Labelled nulls of the input become attribute-typed generators, so they
    stay unknown-but-fixed across their occurrences.
    """
    require_verified(mapping, fuel, allow_unverified)
    src = mapping.source
    generators: dict[str, str] = {}
    seed_name: dict[tuple[str, str], str] = {}
    multiply_used = {
        row for row, count in _row_counts(src, i).items() if count > 1}
    for t in sorted(src.entity_types):
        for row in i.rows(t):
            name = f"{row}@{t}" if row in multiply_used else row
            seed_name[(t, row)] = name
            generators[name] = mapping.type_map[t]

    null_vars: dict[str, str] = {}

    def cell_term(value: Cell, attr_type: str) -> Term:
        if isinstance(value, LabelledNull):
            var = null_vars.get(value.label)
            if var is None:
                var = f"?{value.label}"
                null_vars[value.label] = var
                generators[var] = attr_type
            return Var(var)
        if isinstance(value, OpApplied):
            arg_type = mapping.target.sig.op_type(value.op)[0]
            assert isinstance(arg_type, Base)
            return App(value.op, cell_term(value.arg, arg_type.name))
        return Lit(attr_type, value)

    equations: list[tuple[Term, Term]] = []
    for op in src.entity_dom_ops():
        dom, cod = src.sig.op_type(op)
        assert isinstance(dom, Base) and isinstance(cod, Base)
        var, body = mapping.op_map[op]
        for row in i.rows(dom.name):
            lhs = substitute(body, var, Var(seed_name[(dom.name, row)]))
            value = i.functions[op][row]
            if cod.name in src.entity_types:
                rhs: Term = Var(seed_name[(cod.name, value)])
            else:
                rhs = cell_term(value, cod.name)
            equations.append((lhs, rhs))
    return initial_model(mapping.target, generators, equations, fuel)


def _row_counts(s: FqlSchema, i: Instance) -> dict[str, int]:
    counts: dict[str, int] = {}
    for t in s.entity_types:
        for row in i.rows(t):
            counts[row] = counts.get(row, 0) + 1
    return counts


# --------------------------------------------------------------------------
# pi: the limit-formula push-forward

@dataclass(frozen=True)
class MorphismClass:
    """A target term out of a target entity type, landing at the image of a
    source entity type, kept up to provable equality."""

    rep: Term  # open in the variable "x"
    target_type: str


def pi(mapping: SchemaMapping, i: Instance, *, fuel: int = 32,
       allow_unverified: bool = False) -> Instance:
    """Push a source instance forward along the limit formula.

    The carrier at a target type is the set of families choosing, for each
    class of terms into the image of a source entity type, a row of that
    source carrier, compatibly with the source operations and with the
    determinations of target attribute operations.  Target operations act by
    precomposition; undetermined attribute components become fresh nulls.
    """
    require_verified(mapping, fuel, allow_unverified)
    src, tgt = mapping.source, mapping.target
    classes = {t: _saturate_classes(mapping, t, fuel)
               for t in sorted(tgt.entity_types)}

    # Index objects per target type: (source entity, class position).
    index: dict[str, list[tuple[str, int]]] = {}
    for t_prime in sorted(tgt.entity_types):
        objs = []
        for pos, mc in enumerate(classes[t_prime]):
            for t in sorted(src.entity_types):
                if mapping.type_map[t] == mc.target_type:
                    objs.append((t, pos))
        index[t_prime] = objs

    attr_ops: dict[str, list[str]] = {t: [] for t in sorted(tgt.entity_types)}
    fk_ops: dict[str, list[str]] = {t: [] for t in sorted(tgt.entity_types)}
    for op in tgt.entity_dom_ops():
        dom, cod = tgt.sig.op_type(op)
        assert isinstance(dom, Base) and isinstance(cod, Base)
        kind = fk_ops if cod.name in tgt.entity_types else attr_ops
        kind[dom.name].append(op)

    decomps = {
        t_prime: {op: _attribute_decompositions(
            mapping, op, t_prime, classes[t_prime], index[t_prime], fuel)
            for op in attr_ops[t_prime]}
        for t_prime in sorted(tgt.entity_types)}

    families: dict[str, list[tuple[str, ...]]] = {}
    attr_value: dict[str, dict[tuple[tuple[str, ...], str], Cell | None]] = {}
    for t_prime in sorted(tgt.entity_types):
        kept = []
        values: dict[tuple[tuple[str, ...], str], Cell | None] = {}
        for family in _limit_families(mapping, i, t_prime, classes[t_prime],
                                      index[t_prime], fuel):
            consistent = True
            for op in attr_ops[t_prime]:
                determined = [
                    eval_term(src, i, {"y": family[pos]}, term)
                    for pos, term in decomps[t_prime][op]]
                if determined and any(v != determined[0] for v in determined):
                    consistent = False
                    break
                values[(family, op)] = determined[0] if determined else None
            if consistent:
                kept.append(family)
        families[t_prime] = kept
        attr_value[t_prime] = values

    row_of: dict[str, dict[tuple[str, ...], str]] = {}
    carriers: dict[str, list[str]] = {}
    for t_prime in sorted(tgt.entity_types):
        rows = {}
        for family in families[t_prime]:
            name = "(" + ", ".join(
                f"{format_term(classes[t_prime][pos].rep)}:{t}={row}"
                for (t, pos), row in zip(index[t_prime], family)) + ")"
            rows[family] = name
        row_of[t_prime] = rows
        carriers[t_prime] = sorted(rows.values())

    functions: dict[str, dict[str, Cell]] = {}
    null_count = 0
    for op in tgt.entity_dom_ops():
        dom, cod = tgt.sig.op_type(op)
        assert isinstance(dom, Base) and isinstance(cod, Base)
        t_prime = dom.name
        table: dict[str, Cell] = {}
        if cod.name in tgt.entity_types:
            positions = _precompose_positions(mapping, op, t_prime, cod.name,
                                              classes, index, fuel)
            for family in families[t_prime]:
                image = tuple(family[p] for p in positions)
                if image not in row_of[cod.name]:
                    raise FuelExhausted(
                        f"image family under '{op}' escaped the computed limit",
                        len(families[t_prime]))
                table[row_of[t_prime][family]] = row_of[cod.name][image]
        else:
            ordered = sorted(families[t_prime],
                             key=lambda f: row_of[t_prime][f])
            for family in ordered:
                value = attr_value[t_prime][(family, op)]
                if value is None:
                    value = LabelledNull(str(null_count))
                    null_count += 1
                table[row_of[t_prime][family]] = value
        functions[op] = table
    return Instance.make(carriers, functions)


def _saturate_classes(mapping: SchemaMapping, t_prime: str,
                      fuel: int) -> list[MorphismClass]:
    """Enumerate operation chains out of a target entity type by depth,
    quotienting by provable equality, until a depth adds no new class."""
    tgt = mapping.target
    classes: list[MorphismClass] = [MorphismClass(Var("x"), t_prime)]
    frontier = list(classes)
    for _ in range(fuel):
        fresh: list[MorphismClass] = []
        for mc in frontier:
            for op in tgt.ops_from(mc.target_type):
                cod = tgt.sig.op_type(op)[1]
                assert isinstance(cod, Base)
                if cod.name not in tgt.entity_types:
                    continue
                cand = MorphismClass(App(op, mc.rep), cod.name)
                if _find_class(mapping, t_prime, cand.rep, cod.name,
                               classes, fuel) is None:
                    classes.append(cand)
                    fresh.append(cand)
        if not fresh:
            return classes
        frontier = fresh
    raise FuelExhausted(
        f"term classes out of '{t_prime}' did not saturate", len(classes))


def _find_class(mapping: SchemaMapping, t_prime: str, term: Term,
                target_type: str, classes: list[MorphismClass],
                fuel: int) -> int | None:
    ctx = Context.of(("x", Base(t_prime)))
    for pos, mc in enumerate(classes):
        if mc.target_type != target_type:
            continue
        verdict = decide_equal(mapping.target.theory, ctx, term, mc.rep, fuel)
        if isinstance(verdict, Proved):
            return pos
    return None


def _limit_families(mapping: SchemaMapping, i: Instance, t_prime: str,
                    classes: list[MorphismClass],
                    index: list[tuple[str, int]],
                    fuel: int) -> list[tuple[str, ...]]:
    """All choices of a source row per index object that commute with the
    source operations acting between index objects."""
    src = mapping.source
    constraints = []  # (from position, op, to position)
    for from_pos, (t, cls_pos) in enumerate(index):
        for op in src.ops_from(t):
            cod = src.sig.op_type(op)[1]
            assert isinstance(cod, Base)
            if cod.name not in src.entity_types:
                continue
            var, body = mapping.op_map[op]
            composite = substitute(body, var, classes[cls_pos].rep)
            target_cls = _find_class(mapping, t_prime, composite,
                                     mapping.type_map[cod.name], classes, fuel)
            if target_cls is None:
                raise FuelExhausted(
                    f"composite of '{op}' escaped the saturated classes of "
                    f"'{t_prime}'", len(classes))
            constraints.append((from_pos, op, index.index((cod.name, target_cls))))

    out = []
    for family in itertools.product(*[i.rows(t) for t, _ in index]):
        if all(i.functions[op][family[a]] == family[b]
               for a, op, b in constraints):
            out.append(family)
    return out


def _precompose_positions(mapping: SchemaMapping, op: str, t_prime: str,
                          cod_type: str, classes, index,
                          fuel: int) -> list[int]:
    """For a target operation out of t_prime, the positions in t_prime's
    index realizing each index object of the codomain type after
    precomposition."""
    positions = []
    for (u, cls_pos) in index[cod_type]:
        composite = substitute(classes[cod_type][cls_pos].rep, "x",
                               App(op, Var("x")))
        found = _find_class(mapping, t_prime, composite,
                            mapping.type_map[u], classes[t_prime], fuel)
        if found is None:
            raise FuelExhausted(
                f"precomposition with '{op}' escaped the saturated classes",
                len(classes[t_prime]))
        positions.append(index[t_prime].index((u, found)))
    return positions


def _attribute_decompositions(mapping: SchemaMapping, op: str, t_prime: str,
                              classes: list[MorphismClass],
                              index: list[tuple[str, int]], fuel: int,
                              max_depth: int = 4,
                              ) -> list[tuple[int, Term]]:
    """Ways to express a target attribute operation as the image of a source
    attribute term precomposed with an index class; these determine the
    attribute components of the limit.  Every decomposition found is kept:
    distinct source terms with one target image must agree on a family, or
    the family is excluded."""
    src = mapping.source
    ctx = Context.of(("x", Base(t_prime)))
    goal = App(op, Var("x"))
    attr_type = mapping.target.sig.op_type(op)[1]
    assert isinstance(attr_type, Base)
    out = []
    for pos, (t, cls_pos) in enumerate(index):
        for term in _terms_to_type(src, t, attr_type.name, max_depth):
            image = apply_to_term(mapping, Context.of(("y", Base(t))), term)
            composite = substitute(image, "y", classes[cls_pos].rep)
            verdict = decide_equal(mapping.target.theory, ctx, goal,
                                   composite, fuel)
            if isinstance(verdict, Proved):
                out.append((pos, term))
    return out


def _terms_to_type(s: FqlSchema, start: str, goal: str,
                   max_depth: int) -> list[Term]:
    """Operation chains from a source entity type to a given base type, in
    the variable 'y', up to a small depth bound."""
    level: list[tuple[Term, str]] = [(Var("y"), start)]
    found = []
    for _ in range(max_depth):
        nxt = []
        for term, t in level:
            for op in sorted(s.sig.operations):
                dom, cod = s.sig.op_type(op)
                if dom != Base(t):
                    continue
                assert isinstance(cod, Base)
                chained = App(op, term)
                if cod.name == goal:
                    found.append(chained)
                nxt.append((chained, cod.name))
        level = nxt
    return found


# --------------------------------------------------------------------------
# Homomorphism enumeration: the adjunction oracle

@dataclass(frozen=True)
class Homomorphism:
    """Per-entity-type carrier maps commuting with every operation table.
    Builtin constants are fixed; a labelled null of the source may map to any
    value, consistently across its occurrences."""

    maps: tuple[tuple[str, tuple[tuple[str, str], ...]], ...]
    null_map: tuple[tuple[str, Cell], ...]

    def apply(self, entity: str, row: str) -> str:
        return dict(dict(self.maps)[entity])[row]


def enumerate_homs(s: FqlSchema, i: Instance, j: Instance,
                   limit: int = 10_000_000) -> list[Homomorphism]:
    """Exhaustively enumerate instance homomorphisms from i to j.

    Complete and duplicate-free; guarded by the product of the per-type
    function-space sizes.
    """
    types = sorted(s.entity_types)
    space = 1
    for t in types:
        if len(i.rows(t)) > 0:
            space *= len(j.rows(t)) ** len(i.rows(t))
        if space > limit:
            raise TooLarge(f"homomorphism search space exceeds {limit}")

    per_type = []
    for t in types:
        rows = i.rows(t)
        choices = [dict(zip(rows, image))
                   for image in itertools.product(j.rows(t), repeat=len(rows))]
        per_type.append(choices)

    out = []
    for combo in itertools.product(*per_type):
        maps = dict(zip(types, combo))
        null_binding: dict[str, Cell] = {}
        if _commutes(s, i, j, maps, null_binding):
            out.append(Homomorphism(
                tuple((t, tuple(sorted(m.items()))) for t, m in maps.items()),
                tuple(sorted(null_binding.items()))))
    return out


def _commutes(s: FqlSchema, i: Instance, j: Instance,
              maps: dict[str, dict[str, str]],
              null_binding: dict[str, Cell]) -> bool:
    for op in s.entity_dom_ops():
        dom, cod = s.sig.op_type(op)
        assert isinstance(dom, Base) and isinstance(cod, Base)
        entity_cod = cod.name in s.entity_types
        for row in i.rows(dom.name):
            vi = i.functions[op][row]
            vj = j.functions[op][maps[dom.name][row]]
            if entity_cod:
                if maps[cod.name][vi] != vj:
                    return False
            elif not _match_attr(s, vi, vj, null_binding):
                return False
    return True


def _match_attr(s: FqlSchema, vi: Cell, vj: Cell,
                binding: dict[str, Cell]) -> bool:
    """Match a source attribute cell against a target cell, binding source
    nulls on first use and checking consistency afterwards.  Symbolic values
    match structurally, or by computing once their null is bound to a
    constant."""
    if isinstance(vi, LabelledNull):
        if vi.label in binding:
            return binding[vi.label] == vj
        binding[vi.label] = vj
        return True
    if isinstance(vi, OpApplied):
        ground = _try_ground(s, vi, binding)
        if ground is not None:
            return ground == vj
        return (isinstance(vj, OpApplied) and vi.op == vj.op
                and _match_attr(s, vi.arg, vj.arg, binding))
    return type(vi) is type(vj) and vi == vj


def _try_ground(s: FqlSchema, v: Cell, binding: dict[str, Cell]) -> Cell | None:
    if isinstance(v, LabelledNull):
        bound = binding.get(v.label)
        if bound is None or isinstance(bound, (LabelledNull, OpApplied)):
            return None
        return bound
    if isinstance(v, OpApplied):
        arg = _try_ground(s, v.arg, binding)
        return None if arg is None else s.builtins.apply(v.op, arg)
    return v
