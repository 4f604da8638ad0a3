"""Equations-in-context, equational theories, and a fuel-bounded decision
procedure for provable equality.

The prover saturates a congruence-closure structure (a small e-graph) over
the term universe generated by the two goal terms.  Theory equations are
applied by pattern matching against existing classes; the unit and product
axioms are applied schematically by class type.  A `Proved` verdict is sound;
absence of proof within fuel yields `Unknown`, never a refutation.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

from .kernel import (
    App,
    Base,
    Context,
    EngineError,
    Lit,
    Pair,
    Proj1,
    Proj2,
    Prod,
    Signature,
    Term,
    TypeExpr,
    UNIT,
    UNIT_TERM,
    UnitTerm,
    Var,
    format_term,
    format_type,
    infer_type,
    substitute_many,
    term_key,
)


class IllTyped(EngineError):
    """A term or equation failed to typecheck where typing is a precondition."""


@dataclass(frozen=True)
class Equation:
    ctx: Context
    lhs: Term
    rhs: Term

    def render(self) -> str:
        binder = ", ".join(f"{v}: {format_type(t)}" for v, t in self.ctx)
        head = f"forall {binder} . " if binder else ""
        return f"{head}{format_term(self.lhs)} = {format_term(self.rhs)}"


@dataclass(frozen=True)
class Theory:
    sig: Signature
    equations: tuple[Equation, ...] = ()

    @classmethod
    def of(cls, sig: Signature, equations: Iterable[Equation] = ()) -> Theory:
        return cls(sig, tuple(equations))


@dataclass(frozen=True)
class Proved:
    trace: tuple[str, ...]

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Unknown:
    fuel_spent: int
    depth_cap: int
    node_cap: int
    saturated: bool = False

    def __bool__(self) -> bool:
        return False


Verdict = Proved | Unknown


@dataclass(frozen=True)
class TheoryProblem:
    index: int
    equation: str
    message: str


def check_theory(th: Theory) -> list[TheoryProblem]:
    """Validate well-formedness of every equation; reports all failures."""
    problems = []
    for i, eq in enumerate(th.equations):
        try:
            tl = infer_type(th.sig, eq.ctx, eq.lhs)
            tr = infer_type(th.sig, eq.ctx, eq.rhs)
        except EngineError as err:
            problems.append(TheoryProblem(i, eq.render(), str(err)))
            continue
        if tl != tr:
            problems.append(TheoryProblem(
                i, eq.render(),
                f"sides have different types: {format_type(tl)} vs {format_type(tr)}"))
    return problems


def instantiate(sig: Signature, eq: Equation, assignment: Mapping[str, Term],
                ctx: Context = Context()) -> tuple[Term, Term]:
    """Substitute terms for all context variables of an equation, checking
    that the assignment is type-correct against the supplied outer context."""
    for var, want in eq.ctx:
        if var not in assignment:
            raise IllTyped(f"assignment misses variable '{var}'")
        got = infer_type(sig, ctx, assignment[var])
        if got != want:
            raise TypeMismatchError(var, format_type(want), format_type(got))
    return (substitute_many(eq.lhs, assignment),
            substitute_many(eq.rhs, assignment))


class TypeMismatchError(IllTyped):
    def __init__(self, var: str, expected: str, found: str):
        super().__init__(
            f"term for '{var}' has type {found}, expected {expected}")


# --------------------------------------------------------------------------
# The congruence-closure structure.
#
# Nodes are hash-consed over canonical child class ids:
#   ("var", name)  ("unit",)  ("lit", base, value)
#   ("pair", l, r)  ("p1", c)  ("p2", c)  ("app", op, c)

NodeKey = tuple


@dataclass
class EGraph:
    sig: Signature
    builtin_ops: Mapping[str, Callable[[object], object]] | None = None
    _nodes: list[NodeKey] = field(default_factory=list)
    _types: list[TypeExpr] = field(default_factory=list)
    _parent: list[int] = field(default_factory=list)
    _table: dict[NodeKey, int] = field(default_factory=dict)
    _version: int = 0
    log: list[str] = field(default_factory=list)

    # -- union-find ---------------------------------------------------------

    def find(self, x: int) -> int:
        p = self._parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def equal(self, x: int, y: int) -> bool:
        return self.find(x) == self.find(y)

    def union(self, x: int, y: int, reason: str = "") -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self._types[rx] != self._types[ry]:
            raise IllTyped(
                f"congruence would merge classes of different types "
                f"{format_type(self._types[rx])} and {format_type(self._types[ry])}")
        # keep the lower id as root for determinism
        if ry < rx:
            rx, ry = ry, rx
        self._parent[ry] = rx
        self._version += 1
        if reason:
            self.log.append(reason)
        return True

    # -- node creation ------------------------------------------------------

    def _canon(self, key: NodeKey) -> NodeKey:
        tag = key[0]
        if tag in ("p1", "p2", "app"):
            return (*key[:-1], self.find(key[-1]))
        if tag == "pair":
            return ("pair", self.find(key[1]), self.find(key[2]))
        return key

    def _node_type(self, key: NodeKey) -> TypeExpr:
        tag = key[0]
        if tag == "unit":
            return UNIT
        if tag == "lit":
            return Base(key[1])
        if tag == "pair":
            return Prod(self._types[self.find(key[1])],
                        self._types[self.find(key[2])])
        if tag in ("p1", "p2"):
            t = self._types[self.find(key[1])]
            if not isinstance(t, Prod):
                raise IllTyped(f"projection from non-product {format_type(t)}")
            return t.left if tag == "p1" else t.right
        if tag == "app":
            return self.sig.op_type(key[1])[1]
        raise EngineError(f"bad node key {key!r}")

    def add_node(self, key: NodeKey, var_type: TypeExpr | None = None) -> int:
        key = self._canon(key)
        existing = self._table.get(key)
        if existing is not None:
            return existing
        node = len(self._nodes)
        self._nodes.append(key)
        self._types.append(var_type if key[0] == "var" else self._node_type(key))
        self._parent.append(node)
        self._table[key] = node
        self._version += 1
        return node

    def add_term(self, e: Term, var_types: Mapping[str, TypeExpr]) -> int:
        if isinstance(e, Var):
            t = var_types.get(e.name)
            if t is None:
                raise IllTyped(f"variable '{e.name}' not in context")
            return self.add_node(("var", e.name), t)
        if isinstance(e, UnitTerm):
            return self.add_node(("unit",))
        if isinstance(e, Lit):
            return self.add_node(("lit", e.base, e.value))
        if isinstance(e, Pair):
            left = self.add_term(e.fst, var_types)
            right = self.add_term(e.snd, var_types)
            return self.add_node(("pair", self.find(left), self.find(right)))
        if isinstance(e, Proj1):
            return self.add_node(("p1", self.find(self.add_term(e.of, var_types))))
        if isinstance(e, Proj2):
            return self.add_node(("p2", self.find(self.add_term(e.of, var_types))))
        if isinstance(e, App):
            arg = self.add_term(e.arg, var_types)
            return self.add_node(("app", e.op, self.find(arg)))
        raise EngineError(f"cannot add unknown construct {e!r}")

    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def version(self) -> int:
        return self._version

    # -- views --------------------------------------------------------------

    def members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for node in range(len(self._nodes)):
            out.setdefault(self.find(node), []).append(node)
        return out

    def class_roots(self) -> list[int]:
        return sorted({self.find(n) for n in range(len(self._nodes))})

    def class_type(self, root: int) -> TypeExpr:
        return self._types[self.find(root)]

    def classes_of_type(self, t: TypeExpr) -> list[int]:
        return [r for r in self.class_roots() if self._types[r] == t]

    # -- congruence ---------------------------------------------------------

    def rebuild(self) -> bool:
        """Recanonicalize every node until no two nodes share a canonical key
        without sharing a class."""
        changed = False
        while True:
            table: dict[NodeKey, int] = {}
            dirty = False
            for node, key in enumerate(self._nodes):
                ck = self._canon(key)
                other = table.get(ck)
                if other is None:
                    table[ck] = node
                elif not self.equal(other, node):
                    self.union(other, node, "congruence")
                    dirty = True
            if not dirty:
                self._table = table
                return changed
            changed = True

    # -- axiom schemas -------------------------------------------------------

    def apply_product_axioms(self) -> None:
        """Unit uniqueness, surjective pairing, and the projection laws,
        applied schematically by class type."""
        for root in self.class_roots():
            t = self.class_type(root)
            if t == UNIT:
                unit = self.add_node(("unit",))
                self.union(root, unit, "unit law")
            elif isinstance(t, Prod):
                p1 = self.add_node(("p1", self.find(root)))
                p2 = self.add_node(("p2", self.find(root)))
                pr = self.add_node(("pair", self.find(p1), self.find(p2)))
                self.union(pr, root, "surjective pairing")
        members = self.members()
        for node, key in list(enumerate(self._nodes)):
            if key[0] not in ("p1", "p2"):
                continue
            for member in members.get(self.find(key[1]), ()):
                mkey = self._nodes[member]
                if mkey[0] == "pair":
                    component = mkey[1] if key[0] == "p1" else mkey[2]
                    self.union(node, component, "projection")

    def fold_builtins(self) -> None:
        """Compute operations with registered semantics on literal classes."""
        if not self.builtin_ops:
            return
        members = self.members()
        for node, key in list(enumerate(self._nodes)):
            if key[0] != "app" or key[1] not in self.builtin_ops:
                continue
            for member in members.get(self.find(key[2]), ()):
                mkey = self._nodes[member]
                if mkey[0] == "lit":
                    cod = self.sig.op_type(key[1])[1]
                    if not isinstance(cod, Base):
                        continue
                    value = self.builtin_ops[key[1]](mkey[2])
                    lit = self.add_node(("lit", cod.name, value))
                    self.union(node, lit, f"compute {key[1]}")
                    break

    # -- equation application -----------------------------------------------

    def _match(self, pattern: Term, root: int,
               binding: dict[str, int], ctx: Context) -> list[dict[str, int]]:
        root = self.find(root)
        if isinstance(pattern, Var):
            want = ctx.lookup(pattern.name)
            if want != self.class_type(root):
                return []
            bound = binding.get(pattern.name)
            if bound is not None:
                return [binding] if self.equal(bound, root) else []
            new = dict(binding)
            new[pattern.name] = root
            return [new]
        results = []
        for node in range(len(self._nodes)):
            if self.find(node) != root:
                continue
            key = self._nodes[node]
            if isinstance(pattern, UnitTerm) and key[0] == "unit":
                results.append(binding)
            elif isinstance(pattern, Lit) and key == ("lit", pattern.base, pattern.value):
                results.append(binding)
            elif isinstance(pattern, Pair) and key[0] == "pair":
                for b1 in self._match(pattern.fst, key[1], binding, ctx):
                    results.extend(self._match(pattern.snd, key[2], b1, ctx))
            elif isinstance(pattern, Proj1) and key[0] == "p1":
                results.extend(self._match(pattern.of, key[1], binding, ctx))
            elif isinstance(pattern, Proj2) and key[0] == "p2":
                results.extend(self._match(pattern.of, key[1], binding, ctx))
            elif isinstance(pattern, App) and key[0] == "app" and key[1] == pattern.op:
                results.extend(self._match(pattern.arg, key[2], binding, ctx))
        return results

    def add_instance(self, e: Term, binding: Mapping[str, int]) -> int:
        """Add a term whose variables are already bound to classes."""
        if isinstance(e, Var):
            return binding[e.name]
        if isinstance(e, UnitTerm):
            return self.add_node(("unit",))
        if isinstance(e, Lit):
            return self.add_node(("lit", e.base, e.value))
        if isinstance(e, Pair):
            left = self.add_instance(e.fst, binding)
            right = self.add_instance(e.snd, binding)
            return self.add_node(("pair", self.find(left), self.find(right)))
        if isinstance(e, Proj1):
            return self.add_node(("p1", self.find(self.add_instance(e.of, binding))))
        if isinstance(e, Proj2):
            return self.add_node(("p2", self.find(self.add_instance(e.of, binding))))
        if isinstance(e, App):
            arg = self.add_instance(e.arg, binding)
            return self.add_node(("app", e.op, self.find(arg)))
        raise EngineError(f"cannot instantiate unknown construct {e!r}")

    def _complete_binding(self, binding: dict[str, int],
                          needed: Iterable[str], ctx: Context,
                          ) -> list[dict[str, int]]:
        """Extend a binding over variables the matched side did not mention,
        enumerating existing classes of the right type."""
        bindings = [binding]
        for var in needed:
            if var in binding:
                continue
            t = ctx.lookup(var)
            candidates = self.classes_of_type(t)
            bindings = [dict(b, **{var: c}) for b in bindings for c in candidates]
            if not bindings:
                return []
        return bindings

    def apply_equations_matched(self, equations: Iterable[Equation]) -> None:
        """Apply each equation by matching one side against existing classes
        and adding the instantiated other side.  A side that is a bare
        variable is not used as a match anchor (its partner direction covers
        the derivation without inventing terms)."""
        for eq in equations:
            if isinstance(eq.lhs, Var) and isinstance(eq.rhs, Var):
                self._apply_var_var(eq)
                continue
            for pat, other in ((eq.lhs, eq.rhs), (eq.rhs, eq.lhs)):
                if isinstance(pat, Var):
                    continue
                needed = [v for v, _ in eq.ctx]
                for root in self.class_roots():
                    for binding in self._match(pat, root, {}, eq.ctx):
                        for full in self._complete_binding(binding, needed, eq.ctx):
                            inst = self.add_instance(other, full)
                            self.union(inst, root, eq.render())

    def _apply_var_var(self, eq: Equation) -> None:
        if eq.lhs == eq.rhs:
            return
        t = eq.ctx.lookup(eq.lhs.name)  # sides are same-typed when well-formed
        roots = self.classes_of_type(t)
        for other in roots[1:]:
            self.union(roots[0], other, eq.render())

    def apply_equations_enumerated(self, equations: Iterable[Equation]) -> None:
        """Instantiate each equation at every tuple of existing classes whose
        types match the equation context, adding both sides.  Unlike matched
        application this invents terms; the chase uses it to impose every
        ground instance of a theory."""
        for eq in equations:
            bindings: list[dict[str, int]] = [{}]
            for var, t in eq.ctx:
                candidates = self.classes_of_type(t)
                bindings = [dict(b, **{var: c}) for b in bindings for c in candidates]
                if not bindings:
                    break
            for binding in bindings:
                left = self.add_instance(eq.lhs, binding)
                right = self.add_instance(eq.rhs, binding)
                self.union(left, right, eq.render())

    # -- extraction ----------------------------------------------------------

    def extract(self) -> dict[int, Term]:
        """Minimal representative term per class, by (size, text) order.
        Classes with no leaf-grounded member (possible in cyclic graphs) are
        absent from the result."""
        best: dict[int, tuple[tuple[int, str], Term]] = {}

        def offer(root: int, term: Term) -> bool:
            key = term_key(term)
            cur = best.get(root)
            if cur is None or key < cur[0]:
                best[root] = (key, term)
                return True
            return False

        changed = True
        while changed:
            changed = False
            for node, key in enumerate(self._nodes):
                root = self.find(node)
                term: Term | None = None
                tag = key[0]
                if tag == "var":
                    term = Var(key[1])
                elif tag == "unit":
                    term = UNIT_TERM
                elif tag == "lit":
                    term = Lit(key[1], key[2])
                elif tag == "pair":
                    l = best.get(self.find(key[1]))
                    r = best.get(self.find(key[2]))
                    if l and r:
                        term = Pair(l[1], r[1])
                elif tag in ("p1", "p2"):
                    inner = best.get(self.find(key[1]))
                    if inner:
                        term = (Proj1 if tag == "p1" else Proj2)(inner[1])
                elif tag == "app":
                    inner = best.get(self.find(key[2]))
                    if inner:
                        term = App(key[1], inner[1])
                if term is not None and offer(root, term):
                    changed = True
        return {root: term for root, (_, term) in best.items()}


# --------------------------------------------------------------------------
# The decision procedure.

def decide_equal(th: Theory, ctx: Context, a: Term, b: Term,
                 fuel: int = 32,
                 builtin_ops: Mapping[str, Callable[[object], object]] | None = None,
                 ) -> Verdict:
    """Prove two terms equal modulo a theory plus the unit/product axioms.

    Context variables act as fresh constants.  Saturation runs for at most
    `fuel` rounds over a universe capped at `fuel * 1000` nodes; exceeding
    either cap yields `Unknown`, which is not a refutation.
    """
    if fuel < 1:
        raise ValueError("fuel must be positive")
    try:
        ta = infer_type(th.sig, ctx, a)
        tb = infer_type(th.sig, ctx, b)
    except EngineError as err:
        raise IllTyped(str(err)) from err
    if ta != tb:
        raise IllTyped(
            f"terms have different types: {format_type(ta)} vs {format_type(tb)}")

    graph = EGraph(th.sig, builtin_ops)
    var_types = dict(ctx.bindings)
    ida = graph.add_term(a, var_types)
    idb = graph.add_term(b, var_types)
    node_cap = fuel * 1000
    rounds = 0
    for _ in range(fuel):
        if graph.equal(ida, idb):
            break
        rounds += 1
        before = graph.version
        graph.apply_product_axioms()
        graph.apply_equations_matched(th.equations)
        graph.fold_builtins()
        graph.rebuild()
        if graph.node_count() > node_cap:
            return Unknown(rounds, fuel, node_cap)
        if graph.version == before:
            return Unknown(rounds, fuel, node_cap, saturated=True)
    if graph.equal(ida, idb):
        summary = (
            f"proved {format_term(a)} = {format_term(b)} "
            f"in {rounds} round(s) over {graph.node_count()} node(s)",
        ) + tuple(graph.log[:30])
        return Proved(summary)
    return Unknown(rounds, fuel, node_cap)
