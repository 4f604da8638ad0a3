from __future__ import annotations

import pytest

from qinl.chase import FuelExhausted
from qinl.equality import Equation, Theory
from qinl.kernel import App, Base, Context, Signature, Var
from qinl.mapping import SchemaMapping, compose, identity_mapping
from qinl.migration import (
    TooLarge,
    UnverifiedMapping,
    delta,
    enumerate_homs,
    pi,
    sigma,
)
from qinl.schema import (
    FqlSchema,
    Instance,
    LabelledNull,
    check_instance,
    instance_equal_upto_iso,
)

from conftest import entity_schema


def dag_schema():
    return entity_schema({"A", "B"}, {"f": ("A", "B")})


def dag_instance():
    return Instance.make({"A": ["a1", "a2"], "B": ["b1", "b2"]},
                         {"f": {"a1": "b1", "a2": "b1"}})


# --------------------------------------------------------------------------
# delta

def test_delta_identity_is_input(company, staff):
    assert delta(identity_mapping(company), staff) == staff


def test_delta_pure_renaming_up_to_iso():
    src = entity_schema({"A", "B"}, {"f": ("A", "B")})
    tgt = entity_schema({"P", "Q"}, {"g": ("P", "Q")})
    mapping = SchemaMapping(src, tgt, {"A": "P", "B": "Q"},
                            {"f": ("x", App("g", Var("x")))})
    j = Instance.make({"P": ["p1", "p2"], "Q": ["q1"]},
                      {"g": {"p1": "q1", "p2": "q1"}})
    pulled = delta(mapping, j)
    assert pulled.rows("A") == ("p1", "p2")
    assert instance_equal_upto_iso(
        src, pulled,
        Instance.make({"A": ["a1", "a2"], "B": ["b1"]},
                      {"f": {"a1": "b1", "a2": "b1"}})) is not None


def test_delta_collapsing_two_types_shares_carrier():
    src = entity_schema({"A", "B"}, {})
    tgt = entity_schema({"C"}, {})
    mapping = SchemaMapping(src, tgt, {"A": "C", "B": "C"}, {})
    j = Instance.make({"C": ["c1", "c2"]}, {})
    pulled = delta(mapping, j)
    assert pulled.rows("A") == pulled.rows("B") == ("c1", "c2")


def test_delta_requires_verified_mapping():
    src = entity_schema(
        {"A"}, {"m": ("A", "A")},
        [Equation(Context.of(("x", Base("A"))),
                  App("m", Var("x")), App("m", App("m", Var("x"))))])
    tgt = entity_schema({"A"}, {"m": ("A", "A")})
    mapping = SchemaMapping(src, tgt, {"A": "A"},
                            {"m": ("x", App("m", Var("x")))})
    j = Instance.make({"A": ["a"]}, {"m": {"a": "a"}})
    with pytest.raises(UnverifiedMapping):
        delta(mapping, j, fuel=4)
    assert delta(mapping, j, fuel=4, allow_unverified=True).rows("A") == ("a",)


def test_delta_composition_law():
    s0 = entity_schema({"A"}, {"m": ("A", "A")})
    s1 = entity_schema({"P"}, {"n": ("P", "P")})
    s2 = entity_schema({"Z"}, {"k": ("Z", "Z")})
    f = SchemaMapping(s0, s1, {"A": "P"}, {"m": ("x", App("n", Var("x")))})
    g = SchemaMapping(s1, s2, {"P": "Z"},
                      {"n": ("x", App("k", App("k", Var("x"))))})
    j = Instance.make({"Z": ["z1", "z2", "z3"]},
                      {"k": {"z1": "z2", "z2": "z3", "z3": "z1"}})
    assert instance_equal_upto_iso(
        s0, delta(compose(g, f), j), delta(f, delta(g, j))) is not None


# --------------------------------------------------------------------------
# sigma

def test_sigma_identity_isomorphic(company, staff):
    pushed = sigma(identity_mapping(company), staff, fuel=24)
    assert instance_equal_upto_iso(company, pushed, staff) is not None


def test_sigma_empty_input_gives_empty_output(company):
    empty = Instance.make({"Emp": [], "Dept": []},
                          {"manager": {}, "ename": {}, "worksIn": {}})
    pushed = sigma(identity_mapping(company), empty, fuel=8)
    assert pushed.total_rows() == 0


def test_sigma_into_unconstrained_target_exhausts_fuel():
    """A target operation outside the mapping's reach, with no collapsing
    equation, generates a fresh element from each seed every round."""
    src = entity_schema({"E"}, {})
    tgt = entity_schema({"E"}, {"boss": ("E", "E")})
    mapping = SchemaMapping(src, tgt, {"E": "E"}, {})
    i = Instance.make({"E": ["e"]}, {})
    with pytest.raises(FuelExhausted):
        sigma(mapping, i, fuel=5)


def test_sigma_preserves_input_nulls(company):
    withnull = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1"]},
        {"manager": {"e1": "e1", "e2": "e2"},
         "ename": {"e1": LabelledNull("0"), "e2": LabelledNull("0")},
         "worksIn": {"e1": "d1", "e2": "d1"}})
    pushed = sigma(identity_mapping(company), withnull, fuel=16)
    assert instance_equal_upto_iso(company, pushed, withnull) is not None
    names = list(pushed.functions["ename"].values())
    assert all(isinstance(v, LabelledNull) for v in names)
    assert names[0] == names[1]  # one unknown shared by both rows


def test_sigma_fills_new_target_attributes_with_nulls():
    src = entity_schema({"A"}, {})
    tgt_sig = Signature.of({"A", "String"},
                           {"tag": (Base("A"), Base("String"))})
    tgt = FqlSchema(Theory.of(tgt_sig), frozenset({"A"}),
                    frozenset({"String"}))
    mapping = SchemaMapping(src, tgt, {"A": "A"}, {})
    i = Instance.make({"A": ["a1", "a2"]}, {})
    pushed = sigma(mapping, i, fuel=8)
    values = list(pushed.functions["tag"].values())
    assert all(isinstance(v, LabelledNull) for v in values)
    assert values[0] != values[1]  # unconstrained cells stay independent


def test_sigma_row_name_collision_across_types():
    src = entity_schema({"A", "B"}, {})
    tgt = entity_schema({"C"}, {})
    mapping = SchemaMapping(src, tgt, {"A": "C", "B": "C"}, {})
    i = Instance.make({"A": ["x"], "B": ["x"]}, {})
    pushed = sigma(mapping, i, fuel=8)
    assert len(pushed.rows("C")) == 2


# --------------------------------------------------------------------------
# pi

def test_pi_identity_isomorphic_on_dag():
    s = dag_schema()
    i = dag_instance()
    projected = pi(identity_mapping(s), i, fuel=8)
    assert instance_equal_upto_iso(s, projected, i) is not None


def test_pi_product_of_unrelated_types():
    src = entity_schema({"A", "B"}, {})
    tgt = entity_schema({"C"}, {})
    mapping = SchemaMapping(src, tgt, {"A": "C", "B": "C"}, {})
    i = Instance.make({"A": ["a1", "a2"], "B": ["b1", "b2", "b3"]}, {})
    projected = pi(mapping, i, fuel=8)
    assert len(projected.rows("C")) == 6


def test_pi_empty_factor_gives_empty_carrier():
    src = entity_schema({"A", "B"}, {})
    tgt = entity_schema({"C"}, {})
    mapping = SchemaMapping(src, tgt, {"A": "C", "B": "C"}, {})
    i = Instance.make({"A": ["a1"], "B": []}, {})
    assert pi(mapping, i, fuel=8).rows("C") == ()


def test_pi_unreached_target_type_is_singleton():
    """A target type with no classes into the image indexes an empty
    diagram, whose limit is a single point."""
    src = entity_schema({"A"}, {})
    tgt = entity_schema({"C", "D"}, {})
    mapping = SchemaMapping(src, tgt, {"A": "C"}, {})
    i = Instance.make({"A": ["a1", "a2"]}, {})
    projected = pi(mapping, i, fuel=8)
    assert len(projected.rows("C")) == 2
    assert len(projected.rows("D")) == 1


def test_pi_nonsaturating_classes_exhaust_fuel():
    src = entity_schema({"A"}, {})
    tgt = entity_schema({"C"}, {"next": ("C", "C")})
    mapping = SchemaMapping(src, tgt, {"A": "C"}, {})
    i = Instance.make({"A": ["a1"]}, {})
    with pytest.raises(FuelExhausted):
        pi(mapping, i, fuel=4)


def test_pi_determined_attributes():
    """Attributes of the target determined by source data come through; the
    projected instance keeps the source's cell values."""
    src_sig = Signature.of({"A", "String"},
                           {"tag": (Base("A"), Base("String"))})
    src = FqlSchema(Theory.of(src_sig), frozenset({"A"}),
                    frozenset({"String"}))
    tgt = src
    mapping = identity_mapping(src)
    i = Instance.make({"A": ["a1", "a2"]},
                      {"tag": {"a1": "red", "a2": "blue"}})
    projected = pi(mapping, i, fuel=8)
    assert sorted(projected.functions["tag"].values()) == ["blue", "red"]
    assert instance_equal_upto_iso(src, projected, i) is not None


# --------------------------------------------------------------------------
# homomorphism enumeration

def test_homs_contain_identity(company, staff):
    homs = enumerate_homs(company, staff, staff)
    identity = {t: {r: r for r in staff.rows(t)} for t in ("Emp", "Dept")}
    assert any(
        all(hom.apply(t, r) == r for t in identity for r in identity[t])
        for hom in homs)


def test_unconstrained_hom_count():
    s = entity_schema({"A"}, {})
    i = Instance.make({"A": ["x", "y"]}, {})
    j = Instance.make({"A": ["1", "2", "3"]}, {})
    assert len(enumerate_homs(s, i, j)) == 9


def test_operation_constrains_hom_count():
    s = entity_schema({"A"}, {"m": ("A", "A")})
    i = Instance.make({"A": ["x", "y"]}, {"m": {"x": "y", "y": "y"}})
    j = Instance.make({"A": ["1", "2", "3"]},
                      {"m": {"1": "2", "2": "2", "3": "3"}})
    homs = enumerate_homs(s, i, j)
    # x can land anywhere, then y is forced to its image's fixpoint;
    # y itself must land on a fixpoint of m.
    assert 0 < len(homs) < 9
    assert len(homs) == 3  # x -> 1 forces y -> 2; x -> 2, y -> 2; x -> 3, y -> 3


def test_homs_guard_rejects_oversized():
    s = entity_schema({"A"}, {})
    i = Instance.make({"A": [f"x{k}" for k in range(10)]}, {})
    j = Instance.make({"A": [f"y{k}" for k in range(10)]}, {})
    with pytest.raises(TooLarge):
        enumerate_homs(s, i, j)


def test_homs_with_attribute_constants():
    src_sig = Signature.of({"A", "String"},
                           {"tag": (Base("A"), Base("String"))})
    s = FqlSchema(Theory.of(src_sig), frozenset({"A"}), frozenset({"String"}))
    i = Instance.make({"A": ["x"]}, {"tag": {"x": "red"}})
    j = Instance.make({"A": ["1", "2"]},
                      {"tag": {"1": "red", "2": "blue"}})
    homs = enumerate_homs(s, i, j)
    assert len(homs) == 1
    assert homs[0].apply("A", "x") == "1"


def test_homs_null_binds_consistently():
    src_sig = Signature.of({"A", "String"},
                           {"t1": (Base("A"), Base("String")),
                            "t2": (Base("A"), Base("String"))})
    s = FqlSchema(Theory.of(src_sig), frozenset({"A"}), frozenset({"String"}))
    shared = LabelledNull("0")
    i = Instance.make({"A": ["x"]}, {"t1": {"x": shared}, "t2": {"x": shared}})
    j_same = Instance.make({"A": ["1"]}, {"t1": {"1": "v"}, "t2": {"1": "v"}})
    j_diff = Instance.make({"A": ["1"]}, {"t1": {"1": "v"}, "t2": {"1": "w"}})
    assert len(enumerate_homs(s, i, j_same)) == 1
    assert enumerate_homs(s, i, j_diff) == []


# --------------------------------------------------------------------------
# adjunctions on hand-built cases (the bulk generated suite runs in
# acceptance)

def test_adjunctions_on_collapse_mapping():
    src = entity_schema({"A", "B"}, {})
    tgt = entity_schema({"C"}, {})
    mapping = SchemaMapping(src, tgt, {"A": "C", "B": "C"}, {})
    i = Instance.make({"A": ["a1", "a2"], "B": ["b1"]}, {})
    j = Instance.make({"C": ["c1", "c2"]}, {})
    pushed_free = sigma(mapping, i, fuel=16)
    pushed_limit = pi(mapping, i, fuel=8)
    pulled = delta(mapping, j)
    assert len(enumerate_homs(tgt, pushed_free, j)) == \
        len(enumerate_homs(src, i, pulled))
    assert len(enumerate_homs(src, pulled, i)) == \
        len(enumerate_homs(tgt, j, pushed_limit))


def test_adjunctions_along_fk_mapping():
    src = dag_schema()
    tgt = entity_schema({"P", "Q"}, {"g": ("P", "Q")})
    mapping = SchemaMapping(src, tgt, {"A": "P", "B": "Q"},
                            {"f": ("x", App("g", Var("x")))})
    i = dag_instance()
    j = Instance.make({"P": ["p1"], "Q": ["q1", "q2"]}, {"g": {"p1": "q2"}})
    pushed_free = sigma(mapping, i, fuel=16)
    pushed_limit = pi(mapping, i, fuel=8)
    pulled = delta(mapping, j)
    assert len(enumerate_homs(tgt, pushed_free, j)) == \
        len(enumerate_homs(src, i, pulled))
    assert len(enumerate_homs(src, pulled, i)) == \
        len(enumerate_homs(tgt, j, pushed_limit))


def test_results_satisfy_theories_for_proved_mappings():
    """delta/sigma/pi outputs of a fully proved mapping pass the
    satisfaction check on their schema."""
    idem = Equation(Context.of(("x", Base("E"))),
                    App("boss", App("boss", Var("x"))),
                    App("boss", Var("x")))
    s = entity_schema({"E"}, {"boss": ("E", "E")}, [idem])
    ident = identity_mapping(s)
    i = Instance.make({"E": ["u", "v"]}, {"boss": {"u": "v", "v": "v"}})
    assert check_instance(s, i).all_ok
    for result in (delta(ident, i), sigma(ident, i, fuel=16),
                   pi(ident, i, fuel=16)):
        assert check_instance(s, result).all_ok


def test_sigma_result_satisfies_non_identity_target():
    src = entity_schema({"A"}, {})
    idem = Equation(Context.of(("x", Base("E"))),
                    App("boss", App("boss", Var("x"))),
                    App("boss", Var("x")))
    tgt = entity_schema({"E"}, {"boss": ("E", "E")}, [idem])
    mapping = SchemaMapping(src, tgt, {"A": "E"}, {})
    i = Instance.make({"A": ["a1", "a2"]}, {})
    pushed = sigma(mapping, i, fuel=16)
    assert check_instance(tgt, pushed).all_ok
    assert len(pushed.rows("E")) == 4  # each seed grows one boss fixpoint


def _idem_schema(type_name: str, op: str):
    collapse = Equation(Context.of(("x", Base(type_name))),
                        App(op, App(op, Var("x"))), App(op, Var("x")))
    return entity_schema({type_name}, {op: (type_name, type_name)}, [collapse])


def _random_idem_instance(s, type_name, op, rng):
    rows = [f"{type_name.lower()}{k}" for k in range(rng.randint(0, 3))]
    if not rows:
        return Instance.make({type_name: []}, {op: {}})
    table = {r: rng.choice(rows) for r in rows}
    for r in rows:
        table[table[r]] = table[r]  # images must be fixpoints
    return Instance.make({type_name: rows}, {op: table})


def test_adjunctions_hold_under_collapsing_theories():
    """With idempotence axioms on both sides, class saturation and the chase
    both route through the prover; the hom counts must still match."""
    import random

    src = _idem_schema("A", "f")
    tgt = _idem_schema("U", "g")
    mapping = SchemaMapping(src, tgt, {"A": "U"},
                            {"f": ("x", App("g", Var("x")))})
    assert mapping.validate() == []
    rng = random.Random(9)
    completed = 0
    for _ in range(40):
        i = _random_idem_instance(src, "A", "f", rng)
        j = _random_idem_instance(tgt, "U", "g", rng)
        assert check_instance(src, i).all_ok
        assert check_instance(tgt, j).all_ok
        pushed_free = sigma(mapping, i, fuel=32)
        pushed_limit = pi(mapping, i, fuel=32)
        pulled = delta(mapping, j)
        assert len(enumerate_homs(tgt, pushed_free, j)) == \
            len(enumerate_homs(src, i, pulled))
        assert len(enumerate_homs(src, pulled, i)) == \
            len(enumerate_homs(tgt, j, pushed_limit))
        completed += 1
    assert completed == 40


def test_pi_excludes_families_with_conflicting_attribute_images():
    """Two source attribute operations sharing one target image determine
    the same limit component twice; rows where they disagree cannot extend
    to a limit element, mirroring the hom-count on the other side."""
    src_sig = Signature.of(
        {"A", "String"},
        {"u": (Base("A"), Base("String")), "v": (Base("A"), Base("String"))})
    src = FqlSchema(Theory.of(src_sig), frozenset({"A"}), frozenset({"String"}))
    tgt_sig = Signature.of({"U", "String"},
                           {"w": (Base("U"), Base("String"))})
    tgt = FqlSchema(Theory.of(tgt_sig), frozenset({"U"}), frozenset({"String"}))
    mapping = SchemaMapping(src, tgt, {"A": "U"},
                            {"u": ("x", App("w", Var("x"))),
                             "v": ("x", App("w", Var("x")))})
    assert mapping.validate() == []

    agreeing = Instance.make({"A": ["a"]},
                             {"u": {"a": "p"}, "v": {"a": "p"}})
    clashing = Instance.make({"A": ["a"]},
                             {"u": {"a": "p"}, "v": {"a": "q"}})
    assert len(pi(mapping, agreeing, fuel=8).rows("U")) == 1
    assert pi(mapping, clashing, fuel=8).rows("U") == ()

    j = Instance.make({"U": ["r"]}, {"w": {"r": "p"}})
    for i in (agreeing, clashing):
        assert len(enumerate_homs(src, delta(mapping, j), i)) == \
            len(enumerate_homs(tgt, j, pi(mapping, i, fuel=8)))
