from __future__ import annotations

import pytest

from qinl.equality import Theory
from qinl.kernel import App, Base, Signature, Var
from qinl.schema import (
    FqlSchema,
    Instance,
    InvalidInstance,
    LabelledNull,
    OpApplied,
    check_instance,
    default_builtins,
    eval_term,
    instance_equal_upto_iso,
    render_cell,
    validate_instance,
)

from conftest import company_schema, entity_schema


def test_company_schema_validates():
    assert company_schema().validate() == []


def test_partition_must_cover_base_types():
    s = company_schema()
    broken = FqlSchema(s.theory, frozenset({"Emp"}), frozenset({"String", "Int"}))
    assert any("not classified" in p for p in broken.validate())


def test_attribute_to_entity_operation_rejected():
    sig = Signature.of({"E", "String"},
                       {"owner": (Base("String"), Base("E"))})
    s = FqlSchema(Theory.of(sig), frozenset({"E"}), frozenset({"String"}))
    assert any("attribute type String to entity type E" in p
               for p in s.validate())


def test_unregistered_builtin_rejected():
    sig = Signature.of({"E", "String"},
                       {"shout": (Base("String"), Base("String"))})
    s = FqlSchema(Theory.of(sig), frozenset({"E"}), frozenset({"String"}))
    assert any("no registered semantics" in p for p in s.validate())


def test_classification(company):
    assert company.classify_op("manager") == "fk"
    assert company.classify_op("ename") == "attribute"
    assert company.classify_op("reverse") == "builtin"
    assert company.entity_dom_ops() == ["ename", "manager", "worksIn"]
    assert company.builtin_op_names() == ["length", "reverse"]


def test_instance_validation_catches_partial_table(company):
    broken = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"},
         "ename": {"e1": "a", "e2": "b"},
         "worksIn": {"e1": "d1", "e2": "d1"}})
    assert any("partial function 'manager'" in p
               for p in validate_instance(company, broken))


def test_instance_validation_catches_ill_typed_cell(company):
    broken = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"},
         "ename": {"e1": 42},
         "worksIn": {"e1": "d1"}})
    assert any("ill-typed cell ename(e1)" in p
               for p in validate_instance(company, broken))


def test_instance_validation_catches_escaping_value(company):
    broken = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"},
         "ename": {"e1": "a"},
         "worksIn": {"e1": "d9"}})
    assert any("outside the 'Dept' carrier" in p
               for p in validate_instance(company, broken))


def test_check_instance_raises_on_invalid(company):
    broken = Instance.make({"Emp": ["e1"]}, {})
    with pytest.raises(InvalidInstance):
        check_instance(company, broken)


def test_staff_satisfies_company(company, staff):
    report = check_instance(company, staff, sample_size=32, seed=1)
    statuses = {c.equation: c.status for c in report.checks}
    assert report.all_ok
    assert statuses["forall x: Emp . worksIn(x) = worksIn(manager(x))"] == "satisfied"
    sampled = [c for c in report.checks if c.status == "sampled-only"]
    assert len(sampled) == 2
    assert all(c.sample_size == 32 for c in sampled)


def test_single_row_self_manager_satisfied(company):
    tiny = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"},
         "ename": {"e1": "x"},
         "worksIn": {"e1": "d1"}})
    assert check_instance(company, tiny, sample_size=8).all_ok


def test_cross_department_manager_violates(company):
    crossed = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1", "d2"]},
        {"manager": {"e1": "e2", "e2": "e2"},
         "ename": {"e1": "a", "e2": "b"},
         "worksIn": {"e1": "d1", "e2": "d2"}})
    report = check_instance(company, crossed, sample_size=8)
    violated = report.violations()
    assert len(violated) == 1
    assert violated[0].witness == (("x", "e1"),)


def test_empty_carriers_vacuously_satisfy(company):
    empty = Instance.make({"Emp": [], "Dept": []},
                          {"manager": {}, "ename": {}, "worksIn": {}})
    report = check_instance(company, empty, sample_size=8)
    entity_eq = [c for c in report.checks if "Emp" in c.equation]
    assert entity_eq[0].status == "satisfied"


def test_eval_term_computes_builtins(company, staff):
    term = App("length", App("reverse", App("ename", Var("x"))))
    assert eval_term(company, staff, {"x": "e1"}, term) == 4


def test_eval_term_on_null_stays_symbolic(company):
    withnull = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"},
         "ename": {"e1": LabelledNull("0")},
         "worksIn": {"e1": "d1"}})
    value = eval_term(company, withnull, {"x": "e1"},
                      App("reverse", App("ename", Var("x"))))
    assert value == OpApplied("reverse", LabelledNull("0"))
    assert render_cell(value) == "reverse(?0)"


def test_nulls_compare_only_to_themselves():
    assert LabelledNull("0") == LabelledNull("0")
    assert LabelledNull("0") != LabelledNull("1")
    assert LabelledNull("0") != "?0"


def test_iso_identity(company, staff):
    iso = instance_equal_upto_iso(company, staff, staff)
    assert iso is not None
    assert iso["Emp"] == {"e1": "e1", "e2": "e2", "e3": "e3"}


def test_iso_rejects_size_mismatch(company, staff):
    smaller = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"}, "ename": {"e1": "a"},
         "worksIn": {"e1": "d1"}})
    assert instance_equal_upto_iso(company, staff, smaller) is None


def test_iso_modulo_row_renaming(company):
    a = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"}, "ename": {"e1": "bob"},
         "worksIn": {"e1": "d1"}})
    b = Instance.make(
        {"Emp": ["zz"], "Dept": ["qq"]},
        {"manager": {"zz": "zz"}, "ename": {"zz": "bob"},
         "worksIn": {"zz": "qq"}})
    iso = instance_equal_upto_iso(company, a, b)
    assert iso == {"Emp": {"e1": "zz"}, "Dept": {"d1": "qq"}}


def test_iso_distinguishes_constants(company):
    a = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"}, "ename": {"e1": "bob"},
         "worksIn": {"e1": "d1"}})
    b = Instance.make(
        {"Emp": ["e1"], "Dept": ["d1"]},
        {"manager": {"e1": "e1"}, "ename": {"e1": "eve"},
         "worksIn": {"e1": "d1"}})
    assert instance_equal_upto_iso(company, a, b) is None


def test_iso_renames_nulls_bijectively(company):
    a = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1"]},
        {"manager": {"e1": "e1", "e2": "e2"},
         "ename": {"e1": LabelledNull("0"), "e2": LabelledNull("0")},
         "worksIn": {"e1": "d1", "e2": "d1"}})
    b_shared = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1"]},
        {"manager": {"e1": "e1", "e2": "e2"},
         "ename": {"e1": LabelledNull("7"), "e2": LabelledNull("7")},
         "worksIn": {"e1": "d1", "e2": "d1"}})
    b_split = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1"]},
        {"manager": {"e1": "e1", "e2": "e2"},
         "ename": {"e1": LabelledNull("7"), "e2": LabelledNull("8")},
         "worksIn": {"e1": "d1", "e2": "d1"}})
    assert instance_equal_upto_iso(company, a, b_shared) is not None
    assert instance_equal_upto_iso(company, a, b_split) is None


def test_iso_respects_operation_structure():
    s = entity_schema({"N"}, {"next": ("N", "N")})
    cycle = Instance.make({"N": ["a", "b"]}, {"next": {"a": "b", "b": "a"}})
    fixed = Instance.make({"N": ["a", "b"]}, {"next": {"a": "a", "b": "b"}})
    assert instance_equal_upto_iso(s, cycle, cycle) is not None
    assert instance_equal_upto_iso(s, cycle, fixed) is None


def test_satisfaction_stable_under_iso(company):
    a = Instance.make(
        {"Emp": ["e1", "e2"], "Dept": ["d1", "d2"]},
        {"manager": {"e1": "e2", "e2": "e2"},
         "ename": {"e1": "a", "e2": "b"},
         "worksIn": {"e1": "d1", "e2": "d2"}})
    b = Instance.make(
        {"Emp": ["x1", "x2"], "Dept": ["y1", "y2"]},
        {"manager": {"x1": "x2", "x2": "x2"},
         "ename": {"x1": "a", "x2": "b"},
         "worksIn": {"x1": "y1", "x2": "y2"}})
    assert instance_equal_upto_iso(company, a, b) is not None
    ra = check_instance(company, a, sample_size=8)
    rb = check_instance(company, b, sample_size=8)
    assert [c.status for c in ra.checks] == [c.status for c in rb.checks]


def test_sampling_is_seed_deterministic(company, staff):
    r1 = check_instance(company, staff, sample_size=64, seed=9)
    r2 = check_instance(company, staff, sample_size=64, seed=9)
    assert r1 == r2


def test_default_builtins_cover_needed_ops():
    reg = default_builtins()
    assert reg.apply("length", "abba") == 4
    assert reg.apply("reverse", "abc") == "cba"
    assert isinstance(reg.apply("reverse", LabelledNull("3")), OpApplied)
