from __future__ import annotations

import pytest

from qinl.equality import Equation, Theory
from qinl.kernel import App, Base, Context, Signature, Var
from qinl.schema import FqlSchema, Instance


def company_schema() -> FqlSchema:
    sig = Signature.of(
        {"String", "Int", "Emp", "Dept"},
        {
            "length": (Base("String"), Base("Int")),
            "reverse": (Base("String"), Base("String")),
            "worksIn": (Base("Emp"), Base("Dept")),
            "manager": (Base("Emp"), Base("Emp")),
            "ename": (Base("Emp"), Base("String")),
        })
    x_str = Context.of(("x", Base("String")))
    x_emp = Context.of(("x", Base("Emp")))
    theory = Theory.of(sig, [
        Equation(x_str, App("length", Var("x")),
                 App("length", App("reverse", Var("x")))),
        Equation(x_str, Var("x"), App("reverse", App("reverse", Var("x")))),
        Equation(x_emp, App("worksIn", Var("x")),
                 App("worksIn", App("manager", Var("x")))),
    ])
    return FqlSchema(theory, frozenset({"Emp", "Dept"}),
                     frozenset({"String", "Int"}))


def staff_instance() -> Instance:
    return Instance.make(
        {"Emp": ["e1", "e2", "e3"], "Dept": ["d1", "d2"]},
        {
            "manager": {"e1": "e1", "e2": "e1", "e3": "e3"},
            "ename": {"e1": "abba", "e2": "bob", "e3": "cat"},
            "worksIn": {"e1": "d1", "e2": "d1", "e3": "d2"},
        })


def entity_schema(base_types: dict[str, None] | set[str],
                  ops: dict[str, tuple[str, str]],
                  equations=()) -> FqlSchema:
    """A schema with only entity types; ops maps name -> (dom, cod)."""
    sig = Signature.of(
        set(base_types),
        {name: (Base(dom), Base(cod)) for name, (dom, cod) in ops.items()})
    return FqlSchema(Theory.of(sig, equations), frozenset(base_types),
                     frozenset())


@pytest.fixture
def company():
    return company_schema()


@pytest.fixture
def staff():
    return staff_instance()
