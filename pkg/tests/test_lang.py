import math

import pytest
from hypothesis import given, strategies as st

from bonemc.errors import (ConstantError, EvalError, ParseError,
                           ValidationError)
from bonemc.lang import (eval_expr, format_expr, format_model, parse_model,
                         parse_expression, resolve_constants)
from bonemc.data import bone_model_path


@pytest.fixture(scope="module")
def bone_source():
    return bone_model_path().read_text()


class TestParseModel:
    def test_bundled_model_structure(self, bone_source):
        ast = parse_model(bone_source)
        assert len(ast.modules) == 2
        assert len(ast.constants) == 4
        assert len(ast.reward_structs) == 2
        assert sum(len(m.commands) for m in ast.modules) == 9
        assert [m.name for m in ast.modules] == ["osteoclasts", "osteoblasts"]

    def test_empty_module(self):
        ast = parse_model("module m endmodule")
        assert len(ast.modules) == 1
        assert ast.modules[0].variables == ()
        assert ast.modules[0].commands == ()

    def test_constant_expression_resolves(self):
        ast = parse_model("const double x = 5*0.2/2;")
        rm = resolve_constants(ast)
        assert rm.constants["x"] == 0.5

    def test_unlabeled_and_labeled_commands(self, bone_source):
        ast = parse_model(bone_source)
        labels = [c.label for m in ast.modules for c in m.commands]
        assert labels.count(None) == 4
        assert set(labels) - {None} == {"rankl", "resorb", "form"}

    def test_true_update_is_empty(self, bone_source):
        ast = parse_model(bone_source)
        rankl_ob = ast.module("osteoblasts").commands[1]
        assert rankl_ob.label == "rankl"
        assert rankl_ob.updates == ()

    def test_syntax_error_has_location_and_expectations(self):
        with pytest.raises(ParseError) as err:
            parse_model("module m\nx : bool init maybe;\nendmodule")
        assert err.value.line == 2
        assert "true" in err.value.expected

    def test_duplicate_declaration(self):
        src = "const double x = 1;\nmodule x endmodule"
        with pytest.raises(ValidationError, match="duplicate.*'x'"):
            parse_model(src)

    def test_undeclared_identifier(self):
        src = "module m\ny:[0..1] init 0;\n[] y<ghost -> 1:(y'=1);\nendmodule"
        with pytest.raises(ValidationError, match="undeclared.*'ghost'"):
            parse_model(src)

    def test_unsupported_construct(self):
        with pytest.raises(ParseError, match="unsupported construct 'ctmc'"):
            parse_model("ctmc\nmodule m endmodule")

    def test_update_must_be_local(self):
        src = ("module a\nx:[0..1] init 0;\nendmodule\n"
               "module b\ny:[0..1] init 0;\n[] y=0 -> 1:(x'=1);\nendmodule")
        with pytest.raises(ValidationError, match="not local"):
            parse_model(src)

    def test_variable_updated_twice(self):
        src = "module m\nx:[0..2] init 0;\n[] x=0 -> 1:(x'=1) & (x'=2);\nendmodule"
        with pytest.raises(ValidationError, match="twice"):
            parse_model(src)

    def test_init_out_of_bounds(self):
        with pytest.raises(ValidationError, match="outside"):
            parse_model("module m\nx:[0..5] init 9;\nendmodule")

    def test_reward_label_must_exist(self):
        src = ("module m\nx:[0..1] init 0;\n[go] x=0 -> 1:(x'=1);\nendmodule\n"
               'rewards "r"\n[stop] true:1;\nendrewards')
        with pytest.raises(ValidationError, match="labels no command"):
            parse_model(src)

    def test_guard_must_be_boolean(self):
        src = "module m\nx:[0..1] init 0;\n[] x+1 -> 1:(x'=1);\nendmodule"
        with pytest.raises(ValidationError, match="not boolean"):
            parse_model(src)


class TestResolveConstants:
    def test_osteoporotic_point(self, bone_source):
        rm = resolve_constants(parse_model(bone_source),
                               {"aging": 2, "rankLrate": 0.2})
        assert rm.constants["resorbRate"] == 0.5
        assert rm.constants["formRate"] == 0.015

    def test_healthy_point(self, bone_source):
        rm = resolve_constants(parse_model(bone_source),
                               {"aging": 1, "rankLrate": 0.1})
        # both parameter points give the same resorption rate; the healthy
        # and sick runs diverge through formRate and the rankl rates only
        assert rm.constants["resorbRate"] == 0.5
        assert rm.constants["formRate"] == 0.03

    def test_missing_override_names_the_constant(self, bone_source):
        with pytest.raises(ConstantError, match="rankLrate"):
            resolve_constants(parse_model(bone_source), {"aging": 1})

    def test_override_of_defined_constant_rejected(self, bone_source):
        with pytest.raises(ConstantError, match="formRate"):
            resolve_constants(parse_model(bone_source),
                              {"aging": 1, "rankLrate": 0.1, "formRate": 9})

    def test_cyclic_definitions(self):
        src = "const double a = b;\nconst double b = a;"
        with pytest.raises(ConstantError, match="cyclic"):
            resolve_constants(parse_model(src))

    def test_forward_reference_is_fine(self):
        src = "const double a = b*2;\nconst double b = 3;"
        rm = resolve_constants(parse_model(src))
        assert rm.constants["a"] == 6.0

    def test_int_constant_must_be_integral(self):
        src = "const int n = 3/2;"
        with pytest.raises(ConstantError, match="declared int"):
            resolve_constants(parse_model(src))

    def test_unknown_override(self):
        with pytest.raises(ConstantError, match="unknown"):
            resolve_constants(parse_model("const double a = 1;"), {"zz": 1})


class TestEvalExpr:
    def test_pow_expression(self):
        assert eval_expr(parse_expression("pow(Ob,0.5)"), {"Ob": 100}) == 10.0

    def test_rate_expression(self):
        assert eval_expr(parse_expression("Oc+0.1"), {"Oc": 0}) == 0.1

    def test_guard_expression(self):
        e = parse_expression("pc=true & Oc>1")
        assert eval_expr(e, {"pc": False, "Oc": 3}) is False
        assert eval_expr(e, {"pc": True, "Oc": 3}) is True

    def test_division_by_zero(self):
        with pytest.raises(EvalError, match="division by zero"):
            eval_expr(parse_expression("1/x"), {"x": 0})

    def test_pow_domain_error(self):
        with pytest.raises(EvalError, match="pow"):
            eval_expr(parse_expression("pow(x,0.5)"), {"x": -2})

    def test_deterministic(self):
        e = parse_expression("pow(x,2) * (y - 3) / 7")
        env = {"x": 1.7, "y": 0.3}
        assert eval_expr(e, env) == eval_expr(e, env)

    def test_operator_precedence(self):
        assert eval_expr(parse_expression("1+2*3"), {}) == 7
        assert eval_expr(parse_expression("(1+2)*3"), {}) == 9
        assert eval_expr(parse_expression("2-1-1"), {}) == 0
        assert eval_expr(parse_expression("8/4/2"), {}) == 1


class TestRoundTrip:
    def test_bundled_model_round_trips(self, bone_source):
        ast = parse_model(bone_source)
        assert parse_model(format_model(ast)) == ast

    def test_round_trip_preserves_structure_not_text(self):
        ast = parse_model("const double x = 1 + 2 * 3;")
        again = parse_model(format_model(ast))
        assert again == ast


def exprs():
    """Hypothesis strategy for random numeric expressions."""
    numbers = st.one_of(
        st.integers(min_value=0, max_value=99).map(lambda v: f"{v}"),
        st.floats(min_value=0.001, max_value=99.0, allow_nan=False,
                  allow_infinity=False).map(lambda v: repr(round(v, 4))))
    names = st.sampled_from(["x", "y", "zz"])
    atoms = st.one_of(numbers, names)

    def compound(children):
        op = st.sampled_from(["+", "-", "*", "/"])
        return st.builds(lambda a, o, b: f"({a} {o} {b})", children, op,
                         children) | st.builds(
                             lambda a, b: f"pow({a}, {b})", children, children)
    return st.recursive(atoms, compound, max_leaves=12)


class TestExpressionProperties:
    @given(exprs())
    def test_format_parse_round_trip(self, text):
        e = parse_expression(text)
        assert parse_expression(format_expr(e)) == e

    @given(st.integers(-5, 5), st.integers(-5, 5))
    def test_eval_matches_python_arithmetic(self, a, b):
        env = {"x": a, "y": b}
        e = parse_expression("x*y + x - y")
        assert eval_expr(e, env) == a * b + a - b


class TestPrettyPrint:
    def test_comparison_needs_no_spurious_parens(self):
        e = parse_expression("x + 1 < y * 2")
        assert format_expr(e) == "x + 1 < y * 2"

    def test_nested_boolean(self):
        e = parse_expression("a | b & !c")
        assert parse_expression(format_expr(e)) == e

    def test_pow_of_negative_literal(self):
        e = parse_expression("pow(-2, 2)")
        assert math.isclose(eval_expr(e, {}), 4.0)
