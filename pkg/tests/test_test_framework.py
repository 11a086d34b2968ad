import pytest

from conftest import FIXTURES, wat_module
from mullw.errors import DuplicateTestName, UnknownTestFunction, ValidationError
from mullw.module_store import load_modules
from mullw.test_framework import (
    CustomTestConfig, Framework, Verdict, find_tests_custom, find_tests_simple, judge,
)


def _exports(*names, module_id=0, path="m.wasm"):
    funcs = "".join(f'(func (export "{n}") (result i32) i32.const 1)' for n in names)
    return wat_module(f"(module {funcs})", module_id, path)


def test_prefix_filter():
    tests = find_tests_simple([_exports("test_add", "test_sub", "helper")])
    assert [t.name for t in tests] == ["test_add", "test_sub"]
    assert [t.test_id for t in tests] == [0, 1]
    assert all(t.arguments == () and t.framework is Framework.SIMPLE for t in tests)


def test_prefix_is_case_sensitive():
    assert find_tests_simple([_exports("Test_add")]) == []


def test_prefix_without_underscore():
    assert [t.name for t in find_tests_simple([_exports("tests", "testing")])] == \
        ["tests", "testing"]


def test_duplicate_names_across_modules():
    a = _exports("test_x", module_id=0, path="a.wasm")
    b = _exports("test_x", module_id=1, path="b.wasm")
    with pytest.raises(DuplicateTestName) as info:
        find_tests_simple([a, b])
    assert info.value.exit_code == 3
    assert "test_x" in str(info.value)


def test_order_is_module_then_index():
    modules = load_modules(["calc.wasm", "calc_tests.wasm"], FIXTURES)
    tests = find_tests_simple(modules)
    assert [t.name for t in tests] == ["test_add", "test_sub", "test_mul", "test_div",
                                       "test_clamp", "test_abs"]
    assert [t.entry for t in tests] == [(1, 8 + k) for k in range(6)]
    assert find_tests_simple(modules) == tests


def test_imported_test_functions_are_skipped():
    text = '(module (import "x" "test_y" (func $t (result i32))) (export "test_y" (func $t)))'
    assert find_tests_simple([wat_module(text)]) == []


def test_custom_tests():
    text = """(module (func (export "test_bio_enc") (param i32) (result i32) i32.const 0)
                      (func (export "helper") (result i32) i32.const 0))"""
    mod = wat_module(text)
    cfg = [CustomTestConfig("bio_enc", "test_bio_enc", (3,))]
    (t,) = find_tests_custom([mod], cfg)
    assert (t.name, t.entry, t.arguments, t.framework) == ("bio_enc", (0, 0), (3,), Framework.CUSTOM)
    assert t.invoke == (0, "test_bio_enc")
    assert find_tests_custom([mod], []) == []
    with pytest.raises(UnknownTestFunction):
        find_tests_custom([mod], [CustomTestConfig("x", "not_there")])
    with pytest.raises(ValidationError):
        find_tests_custom([mod], [CustomTestConfig("bio_enc", "test_bio_enc", ())])
    with pytest.raises(DuplicateTestName):
        find_tests_custom([mod], [CustomTestConfig("h", "helper"), CustomTestConfig("h", "helper")])


def test_custom_program_driver():
    (mod,) = load_modules(["distance.wasm"], FIXTURES)
    (t,) = find_tests_custom([mod], [CustomTestConfig("distance", "test", (), "test_driver")])
    assert t.entry == (0, mod.function_named("test").func_index)
    assert t.invoke == (0, "test_driver")


def test_non_exported_function_is_unknown():
    mod = wat_module('(module (func $hidden (result i32) i32.const 0))')
    with pytest.raises(UnknownTestFunction):
        find_tests_custom([mod], [CustomTestConfig("h", "hidden")])


@pytest.mark.parametrize("framework, value, expected", [
    (Framework.SIMPLE, 1, Verdict.PASSED),
    (Framework.SIMPLE, 0, Verdict.FAILED),
    (Framework.SIMPLE, 2, Verdict.FAILED),
    (Framework.SIMPLE, -1, Verdict.FAILED),
    (Framework.SIMPLE, None, Verdict.FAILED),
    (Framework.SIMPLE, 1.0, Verdict.FAILED),
    (Framework.CUSTOM, 0, Verdict.PASSED),
    (Framework.CUSTOM, None, Verdict.PASSED),
    (Framework.CUSTOM, 1, Verdict.FAILED),
    (Framework.CUSTOM, 42, Verdict.FAILED),
])
def test_judge(framework, value, expected):
    assert judge(framework, value) is expected
