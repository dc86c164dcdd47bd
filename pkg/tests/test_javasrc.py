import textwrap

from hypothesis import given
from hypothesis import strategies as st

from oracles import split_tokens
from testmend.javasrc import (call_sites, find_method, first_method_name, fqcn_from_path, is_balanced, mask,
                              members, package_of, tokenize, top_level_type)

SRC = textwrap.dedent("""\
    package com.acme;

    import java.util.List;

    /** Holds things. */
    public class Box<T> {
        private static final String BRACE = "{ not a block }";
        private List<T> items; // trailing { comment

        /**
         * Adds one item.
         */
        @Deprecated
        public void add(T item, int[] slots) {
            if (item != null) { items.add(item); }
        }

        public Box() { }

        int size() throws IllegalStateException {
            return items.size();
        }
    }
    """)


def test_mask_keeps_length_and_newlines():
    m = mask(SRC)
    assert len(m) == len(SRC) and m.count("\n") == SRC.count("\n")
    assert "not a block" not in m and "trailing" not in m


def test_balanced_ignores_literals():
    assert is_balanced(SRC)
    assert is_balanced('void t() { String s = "}"; }')
    assert not is_balanced("void t() { if (a) { }")


def test_members():
    ms = {m.name: m for m in members(SRC)}
    assert set(ms) == {"BRACE", "items", "add", "Box", "size"}
    assert ms["add"].kind == "method" and ms["Box"].kind == "constructor" and ms["items"].kind == "field"
    assert ms["add"].doc == "Adds one item."
    assert ms["add"].annotations == ("@Deprecated",)
    assert ms["add"].param_types == ("T", "int[]")
    assert (ms["add"].start_line, ms["add"].end_line) == (14, 16)
    assert ms["BRACE"].is_static


def test_package_and_type():
    assert package_of(SRC) == "com.acme"
    assert top_level_type(SRC)[0] == "Box"
    assert fqcn_from_path("mod/src/test/java/com/acme/BoxTest.java") == "com.acme.BoxTest"


def test_find_method_skips_calls():
    span = find_method(SRC, "size")
    assert (span.start_line, span.end_line) == (20, 22)
    assert SRC[span.decl_offset:span.end_offset].strip().startswith("int size()")
    assert find_method(SRC, "missing") is None


def test_first_method_and_call_sites():
    code = "@Test\npublic void testAdd() {\n    box.add(new Item(), slots());\n    assertEquals(1, box.size());\n}"
    assert first_method_name(code) == "testAdd"
    assert call_sites(code) == [("box", "add"), (None, "slots"), (None, "assertEquals"), ("box", "size")]


def test_tokenize():
    assert tokenize("setInjectHtmlEnabled(HTTPServer2)") == ["set", "inject", "html", "enabled", "http", "server", "2"]


@given(st.text(alphabet="abcXYZ019_ .(){}", max_size=60))
def test_tokenize_agrees_with_character_scan(text):
    assert tokenize(text) == split_tokens(text.replace("_", " "))
