"""Parser, serializer, and tree-invariant tests for the document model."""

from __future__ import annotations

import random

import pytest

from webgauntlet.dom import (
    DomError,
    DomNode,
    DomTree,
    TreeBuilder,
    copy_node,
    parse_html,
    renumber,
    serialize,
    structurally_equal,
)
from webgauntlet.selectors import parse_selector, query

from reference_impls import naive_node_count, random_tree


class TestParse:
    def test_single_element_with_text(self):
        tree = parse_html('<div id="a">hi</div>')
        assert len(tree) == 2
        root = tree.root
        assert root.tag == "div"
        assert root.attributes == {"id": "a"}
        assert root.node_id == 1
        (child,) = root.children
        assert child.kind == "text"
        assert child.text == "hi"
        assert child.node_id == 2

    def test_named_entity_decoded(self):
        tree = parse_html("<p>&amp;</p>")
        assert tree.root.children[0].text == "&"

    def test_all_named_entities(self):
        tree = parse_html("<p>&amp;&lt;&gt;&quot;&apos;&nbsp;</p>")
        assert tree.root.children[0].text == "&<>\"'\xa0"

    def test_numeric_entities(self):
        tree = parse_html("<p>&#65;&#x42;&#x2713;</p>")
        assert tree.root.children[0].text == "AB✓"

    def test_entity_in_attribute_value(self):
        tree = parse_html('<a href="?a=1&amp;b=2">x</a>')
        assert tree.root.attributes["href"] == "?a=1&b=2"

    def test_whitespace_preserved_in_content(self):
        tree = parse_html("<div> hi <span>x</span> </div>")
        kinds = [(c.kind, getattr(c, "text", "")) for c in tree.root.children]
        assert kinds[0] == ("text", " hi ")
        assert kinds[2] == ("text", " ")
        assert tree.root.full_text() == " hi x "

    def test_surrounding_document_whitespace_ignored(self):
        tree = parse_html("\n  <div>x</div>\n")
        assert tree.root.tag == "div"

    def test_void_tags_unclosed(self):
        tree = parse_html('<div><br><input name="q"><hr></div>')
        tags = [c.tag for c in tree.root.children]
        assert tags == ["br", "input", "hr"]

    def test_self_closing_element(self):
        tree = parse_html("<div><span/></div>")
        (span,) = tree.root.children
        assert span.tag == "span" and span.children == []

    def test_bare_boolean_attribute(self):
        tree = parse_html("<input disabled>")
        assert tree.root.attributes == {"disabled": ""}

    def test_single_quoted_attribute(self):
        tree = parse_html("<div class='a b'>x</div>")
        assert tree.root.class_list() == ["a", "b"]

    def test_tag_and_attr_names_lowercased(self):
        tree = parse_html('<DIV ID="x">y</DIV>')
        assert tree.root.tag == "div"
        assert tree.root.attributes == {"id": "x"}

    def test_node_ids_are_document_order(self):
        tree = parse_html("<div><p>a</p><p>b<span>c</span></p></div>")
        assert [n.node_id for n in tree.nodes()] == list(range(1, len(tree) + 1))


class TestParseErrors:
    def test_unbalanced_tag_at_eof(self):
        with pytest.raises(DomError) as err:
            parse_html("<div><span></span>")
        assert "unbalanced tag" in err.value.reason
        assert err.value.offset == 0

    def test_mismatched_close_tag(self):
        with pytest.raises(DomError) as err:
            parse_html("<div>x</span>")
        assert "unbalanced tag" in err.value.reason
        assert err.value.offset == 6

    def test_stray_close_tag(self):
        with pytest.raises(DomError) as err:
            parse_html("</div>")
        assert err.value.reason == "stray close tag"

    def test_unknown_tag_rejected(self):
        with pytest.raises(DomError) as err:
            parse_html("<script>x</script>")
        assert "unknown tag" in err.value.reason

    def test_unknown_entity(self):
        with pytest.raises(DomError) as err:
            parse_html("<p>&bogus;</p>")
        assert "unknown entity" in err.value.reason

    def test_error_offsets_are_bytes_not_chars(self):
        # "é" is two bytes in UTF-8, so the offset of "&" is 9, not 8
        with pytest.raises(DomError) as err:
            parse_html("<p>café &bad;</p>")
        assert err.value.offset == 9

    def test_unquoted_attribute_value(self):
        with pytest.raises(DomError) as err:
            parse_html("<div id=a>x</div>")
        assert "quoted" in err.value.reason

    def test_missing_whitespace_between_attributes(self):
        with pytest.raises(DomError) as err:
            parse_html('<div id="a"class="b">x</div>')
        assert "whitespace" in err.value.reason

    def test_duplicate_attribute(self):
        with pytest.raises(DomError) as err:
            parse_html('<div id="a" id="b">x</div>')
        assert "duplicate attribute" in err.value.reason

    def test_content_after_document_root(self):
        with pytest.raises(DomError) as err:
            parse_html("<div></div><p></p>")
        assert err.value.reason == "content after document root"
        assert err.value.offset == 11

    def test_stray_gt_in_text(self):
        with pytest.raises(DomError):
            parse_html("<p>a > b</p>")

    def test_duplicate_id_attribute_values(self):
        with pytest.raises(DomError) as err:
            parse_html('<div id="x"><p id="x">y</p></div>')
        assert "duplicate id" in err.value.reason


class TestSerialize:
    def test_empty_element(self):
        assert serialize(parse_html("<div></div>")) == "<div></div>"

    def test_attributes_sorted_by_name(self):
        out = serialize(parse_html('<div id="a" class="c" data-x="1">t</div>'))
        assert out == '<div class="c" data-x="1" id="a">t</div>'

    def test_minimal_escaping(self):
        builder = TreeBuilder()
        root = builder.element(
            "div", {"title": 'say "hi" & go'}, [builder.text("a < b & c > d")]
        )
        out = serialize(DomTree(root))
        assert out == '<div title="say &quot;hi&quot; &amp; go">a &lt; b &amp; c &gt; d</div>'

    def test_void_tags_have_no_close_tag(self):
        out = serialize(parse_html('<div><br><input name="q"></div>'))
        assert out == '<div><br><input name="q"></div>'

    def test_nbsp_survives_round_trip(self):
        tree = parse_html("<p>a&nbsp;b</p>")
        assert serialize(parse_html(serialize(tree))) == serialize(tree)
        assert parse_html(serialize(tree)).root.full_text() == "a\xa0b"


class TestTreeHelpers:
    def test_structurally_equal_ignores_node_ids(self):
        a = parse_html("<div><p>x</p></div>")
        builder = TreeBuilder()
        txt = builder.text("x")
        p = builder.element("p", children=[txt])
        root = builder.element("div", children=[p])
        assert structurally_equal(a.root, root)

    def test_renumber_restores_document_order(self):
        builder = TreeBuilder()
        txt = builder.text("x")  # created first, so ids start out of order
        root = builder.element("div", children=[builder.element("p", children=[txt])])
        mapping = renumber(root)
        tree = DomTree(root)
        assert [n.node_id for n in tree.nodes()] == [1, 2, 3]
        assert mapping[1] == 3  # the text node moved from first-created to last

    def test_copy_node_is_deep_and_preserves_ids(self):
        tree = parse_html('<div id="a"><p>x</p></div>')
        dup = copy_node(tree.root)
        dup.children[0].children[0].text = "changed"
        assert tree.root.full_text() == "x"
        assert dup.node_id == tree.root.node_id

    def test_element_lookup_by_id_attr(self):
        tree = parse_html('<div><p id="target">x</p></div>')
        node = tree.element_by_attr_id("target")
        assert node is not None and node.tag == "p"
        assert tree.element_by_attr_id("missing") is None


class TestProperties:
    """Round-trip, fixed-point, and commutation over a generated corpus."""

    def corpus(self):
        rng = random.Random(1301)
        return [random_tree(rng) for _ in range(50)]

    def test_round_trip_structural_equality(self):
        for tree in self.corpus():
            reparsed = parse_html(serialize(tree))
            assert structurally_equal(tree.root, reparsed.root)

    def test_serialize_is_a_fixed_point(self):
        for tree in self.corpus():
            once = serialize(tree)
            assert serialize(parse_html(once)) == once

    def test_node_count_matches_naive_reference(self):
        for tree in self.corpus():
            assert naive_node_count(serialize(tree)) == len(tree)

    def test_query_serialize_commutation(self):
        for tree in self.corpus():
            for text in ("div", ".primary", 'span:has-text("Cart")'):
                selector = parse_selector(text)
                reparsed = parse_html(serialize(tree))
                pos_a = self._preorder_positions(tree, query(tree, selector))
                pos_b = self._preorder_positions(reparsed, query(reparsed, selector))
                assert pos_a == pos_b

    @staticmethod
    def _preorder_positions(tree, node_ids):
        index = {n.node_id: i for i, n in enumerate(tree.nodes())}
        return [index[i] for i in node_ids]

    def test_query_results_strictly_increasing(self):
        for tree in self.corpus():
            ids = query(tree, parse_selector("span"))
            assert ids == sorted(ids)
            assert len(ids) == len(set(ids))
