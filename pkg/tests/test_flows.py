import pytest

from vulnminer.errors import LexiconError
from vulnminer.flows import (
    CONTROL_FLOW,
    DATA_FLOW,
    SYNTAX_CHILD,
    FlowEdge,
    augment_flows,
    classify_vuln_type,
    dataflow_oracle,
    file_vuln_types,
    taint_trace,
)
from vulnminer.frontend import parse_text
from vulnminer.lexicon import DEFAULT_LEXICON, load_lexicon, save_lexicon


def graph_of(src):
    return augment_flows(parse_text("t.php", src))


def test_straight_line_edges():
    g = graph_of("<?php $a = 1; echo $a;")
    assign, echo = g.root.children
    cf = [(e.src, e.dst) for e in g.edges_of(CONTROL_FLOW)]
    df = [(e.src, e.dst) for e in g.edges_of(DATA_FLOW)]
    assert cf == [(assign.node_id, echo.node_id)]
    assert df == [(assign.node_id, echo.node_id)]


def test_branch_merge_two_defs_reach():
    g = graph_of("<?php if($c){$a=1;}else{$a=2;} echo $a;")
    echo = g.root.children[-1]
    into_echo = [e for e in g.edges_of(DATA_FLOW) if e.dst == echo.node_id]
    assert len(into_echo) == 2


def test_syntax_child_edges_reproduce_tree():
    g = graph_of("<?php $a = 1 + 2;")
    syntax = {(e.src, e.dst) for e in g.edges_of(SYNTAX_CHILD)}
    expected = {(n.node_id, c.node_id) for n in g.root.walk()
                for c in n.children}
    assert syntax == expected


def test_no_self_loops():
    g = graph_of("<?php $i = 0; while ($i < 9) { $i = $i + 1; } echo $i;")
    for edge in g.edges:
        if edge.kind in (CONTROL_FLOW, DATA_FLOW):
            assert edge.src != edge.dst


def test_self_loop_edge_rejected():
    with pytest.raises(ValueError):
        FlowEdge(3, 3, CONTROL_FLOW)


ORACLE_PROGRAMS = [
    "<?php $a = 1; echo $a;",
    "<?php $a = 1; $a = 2; echo $a;",
    "<?php if($c){$a=1;}else{$a=2;} echo $a;",
    "<?php if($c){$a=1;} echo $a;",
    "<?php $a = 1; if ($a) { $b = $a; } else { $b = 2; } echo $b; echo $a;",
    "<?php $i = 0; while ($i < 3) { $i = $i + 1; } echo $i;",
    "<?php $s = ''; $i = 0; while ($i < 3) { $s = $s . $i; $i = $i + 1; } echo $s;",
    "<?php for ($i = 0; $i < 4; $i = $i + 1) { $x = $i; } echo $x;",
    "<?php foreach ($_POST as $k => $v) { $last = $v; } echo $last;",
    "<?php $a = 1; while ($c) { if ($a) { $b = $a; } $a = $b; } echo $a;",
    "<?php $t['x'] = 1; $t['y'] = 2; echo $t;",
    "<?php function f($p) { $q = $p; return $q; } $r = f(1); echo $r;",
    "<?php $n = 0; while ($n < 2) { $m = 0; while ($m < 2) { $m = $m + 1; } $n = $n + 1; } echo $m;",
]


@pytest.mark.parametrize("src", ORACLE_PROGRAMS)
def test_reaching_definitions_match_path_oracle(src):
    g = graph_of(src)
    assert g.dataflow_triples() == dataflow_oracle(g)


def test_oracle_equivalence_over_corpus(corpus_units):
    checked = 0
    for unit in corpus_units:
        ast = parse_text(unit.path, unit.text)
        statements = sum(1 for n in ast.walk()
                         if n.kind.value in (
                             "FunctionDecl", "If", "While", "For", "Foreach",
                             "Return", "Echo", "Assign", "ExprStmt",
                             "IncludeStmt"))
        if statements > 30:
            continue
        g = augment_flows(ast)
        assert g.dataflow_triples() == dataflow_oracle(g), unit.path
        checked += 1
    assert checked >= 50


def test_defs_uses_maps():
    g = graph_of("<?php $a = 1; $b = $a; echo $b;")
    assert set(g.defs) == {"a", "b"}
    assert set(g.uses) == {"a", "b"}


def test_lexicon_roundtrip(tmp_path):
    path = tmp_path / "lex.txt"
    save_lexicon(DEFAULT_LEXICON, path)
    loaded = load_lexicon(path)
    assert loaded.sources == DEFAULT_LEXICON.sources
    assert loaded.sinks == DEFAULT_LEXICON.sinks
    assert loaded.sanitizers == DEFAULT_LEXICON.sanitizers


def test_lexicon_rejects_unknown_class(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("source,$_GET\nsink,boom,Nuclear\n")
    with pytest.raises(LexiconError):
        load_lexicon(path)


def test_classify_unknown_sink_class_errors():
    g = graph_of("<?php echo $_GET['x'];")
    finding = taint_trace(g)[0]
    import dataclasses

    broken = dataclasses.replace(finding, sink_class="Nope")
    with pytest.raises(LexiconError):
        classify_vuln_type(broken)


def test_vuln_types_cover_all_seven():
    cases = {
        "Injection": "<?php $q = 'SELECT ' . $_POST['x']; mysql_query($q);",
        "XSS": "<?php echo $_GET['n'];",
        "URF": "<?php header('Location: ' . $_GET['to']);",
        "FileInclusion": "<?php include $_GET['page'];",
        "SDE": "<?php echo $_SERVER['SERVER_SOFTWARE'];",
        "SM": "<?php $password = 'letmein1'; mysql_connect('h', 'u', $password);",
        "IDOR": "<?php $row = fetch_record($_GET['id']); echo 'ok';",
    }
    for expected, src in cases.items():
        findings = taint_trace(graph_of(src))
        assert file_vuln_types(findings) == (expected,), expected
