from vulnminer.flows import augment_flows, classify_vuln_type, taint_trace
from vulnminer.frontend import parse_text
from vulnminer.lexicon import DEFAULT_LEXICON


def trace(src):
    return taint_trace(augment_flows(parse_text("t.php", src)), DEFAULT_LEXICON)


def test_command_injection_single_finding(command_injection_unit):
    findings = taint_trace(
        augment_flows(parse_text(command_injection_unit.path,
                                 command_injection_unit.text)))
    assert len(findings) == 1
    f = findings[0]
    assert f.source_label == "$_GET"
    assert f.sink_name == "system"
    assert f.sink_class == "Command"
    assert not f.sanitized
    assert classify_vuln_type(f) == "Injection"


def test_remediated_snippet_is_sanitized(command_injection_fixed_unit):
    findings = taint_trace(
        augment_flows(parse_text(command_injection_fixed_unit.path,
                                 command_injection_fixed_unit.text)))
    assert len(findings) == 1
    assert findings[0].sanitized is True
    assert findings[0].sink_name == "exec"


def test_no_sources_no_findings():
    assert trace("<?php $a = 'static'; echo $a;") == []


def test_sanitizers_are_class_scoped():
    # htmlspecialchars neutralizes output, not command execution
    findings = trace("<?php $x = htmlspecialchars($_GET['c']); system($x);")
    assert len(findings) == 1 and findings[0].sanitized is False
    findings = trace("<?php $x = htmlspecialchars($_GET['c']); echo $x;")
    assert len(findings) == 1 and findings[0].sanitized is True


def test_unsanitized_path_dominates():
    findings = trace("""<?php
if ($m) { $x = htmlspecialchars($_GET['q']); } else { $x = $_GET['q']; }
echo $x;
""")
    assert len(findings) == 1 and findings[0].sanitized is False


def test_sanitizer_on_every_path_flips_to_sanitized():
    findings = trace("""<?php
if ($m) { $x = htmlspecialchars($_GET['q']); } else { $x = htmlentities($_GET['q']); }
echo $x;
""")
    assert len(findings) == 1 and findings[0].sanitized is True


def test_concat_propagates_taint():
    findings = trace("<?php $q = 'SELECT ' . $_POST['w']; mysql_query($q);")
    assert [f.sink_class for f in findings] == ["Sql"]


def test_interpolation_propagates_taint(sql_auth_unit):
    findings = taint_trace(augment_flows(
        parse_text(sql_auth_unit.path, sql_auth_unit.text)))
    assert len(findings) == 1
    assert findings[0].source_label == "$_POST"
    assert findings[0].sink_name == "mysql_query"
    assert not findings[0].sanitized


def test_interprocedural_argument_passing():
    findings = trace("""<?php
function render($msg) { echo $msg; return 0; }
$data = $_GET['m'];
$x = render($data);
""")
    assert len(findings) == 1 and findings[0].sink_name == "echo"


def test_interprocedural_return_taint():
    findings = trace("""<?php
function fetch() { return $_POST['q']; }
$q = fetch();
mysql_query($q);
""")
    assert [f.sink_name for f in findings] == ["mysql_query"]


def test_recursive_function_terminates_and_finds():
    findings = trace("""<?php
function spin($acc, $n) {
    if ($n < 4) { $acc = $acc . $_GET['x']; return spin($acc, $n + 1); }
    return $acc;
}
echo spin('', 0);
""")
    assert any(f.sink_name == "echo" and not f.sanitized for f in findings)


def test_loop_carried_taint():
    findings = trace("""<?php
$s = '';
$i = 0;
while ($i < 3) { $s = $s . $_COOKIE['c']; $i = $i + 1; }
echo $s;
""")
    assert len(findings) == 1 and findings[0].source_label == "$_COOKIE"


def test_findings_sorted_by_sink_span():
    findings = trace("""<?php
echo $_GET['a'];
header('Location: ' . $_GET['b']);
""")
    lines = [f.sink_span.start_line for f in findings]
    assert lines == sorted(lines)


def test_finding_path_endpoints():
    findings = trace("<?php $a = $_GET['x']; $b = $a; system($b);")
    f = findings[0]
    assert f.path[0] == f.source_id
    assert f.path[-1] == f.sink_id
    assert len(f.path) == 4  # source read, two assignments, sink


def test_determinism():
    src = "<?php echo $_GET['a'] . $_POST['b']; system($_REQUEST['c']);"
    graph = augment_flows(parse_text("t.php", src))
    first = [(f.source_label, f.sink_id, f.path) for f in taint_trace(graph)]
    second = [(f.source_label, f.sink_id, f.path) for f in taint_trace(graph)]
    assert first == second
    # across fresh parses only node identities change
    stable = [(f.source_label, f.sink_name, f.sink_span, f.sanitized)
              for f in trace(src)]
    assert stable == [(f.source_label, f.sink_name, f.sink_span, f.sanitized)
                      for f in trace(src)]


def test_monotone_sanitization(corpus_units, labels):
    # adding output escaping at every echo never creates new findings
    src = "<?php $x = $_GET['q']; echo $x;"
    baseline = trace(src)
    sanitized = trace("<?php $x = htmlspecialchars($_GET['q']); echo $x;")
    assert len(sanitized) == len(baseline) == 1
    assert baseline[0].sanitized is False
    assert sanitized[0].sanitized is True
