from unittest.mock import mock_open, patch

from covreg.annotations import emit_error, emit_verdict_annotations, format_verdict_summary, write_summary
from covreg.checker import Verdict


def test_emit_error_escapes(capsys):
    """Newlines and percent signs are escaped for workflow commands"""
    emit_error("Title", "50%\nnext")
    assert capsys.readouterr().out == "::error title=Title::50%25%0Anext\n"


def test_verdict_annotations(capsys):
    emit_verdict_annotations("h.log", [Verdict("atomicity", False, "#2 returned stale", "real-time"), Verdict("validity", True)])
    assert capsys.readouterr().out == "::error title=atomicity violated::h.log: (real-time) #2 returned stale\n"


def test_all_passed_notice(capsys):
    emit_verdict_annotations("h.log", [Verdict("validity", True)])
    assert capsys.readouterr().out == "::notice title=History verified::h.log: 1 properties hold\n"


def test_format_verdict_summary():
    summary = format_verdict_summary({
        "a.log": [Verdict("atomicity", True)],
        "b.log": [Verdict("atomicity", False, "x", "wrong-value")],
    })
    assert "| `a.log` | atomicity | ✅ Pass |" in summary
    assert "| `b.log` | atomicity | ❌ wrong-value |" in summary
    assert summary.endswith("**Result:** ❌ 1 property violations")


def test_format_all_pass():
    summary = format_verdict_summary({"a.log": [Verdict("validity", True)]})
    assert summary.startswith("## History Verdicts")
    assert summary.endswith("**Result:** ✅ All properties hold")


def test_write_summary_appends():
    mock_file = mock_open()
    with patch("builtins.open", mock_file):
        write_summary("summary.md", "## x")
    mock_file.assert_called_once_with("summary.md", "a")
    mock_file().write.assert_called_once_with("## x\n")


def test_summary_table(snapshot):
    """Several histories share one table with a violation count"""
    summary = format_verdict_summary({
        "a.log": [Verdict("atomicity", True), Verdict("validity", True)],
        "b.log": [Verdict("atomicity", False, "x", "wrong-value")],
    })
    assert summary == snapshot
