"""GitHub Actions annotation helpers for history verdicts."""

from typing import TYPE_CHECKING

import click

if TYPE_CHECKING:
    from covreg.checker import Verdict


def _escape(message: str) -> str:
    # Escape special characters for workflow commands
    return message.replace("%", "%25").replace("\r", "%0D").replace("\n", "%0A")


def emit_error(title: str, message: str):
    """Emit a GitHub Actions error annotation.

    Parameters
    ----------
    title : str
        Short title for the error.
    message : str
        Detailed error message.
    """
    click.echo(f"::error title={title}::{_escape(message)}")


def emit_notice(title: str, message: str):
    click.echo(f"::notice title={title}::{_escape(message)}")


def emit_verdict_annotations(path: str, verdicts: list["Verdict"]):
    """Emit one error annotation per failed property of the history at ``path``, or a notice if all passed."""
    failed = [v for v in verdicts if not v.passed]
    for v in failed:
        emit_error(f"{v.property} violated", f"{path}: ({v.reason}) {v.message}")
    if not failed:
        emit_notice("History verified", f"{path}: {len(verdicts)} properties hold")


def write_summary(path: str, markdown: str):
    """Append markdown to a job summary file.

    Parameters
    ----------
    path : str
        File to append to, typically the one named by ``$GITHUB_STEP_SUMMARY``.
    markdown : str
        Markdown content to append.
    """
    with open(path, "a") as f:
        f.write(markdown + "\n")


def format_verdict_summary(results: dict[str, list["Verdict"]]) -> str:
    """Format verdicts for several histories as a markdown table.

    Parameters
    ----------
    results : dict[str, list[Verdict]]
        Verdicts keyed by history path.

    Returns
    -------
    str
        Markdown-formatted summary.
    """
    lines = [
        "## History Verdicts",
        "",
        "| History | Property | Result |",
        "|---------|----------|--------|",
    ]

    failures = 0
    for path, verdicts in results.items():
        for v in verdicts:
            if v.passed:
                result = "✅ Pass"
            else:
                failures += 1
                result = f"❌ {v.reason}"
            lines.append(f"| `{path}` | {v.property} | {result} |")

    lines.append("")

    if failures:
        lines.append(f"**Result:** ❌ {failures} property violations")
    else:
        lines.append("**Result:** ✅ All properties hold")

    return "\n".join(lines)
