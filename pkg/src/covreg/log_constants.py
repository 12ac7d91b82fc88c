"""
Constants for output lines shared across covreg components.

These constants keep the simulator, demos and checker output in step with the
tests and the campaign script that parse them.
"""

# History file header (first line of every history file)
HISTORY_HEADER = "# covreg-history v1"
HISTORY_INITIAL_KEY = "initial="
NO_RESULT = "-"

# Verdict words
VERDICT_PASS = "PASS"
VERDICT_FAIL = "FAIL"
COUNTEREXAMPLE_BEGIN = "  counterexample:"

# Demo transcript prefixes
PREFIX_DECIDED = "decided:"
PREFIX_RMW = "rmw"
PREFIX_FILE = "file"
PREFIX_RANKED = "ranked"
PREFIX_LOWER_RANK_COMMIT = "lower-rank commit:"

# Event log (sim --events) header
EVENTS_HEADER = "# covreg-events v1"
