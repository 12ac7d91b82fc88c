"""Default values for covreg configuration."""

# Simulation defaults
DEFAULT_SEED = 0
DEFAULT_REPLICAS = 5
DEFAULT_WRITERS = 1
DEFAULT_READERS = 0
DEFAULT_OPS_PER_CLIENT = 1
DEFAULT_CRASHES = 0
DEFAULT_PROTOCOL = "vmwabd"
PROTOCOLS = ("vmwabd", "ldr", "strongtr")

# Crash points are drawn from [0, CRASH_HORIZON_PER_OP * total ops] on the logical clock
CRASH_HORIZON_PER_OP = 40

# LDR defaults
DEFAULT_DIRECTORIES = 5
DEFAULT_LDR_F = 1

# Largest tag sequence number (64-bit, no wraparound)
TS_MAX = 2**64 - 1

# Checker limits
BRUTE_FORCE_MAX_OPS = 8
MINIMIZE_MAX_OPS = 64

# Client retry bounds
DEFAULT_FILE_RETRIES = 32
ORACLE_CHASE_LIMIT = 10_000

# Demo defaults
DEFAULT_DEMO_PROCS = 5
DEFAULT_DEMO_CONTEND = 2
RANKED_SEARCH_SCHEDULES = 10_000

# Checker defaults
DEFAULT_CHECK_JOBS = 4

# Exit codes
EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3
