"""Sequential versioned register: the transition relation used as the linearization oracle."""

from dataclasses import dataclass, field

from covreg.core import TAG0, Flag, RegisterState, Tag, Value, WriteOutcome, check_writer, tag_successor
from covreg.defaults import TS_MAX


@dataclass
class SeqRegister:
    """Single-process versioned register.

    Parameters
    ----------
    state : RegisterState
        Current value and version.
    produced : set[Tag]
        Every version ever produced, including ``TAG0``.
    """

    state: RegisterState = field(default_factory=lambda: RegisterState(b"", TAG0))
    produced: set[Tag] = field(default_factory=lambda: {TAG0})

    @classmethod
    def fresh(cls, initial: Value = b"") -> "SeqRegister":
        return cls(RegisterState(initial, TAG0), {TAG0})

    def copy(self) -> "SeqRegister":
        return SeqRegister(self.state, set(self.produced))

    def write(self, v: Value, ver: Tag, w: int) -> WriteOutcome:
        """Apply ``cvr-write(v, ver)`` by writer ``w``.

        A matching version moves the register to ``(v, successor)`` and reports
        ``chg``; any other version leaves it untouched and reports the current
        pair with ``unchg``.
        """
        check_writer(w)
        if ver != self.state.tag:
            return WriteOutcome(self.state.value, self.state.tag, Flag.UNCHG)
        new_tag = tag_successor(ver, w)
        self.state = RegisterState(v, new_tag)
        self.produced.add(new_tag)
        return WriteOutcome(v, new_tag, Flag.CHG)

    def read(self) -> tuple[Value, Tag]:
        return self.state.value, self.state.tag

    def replay_write(self, v: Value, ver: Tag, w: int, outcome: WriteOutcome) -> bool:
        """Check that a recorded write outcome is legal at this point of a linearization.

        A ``chg`` outcome on the current version is the plain transition. A
        ``chg`` outcome on an older version is a concurrent writer that revised
        the same version as an earlier-linearized one; it is accepted when its
        tag still advances the register, since weak coverability allows such
        branches and atomicity only orders them by tag.
        """
        if outcome.flag is Flag.UNCHG:
            return ver != outcome.tag and self.state == RegisterState(outcome.value, outcome.tag)
        if w <= 0 or ver.ts >= TS_MAX or outcome.value != v or outcome.tag != tag_successor(ver, w):
            return False
        if ver == self.state.tag:
            return self.write(v, ver, w) == outcome
        if outcome.tag <= self.state.tag:
            return False
        self.state = RegisterState(v, outcome.tag)
        self.produced.add(outcome.tag)
        return True

    def replay_read(self, value: Value, tag: Tag) -> bool:
        return self.state == RegisterState(value, tag)
